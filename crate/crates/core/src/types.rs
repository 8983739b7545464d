//! Shared domain types: vehicle classes, Eulerian grid state, Lagrangian
//! cluster fields, and the piecewise-constant initial density profile.

use crate::error::SolverError;

/// Vehicle class. PTWs (powered two-wheelers) are class 1, cars class 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassId {
    Ptw = 1,
    Car = 2,
}

impl ClassId {
    /// Zero-based index used for `[f64; 2]` per-class arrays (PTW first).
    pub fn index(self) -> usize {
        match self {
            ClassId::Ptw => 0,
            ClassId::Car => 1,
        }
    }

    pub fn other(self) -> ClassId {
        match self {
            ClassId::Ptw => ClassId::Car,
            ClassId::Car => ClassId::Ptw,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ClassId::Ptw => "ptw",
            ClassId::Car => "car",
        }
    }
}

/// Physical and speed-law parameters of one vehicle class.
///
/// `v_free` is the maximum (free-flow) speed, `r_crit` the critical gap a
/// vehicle of this class needs to keep moving, and `eff_length` the road
/// length one vehicle effectively blocks (footprint scaled to the lane).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleClassParams {
    pub class_id: ClassId,
    /// Free-flow speed, m/s.
    pub v_free: f64,
    /// Critical gap, m.
    pub r_crit: f64,
    /// Effective 1-D blocked length per vehicle, m.
    pub eff_length: f64,
}

impl VehicleClassParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_free > 0.0) {
            return Err(format!("{}: nonpositive free-flow speed", self.class_id.label()));
        }
        if !(self.r_crit >= 0.0) {
            return Err(format!("{}: negative critical gap", self.class_id.label()));
        }
        if !(self.eff_length > 0.0) {
            return Err(format!("{}: nonpositive effective length", self.class_id.label()));
        }
        Ok(())
    }
}

/// Occupied road fraction `rho_1 L_1 + rho_2 L_2` for a pair of class densities.
pub fn occupancy(rho_ptw: f64, rho_car: f64, params: &[VehicleClassParams; 2]) -> f64 {
    rho_ptw * params[0].eff_length + rho_car * params[1].eff_length
}

/// Fixed-grid state: per-cell densities `[rho_ptw, rho_car]` in veh/m.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianState {
    /// Space step, m.
    pub dx: f64,
    /// Current time, s.
    pub t: f64,
    pub cells: Vec<[f64; 2]>,
}

impl EulerianState {
    /// Cell-center coordinate of cell `j`.
    pub fn x_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx
    }

    /// Total vehicles of one class on the grid (density times cell length).
    pub fn total_vehicles(&self, class: ClassId) -> f64 {
        self.cells.iter().map(|c| c[class.index()]).sum::<f64>() * self.dx
    }

    pub fn check_invariants(&self, params: &[VehicleClassParams; 2]) -> Result<(), SolverError> {
        for (j, c) in self.cells.iter().enumerate() {
            if c[0] < 0.0 || c[1] < 0.0 {
                return Err(SolverError::NegativeDensity { cell: j });
            }
            let occ = occupancy(c[0], c[1], params);
            if occ > 1.0 + 1e-12 {
                return Err(SolverError::BeyondJam { occupancy: occ });
            }
        }
        Ok(())
    }
}

/// One Lagrangian cell: `dn` consecutive same-class vehicles sharing an
/// average spacing. `position` is the head (downstream edge); the cluster
/// occupies `[position, position + dn * spacing)`, which coincides with the
/// interval up to the head of the cluster ahead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    /// Cumulative vehicle count from the downstream end to this cluster's
    /// head (real-valued; fractional cluster sizes are allowed).
    pub index: f64,
    /// Vehicles in the cluster.
    pub dn: f64,
    /// Average spacing, m per vehicle.
    pub spacing: f64,
    /// Head position, m.
    pub position: f64,
}

impl Cluster {
    /// Upstream-to-downstream extent `[position, position + dn * spacing)`.
    pub fn extent(&self) -> (f64, f64) {
        (self.position, self.position + self.dn * self.spacing)
    }
}

/// Ordered Lagrangian clusters of one class. Index 0 is the most downstream
/// cluster (the leader); positions strictly decrease with increasing index.
/// Cluster membership is fixed for the lifetime of a run: the per-cluster
/// vehicle counts never change, so class mass is conserved by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterField {
    pub class_id: ClassId,
    pub clusters: Vec<Cluster>,
}

impl ClusterField {
    pub fn total_vehicles(&self) -> f64 {
        self.clusters.iter().map(|c| c.dn).sum()
    }

    /// Strictly decreasing head positions with increasing label.
    pub fn is_ordered(&self) -> bool {
        self.clusters.windows(2).all(|w| w[1].position < w[0].position)
    }

    pub fn all_spacings_positive(&self) -> bool {
        self.clusters.iter().all(|c| c.spacing > 0.0)
    }

    /// Density at `x`, if `x` lies inside some cluster's extent.
    pub fn density_at(&self, x: f64) -> Option<f64> {
        if self.clusters.is_empty() {
            return None;
        }
        // Positions are sorted descending; find the first cluster whose head
        // is at or below x, then check its extent.
        let i = self.clusters.partition_point(|c| c.position > x);
        if i == self.clusters.len() {
            return None;
        }
        let (lo, hi) = self.clusters[i].extent();
        if x >= lo && x < hi {
            Some(1.0 / self.clusters[i].spacing)
        } else {
            None
        }
    }

    /// Build a cluster field from a piecewise-constant density profile by
    /// inverting the cumulative vehicle count from the downstream end.
    /// Segments must tile `[0, road_length]` in increasing x. The last
    /// cluster takes the fractional remainder when the class total is not a
    /// multiple of `dn`.
    pub fn from_density_profile(
        class_id: ClassId,
        segments: &[ProfileSegment],
        dn: f64,
    ) -> ClusterField {
        let ci = class_id.index();
        let total: f64 = segments
            .iter()
            .map(|s| s.rho[ci] * (s.x_end - s.x_start))
            .sum();
        let mut clusters = Vec::new();
        if total <= 0.0 {
            return ClusterField { class_id, clusters };
        }
        // Walk segments from the downstream end, emitting a cluster head
        // each time the cumulative count crosses a multiple of dn.
        let mut count = 0.0; // vehicles seen so far (from downstream)
        let mut next_head = dn.min(total);
        let mut prev_edge = segments.last().map(|s| s.x_end).unwrap_or(0.0);
        for seg in segments.iter().rev() {
            let rho = seg.rho[ci];
            if rho <= 0.0 {
                continue;
            }
            let seg_count = rho * (seg.x_end - seg.x_start);
            while next_head <= count + seg_count + 1e-12 && next_head <= total {
                let into = (next_head - count) / rho; // distance below x_end
                let x = seg.x_end - into.min(seg.x_end - seg.x_start);
                let dn_here = if clusters.is_empty() {
                    next_head
                } else {
                    next_head - clusters.last().map(|c: &Cluster| c.index).unwrap()
                };
                clusters.push(Cluster {
                    index: next_head,
                    dn: dn_here,
                    spacing: (prev_edge - x) / dn_here,
                    position: x,
                });
                prev_edge = x;
                if next_head >= total {
                    next_head = f64::INFINITY;
                } else {
                    next_head = (next_head + dn).min(total);
                }
            }
            count += seg_count;
        }
        ClusterField { class_id, clusters }
    }
}

/// One piece of the initial density profile: constant `[rho_ptw, rho_car]`
/// over `[x_start, x_end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSegment {
    pub x_start: f64,
    pub x_end: f64,
    pub rho: [f64; 2],
}

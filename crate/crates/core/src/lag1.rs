//! Lagrangian method 1: each class carries its own vehicle-count coordinate.
//! Cluster spacings follow the Godunov update
//!
//!   s_i^{t+dt} = s_i^t - dt/dn (V(s_{1,i}, s_{2,i}) - V(s_{1,i-1}, s_{2,i-1}))
//!
//! with the flux at a cell boundary taken from the cluster behind it (upwind
//! toward the leader), and head positions advance by X += dt V. The speed of
//! a cluster needs the other class's spacing over the cluster extent, which
//! is obtained by integrating the other class's piecewise-constant density.

use crate::error::SolverError;
use crate::scenario::Boundary;
use crate::speedlaw::{max_wave_speed, Coordinate, SpeedLaw};
use crate::types::{ClassId, Cluster, ClusterField};

/// Other-class average spacing over a cluster's extent:
///
///   s_c = dn_j s_{j,i} / integral of 1/s_c(x) over [X(i), X(i-1))
///
/// i.e. cluster length divided by the number of class-c vehicles inside it.
/// Returns infinity when no class-c vehicle overlaps the extent.
pub fn cross_class_spacing(cluster: &Cluster, other: &ClusterField) -> f64 {
    let (lo, hi) = cluster.extent();
    let count = overlap_vehicle_count(lo, hi, other);
    if count <= 0.0 {
        f64::INFINITY
    } else {
        cluster.dn * cluster.spacing / count
    }
}

/// Integral of 1/s(x) of `field` over [lo, hi): the vehicle count inside the
/// window under the piecewise-constant reconstruction.
pub fn overlap_vehicle_count(lo: f64, hi: f64, field: &ClusterField) -> f64 {
    let mut count = 0.0;
    // Heads are sorted descending; clusters whose extent can reach past `lo`
    // start at the first head below `hi`.
    let start = field.clusters.partition_point(|c| c.position >= hi);
    for c in &field.clusters[start.saturating_sub(1)..] {
        let (c_lo, c_hi) = c.extent();
        if c_hi <= lo {
            if c.position < lo {
                break;
            }
            continue;
        }
        let overlap = c_hi.min(hi) - c_lo.max(lo);
        if overlap > 0.0 {
            count += overlap / c.spacing;
        }
    }
    count
}

/// Per-cluster speeds of one field, using the other field for the
/// cross-class spacing. Own-class spacing is the cluster's own state (the
/// interpolation integral reduces to dn_j for the own class).
pub fn cluster_speeds(
    field: &ClusterField,
    other: &ClusterField,
    law: &dyn SpeedLaw,
) -> Result<Vec<f64>, SolverError> {
    field
        .clusters
        .iter()
        .map(|c| {
            let s_other = cross_class_spacing(c, other);
            let (s_ptw, s_car) = match field.class_id {
                ClassId::Ptw => (c.spacing, s_other),
                ClassId::Car => (s_other, c.spacing),
            };
            Ok(law.speed_from_spacing(field.class_id, s_ptw, s_car)?)
        })
        .collect()
}

/// Flux seen by the leader cluster from downstream of the road.
pub fn leader_ghost_flux(
    class: ClassId,
    law: &dyn SpeedLaw,
    boundary: Boundary,
    leader_speed: f64,
) -> Result<f64, SolverError> {
    match boundary {
        // Empty road ahead: both spacings infinite.
        Boundary::FreeDownstream => {
            Ok(law.speed_from_spacing(class, f64::INFINITY, f64::INFINITY)?)
        }
        // Ghost copies the leader, so the flux difference vanishes.
        Boundary::ZeroGradient => Ok(leader_speed),
    }
}

/// Direct-difference form of the Godunov update. Returns the new spacings
/// without committing them.
pub fn updated_spacings(
    field: &ClusterField,
    speeds: &[f64],
    ghost_flux: f64,
    dt: f64,
) -> Result<Vec<f64>, SolverError> {
    updated_cluster_spacings(field.class_id, &field.clusters, speeds, ghost_flux, dt)
}

/// Same update on a bare cluster slice; shared with the method-2 reference
/// class, whose conservation equation has the identical form.
pub fn updated_cluster_spacings(
    class: ClassId,
    clusters: &[Cluster],
    speeds: &[f64],
    ghost_flux: f64,
    dt: f64,
) -> Result<Vec<f64>, SolverError> {
    let mut out = Vec::with_capacity(clusters.len());
    for (i, c) in clusters.iter().enumerate() {
        let v_lead = if i == 0 { ghost_flux } else { speeds[i - 1] };
        let s_new = c.spacing - dt / c.dn * (speeds[i] - v_lead);
        if !(s_new > 0.0) {
            return Err(SolverError::NonpositiveSpacing {
                class: class.label(),
                cluster: i,
                spacing: s_new,
            });
        }
        out.push(s_new);
    }
    Ok(out)
}

/// Flux-array form: materialize V_{i+1/2} and V_{i-1/2} per cluster, then
/// apply the scheme. Arithmetic is identical to [`updated_spacings`], which
/// the tests assert bit-exactly.
pub fn updated_spacings_via_fluxes(
    field: &ClusterField,
    speeds: &[f64],
    ghost_flux: f64,
    dt: f64,
) -> Result<Vec<f64>, SolverError> {
    let n = field.clusters.len();
    let flux_up: Vec<f64> = (0..n).map(|i| speeds[i]).collect();
    let flux_down: Vec<f64> = (0..n)
        .map(|i| if i == 0 { ghost_flux } else { speeds[i - 1] })
        .collect();
    let mut out = Vec::with_capacity(n);
    for (i, c) in field.clusters.iter().enumerate() {
        let s_new = c.spacing - dt / c.dn * (flux_up[i] - flux_down[i]);
        if !(s_new > 0.0) {
            return Err(SolverError::NonpositiveSpacing {
                class: field.class_id.label(),
                cluster: i,
                spacing: s_new,
            });
        }
        out.push(s_new);
    }
    Ok(out)
}

/// Trajectory update X(i, t+dt) = X(i, t) + dt V, with a hard error if the
/// within-class ordering breaks (scheme instability).
pub fn advance_positions(
    field: &mut ClusterField,
    speeds: &[f64],
    dt: f64,
) -> Result<(), SolverError> {
    for (c, v) in field.clusters.iter_mut().zip(speeds) {
        c.position += dt * v;
    }
    for (i, w) in field.clusters.windows(2).enumerate() {
        if w[1].position >= w[0].position {
            return Err(SolverError::OrderingViolation {
                class: field.class_id.label(),
                cluster: i + 1,
            });
        }
    }
    Ok(())
}

/// A method-1 run: both class fields plus the shared configuration.
pub struct Lag1Run<'a> {
    /// `[ptw, car]`.
    pub fields: [ClusterField; 2],
    pub law: &'a dyn SpeedLaw,
    pub dt: f64,
    pub boundary: Boundary,
    pub t: f64,
    pub step_count: u64,
    lambda: f64,
    min_dn: f64,
}

impl<'a> Lag1Run<'a> {
    pub fn new(
        ptw: ClusterField,
        car: ClusterField,
        law: &'a dyn SpeedLaw,
        dt: f64,
        boundary: Boundary,
    ) -> Self {
        let lambda = max_wave_speed(law, Coordinate::Lagrangian);
        let min_dn = ptw
            .clusters
            .iter()
            .chain(car.clusters.iter())
            .map(|c| c.dn)
            .fold(f64::INFINITY, f64::min);
        Lag1Run { fields: [ptw, car], law, dt, boundary, t: 0.0, step_count: 0, lambda, min_dn }
    }

    pub fn max_stable_dt(&self) -> f64 {
        self.min_dn / self.lambda
    }

    /// One Godunov step for both classes. Each class reads a frozen pre-step
    /// snapshot of the other, so the update order is immaterial.
    pub fn step(&mut self) -> Result<(), SolverError> {
        if self.min_dn.is_finite() && self.dt > self.max_stable_dt() {
            return Err(SolverError::CflViolation { dt: self.dt, max_dt: self.max_stable_dt() });
        }
        let [ptw, car] = &self.fields;
        let speeds_ptw = cluster_speeds(ptw, car, self.law)?;
        let speeds_car = cluster_speeds(car, ptw, self.law)?;

        let mut new_spacings = [Vec::new(), Vec::new()];
        for (k, (field, speeds)) in [(ptw, &speeds_ptw), (car, &speeds_car)]
            .into_iter()
            .enumerate()
        {
            if field.clusters.is_empty() {
                continue;
            }
            let ghost =
                leader_ghost_flux(field.class_id, self.law, self.boundary, speeds[0])?;
            new_spacings[k] = updated_spacings(field, speeds, ghost, self.dt)?;
        }

        for (k, speeds) in [speeds_ptw, speeds_car].into_iter().enumerate() {
            for (c, s) in self.fields[k].clusters.iter_mut().zip(&new_spacings[k]) {
                c.spacing = *s;
            }
            advance_positions(&mut self.fields[k], &speeds, self.dt)?;
        }
        self.step_count += 1;
        self.t = self.step_count as f64 * self.dt;
        Ok(())
    }

    pub fn run_to(&mut self, t_end: f64) -> Result<(), SolverError> {
        if t_end < self.t - 1e-12 {
            return Err(SolverError::TimeTargetInPast { t_end, t: self.t });
        }
        let steps = (((t_end - self.t) / self.dt) - 1e-9).ceil().max(0.0) as u64;
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    pub fn field(&self, class: ClassId) -> &ClusterField {
        &self.fields[class.index()]
    }
}

/// CSV header for Lagrangian cluster snapshots.
pub const CSV_HEADER: &str = "t,class,cluster_index,position,spacing,speed";

/// Append one snapshot (both classes) to a CSV stream.
pub fn write_snapshot_csv(
    run: &Lag1Run<'_>,
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    let [ptw, car] = &run.fields;
    for (field, other) in [(ptw, car), (car, ptw)] {
        let speeds = cluster_speeds(field, other, run.law).map_err(std::io::Error::other)?;
        for (c, v) in field.clusters.iter().zip(&speeds) {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                run.t,
                field.class_id.label(),
                c.index,
                c.position,
                c.spacing,
                v
            )?;
        }
    }
    Ok(())
}

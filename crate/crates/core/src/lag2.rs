//! Lagrangian method 2: the coordinate frame moves with one reference
//! (carrier) class; the other class is carried as the spacing ratio
//! y = s_r / s_c per reference cluster.
//!
//! The reference class follows the same Godunov update as method 1. The
//! carried ratio obeys
//!
//!   y_i^{t+dt} = y_i^t - dt/dn (V_{c,i+1/2} - V_{c,i-1/2})
//!
//! with boundary speeds phi = (v_r - v_c)/s_c picked upwind. When the
//! reference class is faster the carried state drifts toward larger labels
//! and the fluxes come from the label below; when it is slower they come
//! from the label above. The generalized selection gates each flux with a
//! max(0, dv)/dv factor so both regimes, and sign changes between cells, are
//! handled by one total rule. Where the ratio differs across a face the
//! donor side additionally follows the secant slope of the flux in y (see
//! `carried_face`), which the drift sign alone gets wrong near the choke
//! point.

use crate::error::SolverError;
use crate::lag1::{advance_positions, leader_ghost_flux, updated_cluster_spacings};
use crate::scenario::Boundary;
use crate::speedlaw::{max_wave_speed, Coordinate, SpeedLaw};
use crate::types::{ClassId, Cluster, ClusterField, ProfileSegment};

/// Reference-class clusters plus the per-cluster carried ratio
/// y = s_r / s_c. y = 0 exactly where the carried class is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierField {
    pub reference: ClassId,
    pub clusters: Vec<Cluster>,
    pub carried_ratio: Vec<f64>,
}

impl CarrierField {
    /// Build from a piecewise-constant two-class profile: reference clusters
    /// by count inversion, carried ratio from the carried-class vehicle
    /// count inside each cluster extent.
    pub fn from_density_profile(
        reference: ClassId,
        segments: &[ProfileSegment],
        dn: f64,
    ) -> CarrierField {
        let ref_field = ClusterField::from_density_profile(reference, segments, dn);
        let ci = reference.other().index();
        let carried_ratio = ref_field
            .clusters
            .iter()
            .map(|c| {
                let (lo, hi) = c.extent();
                let count: f64 = segments
                    .iter()
                    .map(|s| s.rho[ci] * (hi.min(s.x_end) - lo.max(s.x_start)).max(0.0))
                    .sum();
                count / c.dn
            })
            .collect();
        CarrierField { reference, clusters: ref_field.clusters, carried_ratio }
    }

    pub fn carried_class(&self) -> ClassId {
        self.reference.other()
    }

    /// Carried-class spacing of cluster `i`: s_r / y, infinite when absent.
    pub fn carried_spacing(&self, i: usize) -> f64 {
        let y = self.carried_ratio[i];
        if y > 0.0 {
            self.clusters[i].spacing / y
        } else {
            f64::INFINITY
        }
    }

    /// Total carried vehicles sum(y_i dn_i).
    pub fn carried_mass(&self) -> f64 {
        self.clusters
            .iter()
            .zip(&self.carried_ratio)
            .map(|(c, y)| y * c.dn)
            .sum()
    }

    /// Density of either class at `x` under the piecewise-constant
    /// reconstruction over reference-cluster extents.
    pub fn density_at(&self, class: ClassId, x: f64) -> Option<f64> {
        let i = self.clusters.partition_point(|c| c.position > x);
        if i == self.clusters.len() {
            return None;
        }
        let (lo, hi) = self.clusters[i].extent();
        if x < lo || x >= hi {
            return None;
        }
        let rho_r = 1.0 / self.clusters[i].spacing;
        if class == self.reference {
            Some(rho_r)
        } else {
            Some(self.carried_ratio[i] * rho_r)
        }
    }

    fn view(&self) -> ClusterField {
        ClusterField { class_id: self.reference, clusters: self.clusters.clone() }
    }
}

/// Inputs of the flux selection at one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxCell {
    pub v_r: f64,
    pub v_c: f64,
    /// Carried spacing; infinite when the carried class is absent.
    pub s_c: f64,
}

impl FluxCell {
    /// Boundary speed (v_r - v_c)/s_c; zero where the carried class is
    /// absent.
    pub fn phi(&self) -> f64 {
        if self.s_c.is_finite() {
            (self.v_r - self.v_c) / self.s_c
        } else {
            0.0
        }
    }
}

/// Carried flux through one cluster face, with `down` the cluster on the
/// smaller-label (downstream) side and `up` on the larger-label side.
///
/// Each side donates its own boundary speed phi = (v_r - v_c)/s_c when, and
/// only when, that speed points across this face: phi > 0 moves carried
/// state up-label (donor `down`), phi < 0 down-label (donor `up`). The
/// max(0, dv)/dv gates of the general flux definition are exactly these two
/// one-sided clamps; a vanishing speed difference yields zero flux, never
/// 0/0. `None` sides (field ends) contribute nothing.
pub fn face_flux(down: Option<&FluxCell>, up: Option<&FluxCell>) -> f64 {
    let outgoing = down.map_or(0.0, |d| d.phi().max(0.0));
    let incoming = up.map_or(0.0, |u| u.phi().min(0.0));
    outgoing + incoming
}

/// Per-cluster view of the gated fluxes: (V_{i+1/2}, V_{i-1/2}) for cluster
/// i given its neighbors. `None` stands for an empty field end, which never
/// donates.
pub fn flux_select(
    prev: Option<&FluxCell>,
    cur: &FluxCell,
    next: Option<&FluxCell>,
) -> (f64, f64) {
    (face_flux(Some(cur), next), face_flux(prev, Some(cur)))
}

/// Carried-boundary fluxes of one step, for conservation accounting: the
/// change of total carried mass equals -dt (upstream_flux - downstream_flux)
/// whenever the interior fluxes telescope (uniform drift direction).
#[derive(Debug, Clone, Copy, Default)]
pub struct CarriedBoundaryFlux {
    /// V_{i+1/2} of the last (most upstream) cluster.
    pub upstream: f64,
    /// V_{i-1/2} of the leader cluster.
    pub downstream: f64,
}

/// A method-2 run.
pub struct Lag2Run<'a> {
    pub field: CarrierField,
    pub law: &'a dyn SpeedLaw,
    pub dt: f64,
    pub boundary: Boundary,
    pub t: f64,
    pub step_count: u64,
    /// Accumulated -dt (upstream - downstream) over all steps; compare with
    /// the change of `carried_mass` to measure interior conservation.
    pub carried_boundary_change: f64,
    lambda: f64,
    min_dn: f64,
}

impl<'a> Lag2Run<'a> {
    pub fn new(field: CarrierField, law: &'a dyn SpeedLaw, dt: f64, boundary: Boundary) -> Self {
        let lambda = max_wave_speed(law, Coordinate::Lagrangian);
        let min_dn = field.clusters.iter().map(|c| c.dn).fold(f64::INFINITY, f64::min);
        Lag2Run {
            field,
            law,
            dt,
            boundary,
            t: 0.0,
            step_count: 0,
            carried_boundary_change: 0.0,
            lambda,
            min_dn,
        }
    }

    pub fn max_stable_dt(&self) -> f64 {
        self.min_dn / self.lambda
    }

    /// Per-cluster speeds of both classes from the current (frozen) state.
    pub fn speeds(&self) -> Result<Vec<FluxCell>, SolverError> {
        let f = &self.field;
        (0..f.clusters.len())
            .map(|i| {
                let s_r = f.clusters[i].spacing;
                let s_c = f.carried_spacing(i);
                let (s_ptw, s_car) = match f.reference {
                    ClassId::Ptw => (s_r, s_c),
                    ClassId::Car => (s_c, s_r),
                };
                let v_r = self.law.speed_from_spacing(f.reference, s_ptw, s_car)?;
                let v_c = self.law.speed_from_spacing(f.carried_class(), s_ptw, s_car)?;
                Ok(FluxCell { v_r, v_c, s_c })
            })
            .collect()
    }

    /// One full step: reference spacing update, carried ratio update, and
    /// position update, all from one frozen snapshot.
    pub fn step(&mut self) -> Result<(), SolverError> {
        if self.min_dn.is_finite() && self.dt > self.max_stable_dt() {
            return Err(SolverError::CflViolation { dt: self.dt, max_dt: self.max_stable_dt() });
        }
        let cells = self.speeds()?;
        if cells.is_empty() {
            self.step_count += 1;
            self.t = self.step_count as f64 * self.dt;
            return Ok(());
        }
        let v_r: Vec<f64> = cells.iter().map(|c| c.v_r).collect();

        // Reference class: same scheme as method 1.
        let ghost = leader_ghost_flux(self.field.reference, self.law, self.boundary, v_r[0])?;
        let new_spacings =
            updated_cluster_spacings(self.field.reference, &self.field.clusters, &v_r, ghost, self.dt)?;

        // Carried class: gated upwind fluxes on the ratio state.
        let (new_ratio, boundary_flux) = carried_update(
            &self.field.clusters,
            &self.field.carried_ratio,
            &cells,
            self.dt,
            self.boundary,
        )?;

        for (c, s) in self.field.clusters.iter_mut().zip(&new_spacings) {
            c.spacing = *s;
        }
        self.field.carried_ratio = new_ratio;
        let mut view = self.field.view();
        advance_positions(&mut view, &v_r, self.dt)?;
        self.field.clusters = view.clusters;

        self.carried_boundary_change -=
            self.dt * (boundary_flux.upstream - boundary_flux.downstream);
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
}

/// One face of the carried-ratio update. With equal ratios on both sides
/// this is exactly the gated `face_flux`. When the ratio differs, the drift
/// sign no longer determines which way the ratio wave itself travels: the
/// carried flux is not monotone in y, because a larger y packs the carried
/// class tighter and slows it, so past the choke point more carried state
/// means less drift. Donoring by drift sign there feeds a staircase that
/// never dissipates. The wave direction is the secant slope of the flux in
/// y across the face, and the donor follows it.
fn carried_face(down: Option<(&FluxCell, f64)>, up: Option<(&FluxCell, f64)>) -> f64 {
    let (Some((d, y_d)), Some((u, y_u))) = (down, up) else {
        return face_flux(down.map(|(c, _)| c), up.map(|(c, _)| c));
    };
    let dy = y_u - y_d;
    if dy.abs() <= 1e-12 * y_u.max(y_d).max(1.0) {
        return face_flux(Some(d), Some(u));
    }
    if (u.phi() - d.phi()) / dy >= 0.0 {
        d.phi()
    } else {
        u.phi()
    }
}

/// The carried-ratio update of one step; returns the new ratios and the two
/// outer boundary fluxes.
///
/// Every interior face value is shared by its two neighbors, so interior
/// carried mass telescopes exactly. Ghost cells at the field ends follow
/// the boundary rule: the upstream ghost always copies the last cluster;
/// the downstream ghost copies the leader under `ZeroGradient` and is empty
/// under `FreeDownstream`.
pub fn carried_update(
    clusters: &[Cluster],
    ratio: &[f64],
    cells: &[FluxCell],
    dt: f64,
    bc: Boundary,
) -> Result<(Vec<f64>, CarriedBoundaryFlux), SolverError> {
    let n = clusters.len();
    // face[i] = V_{i-1/2}; face[n] is the upstream boundary face.
    let mut face = Vec::with_capacity(n + 1);
    let down_ghost = match bc {
        Boundary::ZeroGradient => Some((&cells[0], ratio[0])),
        Boundary::FreeDownstream => None,
    };
    face.push(carried_face(down_ghost, Some((&cells[0], ratio[0]))));
    for i in 1..n {
        face.push(carried_face(Some((&cells[i - 1], ratio[i - 1])), Some((&cells[i], ratio[i]))));
    }
    face.push(carried_face(
        Some((&cells[n - 1], ratio[n - 1])),
        Some((&cells[n - 1], ratio[n - 1])),
    ));

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let y = ratio[i] - dt / clusters[i].dn * (face[i + 1] - face[i]);
        if y < -1e-12 {
            return Err(SolverError::NegativeCarriedRatio { cluster: i, ratio: y });
        }
        out.push(y.max(0.0));
    }
    Ok((out, CarriedBoundaryFlux { upstream: face[n], downstream: face[0] }))
}

/// One step of the density-form representation (state (1/rho_r, rho_c/rho_r)
/// with fluxes v_r and rho_c (v_r - v_c)). The state coincides with the
/// spacing form under s = 1/rho; this path evaluates everything through
/// densities and exists as a cross-check. Requires rho_r > 0 everywhere.
pub fn density_form_step(
    field: &CarrierField,
    law: &dyn SpeedLaw,
    dt: f64,
    boundary: Boundary,
) -> Result<CarrierField, SolverError> {
    let n = field.clusters.len();
    let mut rho_r = Vec::with_capacity(n);
    let mut rho_c = Vec::with_capacity(n);
    for (i, c) in field.clusters.iter().enumerate() {
        if !(c.spacing.is_finite() && c.spacing > 0.0) {
            return Err(SolverError::ZeroReferenceDensity { cluster: i });
        }
        let r = 1.0 / c.spacing;
        rho_r.push(r);
        rho_c.push(field.carried_ratio[i] * r);
    }
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let (rp, rc) = match field.reference {
            ClassId::Ptw => (rho_r[i], rho_c[i]),
            ClassId::Car => (rho_c[i], rho_r[i]),
        };
        let v_r = law.speed(field.reference, rp, rc)?;
        let v_c = law.speed(field.carried_class(), rp, rc)?;
        // Density-form boundary speed rho_c (v_r - v_c); equals phi of the
        // spacing form since rho_c = 1/s_c.
        cells.push(DensityFluxCell { v_r, v_c, rho_c: rho_c[i] });
    }

    let v_r: Vec<f64> = cells.iter().map(|c| c.v_r).collect();
    let ghost = leader_ghost_flux(field.reference, law, boundary, v_r[0])?;
    // (1/rho_r)' = 1/rho_r - dt/dn (v_r,i - v_r,i-1): literally the spacing
    // update applied to 1/rho_r.
    let inv_rho: Vec<Cluster> = field
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| Cluster { spacing: 1.0 / rho_r[i], ..*c })
        .collect();
    let new_inv_rho =
        updated_cluster_spacings(field.reference, &inv_rho, &v_r, ghost, dt)?;

    // Same face construction as the spacing form, phrased in densities:
    // rho_c (v_r - v_c) = (v_r - v_c)/s_c and y = rho_c/rho_r.
    let y: Vec<f64> = (0..n).map(|i| rho_c[i] / rho_r[i]).collect();
    let mut face = Vec::with_capacity(n + 1);
    let down_ghost = match boundary {
        Boundary::ZeroGradient => Some((&cells[0], y[0])),
        Boundary::FreeDownstream => None,
    };
    face.push(density_carried_face(down_ghost, Some((&cells[0], y[0]))));
    for i in 1..n {
        face.push(density_carried_face(
            Some((&cells[i - 1], y[i - 1])),
            Some((&cells[i], y[i])),
        ));
    }
    face.push(density_carried_face(
        Some((&cells[n - 1], y[n - 1])),
        Some((&cells[n - 1], y[n - 1])),
    ));

    let mut new_ratio = Vec::with_capacity(n);
    for i in 0..n {
        let y = field.carried_ratio[i] - dt / field.clusters[i].dn * (face[i + 1] - face[i]);
        if y < -1e-12 {
            return Err(SolverError::NegativeCarriedRatio { cluster: i, ratio: y });
        }
        new_ratio.push(y.max(0.0));
    }

    let mut out = field.clone();
    for (i, c) in out.clusters.iter_mut().enumerate() {
        c.spacing = new_inv_rho[i];
        c.position += dt * v_r[i];
    }
    out.carried_ratio = new_ratio;
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct DensityFluxCell {
    v_r: f64,
    v_c: f64,
    rho_c: f64,
}

impl DensityFluxCell {
    fn phi(&self) -> f64 {
        self.rho_c * (self.v_r - self.v_c)
    }
}

/// Density-form twin of `carried_face`.
fn density_carried_face(
    down: Option<(&DensityFluxCell, f64)>,
    up: Option<(&DensityFluxCell, f64)>,
) -> f64 {
    let (Some((d, y_d)), Some((u, y_u))) = (down, up) else {
        let outgoing = down.map_or(0.0, |(d, _)| d.phi().max(0.0));
        let incoming = up.map_or(0.0, |(u, _)| u.phi().min(0.0));
        return outgoing + incoming;
    };
    let dy = y_u - y_d;
    if dy.abs() <= 1e-12 * y_u.max(y_d).max(1.0) {
        return d.phi().max(0.0) + u.phi().min(0.0);
    }
    if (u.phi() - d.phi()) / dy >= 0.0 {
        d.phi()
    } else {
        u.phi()
    }
}

/// CSV header for method-2 snapshots.
pub const CSV_HEADER: &str = "t,class,cluster_index,position,spacing,speed,carried_spacing";

/// Append one snapshot to a CSV stream.
pub fn write_snapshot_csv(
    run: &Lag2Run<'_>,
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    let cells = run.speeds().map_err(std::io::Error::other)?;
    for (i, (c, cell)) in run.field.clusters.iter().zip(&cells).enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            run.t,
            run.field.reference.label(),
            c.index,
            c.position,
            c.spacing,
            cell.v_r,
            run.field.carried_spacing(i)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speedlaw::{FreeSpaceLaw, FreeSpaceLawParams};

    fn law() -> FreeSpaceLaw {
        FreeSpaceLaw::new(FreeSpaceLawParams::default())
    }

    fn uniform_carrier(reference: ClassId, rho: f64, dn: f64, length: f64) -> CarrierField {
        CarrierField::from_density_profile(
            reference,
            &[ProfileSegment { x_start: 0.0, x_end: length, rho: [rho, rho] }],
            dn,
        )
    }

    #[test]
    fn from_profile_sets_unit_ratio_for_identical_densities() {
        let f = uniform_carrier(ClassId::Ptw, 0.15, 7.5, 1500.0);
        for y in &f.carried_ratio {
            assert!((y - 1.0).abs() < 1e-9);
        }
        assert!((f.carried_mass() - 225.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_state_is_stationary() {
        let l = law();
        let mut run = Lag2Run::new(
            uniform_carrier(ClassId::Ptw, 0.15, 7.5, 1500.0),
            &l,
            0.125,
            Boundary::ZeroGradient,
        );
        let before = run.field.clone();
        run.step().unwrap();
        for (a, b) in before.clusters.iter().zip(run.field.clusters.iter()) {
            assert!((a.spacing - b.spacing).abs() < 1e-12);
        }
        for (a, b) in before.carried_ratio.iter().zip(run.field.carried_ratio.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn co_moving_classes_have_zero_carried_flux() {
        let cell = FluxCell { v_r: 10.0, v_c: 10.0, s_c: 5.0 };
        assert_eq!(flux_select(Some(&cell), &cell, Some(&cell)), (0.0, 0.0));
    }

    #[test]
    fn uniform_left_directed_regime_reduces_to_simple_pair() {
        // v_r > v_c everywhere: V_{i+1/2} = phi_i, V_{i-1/2} = phi_{i-1}.
        let a = FluxCell { v_r: 12.0, v_c: 9.0, s_c: 6.0 };
        let b = FluxCell { v_r: 11.0, v_c: 8.5, s_c: 5.0 };
        let c = FluxCell { v_r: 10.0, v_c: 8.0, s_c: 4.0 };
        let (plus, minus) = flux_select(Some(&a), &b, Some(&c));
        assert_eq!(plus, b.phi());
        assert_eq!(minus, a.phi());
    }

    #[test]
    fn uniform_right_directed_regime_uses_upper_neighbors() {
        let a = FluxCell { v_r: 8.0, v_c: 12.0, s_c: 6.0 };
        let b = FluxCell { v_r: 8.0, v_c: 11.0, s_c: 5.0 };
        let c = FluxCell { v_r: 8.0, v_c: 10.0, s_c: 4.0 };
        let (plus, minus) = flux_select(Some(&a), &b, Some(&c));
        assert_eq!(plus, c.phi());
        assert_eq!(minus, b.phi());
    }

    #[test]
    fn sign_change_gates_pick_one_sided_donors() {
        let left = FluxCell { v_r: 12.0, v_c: 9.0, s_c: 5.0 }; // phi = 0.6
        let right = FluxCell { v_r: 8.0, v_c: 11.0, s_c: 5.0 }; // phi = -0.6
        // Both cells drift away from the face between them (the lower one
        // down-label, the upper one up-label): both gates close.
        let (_, minus) = flux_select(Some(&right), &left, None);
        assert_eq!(minus, 0.0, "diverging drifts leave nothing to cross");
        // Both cells drift toward the face between them: both donate.
        let (plus, _) = flux_select(None, &left, Some(&right));
        assert_eq!(plus, 0.6 - 0.6, "converging drifts cancel here");
        let slow = FluxCell { v_r: 8.0, v_c: 10.0, s_c: 4.0 }; // phi = -0.5
        let (plus, minus) = flux_select(Some(&right), &slow, Some(&right));
        assert_eq!(plus, -0.6, "the upper neighbor's drift enters from above");
        assert_eq!(minus, -0.5, "own right-directed drift exits downward");
    }

    #[test]
    fn interior_faces_are_shared_between_neighbors() {
        // Conservation: cluster i's V_{i+1/2} equals cluster i+1's
        // V_{i-1/2} for arbitrary sign patterns.
        let cells = [
            FluxCell { v_r: 12.0, v_c: 9.0, s_c: 5.0 },
            FluxCell { v_r: 8.0, v_c: 11.0, s_c: 4.0 },
            FluxCell { v_r: 10.0, v_c: 10.0, s_c: 6.0 },
            FluxCell { v_r: 9.0, v_c: 14.0, s_c: 3.0 },
        ];
        for w in cells.windows(2) {
            let (plus, _) = flux_select(None, &w[0], Some(&w[1]));
            let (_, minus) = flux_select(Some(&w[0]), &w[1], None);
            assert_eq!(plus, minus);
        }
    }

    #[test]
    fn hand_case_ratio_update() {
        // Two clusters with phi = (0.5, 0.2) 1/s in the left-directed
        // regime, dt/dn = 1/60, starting at y = 1:
        //   y0' = 1 - (1/60)(0.5 - 0)    = 1 - 1/120
        //   y1' = 1 - (1/60)(0.2 - 0.5)  = 1 + 0.005
        let clusters = vec![
            Cluster { index: 7.5, dn: 7.5, spacing: 5.0, position: 100.0 },
            Cluster { index: 15.0, dn: 7.5, spacing: 5.0, position: 62.5 },
        ];
        let cells = vec![
            FluxCell { v_r: 10.0, v_c: 7.5, s_c: 5.0 },  // phi = 0.5
            FluxCell { v_r: 10.0, v_c: 9.0, s_c: 5.0 },  // phi = 0.2
        ];
        // Free road ahead: the leader face has no downstream donor and the
        // leader's own drift points up-label, so nothing crosses it.
        let (y, _) =
            carried_update(&clusters, &[1.0, 1.0], &cells, 0.125, Boundary::FreeDownstream)
                .unwrap();
        assert!((y[0] - (1.0 - 1.0 / 120.0)).abs() < 1e-15, "y0 = {}", y[0]);
        assert!((y[1] - 1.005).abs() < 1e-15, "y1 = {}", y[1]);
    }

    #[test]
    fn density_form_agrees_with_spacing_form() {
        let l = law();
        // Non-uniform profile so fluxes are active.
        let segments = vec![
            ProfileSegment { x_start: 0.0, x_end: 700.0, rho: [0.15, 0.15] },
            ProfileSegment { x_start: 700.0, x_end: 1500.0, rho: [0.3, 0.3] },
        ];
        for reference in [ClassId::Ptw, ClassId::Car] {
            let field = CarrierField::from_density_profile(reference, &segments, 7.5);
            let mut spacing_run =
                Lag2Run::new(field.clone(), &l, 0.125, Boundary::FreeDownstream);
            spacing_run.step().unwrap();
            let density = density_form_step(&field, &l, 0.125, Boundary::FreeDownstream).unwrap();
            for i in 0..field.clusters.len() {
                let a = spacing_run.field.clusters[i].spacing;
                let b = density.clusters[i].spacing;
                assert!((a - b).abs() <= 1e-10 * a.abs(), "spacing {i}: {a} vs {b}");
                let ya = spacing_run.field.carried_ratio[i];
                let yb = density.carried_ratio[i];
                assert!((ya - yb).abs() <= 1e-10 * ya.abs().max(1.0), "ratio {i}: {ya} vs {yb}");
            }
        }
    }

    #[test]
    fn density_form_rejects_vanishing_reference_density() {
        let mut field = uniform_carrier(ClassId::Ptw, 0.15, 7.5, 300.0);
        field.clusters[1].spacing = f64::INFINITY;
        let l = law();
        assert!(matches!(
            density_form_step(&field, &l, 0.125, Boundary::ZeroGradient),
            Err(SolverError::ZeroReferenceDensity { cluster: 1 })
        ));
    }

    #[test]
    fn carried_mass_conserved_in_uniform_regime() {
        // PTWs faster than cars throughout: left-directed fluxes telescope,
        // so interior conservation is exact up to roundoff.
        let l = law();
        let segments = vec![
            ProfileSegment { x_start: 0.0, x_end: 1400.0, rho: [0.15, 0.15] },
            ProfileSegment { x_start: 1400.0, x_end: 3000.0, rho: [0.3, 0.3] },
        ];
        let field = CarrierField::from_density_profile(ClassId::Ptw, &segments, 7.5);
        let mut run = Lag2Run::new(field, &l, 0.125, Boundary::FreeDownstream);
        let m0 = run.field.carried_mass();
        for _ in 0..100 {
            let before = run.field.carried_mass();
            let acc_before = run.carried_boundary_change;
            run.step().unwrap();
            let after = run.field.carried_mass();
            let flux = run.carried_boundary_change - acc_before;
            assert!(
                ((after - before) - flux).abs() <= 1e-10 * m0,
                "step {}: mass change {} vs boundary {}",
                run.step_count,
                after - before,
                flux
            );
        }
    }
}

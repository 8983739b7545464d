//! Fundamental diagram: class speed as a function of both class densities
//! (Eulerian form) or both class spacings (Lagrangian form), plus sampled
//! wave-speed bounds for CFL checks.
//!
//! The default closure assumes exponentially distributed free space with mean
//! l_bar(rho_1, rho_2) = (1 - rho_1 L_1 - rho_2 L_2) / (rho_1 + rho_2), which
//! gives the closed form
//!
//!   v_i = v_i^f * exp(-r_i^c / l_bar)
//!
//! for the fraction of gaps larger than the class's critical gap r_i^c. A
//! Greenshields-type law with known analytic wave speeds is included as a
//! cross-validation law; solvers only ever see the [`SpeedLaw`] trait.

use thiserror::Error;

use crate::types::{occupancy, ClassId, VehicleClassParams};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum SpeedLawError {
    #[error("occupancy {occupancy} beyond jam")]
    BeyondJam { occupancy: f64 },

    #[error("nonpositive spacing {spacing}")]
    NonpositiveSpacing { spacing: f64 },
}

/// Class speed as a function of the state of both classes.
///
/// Implementations must be monotone non-increasing in each density and
/// bounded by `[0, v_free]` on the admissible domain (occupancy <= 1).
pub trait SpeedLaw: Send + Sync {
    fn params(&self) -> &[VehicleClassParams; 2];

    /// Speed of `class` at densities (veh/m). Errors beyond jam occupancy.
    fn speed(&self, class: ClassId, rho_ptw: f64, rho_car: f64) -> Result<f64, SpeedLawError>;

    /// Spacing form: identical to `speed(class, 1/s_ptw, 1/s_car)`. An
    /// infinite spacing means the class is locally absent (zero density).
    fn speed_from_spacing(
        &self,
        class: ClassId,
        s_ptw: f64,
        s_car: f64,
    ) -> Result<f64, SpeedLawError> {
        for s in [s_ptw, s_car] {
            if !(s > 0.0) {
                return Err(SpeedLawError::NonpositiveSpacing { spacing: s });
            }
        }
        self.speed(class, 1.0 / s_ptw, 1.0 / s_car)
    }

    fn name(&self) -> &'static str;
}

/// Parameters of the exponential free-space law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeSpaceLawParams {
    pub class_params: [VehicleClassParams; 2],
    /// Floor for the mean free space, m; guards the jam singularity.
    pub epsilon_space: f64,
}

impl Default for FreeSpaceLawParams {
    fn default() -> Self {
        FreeSpaceLawParams {
            class_params: default_class_params(),
            epsilon_space: 1e-9,
        }
    }
}

/// Default class parameters: PTW free-flow 20 m/s, car 15 m/s; critical gaps
/// 1 m / 2 m; effective lengths 0.457 m / 2.057 m (vehicle footprint area
/// over a 3.5 m lane).
pub fn default_class_params() -> [VehicleClassParams; 2] {
    [
        VehicleClassParams {
            class_id: ClassId::Ptw,
            v_free: 20.0,
            r_crit: 1.0,
            eff_length: 0.457,
        },
        VehicleClassParams {
            class_id: ClassId::Car,
            v_free: 15.0,
            r_crit: 2.0,
            eff_length: 2.057,
        },
    ]
}

/// Speed law from an exponential free-space distribution.
#[derive(Debug, Clone, Copy)]
pub struct FreeSpaceLaw {
    pub p: FreeSpaceLawParams,
}

impl FreeSpaceLaw {
    pub fn new(p: FreeSpaceLawParams) -> Self {
        FreeSpaceLaw { p }
    }

    /// Mean free space per vehicle, m. Infinite on an empty road, clamped
    /// below by `epsilon_space` at jam.
    pub fn mean_free_space(&self, rho_ptw: f64, rho_car: f64) -> Result<f64, SpeedLawError> {
        let occ = occupancy(rho_ptw, rho_car, &self.p.class_params);
        if occ > 1.0 + 1e-12 {
            return Err(SpeedLawError::BeyondJam { occupancy: occ });
        }
        let total = rho_ptw + rho_car;
        if total <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(((1.0 - occ) / total).max(self.p.epsilon_space))
    }
}

impl SpeedLaw for FreeSpaceLaw {
    fn params(&self) -> &[VehicleClassParams; 2] {
        &self.p.class_params
    }

    fn speed(&self, class: ClassId, rho_ptw: f64, rho_car: f64) -> Result<f64, SpeedLawError> {
        let l_bar = self.mean_free_space(rho_ptw, rho_car)?;
        let cp = &self.p.class_params[class.index()];
        // r / inf = 0, so an empty road yields exactly v_free.
        Ok(cp.v_free * (-cp.r_crit / l_bar).exp())
    }

    fn name(&self) -> &'static str {
        "freespace"
    }
}

/// Greenshields-type cross-validation law: v_i = v_i^f (1 - rho_1 L_1 - rho_2 L_2).
#[derive(Debug, Clone, Copy)]
pub struct GreenshieldsLaw {
    pub class_params: [VehicleClassParams; 2],
}

impl GreenshieldsLaw {
    pub fn new(class_params: [VehicleClassParams; 2]) -> Self {
        GreenshieldsLaw { class_params }
    }
}

impl SpeedLaw for GreenshieldsLaw {
    fn params(&self) -> &[VehicleClassParams; 2] {
        &self.class_params
    }

    fn speed(&self, class: ClassId, rho_ptw: f64, rho_car: f64) -> Result<f64, SpeedLawError> {
        let occ = occupancy(rho_ptw, rho_car, &self.class_params);
        if occ > 1.0 + 1e-12 {
            return Err(SpeedLawError::BeyondJam { occupancy: occ });
        }
        Ok(self.class_params[class.index()].v_free * (1.0 - occ).max(0.0))
    }

    fn name(&self) -> &'static str {
        "greenshields"
    }
}

/// Coordinate system a wave-speed bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    /// Bound on |dq_i/drho_i|, m/s; CFL reads dt <= dx / lambda.
    Eulerian,
    /// Bound on |dV_i/ds_i|, veh/s; CFL reads dt <= dn / lambda.
    Lagrangian,
}

const WAVE_SPEED_SAMPLES: usize = 512;
const SAFETY_FACTOR: f64 = 1.1;

/// Sampled wave-speed bound over the full admissible density box, scaled by
/// a 1.1 safety factor.
pub fn max_wave_speed(law: &dyn SpeedLaw, coord: Coordinate) -> f64 {
    let p = law.params();
    let box_ptw = (0.0, 1.0 / p[0].eff_length);
    let box_car = (0.0, 1.0 / p[1].eff_length);
    let raw = match coord {
        Coordinate::Eulerian => sampled_max_flux_slope(law, box_ptw, box_car, WAVE_SPEED_SAMPLES),
        Coordinate::Lagrangian => {
            sampled_max_speed_spacing_slope(law, box_ptw, box_car, WAVE_SPEED_SAMPLES)
        }
    };
    SAFETY_FACTOR * raw
}

/// Max |dq_i/drho_i| over a density box, by finite differences between
/// adjacent admissible samples. A degenerate (single-point) box gives 0.
pub fn sampled_max_flux_slope(
    law: &dyn SpeedLaw,
    box_ptw: (f64, f64),
    box_car: (f64, f64),
    n: usize,
) -> f64 {
    scan_box(law, box_ptw, box_car, n, |class, rho_own, rho_other| {
        let (rp, rc) = order_densities(class, rho_own, rho_other);
        law.speed(class, rp, rc).ok().map(|v| rho_own * v)
    })
}

/// Max |dV_i/ds_i| over the spacing range implied by a density box. Uses
/// dV/ds = rho^2 |dV/drho| evaluated at sample midpoints.
pub fn sampled_max_speed_spacing_slope(
    law: &dyn SpeedLaw,
    box_ptw: (f64, f64),
    box_car: (f64, f64),
    n: usize,
) -> f64 {
    let p = law.params();
    let mut max_slope: f64 = 0.0;
    for class in [ClassId::Ptw, ClassId::Car] {
        let (own_box, other_box) = if class == ClassId::Ptw {
            (box_ptw, box_car)
        } else {
            (box_car, box_ptw)
        };
        let h_own = (own_box.1 - own_box.0) / n.max(1) as f64;
        let h_other = (other_box.1 - other_box.0) / n.max(1) as f64;
        if h_own <= 0.0 {
            continue;
        }
        for jo in 0..=n {
            let rho_other = other_box.0 + jo as f64 * h_other;
            let mut prev: Option<(f64, f64)> = None;
            for j in 0..=n {
                let rho_own = own_box.0 + j as f64 * h_own;
                let (rp, rc) = order_densities(class, rho_own, rho_other);
                if occupancy(rp, rc, p) > 1.0 {
                    prev = None;
                    continue;
                }
                if let Ok(v) = law.speed(class, rp, rc) {
                    if let Some((rho_a, v_a)) = prev {
                        let rho_mid = 0.5 * (rho_a + rho_own);
                        let dv_drho = (v - v_a) / h_own;
                        max_slope = max_slope.max((rho_mid * rho_mid * dv_drho).abs());
                    }
                    prev = Some((rho_own, v));
                } else {
                    prev = None;
                }
            }
        }
    }
    max_slope
}

fn order_densities(class: ClassId, rho_own: f64, rho_other: f64) -> (f64, f64) {
    match class {
        ClassId::Ptw => (rho_own, rho_other),
        ClassId::Car => (rho_other, rho_own),
    }
}

fn scan_box(
    law: &dyn SpeedLaw,
    box_ptw: (f64, f64),
    box_car: (f64, f64),
    n: usize,
    f: impl Fn(ClassId, f64, f64) -> Option<f64>,
) -> f64 {
    let p = law.params();
    let mut max_slope: f64 = 0.0;
    for class in [ClassId::Ptw, ClassId::Car] {
        let (own_box, other_box) = if class == ClassId::Ptw {
            (box_ptw, box_car)
        } else {
            (box_car, box_ptw)
        };
        let h_own = (own_box.1 - own_box.0) / n.max(1) as f64;
        let h_other = (other_box.1 - other_box.0) / n.max(1) as f64;
        if h_own <= 0.0 {
            continue;
        }
        for jo in 0..=n {
            let rho_other = other_box.0 + jo as f64 * h_other;
            let mut prev: Option<f64> = None;
            for j in 0..=n {
                let rho_own = own_box.0 + j as f64 * h_own;
                let (rp, rc) = order_densities(class, rho_own, rho_other);
                if occupancy(rp, rc, p) > 1.0 {
                    prev = None;
                    continue;
                }
                match f(class, rho_own, rho_other) {
                    Some(q) => {
                        if let Some(q_a) = prev {
                            max_slope = max_slope.max(((q - q_a) / h_own).abs());
                        }
                        prev = Some(q);
                    }
                    None => prev = None,
                }
            }
        }
    }
    max_slope
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> FreeSpaceLaw {
        FreeSpaceLaw::new(FreeSpaceLawParams::default())
    }

    #[test]
    fn mean_free_space_empty_road_is_infinite() {
        assert_eq!(law().mean_free_space(0.0, 0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn mean_free_space_at_jam_hits_floor() {
        let l = law();
        // Pick densities with occupancy exactly 1.
        let rho_car = 1.0 / 2.057;
        assert_eq!(l.mean_free_space(0.0, rho_car).unwrap(), 1e-9);
    }

    #[test]
    fn mean_free_space_beyond_jam_rejected() {
        assert!(matches!(
            law().mean_free_space(1.0, 1.0),
            Err(SpeedLawError::BeyondJam { .. })
        ));
    }

    #[test]
    fn mean_free_space_matches_precomputed_value() {
        // (1 - 0.15*0.457 - 0.15*2.057) / 0.3, evaluated in extended
        // precision beforehand.
        let l = law().mean_free_space(0.15, 0.15).unwrap();
        assert!((l - 2.076333333333333).abs() < 1e-14, "l_bar = {l}");
    }

    #[test]
    fn speed_empty_road_is_free_flow() {
        let l = law();
        assert_eq!(l.speed(ClassId::Ptw, 0.0, 0.0).unwrap(), 20.0);
        assert_eq!(l.speed(ClassId::Car, 0.0, 0.0).unwrap(), 15.0);
    }

    #[test]
    fn speed_at_jam_is_negligible() {
        let l = law();
        let rho_car = 1.0 / 2.057;
        assert!(l.speed(ClassId::Car, 0.0, rho_car).unwrap() < 1e-6);
        assert!(l.speed(ClassId::Ptw, 0.0, rho_car).unwrap() < 1e-6);
    }

    #[test]
    fn speed_matches_precomputed_values() {
        // v_i = v_i^f exp(-r_i / l_bar) at rho = (0.15, 0.15), frozen from an
        // extended-precision evaluation.
        let l = law();
        let v1 = l.speed(ClassId::Ptw, 0.15, 0.15).unwrap();
        let v2 = l.speed(ClassId::Car, 0.15, 0.15).unwrap();
        assert!((v1 - 12.355657264392869).abs() < 1e-12, "v1 = {v1}");
        assert!((v2 - 5.724834991317911).abs() < 1e-12, "v2 = {v2}");
    }

    #[test]
    fn speed_cross_checked_by_quadrature_of_gap_distribution() {
        // Integrate the exponential gap density over [r, r + 60 l_bar] with
        // Simpson's rule and compare with the closed form.
        let l = law();
        let l_bar = l.mean_free_space(0.15, 0.15).unwrap();
        for class in [ClassId::Ptw, ClassId::Car] {
            let cp = l.p.class_params[class.index()];
            let f = |x: f64| (1.0 / l_bar) * (-x / l_bar).exp();
            let (a, b) = (cp.r_crit, cp.r_crit + 60.0 * l_bar);
            let n = 200_000;
            let h = (b - a) / n as f64;
            let mut integral = f(a) + f(b);
            for k in 1..n {
                integral += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            integral *= h / 3.0;
            let v = l.speed(class, 0.15, 0.15).unwrap();
            assert!(
                (v - cp.v_free * integral).abs() < 1e-10,
                "quadrature mismatch for {:?}: {} vs {}",
                class,
                v,
                cp.v_free * integral
            );
        }
    }

    #[test]
    fn spacing_form_consistent_with_density_form() {
        let l = law();
        let s = 1.0 / 0.15;
        for class in [ClassId::Ptw, ClassId::Car] {
            let a = l.speed_from_spacing(class, s, s).unwrap();
            let b = l.speed(class, 0.15, 0.15).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn spacing_form_free_flow_and_jam_limits() {
        let l = law();
        let v = l
            .speed_from_spacing(ClassId::Ptw, f64::INFINITY, f64::INFINITY)
            .unwrap();
        assert_eq!(v, 20.0);
        // Spacing whose reciprocal density gives occupancy 1.
        let s_jam = 2.057;
        assert!(l.speed_from_spacing(ClassId::Car, f64::INFINITY, s_jam).unwrap() < 1e-6);
    }

    #[test]
    fn nonpositive_spacing_rejected() {
        assert!(matches!(
            law().speed_from_spacing(ClassId::Ptw, 0.0, 5.0),
            Err(SpeedLawError::NonpositiveSpacing { .. })
        ));
        assert!(matches!(
            law().speed_from_spacing(ClassId::Ptw, 5.0, -1.0),
            Err(SpeedLawError::NonpositiveSpacing { .. })
        ));
    }

    #[test]
    fn low_density_speed_ordering_follows_v_free() {
        let l = law();
        let v1 = l.speed(ClassId::Ptw, 1e-4, 1e-4).unwrap();
        let v2 = l.speed(ClassId::Car, 1e-4, 1e-4).unwrap();
        assert!(v1 > v2, "PTW v_free 20 > car 15 must hold at low density");

        // Swapped free-flow speeds flip the ordering.
        let mut p = FreeSpaceLawParams::default();
        p.class_params[0].v_free = 15.0;
        p.class_params[1].v_free = 20.0;
        p.class_params[0].r_crit = 0.0;
        p.class_params[1].r_crit = 0.0;
        let swapped = FreeSpaceLaw::new(p);
        let v1 = swapped.speed(ClassId::Ptw, 1e-4, 1e-4).unwrap();
        let v2 = swapped.speed(ClassId::Car, 1e-4, 1e-4).unwrap();
        assert!(v2 > v1);
    }

    #[test]
    fn greenshields_wave_speed_matches_analytic() {
        // Single class: q = rho v_f (1 - rho L), max |dq/drho| = v_f at rho = 0.
        let g = GreenshieldsLaw::new(default_class_params());
        let slope = sampled_max_flux_slope(&g, (0.0, 1.0 / 0.457), (0.0, 0.0), 512);
        assert!((slope - 20.0).abs() / 20.0 < 0.02, "slope = {slope}");
    }

    #[test]
    fn degenerate_box_gives_zero_slope() {
        let g = GreenshieldsLaw::new(default_class_params());
        assert_eq!(sampled_max_flux_slope(&g, (0.1, 0.1), (0.1, 0.1), 64), 0.0);
    }

    #[test]
    fn table1_settings_satisfy_lagrangian_cfl() {
        let l = law();
        let lambda = max_wave_speed(&l, Coordinate::Lagrangian);
        // dt = 0.125 s, dn = 7.5 veh must be admissible.
        assert!(0.125 <= 7.5 / lambda, "lambda = {lambda}");
    }

    #[test]
    fn greenshields_lagrangian_slope_matches_analytic() {
        // v = v_f (1 - L/s): |dV/ds| = v_f L / s^2, max v_f / L at jam.
        let p = default_class_params();
        let g = GreenshieldsLaw::new(p);
        let slope =
            sampled_max_speed_spacing_slope(&g, (0.0, 1.0 / p[0].eff_length), (0.0, 0.0), 2048);
        let analytic = p[0].v_free / p[0].eff_length;
        assert!((slope - analytic).abs() / analytic < 0.02, "slope = {slope}");
    }
}

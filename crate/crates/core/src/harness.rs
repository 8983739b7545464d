//! Experiment runner and comparison metrics: canned scenarios, profile
//! resampling onto a common grid, L1 / total-variation metrics with front
//! exclusion windows, and the named experiment bundles the CLI exposes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::error::SolverError;
use crate::euler::{self, EulerianRun, GhostRule};
use crate::ftl::{self, FtlSim, SubLaneLayout, Vehicle};
use crate::lag1::{self, Lag1Run};
use crate::lag2::{self, CarrierField, Lag2Run};
use crate::scenario::{
    validate_scenario, Boundary, ScenarioConfig, SpeedLawChoice, TrafficLightConfig,
};
use crate::speedlaw::default_class_params;
use crate::types::{occupancy, ClassId, ClusterField, ProfileSegment};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario validation failed:\n{0}")]
    InvalidScenario(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("no overlapping samples to compare")]
    EmptyComparison,

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The Riemann study shared by the solver-comparison experiments: 3000 m
/// road, both classes at 0.15 veh/m upstream of x = 1400 m and 0.3 veh/m
/// beyond, open downstream end, 45 s horizon.
pub fn section_iv_scenario() -> ScenarioConfig {
    ScenarioConfig {
        dt: 0.125,
        dx: 10.0,
        dn: 7.5,
        road_length: 3000.0,
        sim_time: 45.0,
        segments: vec![
            ProfileSegment { x_start: 0.0, x_end: 1400.0, rho: [0.15, 0.15] },
            ProfileSegment { x_start: 1400.0, x_end: 3000.0, rho: [0.3, 0.3] },
        ],
        boundary: Boundary::FreeDownstream,
        speed_law: SpeedLawChoice::FreeSpace,
        class_params: default_class_params(),
        epsilon_space: 1e-9,
        num_sublanes: 2,
        traffic_light: None,
        snapshot_every: 40,
    }
}

/// Same study with the free-flow speeds exchanged: cars at 20 m/s, PTWs at
/// 15 m/s.
pub fn swapped_speed_scenario() -> ScenarioConfig {
    let mut cfg = section_iv_scenario();
    cfg.class_params[0].v_free = 15.0;
    cfg.class_params[1].v_free = 20.0;
    cfg
}

/// Red-light scenario for the follow-the-leader mode: mixed traffic
/// approaching a light at 400 m that turns green at t = 40 s.
pub fn traffic_light_scenario() -> ScenarioConfig {
    ScenarioConfig {
        dt: 0.05,
        dx: 10.0,
        dn: 1.0,
        road_length: 800.0,
        sim_time: 60.0,
        segments: vec![
            ProfileSegment { x_start: 0.0, x_end: 390.0, rho: [0.1, 0.05] },
            ProfileSegment { x_start: 390.0, x_end: 800.0, rho: [0.0, 0.0] },
        ],
        boundary: Boundary::FreeDownstream,
        speed_law: SpeedLawChoice::FreeSpace,
        class_params: default_class_params(),
        epsilon_space: 1e-9,
        num_sublanes: 2,
        traffic_light: Some(TrafficLightConfig { position: 400.0, red_until: 40.0 }),
        snapshot_every: 10,
    }
}

/// Place one vehicle per count unit from the initial density profile,
/// evenly within each segment, and assign PTWs to sub-lanes round-robin in
/// downstream order. Cars occupy the full lane (sub-lane 0).
pub fn build_ftl_vehicles(cfg: &ScenarioConfig) -> Vec<Vehicle> {
    let mut vehicles = Vec::new();
    for class in [ClassId::Ptw, ClassId::Car] {
        let k = class.index();
        for s in cfg.segments.iter().rev() {
            let rho = s.rho[k];
            if rho <= 0.0 {
                continue;
            }
            let n = ((s.x_end - s.x_start) * rho).floor() as usize;
            for j in 0..n {
                let x = s.x_end - (j as f64 + 0.5) / rho;
                vehicles.push(Vehicle {
                    id: 0,
                    class,
                    sublane: 0,
                    position: x,
                    spacing: f64::INFINITY,
                });
            }
        }
    }
    let mut ptw_order: Vec<usize> = (0..vehicles.len())
        .filter(|&i| vehicles[i].class == ClassId::Ptw)
        .collect();
    ptw_order.sort_by(|&a, &b| vehicles[b].position.partial_cmp(&vehicles[a].position).unwrap());
    for (rank, &i) in ptw_order.iter().enumerate() {
        vehicles[i].sublane = rank % cfg.num_sublanes;
    }
    vehicles
}

/// Sample a density function at the `n` cell centers of a `dx` grid.
/// `None` marks points outside the covered extent.
pub fn resample_to_grid(
    density: &dyn Fn(f64) -> Option<f64>,
    dx: f64,
    n: usize,
) -> Vec<Option<f64>> {
    (0..n).map(|j| density((j as f64 + 0.5) * dx)).collect()
}

/// Relative L1 distance sum |a - b| / sum |b| over samples present in both
/// profiles and outside every exclusion window (x ranges).
pub fn l1_error(
    a: &[Option<f64>],
    b: &[Option<f64>],
    dx: f64,
    exclusions: &[(f64, f64)],
) -> Result<f64, HarnessError> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut included = 0usize;
    for (j, (pa, pb)) in a.iter().zip(b).enumerate() {
        let x = (j as f64 + 0.5) * dx;
        if exclusions.iter().any(|&(lo, hi)| x >= lo && x <= hi) {
            continue;
        }
        if let (Some(va), Some(vb)) = (pa, pb) {
            num += (va - vb).abs();
            den += vb.abs();
            included += 1;
        }
    }
    if included == 0 || den == 0.0 {
        return Err(HarnessError::EmptyComparison);
    }
    Ok(num / den)
}

/// Front positions by max-gradient detection: contiguous runs where the
/// cell-to-cell jump exceeds a quarter of the largest jump, each reduced to
/// its steepest point.
pub fn detect_fronts(profile: &[Option<f64>], dx: f64) -> Vec<f64> {
    let jump = |j: usize| -> Option<f64> {
        match (profile[j], profile[j + 1]) {
            (Some(a), Some(b)) => Some((b - a).abs()),
            _ => None,
        }
    };
    let n = profile.len();
    if n < 2 {
        return Vec::new();
    }
    let max_jump = (0..n - 1).filter_map(jump).fold(0.0, f64::max);
    if max_jump <= 0.0 {
        return Vec::new();
    }
    let threshold = 0.25 * max_jump;
    let mut fronts = Vec::new();
    let mut run_best: Option<(f64, f64)> = None; // (jump, x)
    for j in 0..n - 1 {
        let x = (j as f64 + 1.0) * dx;
        match jump(j) {
            Some(d) if d >= threshold => {
                if run_best.map_or(true, |(best, _)| d > best) {
                    run_best = Some((d, x));
                }
            }
            _ => {
                if let Some((_, xf)) = run_best.take() {
                    fronts.push(xf);
                }
            }
        }
    }
    if let Some((_, xf)) = run_best {
        fronts.push(xf);
    }
    fronts
}

/// Exclusion windows of half-width `half` around each front.
pub fn front_windows(fronts: &[f64], half: f64) -> Vec<(f64, f64)> {
    fronts.iter().map(|&x| (x - half, x + half)).collect()
}

/// Total variation sum |p_{j+1} - p_j| over consecutive available samples
/// whose x lies inside `[lo, hi]`.
pub fn total_variation(profile: &[Option<f64>], dx: f64, lo: f64, hi: f64) -> f64 {
    let mut tv = 0.0;
    for j in 0..profile.len().saturating_sub(1) {
        let x = (j as f64 + 1.0) * dx;
        if x < lo || x > hi {
            continue;
        }
        if let (Some(a), Some(b)) = (profile[j], profile[j + 1]) {
            tv += (b - a).abs();
        }
    }
    tv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Euler,
    Lag1,
    Lag2,
}

impl SolverKind {
    pub fn label(self) -> &'static str {
        match self {
            SolverKind::Euler => "euler",
            SolverKind::Lag1 => "lag1",
            SolverKind::Lag2 => "lag2",
        }
    }
}

fn require_valid(cfg: &ScenarioConfig) -> Result<(), HarnessError> {
    let report = validate_scenario(cfg);
    if report.is_pass() {
        Ok(())
    } else {
        Err(HarnessError::InvalidScenario(report.to_string()))
    }
}

fn total_steps(cfg: &ScenarioConfig) -> u64 {
    ((cfg.sim_time / cfg.dt) - 1e-9).ceil().max(0.0) as u64
}

fn write_metadata(
    out_dir: &Path,
    cfg: &ScenarioConfig,
    extra: &[(&str, String)],
) -> Result<(), HarnessError> {
    let mut text = String::new();
    for (k, v) in extra {
        let _ = writeln!(text, "{k} = {v}");
    }
    text.push_str(&cfg.to_key_values());
    fs::write(out_dir.join("run_metadata.txt"), text)?;
    Ok(())
}

/// Run one solver on a scenario, writing snapshot CSVs and metadata into
/// `out_dir`. `ref_class` selects the method-2 carrier class and is ignored
/// by the other solvers.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    solver: SolverKind,
    ref_class: ClassId,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    require_valid(cfg)?;
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let steps = total_steps(cfg);
    let law = cfg.make_law();
    let name = format!("{}.csv", solver.label());
    let mut out = Vec::new();

    match solver {
        SolverKind::Euler => {
            let mut run = EulerianRun::from_profile(
                &cfg.segments,
                cfg.road_length,
                cfg.dx,
                law.as_ref(),
                cfg.dt,
                GhostRule::from(cfg.boundary),
            );
            out.extend_from_slice(euler::CSV_HEADER.as_bytes());
            out.push(b'\n');
            euler::write_snapshot_csv(&run.state, law.as_ref(), &mut out)?;
            for i in 1..=steps {
                run.step()?;
                if i % cfg.snapshot_every as u64 == 0 || i == steps {
                    euler::write_snapshot_csv(&run.state, law.as_ref(), &mut out)?;
                }
            }
        }
        SolverKind::Lag1 => {
            let ptw = ClusterField::from_density_profile(ClassId::Ptw, &cfg.segments, cfg.dn);
            let car = ClusterField::from_density_profile(ClassId::Car, &cfg.segments, cfg.dn);
            let mut run = Lag1Run::new(ptw, car, law.as_ref(), cfg.dt, cfg.boundary);
            out.extend_from_slice(lag1::CSV_HEADER.as_bytes());
            out.push(b'\n');
            lag1::write_snapshot_csv(&run, &mut out)?;
            for i in 1..=steps {
                run.step()?;
                if i % cfg.snapshot_every as u64 == 0 || i == steps {
                    lag1::write_snapshot_csv(&run, &mut out)?;
                }
            }
        }
        SolverKind::Lag2 => {
            let field = CarrierField::from_density_profile(ref_class, &cfg.segments, cfg.dn);
            let mut run = Lag2Run::new(field, law.as_ref(), cfg.dt, cfg.boundary);
            out.extend_from_slice(lag2::CSV_HEADER.as_bytes());
            out.push(b'\n');
            lag2::write_snapshot_csv(&run, &mut out)?;
            for i in 1..=steps {
                run.step()?;
                if i % cfg.snapshot_every as u64 == 0 || i == steps {
                    lag2::write_snapshot_csv(&run, &mut out)?;
                }
            }
        }
    }
    fs::write(out_dir.join(name), out)?;
    write_metadata(
        out_dir,
        cfg,
        &[
            ("solver", solver.label().to_string()),
            ("ref_class", ref_class.label().to_string()),
            ("runtime_seconds", format!("{}", start.elapsed().as_secs_f64())),
        ],
    )?;
    Ok(())
}

/// Metrics of the Eulerian vs method-2 comparison at t = 40 s.
#[derive(Debug, Clone)]
pub struct Fig6Metrics {
    pub fronts: Vec<f64>,
    /// Relative L1 per class, indexed `[ptw, car]`, per carrier choice.
    pub l1_ref_ptw: [f64; 2],
    pub l1_ref_car: [f64; 2],
    pub runtime_seconds: f64,
}

/// Eulerian and method-2 (both carrier choices) profiles at t = 40 s with
/// per-class L1 differences, front windows of ±100 m excluded.
pub fn fig6_euler_vs_lag2(out_dir: &Path) -> Result<Fig6Metrics, HarnessError> {
    let cfg = section_iv_scenario();
    require_valid(&cfg)?;
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let law = cfg.make_law();
    let t_measure = 40.0;
    let n = (cfg.road_length / cfg.dx).round() as usize;

    let mut euler_run = EulerianRun::from_profile(
        &cfg.segments,
        cfg.road_length,
        cfg.dx,
        law.as_ref(),
        cfg.dt,
        GhostRule::from(cfg.boundary),
    );
    euler_run.run_to(t_measure, usize::MAX)?;
    let euler_state = euler_run.state.clone();
    let euler_profile = |class: ClassId| -> Vec<Option<f64>> {
        euler_state.cells.iter().map(|c| Some(c[class.index()])).collect()
    };

    let mut lag_profiles = Vec::new();
    for reference in [ClassId::Ptw, ClassId::Car] {
        let field = CarrierField::from_density_profile(reference, &cfg.segments, cfg.dn);
        let mut run = Lag2Run::new(field, law.as_ref(), cfg.dt, cfg.boundary);
        run.run_to(t_measure)?;
        let profiles: [Vec<Option<f64>>; 2] = [ClassId::Ptw, ClassId::Car].map(|class| {
            resample_to_grid(&|x| run.field.density_at(class, x), cfg.dx, n)
        });
        let mut csv = Vec::new();
        csv.extend_from_slice(lag2::CSV_HEADER.as_bytes());
        csv.push(b'\n');
        lag2::write_snapshot_csv(&run, &mut csv)?;
        fs::write(out_dir.join(format!("lag2_ref_{}.csv", reference.label())), csv)?;
        lag_profiles.push(profiles);
    }

    let mut csv = Vec::new();
    csv.extend_from_slice(euler::CSV_HEADER.as_bytes());
    csv.push(b'\n');
    euler::write_snapshot_csv(&euler_state, law.as_ref(), &mut csv)?;
    fs::write(out_dir.join("euler.csv"), csv)?;

    // Fronts from the Eulerian profiles of both classes, merged.
    let mut fronts = detect_fronts(&euler_profile(ClassId::Ptw), cfg.dx);
    fronts.extend(detect_fronts(&euler_profile(ClassId::Car), cfg.dx));
    fronts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fronts.dedup_by(|a, b| (*a - *b).abs() < 50.0);
    let windows = front_windows(&fronts, 100.0);

    let mut l1 = [[0.0; 2]; 2];
    for (r, profiles) in lag_profiles.iter().enumerate() {
        for class in [ClassId::Ptw, ClassId::Car] {
            let k = class.index();
            l1[r][k] = l1_error(&profiles[k], &euler_profile(class), cfg.dx, &windows)?;
        }
    }
    let runtime_seconds = start.elapsed().as_secs_f64();

    let metrics = Fig6Metrics {
        fronts,
        l1_ref_ptw: l1[0],
        l1_ref_car: l1[1],
        runtime_seconds,
    };
    let mut text = String::new();
    let _ = writeln!(text, "fronts = {:?}", metrics.fronts);
    let _ = writeln!(text, "l1_ref_ptw_ptw = {}", metrics.l1_ref_ptw[0]);
    let _ = writeln!(text, "l1_ref_ptw_car = {}", metrics.l1_ref_ptw[1]);
    let _ = writeln!(text, "l1_ref_car_ptw = {}", metrics.l1_ref_car[0]);
    let _ = writeln!(text, "l1_ref_car_car = {}", metrics.l1_ref_car[1]);
    let _ = writeln!(text, "runtime_seconds = {}", metrics.runtime_seconds);
    fs::write(out_dir.join("metrics.txt"), text)?;
    write_metadata(out_dir, &cfg, &[("experiment", "fig6_euler_vs_lag2".into())])?;
    Ok(metrics)
}

/// Metrics of the method-1 vs method-2 comparison at t = 40 s.
#[derive(Debug, Clone)]
pub struct Fig7Metrics {
    pub fronts: Vec<f64>,
    /// Per front window, per class: total variation across the front.
    pub tv_method1: Vec<[f64; 2]>,
    pub tv_method2_ref_ptw: Vec<[f64; 2]>,
    pub tv_method2_ref_car: Vec<[f64; 2]>,
    /// Relative L1 over both classes jointly vs a 4x-refined method-1
    /// reference, followed by the per-class split.
    pub l1_method1: f64,
    pub l1_method2_ref_ptw: f64,
    pub l1_method2_ref_car: f64,
    pub l1_method1_by_class: [f64; 2],
    pub l1_method2_ref_ptw_by_class: [f64; 2],
    pub l1_method2_ref_car_by_class: [f64; 2],
}

/// Method 1 vs method 2 on the Riemann study: front sharpness (total
/// variation across the fronts) and L1 error against a 4x-refined method-1
/// reference.
pub fn fig7_lag_methods(out_dir: &Path) -> Result<Fig7Metrics, HarnessError> {
    let cfg = section_iv_scenario();
    require_valid(&cfg)?;
    fs::create_dir_all(out_dir)?;
    let law = cfg.make_law();
    let t_measure = 40.0;
    let n = (cfg.road_length / cfg.dx).round() as usize;

    let sample_field = |f: &ClusterField| -> Vec<Option<f64>> {
        resample_to_grid(&|x| f.density_at(x), cfg.dx, n)
    };

    // Method 1 at nominal resolution.
    let mut m1 = Lag1Run::new(
        ClusterField::from_density_profile(ClassId::Ptw, &cfg.segments, cfg.dn),
        ClusterField::from_density_profile(ClassId::Car, &cfg.segments, cfg.dn),
        law.as_ref(),
        cfg.dt,
        cfg.boundary,
    );
    m1.run_to(t_measure)?;
    let m1_profiles: [Vec<Option<f64>>; 2] =
        [sample_field(m1.field(ClassId::Ptw)), sample_field(m1.field(ClassId::Car))];
    let mut csv = Vec::new();
    csv.extend_from_slice(lag1::CSV_HEADER.as_bytes());
    csv.push(b'\n');
    lag1::write_snapshot_csv(&m1, &mut csv)?;
    fs::write(out_dir.join("lag1.csv"), csv)?;

    // Method 2, both carrier choices.
    let mut m2_profiles = Vec::new();
    for reference in [ClassId::Ptw, ClassId::Car] {
        let field = CarrierField::from_density_profile(reference, &cfg.segments, cfg.dn);
        let mut run = Lag2Run::new(field, law.as_ref(), cfg.dt, cfg.boundary);
        run.run_to(t_measure)?;
        let profiles: [Vec<Option<f64>>; 2] = [ClassId::Ptw, ClassId::Car].map(|class| {
            resample_to_grid(&|x| run.field.density_at(class, x), cfg.dx, n)
        });
        let mut csv = Vec::new();
        csv.extend_from_slice(lag2::CSV_HEADER.as_bytes());
        csv.push(b'\n');
        lag2::write_snapshot_csv(&run, &mut csv)?;
        fs::write(out_dir.join(format!("lag2_ref_{}.csv", reference.label())), csv)?;
        m2_profiles.push(profiles);
    }

    // 4x-refined method-1 reference (dn and dt both divided by 4).
    let mut reference = Lag1Run::new(
        ClusterField::from_density_profile(ClassId::Ptw, &cfg.segments, cfg.dn / 4.0),
        ClusterField::from_density_profile(ClassId::Car, &cfg.segments, cfg.dn / 4.0),
        law.as_ref(),
        cfg.dt / 4.0,
        cfg.boundary,
    );
    reference.run_to(t_measure)?;
    let ref_profiles: [Vec<Option<f64>>; 2] = [
        sample_field(reference.field(ClassId::Ptw)),
        sample_field(reference.field(ClassId::Car)),
    ];
    let mut csv = Vec::new();
    csv.extend_from_slice(lag1::CSV_HEADER.as_bytes());
    csv.push(b'\n');
    lag1::write_snapshot_csv(&reference, &mut csv)?;
    fs::write(out_dir.join("reference.csv"), csv)?;

    let mut fronts = detect_fronts(&ref_profiles[0], cfg.dx);
    fronts.extend(detect_fronts(&ref_profiles[1], cfg.dx));
    fronts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fronts.dedup_by(|a, b| (*a - *b).abs() < 50.0);
    let windows = front_windows(&fronts, 100.0);

    let tv_per_window = |profiles: &[Vec<Option<f64>>; 2]| -> Vec<[f64; 2]> {
        windows
            .iter()
            .map(|&(lo, hi)| {
                [0, 1].map(|k| total_variation(&profiles[k], cfg.dx, lo, hi))
            })
            .collect()
    };
    // Joint L1 over both classes: concatenating the class profiles pools the
    // numerator and denominator sums.
    let joint = |p: &[Vec<Option<f64>>; 2]| -> Vec<Option<f64>> {
        p[0].iter().chain(&p[1]).copied().collect()
    };
    let ref_joint = joint(&ref_profiles);
    let mut metrics = Fig7Metrics {
        fronts,
        tv_method1: tv_per_window(&m1_profiles),
        tv_method2_ref_ptw: tv_per_window(&m2_profiles[0]),
        tv_method2_ref_car: tv_per_window(&m2_profiles[1]),
        l1_method1: l1_error(&joint(&m1_profiles), &ref_joint, cfg.dx, &[])?,
        l1_method2_ref_ptw: l1_error(&joint(&m2_profiles[0]), &ref_joint, cfg.dx, &[])?,
        l1_method2_ref_car: l1_error(&joint(&m2_profiles[1]), &ref_joint, cfg.dx, &[])?,
        l1_method1_by_class: [0.0; 2],
        l1_method2_ref_ptw_by_class: [0.0; 2],
        l1_method2_ref_car_by_class: [0.0; 2],
    };
    for k in 0..2 {
        metrics.l1_method1_by_class[k] =
            l1_error(&m1_profiles[k], &ref_profiles[k], cfg.dx, &[])?;
        metrics.l1_method2_ref_ptw_by_class[k] =
            l1_error(&m2_profiles[0][k], &ref_profiles[k], cfg.dx, &[])?;
        metrics.l1_method2_ref_car_by_class[k] =
            l1_error(&m2_profiles[1][k], &ref_profiles[k], cfg.dx, &[])?;
    }

    let mut text = String::new();
    let _ = writeln!(text, "fronts = {:?}", metrics.fronts);
    for (label, tv, l1, by_class) in [
        ("method1", &metrics.tv_method1, metrics.l1_method1, &metrics.l1_method1_by_class),
        (
            "method2_ref_ptw",
            &metrics.tv_method2_ref_ptw,
            metrics.l1_method2_ref_ptw,
            &metrics.l1_method2_ref_ptw_by_class,
        ),
        (
            "method2_ref_car",
            &metrics.tv_method2_ref_car,
            metrics.l1_method2_ref_car,
            &metrics.l1_method2_ref_car_by_class,
        ),
    ] {
        for (front, tvs) in metrics.fronts.iter().zip(tv) {
            let _ = writeln!(text, "tv_{label}_front_{front}_ptw = {}", tvs[0]);
            let _ = writeln!(text, "tv_{label}_front_{front}_car = {}", tvs[1]);
        }
        let _ = writeln!(text, "l1_{label} = {l1}");
        let _ = writeln!(text, "l1_{label}_ptw = {}", by_class[0]);
        let _ = writeln!(text, "l1_{label}_car = {}", by_class[1]);
    }
    fs::write(out_dir.join("metrics.txt"), text)?;
    write_metadata(out_dir, &cfg, &[("experiment", "fig7_lag_methods".into())])?;
    Ok(metrics)
}

/// Metrics of the swapped-speed robustness run.
#[derive(Debug, Clone)]
pub struct Fig8Metrics {
    /// Per carrier choice: |mass change - boundary accounting| relative to
    /// the initial carried mass.
    pub conservation_residual: [f64; 2],
    pub max_occupancy: [f64; 2],
    pub min_carried_ratio: [f64; 2],
}

/// Swapped free-flow speeds (cars 20 m/s, PTWs 15 m/s) through the full
/// 45 s horizon with both carrier choices; checks bounds and carried-mass
/// conservation.
pub fn fig8_swapped_speeds(out_dir: &Path) -> Result<Fig8Metrics, HarnessError> {
    let cfg = swapped_speed_scenario();
    require_valid(&cfg)?;
    fs::create_dir_all(out_dir)?;
    let law = cfg.make_law();
    let mut metrics = Fig8Metrics {
        conservation_residual: [0.0; 2],
        max_occupancy: [0.0; 2],
        min_carried_ratio: [f64::INFINITY; 2],
    };
    for (r, reference) in [ClassId::Ptw, ClassId::Car].into_iter().enumerate() {
        let field = CarrierField::from_density_profile(reference, &cfg.segments, cfg.dn);
        let m0 = field.carried_mass();
        let mut run = Lag2Run::new(field, law.as_ref(), cfg.dt, cfg.boundary);
        let steps = total_steps(&cfg);
        for _ in 0..steps {
            run.step()?;
            for (i, c) in run.field.clusters.iter().enumerate() {
                let rho_r = 1.0 / c.spacing;
                let rho_c = run.field.carried_ratio[i] * rho_r;
                let (rp, rc) = match reference {
                    ClassId::Ptw => (rho_r, rho_c),
                    ClassId::Car => (rho_c, rho_r),
                };
                let occ = occupancy(rp, rc, &cfg.class_params);
                metrics.max_occupancy[r] = metrics.max_occupancy[r].max(occ);
                metrics.min_carried_ratio[r] =
                    metrics.min_carried_ratio[r].min(run.field.carried_ratio[i]);
            }
        }
        let drift = (run.field.carried_mass() - m0) - run.carried_boundary_change;
        metrics.conservation_residual[r] = drift.abs() / m0;
        let mut csv = Vec::new();
        csv.extend_from_slice(lag2::CSV_HEADER.as_bytes());
        csv.push(b'\n');
        lag2::write_snapshot_csv(&run, &mut csv)?;
        fs::write(out_dir.join(format!("lag2_ref_{}.csv", reference.label())), csv)?;
    }
    let mut text = String::new();
    for (r, label) in ["ptw", "car"].iter().enumerate() {
        let _ = writeln!(text, "conservation_residual_ref_{label} = {}", metrics.conservation_residual[r]);
        let _ = writeln!(text, "max_occupancy_ref_{label} = {}", metrics.max_occupancy[r]);
        let _ = writeln!(text, "min_carried_ratio_ref_{label} = {}", metrics.min_carried_ratio[r]);
    }
    fs::write(out_dir.join("metrics.txt"), text)?;
    write_metadata(out_dir, &cfg, &[("experiment", "fig8_swapped_speeds".into())])?;
    Ok(metrics)
}

/// Crossing tally of the follow-the-leader run, by category.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossingCounts {
    /// PTW pairs in different sub-lanes whose order swapped.
    pub cross_sublane_ptw: usize,
    /// PTW pairs in the same sub-lane (must stay zero).
    pub within_sublane_ptw: usize,
    /// Car pairs (must stay zero).
    pub car_car: usize,
}

/// Metrics of the red-light trajectory run.
#[derive(Debug, Clone)]
pub struct Fig9Metrics {
    pub crossings: CrossingCounts,
    /// Vehicles upstream of the light at the moment it turns green.
    pub queued_at_green: usize,
    /// Vehicles that passed the light by the end of the run.
    pub discharged: usize,
    /// Positions beyond the stop line observed while the light was red.
    pub red_light_violations: usize,
}

fn count_new_crossings(
    sim: &FtlSim<'_>,
    prev: &[f64],
    counts: &mut CrossingCounts,
) {
    let vs = &sim.vehicles;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            let before = prev[i] - prev[j];
            let after = vs[i].position - vs[j].position;
            if before.signum() == after.signum() || before == 0.0 || after == 0.0 {
                continue;
            }
            match (vs[i].class, vs[j].class) {
                (ClassId::Car, ClassId::Car) => counts.car_car += 1,
                (ClassId::Ptw, ClassId::Ptw) => {
                    if vs[i].sublane == vs[j].sublane {
                        counts.within_sublane_ptw += 1;
                    } else {
                        counts.cross_sublane_ptw += 1;
                    }
                }
                _ => {}
            }
        }
    }
}

/// Follow-the-leader trajectories through a red light: queue build-up,
/// discharge after green, and crossing statistics.
pub fn fig9_trajectories(out_dir: &Path) -> Result<Fig9Metrics, HarnessError> {
    let cfg = traffic_light_scenario();
    require_valid(&cfg)?;
    fs::create_dir_all(out_dir)?;
    let law = cfg.make_law();
    let light = cfg.traffic_light.expect("scenario has a light");
    let mut sim = FtlSim::new(
        build_ftl_vehicles(&cfg),
        law.as_ref(),
        cfg.dt,
        cfg.boundary,
        cfg.traffic_light,
        SubLaneLayout { num_sublanes: cfg.num_sublanes },
    )?;
    sim.init_spacings_from_positions();

    let mut csv = Vec::new();
    csv.extend_from_slice(ftl::CSV_HEADER.as_bytes());
    csv.push(b'\n');
    ftl::write_snapshot_csv(&sim, &mut csv)?;

    let mut metrics = Fig9Metrics {
        crossings: CrossingCounts::default(),
        queued_at_green: 0,
        discharged: 0,
        red_light_violations: 0,
    };
    let steps = total_steps(&cfg);
    for i in 1..=steps {
        let prev: Vec<f64> = sim.vehicles.iter().map(|v| v.position).collect();
        sim.step()?;
        count_new_crossings(&sim, &prev, &mut metrics.crossings);
        if sim.t < light.red_until {
            metrics.red_light_violations += sim
                .vehicles
                .iter()
                .zip(&prev)
                .filter(|(v, &p)| p < light.position && v.position >= light.position)
                .count();
        }
        if (sim.t - light.red_until).abs() < 0.5 * cfg.dt {
            metrics.queued_at_green =
                sim.vehicles.iter().filter(|v| v.position < light.position).count();
        }
        if i % cfg.snapshot_every as u64 == 0 || i == steps {
            ftl::write_snapshot_csv(&sim, &mut csv)?;
        }
    }
    metrics.discharged = sim.vehicles.iter().filter(|v| v.position >= light.position).count();
    fs::write(out_dir.join("trajectories.csv"), csv)?;

    let mut text = String::new();
    let _ = writeln!(text, "cross_sublane_ptw_crossings = {}", metrics.crossings.cross_sublane_ptw);
    let _ = writeln!(text, "within_sublane_ptw_crossings = {}", metrics.crossings.within_sublane_ptw);
    let _ = writeln!(text, "car_car_crossings = {}", metrics.crossings.car_car);
    let _ = writeln!(text, "queued_at_green = {}", metrics.queued_at_green);
    let _ = writeln!(text, "discharged = {}", metrics.discharged);
    let _ = writeln!(text, "red_light_violations = {}", metrics.red_light_violations);
    fs::write(out_dir.join("metrics.txt"), text)?;
    write_metadata(out_dir, &cfg, &[("experiment", "fig9_trajectories".into())])?;
    Ok(metrics)
}

/// Metrics of the self-convergence study.
#[derive(Debug, Clone)]
pub struct RefinementMetrics {
    pub dn_levels: Vec<f64>,
    /// Per level, per class: relative L1 vs the finest method-1 reference.
    pub l1: Vec<[f64; 2]>,
}

/// Method-1 self-convergence on the Riemann study: cluster sizes 7.5, 3.75
/// and 1.875 against a reference at 0.9375 (time step scaled with dn).
pub fn refinement_study(out_dir: &Path) -> Result<RefinementMetrics, HarnessError> {
    let cfg = section_iv_scenario();
    require_valid(&cfg)?;
    fs::create_dir_all(out_dir)?;
    let law = cfg.make_law();
    let t_measure = 40.0;
    let n = (cfg.road_length / cfg.dx).round() as usize;

    let run_level = |dn: f64| -> Result<[Vec<Option<f64>>; 2], HarnessError> {
        let dt = cfg.dt * dn / cfg.dn;
        let mut run = Lag1Run::new(
            ClusterField::from_density_profile(ClassId::Ptw, &cfg.segments, dn),
            ClusterField::from_density_profile(ClassId::Car, &cfg.segments, dn),
            law.as_ref(),
            dt,
            cfg.boundary,
        );
        run.run_to(t_measure)?;
        Ok([ClassId::Ptw, ClassId::Car].map(|class| {
            resample_to_grid(&|x| run.field(class).density_at(x), cfg.dx, n)
        }))
    };

    let dn_levels = vec![7.5, 3.75, 1.875];
    let reference = run_level(0.9375)?;
    let mut l1 = Vec::new();
    for &dn in &dn_levels {
        let profiles = run_level(dn)?;
        l1.push([
            l1_error(&profiles[0], &reference[0], cfg.dx, &[])?,
            l1_error(&profiles[1], &reference[1], cfg.dx, &[])?,
        ]);
    }
    let mut text = String::new();
    for (dn, e) in dn_levels.iter().zip(&l1) {
        let _ = writeln!(text, "l1_dn_{dn}_ptw = {}", e[0]);
        let _ = writeln!(text, "l1_dn_{dn}_car = {}", e[1]);
    }
    fs::write(out_dir.join("metrics.txt"), text)?;
    write_metadata(out_dir, &cfg, &[("experiment", "refinement_study".into())])?;
    Ok(RefinementMetrics { dn_levels, l1 })
}

/// Dispatch a named experiment into `out_dir`.
pub fn run_experiment(name: &str, out_dir: &Path) -> Result<(), HarnessError> {
    match name {
        "fig6_euler_vs_lag2" => fig6_euler_vs_lag2(out_dir).map(drop),
        "fig7_lag_methods" => fig7_lag_methods(out_dir).map(drop),
        "fig8_swapped_speeds" => fig8_swapped_speeds(out_dir).map(drop),
        "fig9_trajectories" => fig9_trajectories(out_dir).map(drop),
        "refinement_study" => refinement_study(out_dir).map(drop),
        other => Err(HarnessError::UnknownExperiment(other.to_string())),
    }
}

/// Names accepted by [`run_experiment`].
pub const EXPERIMENT_NAMES: [&str; 5] = [
    "fig6_euler_vs_lag2",
    "fig7_lag_methods",
    "fig8_swapped_speeds",
    "fig9_trajectories",
    "refinement_study",
];

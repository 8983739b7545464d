//! Scenario configuration: the flat key-value scenario file format, the
//! configuration struct shared by all solvers, and pre-run validation.
//!
//! File format: one `key = value` per line, `#` starts a comment. The
//! `segment` key repeats, one line per piece of the initial density profile:
//! `segment = <x_start> <x_end> <rho_ptw> <rho_car>`. Decimal literals are
//! parsed with `f64::from_str`, so values round-trip bit-exactly.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::speedlaw::{
    default_class_params, max_wave_speed, Coordinate, FreeSpaceLaw, FreeSpaceLawParams,
    GreenshieldsLaw, SpeedLaw,
};
use crate::types::{occupancy, ProfileSegment, VehicleClassParams};

/// Treatment of the open road ends.
///
/// The upstream end always copies the edge state. `FreeDownstream` puts
/// empty road (infinite spacing, zero density) beyond the downstream end;
/// `ZeroGradient` copies the edge state there as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    ZeroGradient,
    FreeDownstream,
}

impl Boundary {
    pub fn label(self) -> &'static str {
        match self {
            Boundary::ZeroGradient => "zero_gradient",
            Boundary::FreeDownstream => "free_downstream",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedLawChoice {
    FreeSpace,
    Greenshields,
}

impl SpeedLawChoice {
    pub fn label(self) -> &'static str {
        match self {
            SpeedLawChoice::FreeSpace => "freespace",
            SpeedLawChoice::Greenshields => "greenshields",
        }
    }
}

/// Red-light location and duration for the follow-the-leader mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficLightConfig {
    /// Stop-line position, m.
    pub position: f64,
    /// The light is red for t < red_until, s.
    pub red_until: f64,
}

/// Everything a run needs: resolution, road, initial state, law parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Time step, s.
    pub dt: f64,
    /// Eulerian space step, m.
    pub dx: f64,
    /// Lagrangian cluster size, vehicles (fractional values allowed).
    pub dn: f64,
    /// Road length, m.
    pub road_length: f64,
    /// Simulated horizon, s.
    pub sim_time: f64,
    /// Piecewise-constant initial densities tiling `[0, road_length]`.
    pub segments: Vec<ProfileSegment>,
    pub boundary: Boundary,
    pub speed_law: SpeedLawChoice,
    pub class_params: [VehicleClassParams; 2],
    /// Mean-free-space floor for the freespace law, m.
    pub epsilon_space: f64,
    /// PTW sub-lanes in follow-the-leader mode.
    pub num_sublanes: usize,
    pub traffic_light: Option<TrafficLightConfig>,
    /// Steps between CSV snapshots.
    pub snapshot_every: usize,
}

impl ScenarioConfig {
    /// Construct the configured speed law.
    pub fn make_law(&self) -> Box<dyn SpeedLaw> {
        match self.speed_law {
            SpeedLawChoice::FreeSpace => Box::new(FreeSpaceLaw::new(FreeSpaceLawParams {
                class_params: self.class_params,
                epsilon_space: self.epsilon_space,
            })),
            SpeedLawChoice::Greenshields => Box::new(GreenshieldsLaw::new(self.class_params)),
        }
    }

    /// Key-value rendering of every parameter, used both for run metadata
    /// and as a writable scenario file.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let p = &self.class_params;
        out.push_str(&format!("dt = {}\n", self.dt));
        out.push_str(&format!("dx = {}\n", self.dx));
        out.push_str(&format!("dn = {}\n", self.dn));
        out.push_str(&format!("road_length = {}\n", self.road_length));
        out.push_str(&format!("sim_time = {}\n", self.sim_time));
        out.push_str(&format!("boundary = {}\n", self.boundary.label()));
        out.push_str(&format!("speed_law = {}\n", self.speed_law.label()));
        out.push_str(&format!("v_free_ptw = {}\n", p[0].v_free));
        out.push_str(&format!("v_free_car = {}\n", p[1].v_free));
        out.push_str(&format!("r_crit_ptw = {}\n", p[0].r_crit));
        out.push_str(&format!("r_crit_car = {}\n", p[1].r_crit));
        out.push_str(&format!("eff_length_ptw = {}\n", p[0].eff_length));
        out.push_str(&format!("eff_length_car = {}\n", p[1].eff_length));
        out.push_str(&format!("epsilon_space = {}\n", self.epsilon_space));
        out.push_str(&format!("num_sublanes = {}\n", self.num_sublanes));
        if let Some(l) = &self.traffic_light {
            out.push_str(&format!("light_position = {}\n", l.position));
            out.push_str(&format!("light_red_until = {}\n", l.red_until));
        }
        out.push_str(&format!("snapshot_every = {}\n", self.snapshot_every));
        for s in &self.segments {
            out.push_str(&format!(
                "segment = {} {} {} {}\n",
                s.x_start, s.x_end, s.rho[0], s.rho[1]
            ));
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
}

/// Parse a scenario file. Unknown keys are rejected.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut dt = None;
    let mut dx = None;
    let mut dn = None;
    let mut road_length = None;
    let mut sim_time = None;
    let mut boundary = Boundary::FreeDownstream;
    let mut speed_law = SpeedLawChoice::FreeSpace;
    let mut class_params = default_class_params();
    let mut epsilon_space = 1e-9;
    let mut num_sublanes = 2usize;
    let mut light_position = None;
    let mut light_red_until = None;
    let mut snapshot_every = 1usize;
    let mut segments = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ScenarioError::Parse { line: lineno + 1, msg };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let key = key.trim();
        let value = value.trim();
        let num = |v: &str| -> Result<f64, ScenarioError> {
            f64::from_str(v).map_err(|_| ScenarioError::Parse {
                line: lineno + 1,
                msg: format!("invalid number `{v}`"),
            })
        };
        match key {
            "dt" => dt = Some(num(value)?),
            "dx" => dx = Some(num(value)?),
            "dn" => dn = Some(num(value)?),
            "road_length" => road_length = Some(num(value)?),
            "sim_time" => sim_time = Some(num(value)?),
            "boundary" => {
                boundary = match value {
                    "zero_gradient" => Boundary::ZeroGradient,
                    "free_downstream" => Boundary::FreeDownstream,
                    other => return Err(err(format!("unknown boundary `{other}`"))),
                }
            }
            "speed_law" => {
                speed_law = match value {
                    "freespace" => SpeedLawChoice::FreeSpace,
                    "greenshields" => SpeedLawChoice::Greenshields,
                    other => return Err(err(format!("unknown speed law `{other}`"))),
                }
            }
            "v_free_ptw" => class_params[0].v_free = num(value)?,
            "v_free_car" => class_params[1].v_free = num(value)?,
            "r_crit_ptw" => class_params[0].r_crit = num(value)?,
            "r_crit_car" => class_params[1].r_crit = num(value)?,
            "eff_length_ptw" => class_params[0].eff_length = num(value)?,
            "eff_length_car" => class_params[1].eff_length = num(value)?,
            "epsilon_space" => epsilon_space = num(value)?,
            "num_sublanes" => {
                num_sublanes = usize::from_str(value)
                    .map_err(|_| err(format!("invalid integer `{value}`")))?
            }
            "light_position" => light_position = Some(num(value)?),
            "light_red_until" => light_red_until = Some(num(value)?),
            "snapshot_every" => {
                snapshot_every = usize::from_str(value)
                    .map_err(|_| err(format!("invalid integer `{value}`")))?
            }
            "segment" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 4 {
                    return Err(err("segment needs `x_start x_end rho_ptw rho_car`".into()));
                }
                segments.push(ProfileSegment {
                    x_start: num(parts[0])?,
                    x_end: num(parts[1])?,
                    rho: [num(parts[2])?, num(parts[3])?],
                });
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }

    let traffic_light = match (light_position, light_red_until) {
        (Some(position), Some(red_until)) => Some(TrafficLightConfig { position, red_until }),
        (None, None) => None,
        _ => {
            return Err(ScenarioError::Parse {
                line: 0,
                msg: "light_position and light_red_until must be given together".into(),
            })
        }
    };

    Ok(ScenarioConfig {
        dt: dt.ok_or(ScenarioError::MissingKey("dt"))?,
        dx: dx.ok_or(ScenarioError::MissingKey("dx"))?,
        dn: dn.ok_or(ScenarioError::MissingKey("dn"))?,
        road_length: road_length.ok_or(ScenarioError::MissingKey("road_length"))?,
        sim_time: sim_time.ok_or(ScenarioError::MissingKey("sim_time"))?,
        segments,
        boundary,
        speed_law,
        class_params,
        epsilon_space,
        num_sublanes,
        traffic_light,
        snapshot_every,
    })
}

/// Outcome of [`validate_scenario`]: empty failure list means pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            write!(f, "pass")
        } else {
            for failure in &self.failures {
                writeln!(f, "fail: {failure}")?;
            }
            Ok(())
        }
    }
}

/// Check every scenario invariant, including a CFL pre-check against the
/// sampled wave-speed bounds of the configured law.
pub fn validate_scenario(cfg: &ScenarioConfig) -> ValidationReport {
    let mut failures = Vec::new();
    if !(cfg.dt > 0.0) {
        failures.push("nonpositive time step".into());
    }
    if !(cfg.dx > 0.0) {
        failures.push("nonpositive space step".into());
    }
    if !(cfg.dn > 0.0) {
        failures.push("nonpositive cluster size".into());
    }
    if !(cfg.road_length > 0.0) {
        failures.push("nonpositive road length".into());
    }
    if !(cfg.sim_time > 0.0) {
        failures.push("nonpositive simulation time".into());
    }
    if !(cfg.epsilon_space > 0.0) {
        failures.push("nonpositive epsilon_space".into());
    }
    if cfg.num_sublanes == 0 {
        failures.push("num_sublanes must be at least 1".into());
    }
    if cfg.snapshot_every == 0 {
        failures.push("snapshot_every must be at least 1".into());
    }
    for p in &cfg.class_params {
        if let Err(msg) = p.validate() {
            failures.push(msg);
        }
    }
    if let Some(l) = &cfg.traffic_light {
        if l.position < 0.0 || l.position > cfg.road_length {
            failures.push("traffic light outside the road".into());
        }
    }

    // Profile must tile [0, road_length] without gaps or overlap.
    if cfg.segments.is_empty() {
        failures.push("no initial density segments".into());
    } else {
        let tol = 1e-9 * cfg.road_length.max(1.0);
        if (cfg.segments[0].x_start).abs() > tol {
            failures.push("profile does not start at x = 0".into());
        }
        for w in cfg.segments.windows(2) {
            if (w[1].x_start - w[0].x_end).abs() > tol {
                failures.push(format!(
                    "profile gap or overlap between x = {} and x = {}",
                    w[0].x_end, w[1].x_start
                ));
            }
        }
        if let Some(last) = cfg.segments.last() {
            if (last.x_end - cfg.road_length).abs() > tol {
                failures.push("profile does not end at road_length".into());
            }
        }
        for s in &cfg.segments {
            if !(s.x_end > s.x_start) {
                failures.push(format!("empty or inverted segment at x = {}", s.x_start));
            }
            if s.rho[0] < 0.0 || s.rho[1] < 0.0 {
                failures.push(format!("negative density in segment at x = {}", s.x_start));
            } else if occupancy(s.rho[0], s.rho[1], &cfg.class_params) > 1.0 + 1e-12 {
                failures.push(format!(
                    "segment at x = {} exceeds jam occupancy",
                    s.x_start
                ));
            }
        }
    }

    // CFL pre-check, only meaningful once the basic parameters are sane.
    if failures.is_empty() {
        let law = cfg.make_law();
        let lambda_e = max_wave_speed(law.as_ref(), Coordinate::Eulerian);
        if lambda_e > 0.0 && cfg.dt > cfg.dx / lambda_e {
            failures.push(format!(
                "CFL violation (Eulerian): dt = {} > dx/lambda = {}",
                cfg.dt,
                cfg.dx / lambda_e
            ));
        }
        let lambda_l = max_wave_speed(law.as_ref(), Coordinate::Lagrangian);
        if lambda_l > 0.0 && cfg.dt > cfg.dn / lambda_l {
            failures.push(format!(
                "CFL violation (Lagrangian): dt = {} > dn/lambda = {}",
                cfg.dt,
                cfg.dn / lambda_l
            ));
        }
    }

    ValidationReport { failures }
}

//! Eulerian reference solver: classic Lax-Friedrichs for the two-class
//! continuity system on a fixed grid,
//!
//!   rho_j^{t+dt} = (rho_{j-1} + rho_{j+1}) / 2 - dt/(2 dx) (q_{j+1} - q_{j-1})
//!
//! with q_i = rho_i v_i(rho_1, rho_2). Both class updates read densities from
//! the same time level. One ghost cell on each side realizes the boundary
//! rule.

use std::io::Write;

use crate::error::SolverError;
use crate::scenario::Boundary;
use crate::speedlaw::{max_wave_speed, Coordinate, SpeedLaw};
use crate::types::{ClassId, EulerianState, ProfileSegment};

/// Ghost-cell fill. `Periodic` exists for conservation testing; scenario
/// boundaries map to the first two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostRule {
    /// Copy the edge cell on both sides.
    ZeroGradient,
    /// Copy upstream, empty road downstream.
    FreeDownstream,
    Periodic,
}

impl From<Boundary> for GhostRule {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::ZeroGradient => GhostRule::ZeroGradient,
            Boundary::FreeDownstream => GhostRule::FreeDownstream,
        }
    }
}

/// A single Eulerian run; owns its state, borrows the speed law.
pub struct EulerianRun<'a> {
    pub state: EulerianState,
    pub law: &'a dyn SpeedLaw,
    pub dt: f64,
    pub ghost: GhostRule,
    pub step_count: u64,
    t0: f64,
    lambda: f64,
}

impl<'a> EulerianRun<'a> {
    pub fn new(state: EulerianState, law: &'a dyn SpeedLaw, dt: f64, ghost: GhostRule) -> Self {
        let lambda = max_wave_speed(law, Coordinate::Eulerian);
        let t0 = state.t;
        EulerianRun { state, law, dt, ghost, step_count: 0, t0, lambda }
    }

    /// Grid initialization: cell density is the profile value at the cell
    /// center.
    pub fn from_profile(
        segments: &[ProfileSegment],
        road_length: f64,
        dx: f64,
        law: &'a dyn SpeedLaw,
        dt: f64,
        ghost: GhostRule,
    ) -> Self {
        let n = (road_length / dx).round() as usize;
        let cells = (0..n)
            .map(|j| {
                let x = (j as f64 + 0.5) * dx;
                segments
                    .iter()
                    .find(|s| x >= s.x_start && x < s.x_end)
                    .map(|s| s.rho)
                    .unwrap_or([0.0, 0.0])
            })
            .collect();
        EulerianRun::new(EulerianState { dx, t: 0.0, cells }, law, dt, ghost)
    }

    /// Stable time-step limit dx / lambda.
    pub fn max_stable_dt(&self) -> f64 {
        self.state.dx / self.lambda
    }

    /// One Lax-Friedrichs step. Refuses CFL-violating time steps.
    pub fn step(&mut self) -> Result<(), SolverError> {
        if self.dt > self.max_stable_dt() {
            return Err(SolverError::CflViolation { dt: self.dt, max_dt: self.max_stable_dt() });
        }
        let n = self.state.cells.len();
        if n == 0 {
            return Ok(());
        }
        let (left_ghost, right_ghost) = match self.ghost {
            GhostRule::ZeroGradient => (self.state.cells[0], self.state.cells[n - 1]),
            GhostRule::FreeDownstream => (self.state.cells[0], [0.0, 0.0]),
            GhostRule::Periodic => (self.state.cells[n - 1], self.state.cells[0]),
        };
        let mut ext = Vec::with_capacity(n + 2);
        ext.push(left_ghost);
        ext.extend_from_slice(&self.state.cells);
        ext.push(right_ghost);

        let mut flux = Vec::with_capacity(n + 2);
        for c in &ext {
            let v_ptw = self.law.speed(ClassId::Ptw, c[0], c[1])?;
            let v_car = self.law.speed(ClassId::Car, c[0], c[1])?;
            flux.push([c[0] * v_ptw, c[1] * v_car]);
        }

        let r = self.dt / (2.0 * self.state.dx);
        for j in 0..n {
            for k in 0..2 {
                self.state.cells[j][k] = 0.5 * (ext[j][k] + ext[j + 2][k])
                    - r * (flux[j + 2][k] - flux[j][k]);
            }
        }
        self.step_count += 1;
        self.state.t = self.t0 + self.step_count as f64 * self.dt;
        Ok(())
    }

    /// Advance to `t_end`, collecting a snapshot at the start and then every
    /// `snapshot_every` steps (the final state is always included).
    pub fn run_to(
        &mut self,
        t_end: f64,
        snapshot_every: usize,
    ) -> Result<Vec<EulerianState>, SolverError> {
        if t_end < self.state.t - 1e-12 {
            return Err(SolverError::TimeTargetInPast { t_end, t: self.state.t });
        }
        let steps = (((t_end - self.state.t) / self.dt) - 1e-9).ceil().max(0.0) as u64;
        let mut snapshots = vec![self.state.clone()];
        for i in 1..=steps {
            self.step()?;
            if (snapshot_every != 0 && i % snapshot_every as u64 == 0) || i == steps {
                snapshots.push(self.state.clone());
            }
        }
        Ok(snapshots)
    }
}

/// CSV header for Eulerian snapshots.
pub const CSV_HEADER: &str = "t,x,rho_ptw,rho_car,v_ptw,v_car";

/// Append one snapshot to a CSV stream (header written by the caller).
pub fn write_snapshot_csv(
    state: &EulerianState,
    law: &dyn SpeedLaw,
    out: &mut impl Write,
) -> std::io::Result<()> {
    for (j, c) in state.cells.iter().enumerate() {
        let v_ptw = law.speed(ClassId::Ptw, c[0], c[1]).unwrap_or(f64::NAN);
        let v_car = law.speed(ClassId::Car, c[0], c[1]).unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            state.t,
            state.x_center(j),
            c[0],
            c[1],
            v_ptw,
            v_car
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speedlaw::{default_class_params, FreeSpaceLaw, FreeSpaceLawParams, GreenshieldsLaw};

    fn law() -> FreeSpaceLaw {
        FreeSpaceLaw::new(FreeSpaceLawParams::default())
    }

    fn uniform_state(n: usize, rho: f64) -> EulerianState {
        EulerianState { dx: 10.0, t: 0.0, cells: vec![[rho, rho]; n] }
    }

    #[test]
    fn uniform_density_is_stationary() {
        let l = law();
        let mut run = EulerianRun::new(uniform_state(50, 0.15), &l, 0.125, GhostRule::ZeroGradient);
        run.step().unwrap();
        for c in &run.state.cells {
            assert!((c[0] - 0.15).abs() < 1e-14);
            assert!((c[1] - 0.15).abs() < 1e-14);
        }
    }

    #[test]
    fn cfl_violation_refused() {
        let l = law();
        let mut run = EulerianRun::new(uniform_state(10, 0.15), &l, 1e3, GhostRule::ZeroGradient);
        assert!(matches!(run.step(), Err(SolverError::CflViolation { .. })));
    }

    #[test]
    fn periodic_conservation_per_step() {
        let l = law();
        let mut state = uniform_state(60, 0.1);
        for j in 20..40 {
            state.cells[j] = [0.25, 0.2];
        }
        let mut run = EulerianRun::new(state, &l, 0.125, GhostRule::Periodic);
        for _ in 0..200 {
            let before = [
                run.state.total_vehicles(ClassId::Ptw),
                run.state.total_vehicles(ClassId::Car),
            ];
            run.step().unwrap();
            let after = [
                run.state.total_vehicles(ClassId::Ptw),
                run.state.total_vehicles(ClassId::Car),
            ];
            for k in 0..2 {
                assert!(
                    (after[k] - before[k]).abs() <= 1e-10 * before[k],
                    "step {}: {} -> {}",
                    run.step_count,
                    before[k],
                    after[k]
                );
            }
        }
    }

    #[test]
    fn run_to_zero_horizon_is_identity() {
        let l = law();
        let mut run = EulerianRun::new(uniform_state(10, 0.1), &l, 0.125, GhostRule::ZeroGradient);
        let snaps = run.run_to(0.0, 8).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(run.step_count, 0);
    }

    #[test]
    fn table1_run_is_360_steps() {
        let l = law();
        let mut run = EulerianRun::new(uniform_state(300, 0.15), &l, 0.125, GhostRule::ZeroGradient);
        run.run_to(45.0, 1_000_000).unwrap();
        assert_eq!(run.step_count, 360);
        assert!((run.state.t - 45.0).abs() < 1e-12);
    }

    #[test]
    fn snapshot_cadence_counts() {
        let l = law();
        let mut run = EulerianRun::new(uniform_state(50, 0.15), &l, 0.125, GhostRule::ZeroGradient);
        let snaps = run.run_to(45.0, 8).unwrap();
        // t = 0 plus one every 8 of the 360 steps.
        assert_eq!(snaps.len(), 46);
    }

    #[test]
    fn positivity_on_riemann_data() {
        let l = law();
        let mut state = uniform_state(300, 0.15);
        for j in 140..300 {
            state.cells[j] = [0.3, 0.3];
        }
        let mut run = EulerianRun::new(state, &l, 0.125, GhostRule::FreeDownstream);
        run.run_to(40.0, 1_000_000).unwrap();
        run.state.check_invariants(&default_class_params()).unwrap();
    }

    #[test]
    fn max_principle_single_class_greenshields() {
        // With the other class absent the scheme keeps each new value inside
        // the local stencil range.
        let g = GreenshieldsLaw::new(default_class_params());
        let mut state = uniform_state(100, 0.0);
        for (j, c) in state.cells.iter_mut().enumerate() {
            c[0] = 0.0;
            c[1] = if j < 50 { 0.1 } else { 0.3 };
        }
        let mut run = EulerianRun::new(state, &g, 0.125, GhostRule::ZeroGradient);
        for _ in 0..100 {
            let prev = run.state.cells.clone();
            run.step().unwrap();
            let n = prev.len();
            for j in 0..n {
                let lo = prev[j.saturating_sub(1)][1]
                    .min(prev[j][1])
                    .min(prev[(j + 1).min(n - 1)][1]);
                let hi = prev[j.saturating_sub(1)][1]
                    .max(prev[j][1])
                    .max(prev[(j + 1).min(n - 1)][1]);
                assert!(
                    run.state.cells[j][1] >= lo - 1e-12 && run.state.cells[j][1] <= hi + 1e-12
                );
            }
        }
    }
}

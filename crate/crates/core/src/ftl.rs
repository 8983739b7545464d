//! Follow-the-leader mode: the Lagrangian scheme at cluster size 1, with PTW
//! sub-lanes so two-wheelers can travel abreast, and an optional red light.
//!
//! Every vehicle keeps follow-the-leader order within its chain: cars form
//! one chain over the full lane, PTWs one chain per sub-lane. A vehicle's
//! own-class spacing is its gap to the chain leader; its other-class spacing
//! is the gap length divided by the number of foreign vehicles inside the
//! gap (cars and other-sub-lane PTWs for a PTW, all PTWs for a car). A red
//! light acts as a virtual stopped leader at the stop line.

use std::io::Write;

use crate::error::SolverError;
use crate::lag1::leader_ghost_flux;
use crate::scenario::{Boundary, TrafficLightConfig};
use crate::speedlaw::{max_wave_speed, Coordinate, SpeedLaw, SpeedLawError};
use crate::types::ClassId;

/// Sub-lane count and fixed PTW assignment (round-robin at initialization;
/// no lane changing).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubLaneLayout {
    pub num_sublanes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub class: ClassId,
    /// Sub-lane index for PTWs; cars occupy the full lane and carry 0.
    pub sublane: usize,
    pub position: f64,
    /// Spacing state toward the own-chain leader; infinite for a chain head
    /// with open road ahead.
    pub spacing: f64,
}

/// One follow-the-leader run.
pub struct FtlSim<'a> {
    pub vehicles: Vec<Vehicle>,
    pub law: &'a dyn SpeedLaw,
    pub dt: f64,
    pub boundary: Boundary,
    pub light: Option<TrafficLightConfig>,
    pub layout: SubLaneLayout,
    pub t: f64,
    pub step_count: u64,
    /// Vehicle indices per chain, leader first. Chain 0 is the car lane,
    /// chains 1.. the PTW sub-lanes.
    chains: Vec<Vec<usize>>,
    lambda: f64,
}

impl<'a> FtlSim<'a> {
    /// Build a run from vehicles with positions and spacings already set.
    /// Vehicles are re-ranked into chains by position; within a chain,
    /// positions must be strictly decreasing.
    pub fn new(
        mut vehicles: Vec<Vehicle>,
        law: &'a dyn SpeedLaw,
        dt: f64,
        boundary: Boundary,
        light: Option<TrafficLightConfig>,
        layout: SubLaneLayout,
    ) -> Result<Self, SolverError> {
        for (i, v) in vehicles.iter_mut().enumerate() {
            v.id = i;
        }
        let mut chains = vec![Vec::new(); layout.num_sublanes + 1];
        let mut order: Vec<usize> = (0..vehicles.len()).collect();
        order.sort_by(|&a, &b| {
            vehicles[b]
                .position
                .partial_cmp(&vehicles[a].position)
                .expect("vehicle positions must be finite")
        });
        for i in order {
            let v = &vehicles[i];
            let chain = match v.class {
                ClassId::Car => 0,
                ClassId::Ptw => 1 + v.sublane,
            };
            chains[chain].push(i);
        }
        for chain in &chains {
            for w in chain.windows(2) {
                if vehicles[w[1]].position >= vehicles[w[0]].position {
                    return Err(SolverError::OrderingViolation {
                        class: vehicles[w[1]].class.label(),
                        cluster: w[1],
                    });
                }
            }
        }
        let lambda = max_wave_speed(law, Coordinate::Lagrangian);
        Ok(FtlSim {
            vehicles,
            law,
            dt,
            boundary,
            light,
            layout,
            t: 0.0,
            step_count: 0,
            chains,
            lambda,
        })
    }

    /// Set each spacing to the geometric gap toward the chain leader
    /// (infinite for chain heads).
    pub fn init_spacings_from_positions(&mut self) {
        for chain in &self.chains {
            for k in 0..chain.len() {
                let gap = if k == 0 {
                    f64::INFINITY
                } else {
                    self.vehicles[chain[k - 1]].position - self.vehicles[chain[k]].position
                };
                self.vehicles[chain[k]].spacing = gap;
            }
        }
    }

    pub fn max_stable_dt(&self) -> f64 {
        1.0 / self.lambda
    }

    fn light_is_red(&self) -> bool {
        self.light.map_or(false, |l| self.t < l.red_until)
    }

    /// Effective own-class gap: the spacing state, shortened to the stop
    /// line when a red light sits between the vehicle and its leader.
    fn effective_gap(&self, i: usize) -> (f64, bool) {
        let v = &self.vehicles[i];
        if self.light_is_red() {
            let light = self.light.unwrap();
            if v.position < light.position && light.position - v.position < v.spacing {
                return (light.position - v.position, true);
            }
        }
        (v.spacing, false)
    }

    /// Whether vehicle `j` counts toward the foreign content of vehicle
    /// `i`'s gap.
    fn is_foreign(&self, i: usize, j: usize) -> bool {
        let a = &self.vehicles[i];
        let b = &self.vehicles[j];
        match a.class {
            ClassId::Car => b.class == ClassId::Ptw,
            ClassId::Ptw => {
                b.class == ClassId::Car || (b.class == ClassId::Ptw && b.sublane != a.sublane)
            }
        }
    }

    /// (s_ptw, s_car) the speed law sees for vehicle `i`: own-class slot is
    /// the effective gap, the other slot the gap length per foreign vehicle
    /// inside it. An unbounded gap falls back to the distance to the
    /// nearest foreign vehicle ahead.
    pub fn local_state(&self, i: usize) -> (f64, f64) {
        let (gap, _) = self.effective_gap(i);
        let x = self.vehicles[i].position;
        let s_other = if gap.is_finite() {
            let count = (0..self.vehicles.len())
                .filter(|&j| {
                    j != i
                        && self.is_foreign(i, j)
                        && self.vehicles[j].position > x
                        && self.vehicles[j].position < x + gap
                })
                .count();
            if count == 0 {
                f64::INFINITY
            } else {
                gap / count as f64
            }
        } else {
            // No own-class leader: the nearest foreign vehicle ahead bounds
            // the free space (a window reaching exactly to it has count 1).
            (0..self.vehicles.len())
                .filter(|&j| j != i && self.is_foreign(i, j) && self.vehicles[j].position > x)
                .map(|j| self.vehicles[j].position - x)
                .fold(f64::INFINITY, f64::min)
        };
        match self.vehicles[i].class {
            ClassId::Ptw => (gap, s_other),
            ClassId::Car => (s_other, gap),
        }
    }

    /// Speed of vehicle `i` from its local state. Sub-lanes let the two
    /// classes overlap in x, so a queue can transiently pack a gap beyond
    /// the jam occupancy (the foreign count inside a gap jumps by whole
    /// vehicles); that is a stopped vehicle, not a domain error.
    fn local_speed(&self, i: usize) -> Result<f64, SolverError> {
        let (s_ptw, s_car) = self.local_state(i);
        match self.law.speed_from_spacing(self.vehicles[i].class, s_ptw, s_car) {
            Ok(v) => Ok(v),
            Err(SpeedLawError::BeyondJam { .. }) => Ok(0.0),
            Err(e) => Err(e.into()),
        }
    }

    /// One step: speeds from a frozen snapshot, then spacing and position
    /// updates. The spacing update always uses the real chain leader's
    /// speed; the light only shortens the gap the speed law sees.
    pub fn step(&mut self) -> Result<(), SolverError> {
        if self.dt > self.max_stable_dt() {
            return Err(SolverError::CflViolation { dt: self.dt, max_dt: self.max_stable_dt() });
        }
        let n = self.vehicles.len();
        let mut speeds = vec![0.0; n];
        for i in 0..n {
            speeds[i] = self.local_speed(i)?;
        }
        // Spacing update per chain (cluster size 1).
        let mut new_spacing = vec![0.0; n];
        for chain in &self.chains {
            for (k, &i) in chain.iter().enumerate() {
                let v_lead = if k == 0 {
                    leader_ghost_flux(self.vehicles[i].class, self.law, self.boundary, speeds[i])?
                } else {
                    speeds[chain[k - 1]]
                };
                let s = self.vehicles[i].spacing - self.dt / 1.0 * (speeds[i] - v_lead);
                if !(s > 0.0) {
                    return Err(SolverError::NonpositiveSpacing {
                        class: self.vehicles[i].class.label(),
                        cluster: i,
                        spacing: s,
                    });
                }
                new_spacing[i] = s;
            }
        }
        for i in 0..n {
            self.vehicles[i].spacing = new_spacing[i];
            self.vehicles[i].position += self.dt * speeds[i];
        }
        for chain in &self.chains {
            for w in chain.windows(2) {
                if self.vehicles[w[1]].position >= self.vehicles[w[0]].position {
                    return Err(SolverError::OrderingViolation {
                        class: self.vehicles[w[1]].class.label(),
                        cluster: w[1],
                    });
                }
            }
        }
        self.step_count += 1;
        self.t = self.step_count as f64 * self.dt;
        Ok(())
    }

    /// Current speed of every vehicle (frozen-state evaluation).
    pub fn speeds(&self) -> Result<Vec<f64>, SolverError> {
        (0..self.vehicles.len()).map(|i| self.local_speed(i)).collect()
    }
}

/// CSV header for trajectory output.
pub const CSV_HEADER: &str = "t,vehicle_id,class,sublane,position,speed";

/// Append one trajectory sample per vehicle.
pub fn write_snapshot_csv(sim: &FtlSim<'_>, out: &mut impl Write) -> std::io::Result<()> {
    let speeds = sim.speeds().map_err(std::io::Error::other)?;
    for (v, speed) in sim.vehicles.iter().zip(&speeds) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            sim.t,
            v.id,
            v.class.label(),
            v.sublane,
            v.position,
            speed
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

    fn sim<'a>(
        vehicles: Vec<Vehicle>,
        law: &'a FreeSpaceLaw,
        light: Option<TrafficLightConfig>,
    ) -> FtlSim<'a> {
        FtlSim::new(
            vehicles,
            law,
            0.05,
            Boundary::FreeDownstream,
            light,
            SubLaneLayout { num_sublanes: 2 },
        )
        .unwrap()
    }

    fn vehicle(class: ClassId, sublane: usize, position: f64) -> Vehicle {
        Vehicle { id: 0, class, sublane, position, spacing: f64::INFINITY }
    }

    #[test]
    fn single_vehicle_travels_at_free_flow() {
        let l = law();
        let mut s = sim(vec![vehicle(ClassId::Ptw, 0, 100.0)], &l, None);
        s.init_spacings_from_positions();
        for _ in 0..100 {
            s.step().unwrap();
        }
        let expected = 100.0 + 20.0 * s.t;
        assert!((s.vehicles[0].position - expected).abs() < 1e-9);
    }

    #[test]
    fn one_car_in_gap_gives_gap_length_spacing() {
        let l = law();
        let mut s = sim(
            vec![
                vehicle(ClassId::Ptw, 0, 110.0),
                vehicle(ClassId::Car, 0, 105.0),
                vehicle(ClassId::Ptw, 0, 100.0),
            ],
            &l,
            None,
        );
        s.init_spacings_from_positions();
        // The trailing PTW has a 10 m gap with one car inside.
        let (s_ptw, s_car) = s.local_state(2);
        assert_eq!(s_ptw, 10.0);
        assert_eq!(s_car, 10.0);
    }

    #[test]
    fn no_foreign_vehicles_in_gap_means_infinite_other_spacing() {
        let l = law();
        let mut s = sim(
            vec![vehicle(ClassId::Ptw, 0, 120.0), vehicle(ClassId::Ptw, 0, 100.0)],
            &l,
            None,
        );
        s.init_spacings_from_positions();
        let (s_ptw, s_car) = s.local_state(1);
        assert_eq!(s_ptw, 20.0);
        assert_eq!(s_car, f64::INFINITY);
    }

    #[test]
    fn jammed_queue_behind_red_light_is_frozen() {
        let l = law();
        let light = TrafficLightConfig { position: 100.0, red_until: 1e9 };
        // PTWs packed at their effective length behind the stop line.
        let eff = 0.457;
        let vehicles: Vec<Vehicle> = (0..5)
            .map(|k| vehicle(ClassId::Ptw, 0, 100.0 - eff * (k + 1) as f64))
            .collect();
        let mut s = sim(vehicles, &l, Some(light));
        s.init_spacings_from_positions();
        let before: Vec<f64> = s.vehicles.iter().map(|v| v.position).collect();
        for _ in 0..50 {
            s.step().unwrap();
        }
        for (v, b) in s.vehicles.iter().zip(&before) {
            assert!((v.position - b).abs() < 1e-9);
            assert!(v.position < 100.0);
        }
    }

    #[test]
    fn no_vehicle_passes_a_red_light() {
        let l = law();
        let light = TrafficLightConfig { position: 400.0, red_until: 1e9 };
        let mut s = sim(
            vec![
                vehicle(ClassId::Ptw, 0, 380.0),
                vehicle(ClassId::Car, 0, 360.0),
                vehicle(ClassId::Ptw, 1, 340.0),
            ],
            &l,
            Some(light),
        );
        s.init_spacings_from_positions();
        for _ in 0..2000 {
            s.step().unwrap();
            for v in &s.vehicles {
                assert!(v.position < 400.0, "vehicle {} passed the light", v.id);
            }
        }
    }

    #[test]
    fn local_state_matches_brute_force_count() {
        // Randomized-ish placement (fixed pattern) checked against a plain
        // interval-counting oracle.
        let l = law();
        let mut vehicles = Vec::new();
        let mut x = 0.0;
        for k in 0..30 {
            x += 3.0 + (k * 37 % 11) as f64;
            let class = if k % 3 == 0 { ClassId::Car } else { ClassId::Ptw };
            vehicles.push(vehicle(class, k % 2, x));
        }
        let mut s = sim(vehicles, &l, None);
        s.init_spacings_from_positions();
        for i in 0..s.vehicles.len() {
            let (s_ptw, s_car) = s.local_state(i);
            let me = s.vehicles[i];
            let (own, other) = match me.class {
                ClassId::Ptw => (s_ptw, s_car),
                ClassId::Car => (s_car, s_ptw),
            };
            let gap = me.spacing;
            if !gap.is_finite() {
                continue;
            }
            assert_eq!(own, gap);
            let count = s
                .vehicles
                .iter()
                .filter(|v| {
                    v.id != me.id
                        && v.position > me.position
                        && v.position < me.position + gap
                        && match me.class {
                            ClassId::Car => v.class == ClassId::Ptw,
                            ClassId::Ptw => {
                                v.class == ClassId::Car
                                    || (v.class == ClassId::Ptw && v.sublane != me.sublane)
                            }
                        }
                })
                .count();
            let expected = if count == 0 { f64::INFINITY } else { gap / count as f64 };
            assert_eq!(other, expected, "vehicle {i}");
        }
    }

    #[test]
    fn agrees_with_lag1_at_unit_cluster_size() {
        use crate::lag1::Lag1Run;
        use crate::types::{Cluster, ClusterField};

        let l = law();
        // Single sub-lane, PTWs only, finite head spacing.
        let spacings = [8.0, 6.0, 10.0, 5.0];
        let mut position = 500.0;
        let mut vehicles = Vec::new();
        let mut clusters = Vec::new();
        for (k, &sp) in spacings.iter().enumerate() {
            clusters.push(Cluster {
                index: (k + 1) as f64,
                dn: 1.0,
                spacing: sp,
                position,
            });
            vehicles.push(Vehicle { id: 0, class: ClassId::Ptw, sublane: 0, position, spacing: sp });
            position -= sp;
        }
        let mut ftl = FtlSim::new(
            vehicles,
            &l,
            0.05,
            Boundary::FreeDownstream,
            None,
            SubLaneLayout { num_sublanes: 1 },
        )
        .unwrap();
        let ptw = ClusterField { class_id: ClassId::Ptw, clusters };
        let car = ClusterField { class_id: ClassId::Car, clusters: Vec::new() };
        let mut lag = Lag1Run::new(ptw, car, &l, 0.05, Boundary::FreeDownstream);
        for _ in 0..200 {
            ftl.step().unwrap();
            lag.step().unwrap();
        }
        for (v, c) in ftl.vehicles.iter().zip(&lag.field(ClassId::Ptw).clusters) {
            assert_eq!(v.position, c.position);
            assert_eq!(v.spacing, c.spacing);
        }
    }
}

//! Two-class kinematic wave (LWR) traffic flow solvers.
//!
//! The traffic stream is a mix of powered two-wheelers (PTWs, class 1) and
//! cars (class 2). Each class obeys a continuity equation coupled through a
//! shared speed law: the speed of either class depends on the densities (or
//! spacings) of both. Three macroscopic solvers are provided, plus a
//! microscopic mode:
//!
//! * [`euler`] — fixed-grid Lax-Friedrichs scheme, the comparison baseline.
//! * [`lag1`] — Lagrangian coordinates with a separate vehicle-count axis per
//!   class, Godunov update on spacing, cross-class spacing interpolation.
//! * [`lag2`] — Lagrangian coordinates moving with one reference (carrier)
//!   class; the other class is carried as a spacing-ratio state with
//!   direction-robust upwind fluxes.
//! * [`ftl`] — follow-the-leader mode (cluster size 1) with PTW sub-lanes and
//!   an optional traffic light, producing per-vehicle trajectories.
//!
//! [`harness`] bundles the comparison experiments and CSV/metadata output,
//! and [`scenario`] holds the plain-text scenario file format.

pub mod error;
pub mod euler;
pub mod ftl;
pub mod harness;
pub mod lag1;
pub mod lag2;
pub mod scenario;
pub mod speedlaw;
pub mod types;

pub use error::SolverError;
pub use scenario::{Boundary, ScenarioConfig, ValidationReport};
pub use speedlaw::{FreeSpaceLaw, GreenshieldsLaw, SpeedLaw, SpeedLawError};
pub use types::{ClassId, Cluster, ClusterField, EulerianState, VehicleClassParams};

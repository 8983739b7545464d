//! Solver-side error types.

use thiserror::Error;

/// Errors raised while advancing a simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("CFL violation: dt = {dt} exceeds the stable limit {max_dt}")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("negative density in cell {cell}")]
    NegativeDensity { cell: usize },

    #[error("occupancy {occupancy} beyond jam")]
    BeyondJam { occupancy: f64 },

    #[error("spacing of {class} cluster {cluster} would become nonpositive ({spacing}); check CFL or the speed law configuration")]
    NonpositiveSpacing {
        class: &'static str,
        cluster: usize,
        spacing: f64,
    },

    #[error("carried ratio of cluster {cluster} would become negative ({ratio}); check the flux selection or CFL")]
    NegativeCarriedRatio { cluster: usize, ratio: f64 },

    #[error("within-class ordering violated at {class} cluster {cluster} after position update")]
    OrderingViolation { class: &'static str, cluster: usize },

    #[error("reference-class density vanishes at cluster {cluster}; the density form requires rho_r > 0")]
    ZeroReferenceDensity { cluster: usize },

    #[error("time target {t_end} lies before current time {t}")]
    TimeTargetInPast { t_end: f64, t: f64 },

    #[error("speed law: {0}")]
    SpeedLaw(#[from] crate::speedlaw::SpeedLawError),
}

//! Crate-wide error type. Variants are named after the failure they signal so
//! callers can branch on the condition (shrink a patch, refine a sweep, pick
//! a different shift) rather than parsing messages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("metric is not positive definite at ({x:.6}, {y:.6}): min eigenvalue {min_eig:.3e}")]
    NonSpd { x: f64, y: f64, min_eig: f64 },

    #[error("finite-difference stencil is inconsistent at ({x:.6}, {y:.6}): refinement residual {residual:.3e}")]
    DifferentiationFailure { x: f64, y: f64, residual: f64 },

    #[error("integration step failure: {0}")]
    StepFailure(#[from] crate::ode::OdeError),

    #[error("conjugacy test inconclusive on [{t_start:.6}, {t_end:.6}]: |det| = {margin:.3e} inside the dead band")]
    Inconclusive {
        t_start: f64,
        t_end: f64,
        margin: f64,
    },

    #[error("angular sweep still too coarse after {rounds} refinement rounds (resolution {resolution})")]
    ResolutionTooCoarse { rounds: usize, resolution: usize },

    #[error("degenerate root cluster at theta = {theta:.8}, length = {length:.8}: boundary degree 0")]
    DegenerateRoot { theta: f64, length: f64 },

    #[error("budget exhausted: {what}")]
    BudgetExhausted { what: String },

    #[error("blocking point ({x:.6}, {y:.6}) is within {dist:.3e} of an endpoint (minimum {min:.3e})")]
    PointTooCloseToEndpoints { x: f64, y: f64, dist: f64, min: f64 },

    #[error("certificate references metric {expected} but the supplied metric hashes to {actual}")]
    StaleMetric { expected: String, actual: String },

    #[error("fermi base point gamma({t0}-{t}) is conjugate to the patch center; choose a different backoff")]
    ConjugateBasepoint { t0: f64, t: f64 },

    #[error("fermi patch injectivity validation failed: {what}")]
    InjectivityFailure { what: String },

    #[error("foliation containment failed: {what}")]
    ContainmentFailure { what: String },

    #[error("new patch support overlaps an existing patch support (strict mode)")]
    OverlapPolicyViolation,

    #[error("geodesic state at t0 is outside the validated merge neighborhood: {what}")]
    NotInNeighborhood { what: String },

    #[error("conjugacy already in the dead band and the shift schedule is exhausted")]
    AlreadyInconclusive,

    #[error("tangent offset escapes the validated neighborhood: {what}")]
    NeighborhoodTooLarge { what: String },

    #[error("no degree-certified root survived the probe near theta = {theta:.8}")]
    RootLost { theta: f64 },

    #[error("pipeline step rejected: {condition}")]
    StepRejected { condition: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GeoError>;

//! Named tolerances. Every threshold used by a verdict anywhere in the crate
//! lives here so certificates and tests pin the same numbers.

/// Unit-speed deviation allowed per unit length of a geodesic sample table.
pub const TAU_UNIT: f64 = 1e-8;
/// Smallest admissible metric eigenvalue.
pub const TAU_SPD: f64 = 1e-9;
/// Periodicity residual allowed for composite metrics.
pub const TAU_PER: f64 = 1e-9;
/// Periodicity residual allowed for closed-form metrics.
pub const TAU_PER_CLOSED: f64 = 1e-12;
/// Central finite-difference step for composite metric derivatives.
pub const H_FD: f64 = 1e-4;
/// Geodesic-equation residual bound for surgery-constructed curves.
pub const TAU_RES: f64 = 1e-6;
/// Endpoint reproducibility per unit length under step halving.
pub const TAU_INT: f64 = 1e-8;
/// Dead band for conjugacy verdicts: |det| below this is Inconclusive.
pub const TAU_CONJ: f64 = 1e-6;
/// Two-point solver endpoint tolerance (torus distance).
pub const TAU_HIT: f64 = 1e-7;
/// Duplicate-geodesic merge tolerance on initial angle (radians) and length.
pub const TAU_DUP: f64 = 1e-5;
/// Minimum separation between blocking points and the endpoints x, y.
pub const TAU_PT: f64 = 1e-6;
/// Pairwise linear-independence threshold on determinants of unit tangents.
pub const TAU_LI: f64 = 1e-6;
/// Passage tolerance for blocking checks.
pub const EPS_BLOCK: f64 = 1e-4;
/// Intersection-point refinement tolerance.
pub const EPS_INT: f64 = 1e-5;
/// Interior clearance from the endpoints required by condition (ii).
pub const EPS_AVOID: f64 = 1e-2;
/// Exclusion-tube radius around accepted traces in the growth pipeline.
pub const R_EXCL: f64 = 0.02;
/// Lower bound on Fermi map Jacobian determinants.
pub const TAU_JAC: f64 = 1e-6;
/// Allowed disagreement between finite-difference refinements (smoothness probe).
pub const TAU_SMOOTH: f64 = 1e-5;
/// Geodesic fan spread for finite-difference Jacobi oracles.
pub const EPS_FAN: f64 = 1e-5;

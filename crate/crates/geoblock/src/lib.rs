//! Numerical laboratory for geodesic blocking on smooth metrics over the
//! unit 2-torus.
//!
//! The crate integrates geodesics and Jacobi fields, solves the two-point
//! geodesic problem with topological-degree certification, applies the three
//! metric surgeries (foliation merging, geodesic merging with conjugate-point
//! destruction, finite-set avoidance), and grows families of geodesics whose
//! pairwise-intersection structure defeats any m-point blocking set,
//! packaged as verifiable insecurity certificates.

pub mod chart;
pub mod error;
pub mod metric;
pub mod ode;
pub mod patch;
pub mod smooth;
pub mod spline;
pub mod tol;
pub mod geodesic;
pub mod jacobi;
pub mod connector;
pub mod blocking;
pub mod fermi;

pub use chart::{ChartPoint, TangentVector};
pub use error::{GeoError, Result};
pub use metric::{metric_distance, MetricDistanceReport, MetricField};

//! Smooth Riemannian metrics on the torus chart: closed forms (flat,
//! conformal bump) and composites obtained by applying surgery patches over a
//! base. Composites evaluate lazily through their patch lineage; outside every
//! patch support the base code path runs unchanged, so agreement there is
//! bit-identical, not approximate.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

use crate::chart::{min_lift_displacement, wrap_vec, ChartPoint};
use crate::error::{GeoError, Result};
use crate::patch::{Rect, SurgeryPatch};
use crate::smooth::{bump_of_squared_radius, bump_of_squared_radius_deriv};
use crate::tol;

/// Closed-form metric families with analytic first derivatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClosedForm {
    Flat,
    ConformalBump {
        center: [f64; 2],
        amplitude: f64,
        radius: f64,
    },
}

impl ClosedForm {
    fn conformal_lambda(center: &[f64; 2], amplitude: f64, radius: f64, v: Vector2<f64>) -> f64 {
        let d = min_lift_displacement(v - Vector2::new(center[0], center[1]));
        amplitude * bump_of_squared_radius(d.norm_squared(), radius * radius)
    }

    fn eval(&self, v: Vector2<f64>) -> Matrix2<f64> {
        match self {
            ClosedForm::Flat => Matrix2::identity(),
            ClosedForm::ConformalBump {
                center,
                amplitude,
                radius,
            } => {
                let lambda = Self::conformal_lambda(center, *amplitude, *radius, v);
                Matrix2::identity() * (2.0 * lambda).exp()
            }
        }
    }

    fn d_eval(&self, v: Vector2<f64>) -> [Matrix2<f64>; 2] {
        match self {
            ClosedForm::Flat => [Matrix2::zeros(), Matrix2::zeros()],
            ClosedForm::ConformalBump {
                center,
                amplitude,
                radius,
            } => {
                let d = min_lift_displacement(v - Vector2::new(center[0], center[1]));
                let r2 = radius * radius;
                let rho2 = d.norm_squared();
                let lambda = amplitude * bump_of_squared_radius(rho2, r2);
                let dlam = 2.0 * amplitude * bump_of_squared_radius_deriv(rho2, r2) * d;
                let scale = (2.0 * lambda).exp() * 2.0;
                [
                    Matrix2::identity() * (scale * dlam.x),
                    Matrix2::identity() * (scale * dlam.y),
                ]
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MetricKind {
    ClosedForm(ClosedForm),
    Composite {
        base: Arc<MetricField>,
        patch: Arc<SurgeryPatch>,
    },
}

/// A smooth metric field over the chart. Immutable after construction;
/// composition returns a new field sharing the lineage through `Arc`s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricField {
    #[serde(flatten)]
    kind: MetricKind,
}

impl MetricField {
    pub fn flat() -> Self {
        Self {
            kind: MetricKind::ClosedForm(ClosedForm::Flat),
        }
    }

    pub fn conformal_bump(center: ChartPoint, amplitude: f64, radius: f64) -> Self {
        assert!(
            radius > 0.0 && radius <= 0.45,
            "bump radius must fit inside a fundamental domain"
        );
        Self {
            kind: MetricKind::ClosedForm(ClosedForm::ConformalBump {
                center: [center.coords.x, center.coords.y],
                amplitude,
                radius,
            }),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, MetricKind::ClosedForm(ClosedForm::Flat))
    }

    /// Number of patches in the lineage.
    pub fn patch_count(&self) -> usize {
        match &self.kind {
            MetricKind::ClosedForm(_) => 0,
            MetricKind::Composite { base, .. } => 1 + base.patch_count(),
        }
    }

    pub fn patches(&self) -> Vec<Arc<SurgeryPatch>> {
        match &self.kind {
            MetricKind::ClosedForm(_) => Vec::new(),
            MetricKind::Composite { base, patch } => {
                let mut v = base.patches();
                v.push(patch.clone());
                v
            }
        }
    }

    /// Metric tensor at an arbitrary plane point (reduced mod Z^2 internally).
    pub fn eval_at(&self, v: Vector2<f64>) -> Matrix2<f64> {
        match &self.kind {
            MetricKind::ClosedForm(cf) => cf.eval(wrap_vec(v)),
            MetricKind::Composite { base, patch } => match patch.blend_at(v) {
                None => base.eval_at(v),
                Some((w, hat_g)) => {
                    if w >= 1.0 {
                        hat_g
                    } else {
                        hat_g * w + base.eval_at(v) * (1.0 - w)
                    }
                }
            },
        }
    }

    /// SPD-checked evaluation at a chart point.
    pub fn eval(&self, q: &ChartPoint) -> Result<Matrix2<f64>> {
        let g = self.eval_at(q.rep());
        let min_eig = min_eigenvalue(&g);
        if min_eig <= tol::TAU_SPD {
            return Err(GeoError::NonSpd {
                x: q.coords.x,
                y: q.coords.y,
                min_eig,
            });
        }
        Ok(g)
    }

    /// First partials (d g / dx, d g / dy). Analytic for closed forms;
    /// central finite differences where a patch is active.
    pub fn d_eval_at(&self, v: Vector2<f64>) -> [Matrix2<f64>; 2] {
        match &self.kind {
            MetricKind::ClosedForm(cf) => cf.d_eval(wrap_vec(v)),
            MetricKind::Composite { base, patch } => {
                if !self.near_patch(v, tol::H_FD * 2.0) {
                    let _ = patch;
                    return base.d_eval_at(v);
                }
                let h = tol::H_FD;
                let gxp = self.eval_at(v + Vector2::new(h, 0.0));
                let gxm = self.eval_at(v - Vector2::new(h, 0.0));
                let gyp = self.eval_at(v + Vector2::new(0.0, h));
                let gym = self.eval_at(v - Vector2::new(0.0, h));
                [(gxp - gxm) / (2.0 * h), (gyp - gym) / (2.0 * h)]
            }
        }
    }

    /// True when `v` is within `margin` of some patch support box.
    fn near_patch(&self, v: Vector2<f64>, margin: f64) -> bool {
        match &self.kind {
            MetricKind::ClosedForm(_) => false,
            MetricKind::Composite { base, patch } => {
                let w = wrap_vec(v);
                let inflated = patch.bbox.inflate(margin);
                for j in -1..=1 {
                    for k in -1..=1 {
                        if inflated.contains(w + Vector2::new(j as f64, k as f64)) {
                            return true;
                        }
                    }
                }
                base.near_patch(v, margin)
            }
        }
    }

    /// Christoffel symbols of the second kind at a plane point, as the pair
    /// (Gamma^1, Gamma^2) of symmetric matrices: Gamma^k[(i, j)] = Gamma^k_ij.
    pub fn christoffel_at(&self, v: Vector2<f64>) -> [Matrix2<f64>; 2] {
        let g = self.eval_at(v);
        let dg = self.d_eval_at(v);
        christoffel_from_parts(&g, &dg)
    }

    /// Checked Christoffel evaluation: verifies stencil self-consistency by
    /// comparing against a half-step refinement where a patch is active.
    pub fn christoffel(&self, q: &ChartPoint) -> Result<[Matrix2<f64>; 2]> {
        let v = q.rep();
        let gamma = self.christoffel_at(v);
        if self.near_patch(v, tol::H_FD * 2.0) {
            let g = self.eval_at(v);
            let h = tol::H_FD / 2.0;
            let fd = |e: Vector2<f64>| (self.eval_at(v + e) - self.eval_at(v - e)) / (2.0 * h);
            let dg_half = [fd(Vector2::new(h, 0.0)), fd(Vector2::new(0.0, h))];
            let gamma_half = christoffel_from_parts(&g, &dg_half);
            let mut residual: f64 = 0.0;
            for k in 0..2 {
                residual = residual.max((gamma[k] - gamma_half[k]).abs().max());
            }
            if residual > tol::TAU_SMOOTH {
                return Err(GeoError::DifferentiationFailure {
                    x: v.x,
                    y: v.y,
                    residual,
                });
            }
        }
        Ok(gamma)
    }

    /// Partials of the Christoffel symbols: `out[l][k]` is d_l Gamma^k.
    pub fn d_christoffel_at(&self, v: Vector2<f64>) -> [[Matrix2<f64>; 2]; 2] {
        let h = tol::H_FD;
        let mut out = [[Matrix2::zeros(); 2]; 2];
        for (l, e) in [Vector2::new(h, 0.0), Vector2::new(0.0, h)]
            .into_iter()
            .enumerate()
        {
            let gp = self.christoffel_at(v + e);
            let gm = self.christoffel_at(v - e);
            out[l] = [(gp[0] - gm[0]) / (2.0 * h), (gp[1] - gm[1]) / (2.0 * h)];
        }
        out
    }

    /// Apply a surgery patch over this metric, returning the composite.
    ///
    /// In strict mode the new patch support must be disjoint from all
    /// existing patch supports. The composite is SPD-validated on a grid.
    pub fn compose_with_patch(
        self: &Arc<Self>,
        patch: SurgeryPatch,
        strict_overlap: bool,
    ) -> Result<MetricField> {
        if strict_overlap {
            for existing in self.patches() {
                if patch_boxes_intersect_on_torus(&existing.bbox, &patch.bbox) {
                    return Err(GeoError::OverlapPolicyViolation);
                }
            }
        }
        let composite = MetricField {
            kind: MetricKind::Composite {
                base: self.clone(),
                patch: Arc::new(patch),
            },
        };
        composite.validate_grid(128)?;
        Ok(composite)
    }

    /// SPD + periodicity validation over an n-by-n grid.
    pub fn validate_grid(&self, n: usize) -> Result<()> {
        let tau_per = if self.patch_count() == 0 {
            tol::TAU_PER_CLOSED
        } else {
            tol::TAU_PER
        };
        for i in 0..n {
            for j in 0..n {
                let v = Vector2::new(i as f64 / n as f64, j as f64 / n as f64);
                let g = self.eval_at(v);
                let min_eig = min_eigenvalue(&g);
                if min_eig <= tol::TAU_SPD {
                    return Err(GeoError::NonSpd {
                        x: v.x,
                        y: v.y,
                        min_eig,
                    });
                }
                if (g[(0, 1)] - g[(1, 0)]).abs() > 1e-12 {
                    return Err(GeoError::InvalidInput(format!(
                        "metric asymmetric at ({}, {})",
                        v.x, v.y
                    )));
                }
                let shifted = self.eval_at(v + Vector2::new(1.0, 0.0));
                let shifted2 = self.eval_at(v + Vector2::new(0.0, 1.0));
                let res = (g - shifted).abs().max().max((g - shifted2).abs().max());
                if res > tau_per {
                    return Err(GeoError::InvalidInput(format!(
                        "periodicity residual {res:.3e} at ({}, {})",
                        v.x, v.y
                    )));
                }
            }
        }
        Ok(())
    }

    /// Inner product of tangent components under the metric at a point.
    pub fn inner_at(&self, v: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
        let g = self.eval_at(v);
        (g * b).dot(&a)
    }

    pub fn norm_at(&self, v: Vector2<f64>, a: Vector2<f64>) -> f64 {
        self.inner_at(v, a, a).sqrt()
    }

    /// Unit vector (in this metric) in the direction of Euclidean angle theta.
    pub fn unit_from_angle(&self, v: Vector2<f64>, theta: f64) -> Vector2<f64> {
        let u = Vector2::new(theta.cos(), theta.sin());
        u / self.norm_at(v, u)
    }

    /// Global bound on chart speed of unit-speed geodesics: 1/sqrt(min
    /// eigenvalue over a validation grid), slightly inflated.
    pub fn chart_speed_bound(&self, n: usize) -> f64 {
        let mut min_eig = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let v = Vector2::new(i as f64 / n as f64, j as f64 / n as f64);
                min_eig = min_eig.min(min_eigenvalue(&self.eval_at(v)));
            }
        }
        1.05 / min_eig.sqrt()
    }

    /// Stable content hash of the metric definition.
    pub fn metric_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("metric serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex::encode(hasher.finalize())
    }
}

/// True when the two patch boxes intersect in some pair of lattice lifts.
fn patch_boxes_intersect_on_torus(a: &Rect, b: &Rect) -> bool {
    for j in -2..=2 {
        for k in -2..=2 {
            let shifted = Rect {
                lo: [b.lo[0] + j as f64, b.lo[1] + k as f64],
                hi: [b.hi[0] + j as f64, b.hi[1] + k as f64],
            };
            if a.intersects(&shifted) {
                return true;
            }
        }
    }
    false
}

pub fn christoffel_from_parts(g: &Matrix2<f64>, dg: &[Matrix2<f64>; 2]) -> [Matrix2<f64>; 2] {
    let inv = g.try_inverse().expect("metric must be invertible");
    let mut gamma = [Matrix2::zeros(); 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for l in 0..2 {
                    acc += inv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gamma[k][(i, j)] = 0.5 * acc;
            }
        }
    }
    gamma
}

/// Smallest eigenvalue of a symmetric 2x2 matrix (closed form).
pub fn min_eigenvalue(m: &Matrix2<f64>) -> f64 {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let mean = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    mean - disc
}

/// Sampled C0/C1/C2 distances between two metric fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricDistanceReport {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub grid: usize,
    /// Bounding box of grid nodes where the difference is nonzero, if any.
    pub support_box: Option<Rect>,
}

/// Sup-norms of the difference field and of its first and second difference
/// quotients over an n-by-n periodic grid.
pub fn metric_distance(g1: &MetricField, g2: &MetricField, n: usize) -> MetricDistanceReport {
    let h = 1.0 / n as f64;
    let diff = |i: i64, j: i64| -> Matrix2<f64> {
        let v = Vector2::new(i as f64 * h, j as f64 * h);
        g1.eval_at(v) - g2.eval_at(v)
    };
    let mut c0: f64 = 0.0;
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    let mut support: Vec<Vector2<f64>> = Vec::new();
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            let d = diff(i, j);
            let m = d.abs().max();
            c0 = c0.max(m);
            if m > 0.0 {
                support.push(Vector2::new(i as f64 * h, j as f64 * h));
            }
            let dxp = diff(i + 1, j);
            let dxm = diff(i - 1, j);
            let dyp = diff(i, j + 1);
            let dym = diff(i, j - 1);
            c1 = c1
                .max(((dxp - dxm) / (2.0 * h)).abs().max())
                .max(((dyp - dym) / (2.0 * h)).abs().max());
            c2 = c2
                .max(((dxp - d * 2.0 + dxm) / (h * h)).abs().max())
                .max(((dyp - d * 2.0 + dym) / (h * h)).abs().max());
        }
    }
    MetricDistanceReport {
        c0,
        c1,
        c2,
        grid: n,
        support_box: if support.is_empty() {
            None
        } else {
            Some(Rect::from_points(support.iter()))
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_metric_is_identity() {
        let g = MetricField::flat();
        let m = g.eval(&ChartPoint::new(0.3, 0.7)).unwrap();
        assert_eq!(m, Matrix2::identity());
        let gamma = g.christoffel_at(Vector2::new(0.2, 0.9));
        assert_eq!(gamma[0], Matrix2::zeros());
        assert_eq!(gamma[1], Matrix2::zeros());
    }

    #[test]
    fn conformal_bump_center_value() {
        // e^{2 * 0.1} at the bump center.
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.1, 0.35);
        let m = g.eval(&ChartPoint::new(0.5, 0.5)).unwrap();
        assert_relative_eq!(m[(0, 0)], 1.221402758160170, epsilon = 1e-12);
        assert_relative_eq!(m[(1, 1)], 1.221402758160170, epsilon = 1e-12);
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn conformal_bump_vanishes_outside_support() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.1, 0.2);
        let m = g.eval_at(Vector2::new(0.9, 0.9));
        assert_eq!(m, Matrix2::identity());
    }

    #[test]
    fn analytic_metric_derivative_matches_finite_differences() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.2, 0.3);
        let v = Vector2::new(0.58, 0.41);
        let dg = g.d_eval_at(v);
        let h = 1e-6;
        for k in 0..2 {
            let e = if k == 0 {
                Vector2::new(h, 0.0)
            } else {
                Vector2::new(0.0, h)
            };
            let fd = (g.eval_at(v + e) - g.eval_at(v - e)) / (2.0 * h);
            assert!((fd - dg[k]).abs().max() < 1e-8, "axis {k}");
        }
    }

    #[test]
    fn christoffel_symmetry_and_fd_consistency() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.2, 0.3);
        let v = Vector2::new(0.5, 0.6);
        let gamma = g.christoffel_at(v);
        for k in 0..2 {
            assert!((gamma[k][(0, 1)] - gamma[k][(1, 0)]).abs() < 1e-14);
        }
        // Independent finite-difference route on eval_at.
        let h = tol::H_FD;
        let fd = |e: Vector2<f64>| (g.eval_at(v + e) - g.eval_at(v - e)) / (2.0 * h);
        let dg = [fd(Vector2::new(h, 0.0)), fd(Vector2::new(0.0, h))];
        let oracle = christoffel_from_parts(&g.eval_at(v), &dg);
        for k in 0..2 {
            assert!(
                (gamma[k] - oracle[k]).abs().max() <= 10.0 * tol::H_FD * tol::H_FD,
                "axis {k}"
            );
        }
    }

    #[test]
    fn periodicity_and_spd_on_grid() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.2, 0.8), 0.5, 0.4);
        g.validate_grid(64).unwrap();
    }

    #[test]
    fn distance_of_field_with_itself_is_zero() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.3, 0.3);
        let r = metric_distance(&g, &g, 32);
        assert_eq!(r.c0, 0.0);
        assert_eq!(r.c1, 0.0);
        assert_eq!(r.c2, 0.0);
        assert!(r.support_box.is_none());
    }

    #[test]
    fn metric_id_is_stable_and_distinguishes() {
        let a = MetricField::flat();
        let b = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.1, 0.3);
        assert_eq!(a.metric_id(), MetricField::flat().metric_id());
        assert_ne!(a.metric_id(), b.metric_id());
    }

    #[test]
    fn serde_round_trip() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.25, 0.75), 0.15, 0.3);
        let s = serde_json::to_string(&g).unwrap();
        let back: MetricField = serde_json::from_str(&s).unwrap();
        assert_eq!(g.metric_id(), back.metric_id());
    }
}

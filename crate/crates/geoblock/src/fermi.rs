//! Fermi patches: geodesic-fan parametrizations f(t, p) built by
//! exponentiating a rotated unit-vector family from a base point behind a
//! center geodesic.
//!
//! f(t, p) = exp_{x~}( (t + T) * A(phi(p)) ) in a g-orthonormal frame at x~,
//! with phi(p) = (p, sqrt(1 - p^2)) on the unit circle, so f(t, 0) tracks the
//! center geodesic and t-slices are g-orthogonal to the t-curves (the Gauss
//! lemma). The fan is integrated jointly with its transverse Jacobi field;
//! positions, both frame fields, and the transverse metric coefficient
//! g(df/dp, df/dp) are stored as spline surfaces for O(1) evaluation and
//! Newton inversion.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::chart::ChartPoint;
use crate::error::{GeoError, Result};
use crate::geodesic::GeodesicSegment;
use crate::jacobi::conjugacy_scan;
use crate::metric::MetricField;
use crate::ode::{integrate_to_times, OdeParams};
use crate::spline::Spline2;
use crate::tol;

/// Grid resolution for the fan splines.
#[derive(Debug, Clone, Copy)]
pub struct FanGrid {
    /// Longitudinal node spacing.
    pub dt: f64,
    /// Number of transverse nodes (odd, so p = 0 is a node).
    pub np: usize,
}

impl Default for FanGrid {
    fn default() -> Self {
        Self { dt: 1.5e-3, np: 121 }
    }
}

/// A geodesic-fan coordinate patch along a center geodesic.
#[derive(Debug, Clone)]
pub struct FermiPatch {
    pub metric_id: String,
    /// Base point (lifted coordinates, consistent with the fan data).
    pub base_point: Vector2<f64>,
    /// g-orthonormal frame at the base point: [normal, tangent].
    pub frame: [Vector2<f64>; 2],
    /// Rotation angle of the launch family (A in SO(2)).
    pub rotation: f64,
    /// Arc-length offset from the base point to the patch center line.
    pub offset: f64,
    /// Parameter half-length (t ranges over (-a, a)).
    pub half_length: f64,
    /// Transverse half-width (p ranges over (-b, b)).
    pub half_width: f64,
    pub fx: Spline2,
    pub fy: Spline2,
    pub vx: Spline2,
    pub vy: Spline2,
    pub jx: Spline2,
    pub jy: Spline2,
    /// g(df/dp, df/dp) at f(t, p).
    pub gpp: Spline2,
}

impl FermiPatch {
    pub fn f(&self, t: f64, p: f64) -> Vector2<f64> {
        Vector2::new(self.fx.eval(t, p), self.fy.eval(t, p))
    }

    /// d f / dt (the unit fan velocity).
    pub fn df_dt(&self, t: f64, p: f64) -> Vector2<f64> {
        Vector2::new(self.vx.eval(t, p), self.vy.eval(t, p))
    }

    /// d f / dp (the transverse Jacobi field).
    pub fn df_dp(&self, t: f64, p: f64) -> Vector2<f64> {
        Vector2::new(self.jx.eval(t, p), self.jy.eval(t, p))
    }

    pub fn jacobian(&self, t: f64, p: f64) -> Matrix2<f64> {
        let v = self.df_dt(t, p);
        let j = self.df_dp(t, p);
        Matrix2::new(v.x, j.x, v.y, j.y)
    }

    /// Parameter-domain rectangle covered by the splines.
    pub fn domain(&self) -> ([f64; 2], [f64; 2]) {
        (
            [self.fx.t0, self.fx.p0],
            [
                self.fx.t0 + (self.fx.nt - 1) as f64 * self.fx.dt,
                self.fx.p0 + (self.fx.np - 1) as f64 * self.fx.dp,
            ],
        )
    }

    /// Invert the fan map at a lift-frame point by damped Newton iteration.
    pub fn invert(&self, q: Vector2<f64>, seed: (f64, f64)) -> Option<(f64, f64)> {
        let (lo, hi) = self.domain();
        let mut t = seed.0.clamp(lo[0], hi[0]);
        let mut p = seed.1.clamp(lo[1], hi[1]);
        let mut res = (self.f(t, p) - q).norm();
        for _ in 0..50 {
            if res <= 1e-13 {
                break;
            }
            let jac = self.jacobian(t, p);
            let inv = jac.try_inverse()?;
            let step = inv * (q - self.f(t, p));
            let mut scale = 1.0;
            let mut ok = false;
            for _ in 0..8 {
                let tn = (t + scale * step.x).clamp(lo[0], hi[0]);
                let pn = (p + scale * step.y).clamp(lo[1], hi[1]);
                let rn = (self.f(tn, pn) - q).norm();
                if rn < res {
                    t = tn;
                    p = pn;
                    res = rn;
                    ok = true;
                    break;
                }
                scale *= 0.5;
            }
            if !ok {
                break;
            }
        }
        if res <= 1e-11 {
            Some((t, p))
        } else {
            None
        }
    }
}

/// g-orthonormal frame [normal, tangent] at a point given the unit tangent.
pub fn orthonormal_frame(
    g: &MetricField,
    q: Vector2<f64>,
    tangent_unit: Vector2<f64>,
) -> [Vector2<f64>; 2] {
    let m = g.eval_at(q);
    let raw = Vector2::new(-tangent_unit.y, tangent_unit.x);
    let along = (m * raw).dot(&tangent_unit) / (m * tangent_unit).dot(&tangent_unit);
    let proj = raw - tangent_unit * along;
    let n = (m * proj).dot(&proj).sqrt();
    [proj / n, tangent_unit]
}

/// The rotated launch direction family: w(p) and dw/dp in chart components.
fn launch_family(
    frame: &[Vector2<f64>; 2],
    rotation: f64,
    p: f64,
) -> (Vector2<f64>, Vector2<f64>) {
    let root = (1.0 - p * p).sqrt();
    let phi = Vector2::new(p, root);
    let dphi = Vector2::new(1.0, -p / root);
    let (c, s) = (rotation.cos(), rotation.sin());
    let rot = |v: Vector2<f64>| Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y);
    let z = rot(phi);
    let dz = rot(dphi);
    (
        frame[0] * z.x + frame[1] * z.y,
        frame[0] * dz.x + frame[1] * dz.y,
    )
}

/// Everything produced by one fan-line integration.
struct FanLine {
    f: Vec<Vector2<f64>>,
    v: Vec<Vector2<f64>>,
    j: Vec<Vector2<f64>>,
    gpp: Vec<f64>,
}

fn integrate_fan_line(
    g: &MetricField,
    base: Vector2<f64>,
    w: Vector2<f64>,
    dw: Vector2<f64>,
    s_values: &[f64],
) -> Result<FanLine> {
    let y0 = [base.x, base.y, w.x, w.y, 0.0, 0.0, dw.x, dw.y];
    let rhs = |_t: f64, y: &[f64; 8]| {
        let q = Vector2::new(y[0], y[1]);
        let v = Vector2::new(y[2], y[3]);
        let jf = Vector2::new(y[4], y[5]);
        let jd = Vector2::new(y[6], y[7]);
        let gamma = g.christoffel_at(q);
        let dgamma = g.d_christoffel_at(q);
        let mut out = [0.0; 8];
        out[0] = v.x;
        out[1] = v.y;
        out[2] = -v.dot(&(gamma[0] * v));
        out[3] = -v.dot(&(gamma[1] * v));
        out[4] = jd.x;
        out[5] = jd.y;
        for k in 0..2 {
            let curv = jf.x * v.dot(&(dgamma[0][k] * v)) + jf.y * v.dot(&(dgamma[1][k] * v));
            let drag = 2.0 * v.dot(&(gamma[k] * jd));
            out[6 + k] = -curv - drag;
        }
        out
    };
    let params = OdeParams {
        rtol: 1e-12,
        atol: 1e-13,
        h_max: 2e-3,
        ..OdeParams::default()
    };
    let states = integrate_to_times(&rhs, 0.0, y0, s_values, &params, &mut |_, y| {
        let q = Vector2::new(y[0], y[1]);
        let v = Vector2::new(y[2], y[3]);
        let n = g.norm_at(q, v);
        y[2] /= n;
        y[3] /= n;
    })?;
    let mut line = FanLine {
        f: Vec::with_capacity(states.len()),
        v: Vec::with_capacity(states.len()),
        j: Vec::with_capacity(states.len()),
        gpp: Vec::with_capacity(states.len()),
    };
    for y in states {
        let q = Vector2::new(y[0], y[1]);
        let v = Vector2::new(y[2], y[3]);
        let jf = Vector2::new(y[4], y[5]);
        line.f.push(q);
        line.v.push(v);
        line.j.push(jf);
        line.gpp.push(g.inner_at(q, jf, jf));
    }
    Ok(line)
}

/// Build a Fermi patch along `seg` centered at parameter `t0`, from the base
/// point gamma(t0 - offset).
///
/// Preconditions validated here: the base point is not conjugate to any
/// point of the covered arc (`ConjugateBasepoint`), the map is injective
/// with Jacobian bounded away from zero (`InjectivityFailure`), the center
/// line reproduces the geodesic, and the t-slices are g-orthogonal to the
/// t-curves.
#[allow(clippy::too_many_arguments)]
pub fn build_fermi_patch(
    g: &MetricField,
    seg: &GeodesicSegment,
    t0: f64,
    offset: f64,
    half_length: f64,
    half_width: f64,
    rotation: f64,
    grid: &FanGrid,
) -> Result<FermiPatch> {
    let (a, b, t_off) = (half_length, half_width, offset);
    assert!(a > 0.0 && b > 0.0 && b < 0.9);
    if t_off <= a {
        return Err(GeoError::InvalidInput(format!(
            "offset {t_off} must exceed the half-length {a}"
        )));
    }
    if t0 - t_off < -1e-12 {
        return Err(GeoError::InvalidInput(format!(
            "base parameter t0 - offset = {} is before the segment start",
            t0 - t_off
        )));
    }

    // Nonconjugacy of the base point along the covered arc.
    let scan = conjugacy_scan(g, seg, (t0 - t_off).max(0.0), t0 + a + 2.0 * grid.dt)?;
    if let Some(z) = scan.zeros.first() {
        return Err(GeoError::ConjugateBasepoint { t0, t: *z });
    }

    let base_state = seg.state_at(g, t0 - t_off)?;
    let frame = orthonormal_frame(g, base_state.q, base_state.v);

    // Node layout: t in [-a - 2 dt, a + 2 dt], p symmetric with odd count.
    let nt = (2.0 * a / grid.dt).ceil() as usize + 5;
    let t_lo = -(grid.dt * (nt - 1) as f64) / 2.0;
    let np = if grid.np % 2 == 1 { grid.np } else { grid.np + 1 };
    let dp = 2.0 * b / (np - 1) as f64;
    let s_values: Vec<f64> = (0..nt).map(|i| t_off + t_lo + i as f64 * grid.dt).collect();
    if s_values[0] <= 1e-9 {
        return Err(GeoError::InvalidInput(
            "fan would pass through its own base point; increase offset".into(),
        ));
    }

    let lines: Vec<FanLine> = (0..np)
        .into_par_iter()
        .map(|jp| {
            let p = -b + jp as f64 * dp;
            let (w, dw) = launch_family(&frame, rotation, p);
            integrate_fan_line(g, base_state.q, w, dw, &s_values)
        })
        .collect::<Result<Vec<_>>>()?;

    // Assemble value grids (row-major in t).
    let grid_of = |pick: &dyn Fn(&FanLine, usize) -> f64| -> Vec<f64> {
        let mut vals = vec![0.0; nt * np];
        for (jp, line) in lines.iter().enumerate() {
            for it in 0..nt {
                vals[it * np + jp] = pick(line, it);
            }
        }
        vals
    };
    let fit = |vals: Vec<f64>| Spline2::fit(t_lo, grid.dt, nt, -b, dp, np, &vals);
    let patch = FermiPatch {
        metric_id: g.metric_id(),
        base_point: base_state.q,
        frame,
        rotation,
        offset: t_off,
        half_length: a,
        half_width: b,
        fx: fit(grid_of(&|l, i| l.f[i].x)),
        fy: fit(grid_of(&|l, i| l.f[i].y)),
        vx: fit(grid_of(&|l, i| l.v[i].x)),
        vy: fit(grid_of(&|l, i| l.v[i].y)),
        jx: fit(grid_of(&|l, i| l.j[i].x)),
        jy: fit(grid_of(&|l, i| l.j[i].y)),
        gpp: fit(grid_of(&|l, i| l.gpp[i])),
    };

    validate_patch(g, seg, &patch, t0, &lines, nt, np, dp)?;
    Ok(patch)
}

#[allow(clippy::too_many_arguments)]
fn validate_patch(
    g: &MetricField,
    seg: &GeodesicSegment,
    patch: &FermiPatch,
    t0: f64,
    lines: &[FanLine],
    nt: usize,
    np: usize,
    dp: f64,
) -> Result<()> {
    // Jacobian determinant bounded away from zero at all nodes.
    let mut min_det = f64::INFINITY;
    for line in lines {
        for i in 0..nt {
            let det = line.v[i].x * line.j[i].y - line.v[i].y * line.j[i].x;
            min_det = min_det.min(det.abs());
        }
    }
    if min_det < tol::TAU_JAC {
        return Err(GeoError::InjectivityFailure {
            what: format!("fan Jacobian determinant dips to {min_det:.3e}"),
        });
    }

    // Center line reproduces the geodesic.
    let mut worst: f64 = 0.0;
    let center = (np - 1) / 2;
    for i in (0..nt).step_by(4) {
        let t = patch.fx.t0 + i as f64 * patch.fx.dt;
        let s = seg.state_at(g, t0 + t)?;
        worst = worst.max((lines[center].f[i] - s.q).norm());
    }
    if worst > 1e-7 {
        return Err(GeoError::InjectivityFailure {
            what: format!("center line deviates from the geodesic by {worst:.3e}"),
        });
    }

    // Gauss-lemma orthogonality of slices against t-curves at the nodes.
    let mut worst_ortho: f64 = 0.0;
    for line in lines.iter().step_by(3) {
        for i in (0..nt).step_by(3) {
            let ip = g.inner_at(line.f[i], line.v[i], line.j[i]);
            worst_ortho = worst_ortho.max(ip.abs());
        }
    }
    if worst_ortho > 1e-6 {
        return Err(GeoError::InjectivityFailure {
            what: format!("fan slices not g-orthogonal to rays ({worst_ortho:.3e})"),
        });
    }

    // Global injectivity: distinct parameter cells may not collide in the
    // image. Points are hashed into cells sized by the largest image step.
    let stride = 3usize;
    let mut max_step: f64 = 0.0;
    for line in lines {
        for i in 1..nt {
            max_step = max_step.max((line.f[i] - line.f[i - 1]).norm());
        }
    }
    for i in 0..nt {
        for line in lines {
            if i > 0 {
                max_step = max_step.max((line.f[i] - line.f[i - 1]).norm());
            }
        }
        let _ = i;
    }
    let dp_step = dp * stride as f64;
    let _ = dp_step;
    let cell = (max_step * stride as f64).max(1e-6);
    use std::collections::HashMap;
    let mut buckets: HashMap<(i64, i64), Vec<(usize, usize)>> = HashMap::new();
    for (jp, line) in lines.iter().enumerate().step_by(stride) {
        for i in (0..nt).step_by(stride) {
            let q = line.f[i];
            let key = ((q.x / cell).floor() as i64, (q.y / cell).floor() as i64);
            buckets.entry(key).or_default().push((i, jp));
        }
    }
    for ((cx, cy), pts) in &buckets {
        let mut neighborhood: Vec<(usize, usize)> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = buckets.get(&(cx + dx, cy + dy)) {
                    neighborhood.extend_from_slice(v);
                }
            }
        }
        for &(i1, j1) in pts {
            for &(i2, j2) in &neighborhood {
                let far_in_params = i1.abs_diff(i2) > 4 * stride || j1.abs_diff(j2) > 4 * stride;
                if !far_in_params {
                    continue;
                }
                let d = (lines[j1].f[i1] - lines[j2].f[i2]).norm();
                if d < cell * 0.5 {
                    return Err(GeoError::InjectivityFailure {
                        what: format!(
                            "parameter cells ({i1},{j1}) and ({i2},{j2}) map within {d:.3e}"
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Convenience: the patch's center-line state at parameter t (from the
/// splines, not the segment).
pub fn center_state(patch: &FermiPatch, t: f64) -> (Vector2<f64>, Vector2<f64>) {
    (patch.f(t, 0.0), patch.df_dt(t, 0.0))
}

/// Seed helper for inversion: nearest of a coarse node subsample.
pub fn inversion_seed(patch: &FermiPatch, q: Vector2<f64>) -> (f64, f64) {
    let (lo, hi) = patch.domain();
    let mut best = ((lo[0] + hi[0]) / 2.0, 0.0);
    let mut best_d = f64::INFINITY;
    let steps = 24;
    for i in 0..=steps {
        for j in 0..=steps {
            let t = lo[0] + (hi[0] - lo[0]) * i as f64 / steps as f64;
            let p = lo[1] + (hi[1] - lo[1]) * j as f64 / steps as f64;
            let d = (patch.f(t, p) - q).norm_squared();
            if d < best_d {
                best_d = d;
                best = (t, p);
            }
        }
    }
    best
}

//! Jacobi fields, exponential maps and their differentials, and conjugacy
//! verdicts.
//!
//! Jacobi fields are integrated as the variational equation of the geodesic
//! flow in chart coordinates: for the system (q, v) with v' = -Gamma(v, v),
//! the linearization along a solution is
//!
//!   dJ/dt  = Jdot
//!   dJdot_k = - (d_l Gamma^k)(v, v) J_l - 2 Gamma^k(v, Jdot),
//!
//! so no curvature tensor is needed beyond first differences of the
//! Christoffel symbols. Conjugacy of a parameter pair is decided from the
//! determinant of the 2x2 propagator block mapping impulses Jdot(t_start)
//! to values J(t_end), normalized by (t_end - t_start) so that the flat
//! margin equals the parameter separation.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::chart::ChartPoint;
use crate::error::{GeoError, Result};
use crate::geodesic::GeodesicSegment;
use crate::metric::MetricField;
use crate::ode::{integrate_to_times, OdeParams};
use crate::tol;

fn joint_rhs_8(g: &MetricField, y: &[f64; 8]) -> [f64; 8] {
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
}

fn joint_rhs_12(g: &MetricField, y: &[f64; 12]) -> [f64; 12] {
    let q = Vector2::new(y[0], y[1]);
    let v = Vector2::new(y[2], y[3]);
    let gamma = g.christoffel_at(q);
    let dgamma = g.d_christoffel_at(q);
    let mut out = [0.0; 12];
    out[0] = v.x;
    out[1] = v.y;
    out[2] = -v.dot(&(gamma[0] * v));
    out[3] = -v.dot(&(gamma[1] * v));
    for block in 0..2 {
        let o = 4 + 4 * block;
        let jf = Vector2::new(y[o], y[o + 1]);
        let jd = Vector2::new(y[o + 2], y[o + 3]);
        out[o] = jd.x;
        out[o + 1] = jd.y;
        for k in 0..2 {
            let curv = jf.x * v.dot(&(dgamma[0][k] * v)) + jf.y * v.dot(&(dgamma[1][k] * v));
            let drag = 2.0 * v.dot(&(gamma[k] * jd));
            out[o + 2 + k] = -curv - drag;
        }
    }
    out
}

fn renorm_v<const N: usize>(g: &MetricField, y: &mut [f64; N]) {
    let q = Vector2::new(y[0], y[1]);
    let v = Vector2::new(y[2], y[3]);
    let n = g.norm_at(q, v);
    if n > 0.0 {
        y[2] /= n;
        y[3] /= n;
    }
}

fn params_for(dt: f64) -> OdeParams {
    OdeParams {
        h_max: dt.min(0.05),
        ..OdeParams::default()
    }
}

/// A Jacobi field along a geodesic, with its sample table and the zeros of
/// its normal component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobiSolution {
    pub metric_id: String,
    pub dt: f64,
    pub j: Vec<Vector2<f64>>,
    pub jdot: Vec<Vector2<f64>>,
    pub normal_component: Vec<f64>,
    pub normal_zeros: Vec<f64>,
}

/// Integrate the Jacobi field along `seg` with initial value `j0` and
/// initial (coordinate) derivative `jdot0`.
pub fn jacobi_field(
    g: &MetricField,
    seg: &GeodesicSegment,
    j0: Vector2<f64>,
    jdot0: Vector2<f64>,
) -> Result<JacobiSolution> {
    let s0 = seg.initial_state();
    let y0 = [
        s0.q.x, s0.q.y, s0.v.x, s0.v.y, j0.x, j0.y, jdot0.x, jdot0.y,
    ];
    let n = seg.samples.len() - 1;
    let times: Vec<f64> = (1..=n).map(|i| i as f64 * seg.dt).collect();
    let f = |_t: f64, y: &[f64; 8]| joint_rhs_8(g, y);
    let states = integrate_to_times(&f, 0.0, y0, &times, &params_for(seg.dt), &mut |_, y| {
        renorm_v(g, y)
    })?;

    let mut j = Vec::with_capacity(n + 1);
    let mut jdot = Vec::with_capacity(n + 1);
    let mut normal = Vec::with_capacity(n + 1);
    j.push(j0);
    jdot.push(jdot0);
    normal.push(normal_part(g, s0.q, s0.v, j0));
    for y in &states {
        let q = Vector2::new(y[0], y[1]);
        let v = Vector2::new(y[2], y[3]);
        let jf = Vector2::new(y[4], y[5]);
        j.push(jf);
        jdot.push(Vector2::new(y[6], y[7]));
        normal.push(normal_part(g, q, v, jf));
    }
    let mut zeros = Vec::new();
    for i in 1..normal.len() {
        if normal[i - 1] != 0.0 && normal[i - 1].signum() != normal[i].signum() {
            let t0 = (i - 1) as f64 * seg.dt;
            let frac = normal[i - 1] / (normal[i - 1] - normal[i]);
            zeros.push(t0 + frac * seg.dt);
        }
    }
    Ok(JacobiSolution {
        metric_id: g.metric_id(),
        dt: seg.dt,
        j,
        jdot,
        normal_component: normal,
        normal_zeros: zeros,
    })
}

/// Component of `j` along the metric-unit normal of `v` at `q`.
fn normal_part(g: &MetricField, q: Vector2<f64>, v: Vector2<f64>, j: Vector2<f64>) -> f64 {
    let m = g.eval_at(q);
    let perp = Vector2::new(-v.y, v.x);
    let proj = perp - v * ((m * perp).dot(&v) / (m * v).dot(&v));
    let n = (m * proj).dot(&proj).sqrt();
    if n == 0.0 {
        0.0
    } else {
        (m * (proj / n)).dot(&j)
    }
}

/// Exponential map: the endpoint of the unit-speed geodesic from `x` in the
/// direction of `w` at arc length |w|_g. Returns the lifted endpoint.
pub fn exp_map_lifted(g: &MetricField, x: &ChartPoint, w: Vector2<f64>) -> Result<Vector2<f64>> {
    let len = g.norm_at(x.rep(), w);
    if len == 0.0 {
        return Ok(x.rep());
    }
    let u = w / len;
    let y0 = [x.rep().x, x.rep().y, u.x, u.y];
    let f = |_t: f64, y: &[f64; 4]| crate::geodesic::geodesic_rhs(g, y);
    let out = integrate_to_times(&f, 0.0, y0, &[len], &params_for(1e-3), &mut |_, y| {
        crate::geodesic::renormalize_velocity(g, y)
    })?;
    Ok(Vector2::new(out[0][0], out[0][1]))
}

pub fn exp_map(g: &MetricField, x: &ChartPoint, w: Vector2<f64>) -> Result<ChartPoint> {
    Ok(ChartPoint::from_vector(exp_map_lifted(g, x, w)?))
}

/// Differential of the exponential map at `w`, as a 2x2 matrix in chart
/// coordinates. Column k is J_k(L)/L for the Jacobi field with J(0) = 0 and
/// impulse e_k. d_exp at w = 0 is the identity.
pub fn d_exp(g: &MetricField, x: &ChartPoint, w: Vector2<f64>) -> Result<Matrix2<f64>> {
    let len = g.norm_at(x.rep(), w);
    if len == 0.0 {
        return Ok(Matrix2::identity());
    }
    let u = w / len;
    let y0 = [
        x.rep().x,
        x.rep().y,
        u.x,
        u.y,
        0.0,
        0.0,
        1.0,
        0.0,
        0.0,
        0.0,
        0.0,
        1.0,
    ];
    let f = |_t: f64, y: &[f64; 12]| joint_rhs_12(g, y);
    let out = integrate_to_times(&f, 0.0, y0, &[len], &params_for(1e-3), &mut |_, y| {
        renorm_v(g, y)
    })?;
    let y = out[0];
    Ok(Matrix2::new(
        y[4] / len,
        y[8] / len,
        y[5] / len,
        y[9] / len,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConjugacyVerdict {
    Conjugate,
    Nonconjugate,
}

/// Conjugacy decision for a parameter pair along a geodesic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub t_start: f64,
    pub t_end: f64,
    pub verdict: ConjugacyVerdict,
    /// |det| of the normalized propagator block at t_end.
    pub margin: f64,
    /// Interior zeros of the normalized determinant (conjugate times).
    pub witness_times: Vec<f64>,
}

/// Scan of the normalized propagator determinant along a geodesic.
pub struct ConjugacyScan {
    pub t_start: f64,
    pub dt: f64,
    /// (t, normalized det) samples for t > t_start.
    pub dets: Vec<(f64, f64)>,
    pub zeros: Vec<f64>,
}

/// Integrate the two impulse Jacobi solutions from `t_start` and record the
/// normalized determinant up to `t_max` (which may exceed the segment
/// length; the geodesic is extended).
pub fn conjugacy_scan(
    g: &MetricField,
    seg: &GeodesicSegment,
    t_start: f64,
    t_max: f64,
) -> Result<ConjugacyScan> {
    let st = seg.state_at(g, t_start)?;
    let y0 = [
        st.q.x, st.q.y, st.v.x, st.v.y, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ];
    let dt = seg.dt.min(1e-3);
    let n = ((t_max - t_start) / dt).ceil().max(2.0) as usize;
    let dt = (t_max - t_start) / n as f64;
    let times: Vec<f64> = (1..=n).map(|i| t_start + i as f64 * dt).collect();
    let f = |_t: f64, y: &[f64; 12]| joint_rhs_12(g, y);
    let states = integrate_to_times(&f, t_start, y0, &times, &params_for(dt), &mut |_, y| {
        renorm_v(g, y)
    })?;
    let mut dets = Vec::with_capacity(n);
    for (t, y) in times.iter().zip(&states) {
        let det = y[4] * y[9] - y[5] * y[8];
        dets.push((*t, det / (t - t_start)));
    }
    let mut zeros = Vec::new();
    for i in 1..dets.len() {
        let (ta, da) = dets[i - 1];
        let (tb, db) = dets[i];
        if da != 0.0 && da.signum() != db.signum() {
            zeros.push(ta + (tb - ta) * da / (da - db));
        }
    }
    Ok(ConjugacyScan {
        t_start,
        dt,
        dets,
        zeros,
    })
}

/// Decide whether gamma(t_start) and gamma(t_end) are conjugate along `seg`.
///
/// Nonconjugate requires margin >= TAU_CONJ. A margin inside the dead band
/// with a determinant sign change bracketing t_end is Conjugate; a dead-band
/// margin without a bracketing zero is an `Inconclusive` error: the caller
/// must perturb or refine.
pub fn conjugacy(
    g: &MetricField,
    seg: &GeodesicSegment,
    t_start: f64,
    t_end: f64,
) -> Result<ConjugacyReport> {
    assert!(t_start < t_end, "need t_start < t_end");
    let probe = (4.0 * seg.dt).max(1e-3);
    let scan = conjugacy_scan(g, seg, t_start, t_end + probe)?;
    // Normalized determinant at t_end (interpolated from the scan grid).
    let det_end = interp_scan(&scan, t_end);
    let margin = det_end.abs();
    let witness: Vec<f64> = scan.zeros.iter().copied().filter(|z| *z <= t_end).collect();
    if margin >= tol::TAU_CONJ {
        return Ok(ConjugacyReport {
            t_start,
            t_end,
            verdict: ConjugacyVerdict::Nonconjugate,
            margin,
            witness_times: witness,
        });
    }
    let bracketed = scan
        .zeros
        .iter()
        .any(|z| (z - t_end).abs() <= probe);
    if bracketed {
        Ok(ConjugacyReport {
            t_start,
            t_end,
            verdict: ConjugacyVerdict::Conjugate,
            margin,
            witness_times: witness,
        })
    } else {
        Err(GeoError::Inconclusive {
            t_start,
            t_end,
            margin,
        })
    }
}

fn interp_scan(scan: &ConjugacyScan, t: f64) -> f64 {
    let mut prev = scan.dets[0];
    for &(tt, d) in &scan.dets {
        if tt >= t {
            if (tt - prev.0).abs() < 1e-15 {
                return d;
            }
            let frac = (t - prev.0) / (tt - prev.0);
            return prev.1 + frac * (d - prev.1);
        }
        prev = (tt, d);
    }
    prev.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::{integrate_geodesic, DT_SAMPLE};

    fn flat_seg(len: f64) -> (MetricField, GeodesicSegment) {
        let g = MetricField::flat();
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.1, 0.2),
            Vector2::new(0.6, 0.8),
            len,
            DT_SAMPLE,
        )
        .unwrap();
        (g, seg)
    }

    #[test]
    fn flat_jacobi_grows_linearly() {
        let (g, seg) = flat_seg(1.0);
        let perp = Vector2::new(-0.8, 0.6);
        let sol = jacobi_field(&g, &seg, Vector2::zeros(), perp).unwrap();
        for (i, j) in sol.j.iter().enumerate() {
            let t = i as f64 * seg.dt;
            assert!((j - perp * t).norm() < 1e-10, "t={t}");
        }
        assert!(sol.normal_zeros.is_empty());
    }

    #[test]
    fn zero_jacobi_field_stays_zero() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.4, 0.35);
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.1, 0.45),
            Vector2::new(1.0, 0.1),
            1.2,
            DT_SAMPLE,
        )
        .unwrap();
        let sol = jacobi_field(&g, &seg, Vector2::zeros(), Vector2::zeros()).unwrap();
        let max = sol.j.iter().map(|j| j.norm()).fold(0.0, f64::max);
        assert!(max <= 1e-10);
    }

    #[test]
    fn tangential_jacobi_field_is_the_velocity() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.3, 0.3);
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.15, 0.4),
            Vector2::new(0.9, 0.3),
            1.0,
            DT_SAMPLE,
        )
        .unwrap();
        let sol = jacobi_field(&g, &seg, seg.initial_state().v, Vector2::zeros()).unwrap();
        for (i, j) in sol.j.iter().enumerate().step_by(100) {
            let v = seg.samples[i].v;
            assert!((j - v).norm() < 1e-6, "sample {i}");
        }
    }

    #[test]
    fn jacobi_linearity() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.4, 0.35);
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.2, 0.35),
            Vector2::new(0.7, 0.7),
            1.0,
            DT_SAMPLE,
        )
        .unwrap();
        let j0 = Vector2::new(0.3, -0.1);
        let jd0 = Vector2::new(-0.2, 0.5);
        let a = 3.7;
        let sol = jacobi_field(&g, &seg, j0, jd0).unwrap();
        let scaled = jacobi_field(&g, &seg, j0 * a, jd0 * a).unwrap();
        for (x, y) in sol.j.iter().zip(&scaled.j) {
            let rel = (y - x * a).norm() / (1.0 + (x * a).norm());
            assert!(rel < 1e-9);
        }
    }

    #[test]
    fn flat_exponential_is_translation() {
        let g = MetricField::flat();
        let x = ChartPoint::new(0.3, 0.4);
        let w = Vector2::new(0.7, -1.2);
        let e = exp_map_lifted(&g, &x, w).unwrap();
        assert!((e - (x.rep() + w)).norm() < 1e-9);
        let d = d_exp(&g, &x, w).unwrap();
        assert!((d - Matrix2::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn d_exp_at_zero_is_identity() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.3, 0.3);
        let d = d_exp(&g, &ChartPoint::new(0.4, 0.4), Vector2::zeros()).unwrap();
        assert_eq!(d, Matrix2::identity());
    }

    #[test]
    fn d_exp_matches_finite_differences_on_bump_metric() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.3, 0.35);
        let x = ChartPoint::new(0.12, 0.47);
        let w = Vector2::new(0.8, 0.25);
        let d = d_exp(&g, &x, w).unwrap();
        let eps = 1e-6;
        for k in 0..2 {
            let e = if k == 0 {
                Vector2::new(eps, 0.0)
            } else {
                Vector2::new(0.0, eps)
            };
            let ep = exp_map_lifted(&g, &x, w + e).unwrap();
            let em = exp_map_lifted(&g, &x, w - e).unwrap();
            let fd = (ep - em) / (2.0 * eps);
            let col = d.column(k);
            assert!(
                (fd - col).norm() <= 1e-5,
                "column {k}: fd = {fd:?}, jacobi = {col:?}"
            );
        }
    }

    #[test]
    fn flat_segments_are_never_conjugate() {
        let (g, seg) = flat_seg(2.0);
        let rep = conjugacy(&g, &seg, 0.3, 1.7).unwrap();
        assert_eq!(rep.verdict, ConjugacyVerdict::Nonconjugate);
        assert!((rep.margin - 1.4).abs() < 1e-6);
        assert!(rep.witness_times.is_empty());
    }

    #[test]
    fn focusing_bump_produces_a_conjugate_point() {
        // Strong bump focuses the fan leaving from a point on the diameter.
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.5, 0.4);
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.02, 0.5),
            Vector2::new(1.0, 0.0),
            2.2,
            DT_SAMPLE,
        )
        .unwrap();
        let scan = conjugacy_scan(&g, &seg, 0.0, 2.2).unwrap();
        assert!(
            !scan.zeros.is_empty(),
            "expected a conjugate time along the diameter"
        );
        let t_star = scan.zeros[0];
        assert!(t_star > 0.5 && t_star < 2.1, "t* = {t_star}");
        let rep = conjugacy(&g, &seg, 0.0, t_star).unwrap();
        assert_eq!(rep.verdict, ConjugacyVerdict::Conjugate);
    }

    #[test]
    fn conjugate_zero_matches_fan_oracle() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.5, 0.4);
        let x = ChartPoint::new(0.02, 0.5);
        let seg = integrate_geodesic(&g, x, Vector2::new(1.0, 0.0), 2.2, DT_SAMPLE).unwrap();
        let scan = conjugacy_scan(&g, &seg, 0.0, 2.2).unwrap();
        let t_star = scan.zeros[0];

        // Independent oracle: spread a fan of two geodesics by +-eps in the
        // launch angle and find where their normal separation changes sign.
        let eps = tol::EPS_FAN;
        let up = integrate_geodesic(&g, x, Vector2::new(1.0, eps), 2.2, DT_SAMPLE).unwrap();
        let dn = integrate_geodesic(&g, x, Vector2::new(1.0, -eps), 2.2, DT_SAMPLE).unwrap();
        let mut crossing = None;
        let mut prev: Option<(f64, f64)> = None;
        for i in 200..up.samples.len() {
            let sep = (up.samples[i].q - dn.samples[i].q).y;
            if let Some((tp, sp)) = prev {
                if sp.signum() != sep.signum() {
                    let t = i as f64 * up.dt;
                    crossing = Some(tp + (t - tp) * sp / (sp - sep));
                    break;
                }
            }
            prev = Some((i as f64 * up.dt, sep));
        }
        let crossing = crossing.expect("fan oracle found no envelope crossing");
        assert!(
            (crossing - t_star).abs() <= 1e-3,
            "fan {crossing} vs propagator {t_star}"
        );
    }

    #[test]
    fn jacobi_matches_geodesic_fan_differences() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.3, 0.35);
        let x = ChartPoint::new(0.1, 0.42);
        let theta: f64 = 0.15;
        let seg = integrate_geodesic(
            &g,
            x,
            Vector2::new(theta.cos(), theta.sin()),
            1.4,
            DT_SAMPLE,
        )
        .unwrap();
        // d(launch direction)/d(theta) for the metric-normalized direction.
        let c = Vector2::new(theta.cos(), theta.sin());
        let cp = Vector2::new(-theta.sin(), theta.cos());
        let m = g.eval_at(x.rep());
        let nc = (m * c).dot(&c).sqrt();
        let dn = (m * c).dot(&cp) / nc;
        let du = cp / nc - c * (dn / (nc * nc));
        let sol = jacobi_field(&g, &seg, Vector2::zeros(), du).unwrap();

        let eps = tol::EPS_FAN;
        let up = integrate_geodesic(
            &g,
            x,
            Vector2::new((theta + eps).cos(), (theta + eps).sin()),
            1.4,
            DT_SAMPLE,
        )
        .unwrap();
        let dnseg = integrate_geodesic(
            &g,
            x,
            Vector2::new((theta - eps).cos(), (theta - eps).sin()),
            1.4,
            DT_SAMPLE,
        )
        .unwrap();
        for i in (0..seg.samples.len()).step_by(140) {
            let fd = (up.samples[i].q - dnseg.samples[i].q) / (2.0 * eps);
            assert!(
                (fd - sol.j[i]).norm() <= 1e-4,
                "sample {i}: fd {fd:?} vs jacobi {:?}",
                sol.j[i]
            );
        }
    }
}

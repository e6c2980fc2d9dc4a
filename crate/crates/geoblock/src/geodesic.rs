//! Geodesic integration on the torus chart.
//!
//! Trajectories are integrated in lifted (unwrapped) coordinates with an
//! adaptive Dormand-Prince pair on the first-order system (q, v), with the
//! velocity renormalized to unit metric norm after every accepted step. The
//! lift makes the universal-cover picture available for free: shooting solves
//! and self-intersection analysis reduce mod Z^2 only when comparing points.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::chart::{torus_dist, ChartPoint};
use crate::error::Result;
#[cfg(test)]
use crate::tol;
use crate::metric::MetricField;
use crate::ode::{integrate_to_times, OdeParams};

/// Default sample spacing for stored trajectories.
pub const DT_SAMPLE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Lifted position (not reduced mod Z^2).
    pub q: Vector2<f64>,
    /// Velocity in chart components, unit length in the metric.
    pub v: Vector2<f64>,
}

/// An arc-length-parametrized geodesic with a uniform sample table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicSegment {
    pub metric_id: String,
    pub start: ChartPoint,
    pub v0: Vector2<f64>,
    pub length: f64,
    pub dt: f64,
    pub samples: Vec<State>,
}

pub(crate) fn geodesic_rhs(g: &MetricField, y: &[f64; 4]) -> [f64; 4] {
    let q = Vector2::new(y[0], y[1]);
    let v = Vector2::new(y[2], y[3]);
    let gamma = g.christoffel_at(q);
    let a0 = -(v.dot(&(gamma[0] * v)));
    let a1 = -(v.dot(&(gamma[1] * v)));
    [y[2], y[3], a0, a1]
}

pub(crate) fn renormalize_velocity(g: &MetricField, y: &mut [f64; 4]) {
    let q = Vector2::new(y[0], y[1]);
    let v = Vector2::new(y[2], y[3]);
    let n = g.norm_at(q, v);
    if n > 0.0 {
        y[2] /= n;
        y[3] /= n;
    }
}

fn ode_params_for(dt: f64) -> OdeParams {
    OdeParams {
        h_max: dt.min(0.05),
        ..OdeParams::default()
    }
}

/// Integrate the unit-speed geodesic from (x, v) for arc length `length`,
/// sampling uniformly at (approximately) `dt_hint`.
///
/// `v` is normalized to unit metric norm before integration.
pub fn integrate_geodesic(
    g: &MetricField,
    x: ChartPoint,
    v: Vector2<f64>,
    length: f64,
    dt_hint: f64,
) -> Result<GeodesicSegment> {
    assert!(length > 0.0, "geodesic length must be positive");
    let v0 = v / g.norm_at(x.rep(), v);
    let n_steps = (length / dt_hint).ceil().max(1.0) as usize;
    let dt = length / n_steps as f64;
    let times: Vec<f64> = (1..=n_steps).map(|i| i as f64 * dt).collect();
    let y0 = [x.rep().x, x.rep().y, v0.x, v0.y];
    let f = |_t: f64, y: &[f64; 4]| geodesic_rhs(g, y);
    let states = integrate_to_times(&f, 0.0, y0, &times, &ode_params_for(dt), &mut |_, y| {
        renormalize_velocity(g, y)
    })?;
    let mut samples = Vec::with_capacity(n_steps + 1);
    samples.push(State {
        q: x.rep(),
        v: v0,
    });
    for y in states {
        samples.push(State {
            q: Vector2::new(y[0], y[1]),
            v: Vector2::new(y[2], y[3]),
        });
    }
    Ok(GeodesicSegment {
        metric_id: g.metric_id(),
        start: x,
        v0,
        length,
        dt,
        samples,
    })
}

impl GeodesicSegment {
    pub fn end_state(&self) -> State {
        *self.samples.last().expect("segment has samples")
    }

    pub fn endpoint(&self) -> ChartPoint {
        ChartPoint::from_vector(self.end_state().q)
    }

    pub fn initial_state(&self) -> State {
        self.samples[0]
    }

    /// Sample time of index i.
    pub fn time_of(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// State at an arbitrary parameter, re-integrated from the nearest stored
    /// sample at or before `t`.
    pub fn state_at(&self, g: &MetricField, t: f64) -> Result<State> {
        let t = t.clamp(0.0, self.length);
        let i = ((t / self.dt).floor() as usize).min(self.samples.len() - 1);
        let base = self.samples[i];
        let t0 = self.time_of(i);
        if (t - t0).abs() < 1e-14 {
            return Ok(base);
        }
        let y0 = [base.q.x, base.q.y, base.v.x, base.v.y];
        let f = |_s: f64, y: &[f64; 4]| geodesic_rhs(g, y);
        let out = integrate_to_times(&f, t0, y0, &[t], &ode_params_for(self.dt), &mut |_, y| {
            renormalize_velocity(g, y)
        })?;
        Ok(State {
            q: Vector2::new(out[0][0], out[0][1]),
            v: Vector2::new(out[0][2], out[0][3]),
        })
    }

    /// The same geodesic traversed backwards (a fresh integration from the
    /// endpoint with reversed velocity).
    pub fn time_reversed(&self, g: &MetricField) -> Result<GeodesicSegment> {
        let end = self.end_state();
        integrate_geodesic(
            g,
            ChartPoint::from_vector(end.q),
            -end.v,
            self.length,
            self.dt,
        )
    }

    /// Re-integrate the same initial data at a different sample spacing.
    pub fn resampled(&self, g: &MetricField, dt: f64) -> Result<GeodesicSegment> {
        integrate_geodesic(g, self.start, self.v0, self.length, dt)
    }

    /// Max deviation of the sampled metric speed from 1.
    pub fn unit_speed_deviation(&self, g: &MetricField) -> f64 {
        self.samples
            .iter()
            .map(|s| (g.norm_at(s.q, s.v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Max geodesic-equation residual over interior samples, using central
    /// differences of the stored velocities as the acceleration estimate.
    pub fn residual_table(&self, g: &MetricField) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.samples.len() - 1 {
            let sm = &self.samples[i - 1];
            let s0 = &self.samples[i];
            let sp = &self.samples[i + 1];
            let acc = (sp.v - sm.v) / (2.0 * self.dt);
            let gamma = g.christoffel_at(s0.q);
            let r = Vector2::new(
                acc.x + s0.v.dot(&(gamma[0] * s0.v)),
                acc.y + s0.v.dot(&(gamma[1] * s0.v)),
            );
            worst = worst.max(r.norm());
        }
        worst
    }

    /// Minimum torus distance from the trace to a point, with parameter.
    ///
    /// Every local minimum of the sampled distance within one sample-travel
    /// of the global sampled minimum is refined by ternary descent, so dips
    /// narrower than the sample spacing cannot hide. `speed_bound` is an
    /// upper bound on the chart speed of the curve.
    pub fn closest_approach_bounded(
        &self,
        g: &MetricField,
        p: &ChartPoint,
        speed_bound: f64,
    ) -> Result<(f64, f64)> {
        let n = self.samples.len();
        let d: Vec<f64> = self
            .samples
            .iter()
            .map(|s| torus_dist(s.q, p.rep()))
            .collect();
        let sample_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let threshold = sample_min + 2.0 * self.dt * speed_bound;
        let mut best = (0.0, f64::INFINITY);
        for i in 0..n {
            let is_local_min = (i == 0 || d[i] <= d[i - 1]) && (i == n - 1 || d[i] <= d[i + 1]);
            if !is_local_min || d[i] > threshold {
                continue;
            }
            let mut lo = (self.time_of(i) - self.dt).max(0.0);
            let mut hi = (self.time_of(i) + self.dt).min(self.length);
            let mut local = (self.time_of(i), d[i]);
            for _ in 0..45 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                let d1 = torus_dist(self.state_at(g, m1)?.q, p.rep());
                let d2 = torus_dist(self.state_at(g, m2)?.q, p.rep());
                if d1 < d2 {
                    hi = m2;
                    if d1 < local.1 {
                        local = (m1, d1);
                    }
                } else {
                    lo = m1;
                    if d2 < local.1 {
                        local = (m2, d2);
                    }
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            if local.1 < best.1 {
                best = local;
            }
        }
        Ok(best)
    }

    /// `closest_approach_bounded` with a chart-speed bound that covers every
    /// metric in the test suite.
    pub fn closest_approach(&self, g: &MetricField, p: &ChartPoint) -> Result<(f64, f64)> {
        self.closest_approach_bounded(g, p, 2.0)
    }

    /// Initial Euclidean angle of the velocity (for deduplication keys).
    pub fn initial_angle(&self) -> f64 {
        self.v0.y.atan2(self.v0.x)
    }
}

/// Verify the endpoint is reproducible under sample-step halving.
pub fn step_halving_endpoint_error(g: &MetricField, seg: &GeodesicSegment) -> Result<f64> {
    let fine = seg.resampled(g, seg.dt / 2.0)?;
    Ok((seg.end_state().q - fine.end_state().q).norm())
}

/// Pointwise geodesic-equation residual of an arbitrary curve under a metric.
///
/// `curve` must return lifted position and velocity at a parameter; the
/// acceleration is formed by central differences of the velocity at spacing
/// `delta`, so the curve must be smooth across each probed stencil.
pub fn curve_residual_under(
    metric: &MetricField,
    curve: &dyn Fn(f64) -> (Vector2<f64>, Vector2<f64>),
    ts: &[f64],
    delta: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for &t in ts {
        let (q, v) = curve(t);
        let (_, vp) = curve(t + delta);
        let (_, vm) = curve(t - delta);
        let acc = (vp - vm) / (2.0 * delta);
        let gamma = metric.christoffel_at(q);
        let r = Vector2::new(
            acc.x + v.dot(&(gamma[0] * v)),
            acc.y + v.dot(&(gamma[1] * v)),
        );
        worst = worst.max(r.norm());
    }
    worst
}

/// Result of a self-intersection scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfIntersections {
    /// Interior parameter pairs (t, s) with t < s where the trace meets
    /// itself within the tolerance.
    pub pairs: Vec<(f64, f64)>,
    /// Whether start and end coincide on the torus (closed geodesic).
    pub closed: bool,
}

/// Find all interior self-intersections of a sampled segment to within `tol`.
///
/// Candidate sample pairs are clustered and each cluster is refined by
/// ternary descent on the squared torus distance.
pub fn self_intersections(
    g: &MetricField,
    seg: &GeodesicSegment,
    tol: f64,
) -> Result<SelfIntersections> {
    let n = seg.samples.len();
    let speed = 1.5; // conservative chart-speed bound for gap exclusion
    let gap = ((4.0 * tol / speed) / seg.dt).ceil() as usize + 4;
    let coarse = 3.0 * tol + 2.0 * seg.dt * speed;

    let mut cand: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + gap)..n {
            // Skip pairs adjacent to the endpoint coincidence of closed curves.
            if i == 0 && j >= n - gap {
                continue;
            }
            if torus_dist(seg.samples[i].q, seg.samples[j].q) <= coarse {
                cand.push((i, j));
            }
        }
    }
    // Cluster neighboring candidates.
    cand.sort_unstable();
    let mut clusters: Vec<Vec<(usize, usize)>> = Vec::new();
    for c in cand {
        match clusters.iter_mut().find(|cl| {
            cl.iter()
                .any(|&(i, j)| c.0.abs_diff(i) <= 3 && c.1.abs_diff(j) <= 3)
        }) {
            Some(cl) => cl.push(c),
            None => clusters.push(vec![c]),
        }
    }

    let mut pairs = Vec::new();
    for cl in clusters {
        let (bi, bj) = *cl
            .iter()
            .min_by(|&&(i1, j1), &&(i2, j2)| {
                let da = torus_dist(seg.samples[i1].q, seg.samples[j1].q);
                let db = torus_dist(seg.samples[i2].q, seg.samples[j2].q);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let (mut ti, mut tj) = (seg.time_of(bi), seg.time_of(bj));
        // Coordinate ternary descent on each parameter.
        let mut w = seg.dt * 2.0;
        for _ in 0..60 {
            let d_at = |a: f64, b: f64| -> f64 {
                let qa = seg.state_at(g, a).map(|s| s.q).unwrap_or(Vector2::zeros());
                let qb = seg.state_at(g, b).map(|s| s.q).unwrap_or(Vector2::zeros());
                torus_dist(qa, qb)
            };
            let mut improved = false;
            for &(da, db) in &[
                (w, 0.0),
                (-w, 0.0),
                (0.0, w),
                (0.0, -w),
                (w, w),
                (-w, -w),
                (w, -w),
                (-w, w),
            ] {
                let na = (ti + da).clamp(0.0, seg.length);
                let nb = (tj + db).clamp(0.0, seg.length);
                if d_at(na, nb) < d_at(ti, tj) {
                    ti = na;
                    tj = nb;
                    improved = true;
                }
            }
            if !improved {
                w *= 0.5;
            }
            if w < 1e-11 {
                break;
            }
        }
        let qa = seg.state_at(g, ti)?.q;
        let qb = seg.state_at(g, tj)?.q;
        if torus_dist(qa, qb) <= tol && tj - ti > 4.0 * tol && ti > tol && tj < seg.length - tol {
            pairs.push((ti, tj));
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pairs.dedup_by(|a, b| (a.0 - b.0).abs() < 10.0 * tol && (a.1 - b.1).abs() < 10.0 * tol);

    let closed = torus_dist(seg.samples[0].q, seg.end_state().q) <= tol;
    Ok(SelfIntersections { pairs, closed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricField;

    #[test]
    fn flat_horizontal_wrap() {
        let g = MetricField::flat();
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            1.0,
            DT_SAMPLE,
        )
        .unwrap();
        let end = seg.end_state();
        assert!((end.q - Vector2::new(1.0, 0.0)).norm() < 1e-10);
        assert!(seg.endpoint().dist(&ChartPoint::new(0.0, 0.0)) < 1e-10);
        assert!((end.v - Vector2::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn flat_diagonal_hits_lattice_point() {
        let g = MetricField::flat();
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.0, 0.0),
            Vector2::new(3.0 / 5.0, 4.0 / 5.0),
            5.0,
            DT_SAMPLE,
        )
        .unwrap();
        let end = seg.end_state();
        assert!((end.q - Vector2::new(3.0, 4.0)).norm() < 1e-9);
        assert!(seg.endpoint().dist(&ChartPoint::new(0.0, 0.0)) < 1e-9);
    }

    #[test]
    fn unit_speed_is_conserved_on_bump_metric() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.5, 0.4);
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.02, 0.5),
            Vector2::new(1.0, 0.0),
            2.0,
            DT_SAMPLE,
        )
        .unwrap();
        assert!(seg.unit_speed_deviation(&g) <= 2.0 * tol::TAU_UNIT);
    }

    #[test]
    fn endpoint_reproducible_under_step_halving() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.3, 0.35);
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.1, 0.35),
            Vector2::new(0.8, 0.6),
            1.5,
            DT_SAMPLE,
        )
        .unwrap();
        let err = step_halving_endpoint_error(&g, &seg).unwrap();
        assert!(err <= tol::TAU_INT * seg.length, "err = {err:.3e}");
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let g = MetricField::conformal_bump(ChartPoint::new(0.4, 0.6), 0.4, 0.3);
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.8, 0.1),
            Vector2::new(-0.6, 0.8),
            1.3,
            DT_SAMPLE,
        )
        .unwrap();
        let back = seg.time_reversed(&g).unwrap();
        assert!(back.endpoint().dist(&seg.start) < 1e-7);
    }

    #[test]
    fn residual_of_integrated_segment_is_small() {
        // The velocity-difference acceleration estimate carries a dt^2/6
        // truncation term, so checking the 1e-6 bound needs a fine table.
        let g = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.2, 0.35);
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.1, 0.4),
            Vector2::new(1.0, 0.2),
            0.6,
            2e-5,
        )
        .unwrap();
        assert!(seg.residual_table(&g) < 1e-6);
    }

    #[test]
    fn embedded_flat_arc_has_no_self_intersections() {
        let g = MetricField::flat();
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            0.9,
            DT_SAMPLE,
        )
        .unwrap();
        let si = self_intersections(&g, &seg, 1e-4).unwrap();
        assert!(si.pairs.is_empty());
        assert!(!si.closed);
    }

    #[test]
    fn closed_flat_geodesic_is_flagged() {
        let g = MetricField::flat();
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            1.0,
            DT_SAMPLE,
        )
        .unwrap();
        let si = self_intersections(&g, &seg, 1e-4).unwrap();
        assert!(si.pairs.is_empty());
        assert!(si.closed);
    }

    #[test]
    fn rational_direction_closed_geodesic_is_simple() {
        // Primitive lattice directions give embedded closed geodesics: the
        // lift translates are parallel lines, so no transversal crossings.
        let g = MetricField::flat();
        let seg = integrate_geodesic(
            &g,
            ChartPoint::new(0.0, 0.0),
            Vector2::new(2.0, 1.0) / 5.0f64.sqrt(),
            5.0f64.sqrt(),
            DT_SAMPLE,
        )
        .unwrap();
        let si = self_intersections(&g, &seg, 1e-4).unwrap();
        assert!(si.closed);
        assert!(
            si.pairs.is_empty(),
            "primitive closed flat geodesics are embedded; got {:?}",
            si.pairs
        );
    }
}

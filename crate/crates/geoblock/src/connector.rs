//! The two-point geodesic problem: enumerate all geodesics from x to y of
//! length at most L_max.
//!
//! The solver works in the universal cover. A sweep of launch angles is
//! integrated in lifted coordinates; for each lattice lift of the target,
//! close approaches of swept trajectories seed a Newton polish on the
//! (angle, length) pair, with the Jacobian assembled from the velocity and
//! the angle Jacobi field. Every accepted root carries a topological-degree
//! certificate: the winding number of the image of a small circle in the
//! launch-velocity plane around the target, accumulated as exact integer
//! quadrant crossings. Roots with degree zero are reported as degenerate
//! rather than silently dropped.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{lattice_lifts_within, ChartPoint};
use crate::error::{GeoError, Result};
use crate::geodesic::{integrate_geodesic, GeodesicSegment, DT_SAMPLE};
use crate::jacobi::exp_map_lifted;
use crate::metric::MetricField;
use crate::ode::{integrate_to_times, OdeParams};
use crate::tol;

/// One certified connecting geodesic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Connection {
    pub theta0: f64,
    pub length: f64,
    /// Torus distance from the integrated endpoint to y.
    pub endpoint_error: f64,
    /// Winding number of the boundary-circle image around y.
    pub degree: i32,
    /// The lattice lift of y this root converged to.
    pub target_lift: [f64; 2],
    #[serde(skip)]
    pub segment: Option<GeodesicSegment>,
}

/// All geodesics from x to y up to a length bound, with certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectionSet {
    pub metric_id: String,
    pub x: ChartPoint,
    pub y: ChartPoint,
    pub l_max: f64,
    pub connections: Vec<Connection>,
    /// Roots that converged but failed degree certification.
    pub degenerate: Vec<Connection>,
}

impl ConnectionSet {
    pub fn len(&self) -> usize {
        self.connections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.connections.is_empty()
    }

    /// True if (theta, length) duplicates an existing member within TAU_DUP.
    pub fn contains_root(&self, theta: f64, length: f64) -> bool {
        self.connections
            .iter()
            .any(|c| angle_close(c.theta0, theta, tol::TAU_DUP) && (c.length - length).abs() <= tol::TAU_DUP)
    }
}

pub fn angle_close(a: f64, b: f64, tau: f64) -> bool {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d <= tau || d >= std::f64::consts::TAU - tau
}

/// Exact enumeration of flat-torus geodesics from x to y via lattice lifts.
/// Segments are synthesized in closed form, independent of the integrator.
pub fn flat_torus_oracle(x: &ChartPoint, y: &ChartPoint, l_max: f64) -> ConnectionSet {
    let g = MetricField::flat();
    let mut connections = Vec::new();
    for lift in lattice_lifts_within(x.rep(), y.rep(), l_max) {
        let d = lift - x.rep();
        let len = d.norm();
        if len < 1e-12 {
            continue; // x = y: the zero lift is not a geodesic
        }
        let dir = d / len;
        let n = (len / DT_SAMPLE).ceil() as usize;
        let dt = len / n as f64;
        let samples = (0..=n)
            .map(|i| crate::geodesic::State {
                q: x.rep() + dir * (i as f64 * dt),
                v: dir,
            })
            .collect();
        connections.push(Connection {
            theta0: dir.y.atan2(dir.x).rem_euclid(std::f64::consts::TAU),
            length: len,
            endpoint_error: 0.0,
            degree: 1,
            target_lift: [lift.x, lift.y],
            segment: Some(GeodesicSegment {
                metric_id: g.metric_id(),
                start: *x,
                v0: dir,
                length: len,
                dt,
                samples,
            }),
        });
    }
    sort_connections(&mut connections);
    ConnectionSet {
        metric_id: g.metric_id(),
        x: *x,
        y: *y,
        l_max,
        connections,
        degenerate: Vec::new(),
    }
}

fn sort_connections(v: &mut [Connection]) {
    v.sort_by(|a, b| {
        a.length
            .partial_cmp(&b.length)
            .unwrap()
            .then(a.theta0.partial_cmp(&b.theta0).unwrap())
    });
}

/// Lifted trajectory of a launch angle, sampled at `dt`.
struct Shot {
    theta: f64,
    points: Vec<Vector2<f64>>,
}

fn shoot(g: &MetricField, x: &ChartPoint, theta: f64, l_max: f64, dt: f64) -> Result<Shot> {
    let v = g.unit_from_angle(x.rep(), theta);
    let seg = integrate_geodesic(g, *x, v, l_max, dt)?;
    Ok(Shot {
        theta,
        points: seg.samples.iter().map(|s| s.q).collect(),
    })
}

/// Joint geodesic + angle-derivative integration: returns the lifted
/// endpoint, its derivative with respect to theta, and the velocity.
fn shoot_with_jacobian(
    g: &MetricField,
    x: &ChartPoint,
    theta: f64,
    length: f64,
) -> Result<(Vector2<f64>, Vector2<f64>, Vector2<f64>)> {
    let c = Vector2::new(theta.cos(), theta.sin());
    let cp = Vector2::new(-theta.sin(), theta.cos());
    let m = g.eval_at(x.rep());
    let nc = (m * c).dot(&c).sqrt();
    let dn = (m * c).dot(&cp) / nc;
    let u = c / nc;
    let du = cp / nc - c * (dn / (nc * nc));

    let y0 = [
        x.rep().x,
        x.rep().y,
        u.x,
        u.y,
        0.0,
        0.0,
        du.x,
        du.y,
    ];
    let f = |_t: f64, y: &[f64; 8]| jacobi_rhs8(g, y);
    let params = OdeParams {
        h_max: 0.02,
        ..OdeParams::default()
    };
    let out = integrate_to_times(&f, 0.0, y0, &[length], &params, &mut |_, y| {
        let q = Vector2::new(y[0], y[1]);
        let v = Vector2::new(y[2], y[3]);
        let n = g.norm_at(q, v);
        y[2] /= n;
        y[3] /= n;
    })?;
    let s = out[0];
    Ok((
        Vector2::new(s[0], s[1]),
        Vector2::new(s[4], s[5]),
        Vector2::new(s[2], s[3]),
    ))
}

fn jacobi_rhs8(g: &MetricField, y: &[f64; 8]) -> [f64; 8] {
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

/// Winding number of the image of a radius-`rho` circle around `w_star` in
/// launch-velocity space, mapped through the lifted exponential, about the
/// target. Quadrant transitions are accumulated as exact integers.
pub fn degree_certificate(
    g: &MetricField,
    x: &ChartPoint,
    w_star: Vector2<f64>,
    target: Vector2<f64>,
    rho: f64,
) -> Result<i32> {
    const SAMPLES: usize = 64;
    let mut quad_prev: Option<i32> = None;
    let mut total = 0i64;
    let mut first_quad = 0i32;
    for i in 0..SAMPLES {
        let phi = i as f64 / SAMPLES as f64 * std::f64::consts::TAU;
        let w = w_star + Vector2::new(phi.cos(), phi.sin()) * rho;
        let img = exp_map_lifted(g, x, w)? - target;
        let quad = quadrant(img);
        if let Some(prev) = quad_prev {
            total += quad_step(prev, quad, img)? as i64;
        } else {
            first_quad = quad;
        }
        quad_prev = Some(quad);
    }
    // Close the loop back to the first sample.
    if let Some(prev) = quad_prev {
        total += quad_step(prev, first_quad, Vector2::new(1.0, 0.0))? as i64;
    }
    debug_assert_eq!(total % 4, 0, "quadrant crossings must close up");
    Ok((total / 4) as i32)
}

fn quadrant(v: Vector2<f64>) -> i32 {
    match (v.x >= 0.0, v.y >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Signed quadrant transition: +1 for one counterclockwise quadrant, -1 for
/// clockwise, 0 for none. A two-quadrant jump means the sampling is too
/// coarse relative to the loop radius.
fn quad_step(prev: i32, next: i32, at: Vector2<f64>) -> Result<i32> {
    let d = (next - prev).rem_euclid(4);
    match d {
        0 => Ok(0),
        1 => Ok(1),
        3 => Ok(-1),
        _ => Err(GeoError::DegenerateRoot {
            theta: at.y.atan2(at.x),
            length: at.norm(),
        }),
    }
}

/// Parameters controlling the shooting solve.
#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub angular_resolution: usize,
    pub max_refinement_rounds: usize,
    /// Close-approach threshold (chart units) that seeds a Newton polish.
    pub attempt_distance: f64,
    pub newton_iterations: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            angular_resolution: 720,
            max_refinement_rounds: 3,
            attempt_distance: 0.08,
            newton_iterations: 40,
        }
    }
}

/// Enumerate geodesics from x to y with length <= l_max by a certified
/// shooting sweep.
pub fn find_geodesics(
    g: &MetricField,
    x: &ChartPoint,
    y: &ChartPoint,
    l_max: f64,
    config: &SweepConfig,
) -> Result<ConnectionSet> {
    assert!(l_max > 0.0);
    let speed_bound = g.chart_speed_bound(32);
    let cover_radius = l_max * speed_bound;
    let targets: Vec<Vector2<f64>> = lattice_lifts_within(x.rep(), y.rep(), cover_radius)
        .into_iter()
        .collect();
    if targets.is_empty() {
        return Ok(ConnectionSet {
            metric_id: g.metric_id(),
            x: *x,
            y: *y,
            l_max,
            connections: Vec::new(),
            degenerate: Vec::new(),
        });
    }

    let same_point = x.dist(y) < 1e-12;
    let mut resolution = config.angular_resolution;
    for round in 0..=config.max_refinement_rounds {
        let sweep_dt = 2e-3;
        let shots: Vec<Shot> = (0..resolution)
            .into_par_iter()
            .map(|i| {
                let theta = i as f64 / resolution as f64 * std::f64::consts::TAU;
                shoot(g, x, theta, l_max, sweep_dt)
            })
            .collect::<Result<Vec<_>>>()?;

        // Validate that adjacent shot endpoints move slowly enough for the
        // close-approach detector to be reliable.
        let mut max_gap: f64 = 0.0;
        for i in 0..resolution {
            let a = &shots[i];
            let b = &shots[(i + 1) % resolution];
            let gap = a
                .points
                .iter()
                .zip(&b.points)
                .map(|(p, q)| (p - q).norm())
                .fold(0.0, f64::max);
            max_gap = max_gap.max(gap);
        }
        if max_gap > config.attempt_distance.min(0.25) && round < config.max_refinement_rounds {
            resolution *= 2;
            continue;
        }
        if max_gap > 0.5 {
            return Err(GeoError::ResolutionTooCoarse {
                rounds: round,
                resolution,
            });
        }

        return polish_and_certify(g, x, y, l_max, &shots, &targets, same_point, config, sweep_dt);
    }
    Err(GeoError::ResolutionTooCoarse {
        rounds: config.max_refinement_rounds,
        resolution,
    })
}

#[allow(clippy::too_many_arguments)]
fn polish_and_certify(
    g: &MetricField,
    x: &ChartPoint,
    y: &ChartPoint,
    l_max: f64,
    shots: &[Shot],
    targets: &[Vector2<f64>],
    same_point: bool,
    config: &SweepConfig,
    sweep_dt: f64,
) -> Result<ConnectionSet> {
    // Seed list: per target, local minima over theta of the closest approach.
    let mut seeds: Vec<(f64, f64, Vector2<f64>)> = Vec::new();
    for &target in targets {
        // For a self-target the trajectory starts on it; skip an initial
        // window so only genuine returns register.
        let skip = if (target - x.rep()).norm() < 1e-9 {
            (0.2 / sweep_dt).ceil() as usize
        } else {
            0
        };
        let approach: Vec<(f64, f64)> = shots
            .iter()
            .map(|s| {
                let mut best = (0.0f64, f64::INFINITY);
                for (i, p) in s.points.iter().enumerate().skip(skip) {
                    let d = (p - target).norm();
                    if d < best.1 {
                        best = (i as f64 * sweep_dt, d);
                    }
                }
                best
            })
            .collect();
        let n = shots.len();
        for i in 0..n {
            let d = approach[i].1;
            let prev = approach[(i + n - 1) % n].1;
            let next = approach[(i + 1) % n].1;
            if d <= prev && d <= next && d < config.attempt_distance {
                let t_seed = approach[i].0.max(1e-3);
                if same_point && (target - x.rep()).norm() < 1e-9 && t_seed < 0.1 {
                    continue; // trivial zero-length root at the basepoint
                }
                seeds.push((shots[i].theta, t_seed, target));
            }
        }
    }

    // Newton polish on (theta, L) for each seed, in parallel.
    let polished: Vec<Option<(f64, f64, Vector2<f64>)>> = seeds
        .par_iter()
        .map(|&(theta0, l0, target)| {
            let mut theta = theta0;
            let mut len = l0;
            for _ in 0..config.newton_iterations {
                if len <= 1e-6 || len > l_max + 0.5 {
                    return None;
                }
                let (end, dtheta, vel) = match shoot_with_jacobian(g, x, theta, len) {
                    Ok(t) => t,
                    Err(_) => return None,
                };
                let miss = end - target;
                if miss.norm() < 1e-12 {
                    break;
                }
                let jac = Matrix2::from_columns(&[dtheta, vel]);
                let inv = jac.try_inverse()?;
                let step = inv * miss;
                let damp = if step.norm() > 0.3 { 0.3 / step.norm() } else { 1.0 };
                theta -= damp * step.x;
                len -= damp * step.y;
            }
            let (end, _, _) = shoot_with_jacobian(g, x, theta, len).ok()?;
            if (end - target).norm() <= tol::TAU_HIT * 0.5 && len <= l_max + 1e-9 {
                Some((theta.rem_euclid(std::f64::consts::TAU), len, target))
            } else {
                None
            }
        })
        .collect();

    // Deduplicate.
    let mut roots: Vec<(f64, f64, Vector2<f64>)> = Vec::new();
    for cand in polished.into_iter().flatten() {
        let dup = roots.iter().any(|r| {
            angle_close(r.0, cand.0, tol::TAU_DUP) && (r.1 - cand.1).abs() <= tol::TAU_DUP
        });
        if !dup {
            roots.push(cand);
        }
    }

    // Reversal filtering is NOT applied here: distinct roots are distinct
    // geodesics even when one is another reversed (x = y loops come in
    // direction pairs, matching the lattice enumeration).

    let mut connections = Vec::new();
    let mut degenerate = Vec::new();
    for (theta, len, target) in roots {
        let v = g.unit_from_angle(x.rep(), theta);
        let seg = integrate_geodesic(g, *x, v, len, DT_SAMPLE)?;
        let endpoint_error = seg.endpoint().dist(y);
        let w_star = v * len;
        let rho = (1e-3f64).min(len * 0.25);
        let degree = degree_certificate(g, x, w_star, target, rho).unwrap_or(0);
        let conn = Connection {
            theta0: theta,
            length: len,
            endpoint_error,
            degree,
            target_lift: [target.x, target.y],
            segment: Some(seg),
        };
        if degree != 0 && endpoint_error <= tol::TAU_HIT {
            connections.push(conn);
        } else {
            degenerate.push(conn);
        }
    }
    sort_connections(&mut connections);
    sort_connections(&mut degenerate);
    Ok(ConnectionSet {
        metric_id: g.metric_id(),
        x: *x,
        y: *y,
        l_max,
        connections,
        degenerate,
    })
}

/// Length schedule for the incremental search of the next new geodesic.
#[derive(Debug, Clone)]
pub struct LengthSchedule(pub Vec<f64>);

impl Default for LengthSchedule {
    fn default() -> Self {
        // L doubling, six rounds, from a desk-scale start.
        LengthSchedule((0..6).map(|i| 1.5 * 2f64.powi(i)).collect())
    }
}

/// Find a geodesic from x to y distinct from every member of `known` (and,
/// when x = y, distinct from every member reversed).
pub fn next_new_geodesic(
    g: &MetricField,
    x: &ChartPoint,
    y: &ChartPoint,
    known: &ConnectionSet,
    schedule: &LengthSchedule,
    config: &SweepConfig,
) -> Result<GeodesicSegment> {
    let same_point = x.dist(y) < 1e-12;
    for &l_max in &schedule.0 {
        let set = find_geodesics(g, x, y, l_max, config)?;
        for c in &set.connections {
            if known.contains_root(c.theta0, c.length) {
                continue;
            }
            if same_point {
                // Reject candidates equal to a known member reversed: the
                // reversal of a loop launches along -(end velocity).
                let seg = c.segment.as_ref().expect("segment present");
                let back = -seg.end_state().v;
                let back_theta = back.y.atan2(back.x);
                let reversed_known = known.connections.iter().any(|k| {
                    angle_close(k.theta0, back_theta, 1e-4) && (k.length - c.length).abs() <= 1e-4
                });
                if reversed_known {
                    continue;
                }
            }
            return Ok(c.segment.clone().expect("segment present"));
        }
    }
    Err(GeoError::BudgetExhausted {
        what: format!(
            "length schedule ended at {:?} with no new geodesic",
            schedule.0.last()
        ),
    })
}

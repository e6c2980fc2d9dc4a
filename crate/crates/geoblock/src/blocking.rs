//! Blocking verdicts, the four S-conditions, and insecurity certificates.
//!
//! A family of 2m+1 geodesics from x to y in which no three members share an
//! interior point defeats every m-point blocking set: each of the 2m+1
//! members would need an interior passage point in the set, so some point
//! would serve three members, contradicting the no-three-concurrent
//! condition. Certificates package such a family with the margins that were
//! verified, and the verifier re-derives everything from the metric.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

use crate::chart::{torus_dist, ChartPoint};
use crate::error::{GeoError, Result};
use crate::geodesic::{integrate_geodesic, GeodesicSegment, DT_SAMPLE};
use crate::jacobi::{conjugacy, ConjugacyVerdict};
use crate::metric::MetricField;
use crate::tol;

/// A blocking query: does the finite set P intercept every family member?
#[derive(Debug, Clone)]
pub struct BlockingQuery<'a> {
    pub x: ChartPoint,
    pub y: ChartPoint,
    pub points: Vec<ChartPoint>,
    pub family: &'a [GeodesicSegment],
    pub eps_block: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockingVerdict {
    pub blocked: bool,
    /// Index of the first family member no point intercepts, if any.
    pub first_unblocked: Option<usize>,
    /// That member's minimum interior distance to the point set.
    pub witness_distance: Option<f64>,
    /// Per-member minimum interior distance to the point set.
    pub member_distances: Vec<f64>,
}

/// Decide whether every family member passes within `eps_block` of some
/// point of P at an interior parameter.
pub fn is_blocking_set(g: &MetricField, q: &BlockingQuery) -> Result<BlockingVerdict> {
    assert!(!q.family.is_empty(), "family must be nonempty");
    for p in &q.points {
        let d = p.dist(&q.x).min(p.dist(&q.y));
        if d <= tol::TAU_PT {
            return Err(GeoError::PointTooCloseToEndpoints {
                x: p.coords.x,
                y: p.coords.y,
                dist: d,
                min: tol::TAU_PT,
            });
        }
    }
    assert!(q.eps_block > 0.0, "eps_block must be positive");
    let speed = g.chart_speed_bound(32);

    let mut member_distances = Vec::with_capacity(q.family.len());
    let mut first_unblocked = None;
    let mut witness_distance = None;
    for (i, seg) in q.family.iter().enumerate() {
        let mut min_d = f64::INFINITY;
        for p in &q.points {
            let (t, d) = seg.closest_approach_bounded(g, p, speed)?;
            if t > seg.dt && t < seg.length - seg.dt {
                min_d = min_d.min(d);
            }
        }
        member_distances.push(min_d);
        if min_d > q.eps_block && first_unblocked.is_none() {
            first_unblocked = Some(i);
            witness_distance = Some(min_d);
        }
    }
    Ok(BlockingVerdict {
        blocked: first_unblocked.is_none(),
        first_unblocked,
        witness_distance,
        member_distances,
    })
}

/// An interior intersection of two curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Intersection {
    pub t_a: f64,
    pub t_b: f64,
    pub point: ChartPoint,
    pub distance: f64,
}

/// All points where the traces of `a` and `b` meet within `eps`, with the
/// parameters refined by coordinate descent on the torus distance.
pub fn pairwise_intersections(
    g: &MetricField,
    a: &GeodesicSegment,
    b: &GeodesicSegment,
    eps: f64,
) -> Result<Vec<Intersection>> {
    let speed = 1.6;
    let stride = ((a.samples.len().min(b.samples.len()) / 900) + 1).max(1);
    let coarse = 2.0 * stride as f64 * a.dt.max(b.dt) * speed + 3.0 * eps;

    let mut cand: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < a.samples.len() {
        let mut j = 0;
        while j < b.samples.len() {
            if torus_dist(a.samples[i].q, b.samples[j].q) <= coarse {
                cand.push((i, j));
            }
            j += stride;
        }
        i += stride;
    }
    let window = 3 * stride;
    let mut clusters: Vec<Vec<(usize, usize)>> = Vec::new();
    for c in cand {
        match clusters.iter_mut().find(|cl| {
            cl.iter()
                .any(|&(i, j)| c.0.abs_diff(i) <= window && c.1.abs_diff(j) <= window)
        }) {
            Some(cl) => cl.push(c),
            None => clusters.push(vec![c]),
        }
    }

    let mut out: Vec<Intersection> = Vec::new();
    for cl in clusters {
        let (bi, bj) = *cl
            .iter()
            .min_by(|&&(i1, j1), &&(i2, j2)| {
                let da = torus_dist(a.samples[i1].q, b.samples[j1].q);
                let db = torus_dist(a.samples[i2].q, b.samples[j2].q);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let mut ta = a.time_of(bi);
        let mut tb = b.time_of(bj);
        let mut w = stride as f64 * a.dt.max(b.dt) * 2.0;
        let mut best_d = torus_dist(a.samples[bi].q, b.samples[bj].q);
        for _ in 0..70 {
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
                let na = (ta + da).clamp(0.0, a.length);
                let nb = (tb + db).clamp(0.0, b.length);
                let d = torus_dist(a.state_at(g, na)?.q, b.state_at(g, nb)?.q);
                if d < best_d {
                    ta = na;
                    tb = nb;
                    best_d = d;
                    improved = true;
                }
            }
            if !improved {
                w *= 0.5;
            }
            if w < 1e-12 {
                break;
            }
        }
        if best_d <= eps {
            let point = ChartPoint::from_vector(a.state_at(g, ta)?.q);
            let dup = out.iter().any(|z| {
                (z.t_a - ta).abs() < 20.0 * eps && (z.t_b - tb).abs() < 20.0 * eps
            });
            if !dup {
                out.push(Intersection {
                    t_a: ta,
                    t_b: tb,
                    point,
                    distance: best_d,
                });
            }
        }
    }
    out.sort_by(|p, q| p.t_a.partial_cmp(&q.t_a).unwrap());
    Ok(out)
}

/// Verdict for one S-condition with its margin and, on failure, a witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub pass: bool,
    pub margin: f64,
    pub witness: Option<String>,
}

impl ConditionVerdict {
    fn pass(margin: f64) -> Self {
        Self {
            pass: true,
            margin,
            witness: None,
        }
    }

    fn fail(margin: f64, witness: String) -> Self {
        Self {
            pass: false,
            margin,
            witness: Some(witness),
        }
    }
}

/// Report for conditions (i)-(iv) of the family statement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SConditionReport {
    pub tangents_pairwise_independent: ConditionVerdict,
    pub interior_avoids_endpoints: ConditionVerdict,
    pub no_three_concurrent: ConditionVerdict,
    /// Present when the conjugacy check was requested.
    pub endpoints_nonconjugate: Option<ConditionVerdict>,
    /// Interior pairwise intersection table (indices are family positions).
    pub intersections: Vec<(usize, usize, Intersection)>,
}

impl SConditionReport {
    pub fn all_pass(&self) -> bool {
        self.tangents_pairwise_independent.pass
            && self.interior_avoids_endpoints.pass
            && self.no_three_concurrent.pass
            && self.endpoints_nonconjugate.as_ref().map_or(true, |v| v.pass)
    }
}

/// Options for the S-condition checker.
#[derive(Debug, Clone, Copy)]
pub struct SCheckOptions {
    pub eps_int: f64,
    pub eps_avoid: f64,
    /// Run the conjugacy check (iv).
    pub check_conjugacy: bool,
}

impl Default for SCheckOptions {
    fn default() -> Self {
        Self {
            eps_int: tol::EPS_INT,
            eps_avoid: tol::EPS_AVOID,
            check_conjugacy: true,
        }
    }
}

/// Endpoint-exit trimming: first sample index clear of the x-ball and last
/// sample index clear of the y-ball, at radius 2 * eps_avoid.
fn trim_indices(seg: &GeodesicSegment, x: &ChartPoint, y: &ChartPoint, eps: f64) -> (usize, usize) {
    let r = 2.0 * eps;
    let n = seg.samples.len();
    let mut head = n - 1;
    for (i, s) in seg.samples.iter().enumerate() {
        if torus_dist(s.q, x.rep()) > r {
            head = i;
            break;
        }
    }
    let mut tail = 0;
    for i in (0..n).rev() {
        if torus_dist(seg.samples[i].q, y.rep()) > r {
            tail = i;
            break;
        }
    }
    (head, tail)
}

/// Check conditions (i)-(iv) for a family of geodesics from x to y.
pub fn check_s_conditions(
    g: &MetricField,
    x: &ChartPoint,
    y: &ChartPoint,
    family: &[GeodesicSegment],
    opts: &SCheckOptions,
) -> Result<SConditionReport> {
    for (i, seg) in family.iter().enumerate() {
        let err = seg.endpoint().dist(y);
        if err > tol::TAU_HIT {
            return Err(GeoError::InvalidInput(format!(
                "family member {i} misses y by {err:.3e}"
            )));
        }
        if seg.start.dist(x) > tol::TAU_HIT {
            return Err(GeoError::InvalidInput(format!(
                "family member {i} does not start at x"
            )));
        }
    }
    let same_point = x.dist(y) < 1e-12;

    // (i) pairwise linear independence of unit tangents.
    let mut tangents: Vec<(String, Vector2<f64>)> = Vec::new();
    for (i, seg) in family.iter().enumerate() {
        tangents.push((format!("gamma_{i}'(0)"), seg.initial_state().v));
        if same_point {
            tangents.push((format!("gamma_{i}'(L)"), seg.end_state().v));
        }
    }
    let mut terminal: Vec<(String, Vector2<f64>)> = Vec::new();
    if !same_point {
        for (i, seg) in family.iter().enumerate() {
            terminal.push((format!("gamma_{i}'(L)"), seg.end_state().v));
        }
    }
    let mut cond_i = ConditionVerdict::pass(f64::INFINITY);
    for list in [&tangents, &terminal] {
        for a in 0..list.len() {
            for b in (a + 1)..list.len() {
                // Skip the pair (gamma_i'(0), gamma_i'(L)) comparison with
                // itself is impossible here since labels differ per entry.
                let det = list[a].1.x * list[b].1.y - list[a].1.y * list[b].1.x;
                let m = det.abs();
                if m < cond_i.margin {
                    cond_i.margin = m;
                }
                if m < tol::TAU_LI && cond_i.pass {
                    cond_i = ConditionVerdict::fail(
                        m,
                        format!("{} and {} are parallel (|det| = {m:.3e})", list[a].0, list[b].0),
                    );
                }
            }
        }
    }
    if family.len() == 1 && !same_point {
        cond_i = ConditionVerdict::pass(f64::INFINITY);
    }

    // (ii) interiors avoid x and y.
    let mut cond_ii = ConditionVerdict::pass(f64::INFINITY);
    for (idx, seg) in family.iter().enumerate() {
        let (head, tail) = trim_indices(seg, x, y, opts.eps_avoid);
        let mut min_d = f64::INFINITY;
        // x-proximity anywhere after departure; y-proximity anywhere before
        // final approach.
        for (i, s) in seg.samples.iter().enumerate() {
            if i >= head {
                let dx = torus_dist(s.q, x.rep());
                let dxr = if same_point && i > tail { f64::INFINITY } else { dx };
                min_d = min_d.min(dxr);
            }
            if i <= tail {
                min_d = min_d.min(torus_dist(s.q, y.rep()));
            }
        }
        if min_d < cond_ii.margin {
            cond_ii.margin = min_d;
        }
        if min_d <= opts.eps_avoid && cond_ii.pass {
            cond_ii = ConditionVerdict::fail(
                min_d,
                format!("gamma_{idx} re-enters an endpoint ball (distance {min_d:.3e})"),
            );
        }
    }

    // (iii) no three members concurrent off the endpoints.
    let n = family.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .collect();
    let tables: Vec<(usize, usize, Vec<Intersection>)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            pairwise_intersections(g, &family[a], &family[b], opts.eps_int)
                .map(|v| (a, b, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut intersections = Vec::new();
    let mut cond_iii = ConditionVerdict::pass(f64::INFINITY);
    for (a, b, table) in &tables {
        let (head_a, tail_a) = trim_indices(&family[*a], x, y, opts.eps_avoid);
        let (head_b, tail_b) = trim_indices(&family[*b], x, y, opts.eps_avoid);
        for z in table {
            let interior_a = z.t_a >= family[*a].time_of(head_a) && z.t_a <= family[*a].time_of(tail_a);
            let interior_b = z.t_b >= family[*b].time_of(head_b) && z.t_b <= family[*b].time_of(tail_b);
            if !(interior_a && interior_b) {
                continue;
            }
            intersections.push((*a, *b, z.clone()));
            for (c, third) in family.iter().enumerate() {
                if c == *a || c == *b {
                    continue;
                }
                let (_, d) = third.closest_approach(g, &z.point)?;
                if d < cond_iii.margin {
                    cond_iii.margin = d;
                }
                if d <= opts.eps_int && cond_iii.pass {
                    cond_iii = ConditionVerdict::fail(
                        d,
                        format!(
                            "gamma_{c} passes within {d:.3e} of the gamma_{a}/gamma_{b} intersection at ({:.6}, {:.6})",
                            z.point.coords.x, z.point.coords.y
                        ),
                    );
                }
            }
        }
    }

    // (iv) endpoints nonconjugate along each member.
    let endpoints_nonconjugate = if opts.check_conjugacy {
        let mut verdict = ConditionVerdict::pass(f64::INFINITY);
        for (i, seg) in family.iter().enumerate() {
            let rep = conjugacy(g, seg, 0.0, seg.length)?;
            if rep.margin < verdict.margin {
                verdict.margin = rep.margin;
            }
            if rep.verdict == ConjugacyVerdict::Conjugate && verdict.pass {
                verdict = ConditionVerdict::fail(
                    rep.margin,
                    format!("x is conjugate to y along gamma_{i}"),
                );
            }
        }
        Some(verdict)
    } else {
        None
    };

    Ok(SConditionReport {
        tangents_pairwise_independent: cond_i,
        interior_avoids_endpoints: cond_ii,
        no_three_concurrent: cond_iii,
        endpoints_nonconjugate,
        intersections,
    })
}

/// Compact description of a certified geodesic: launch angle and length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertGeodesic {
    pub theta0: f64,
    pub length: f64,
}

/// A verifiable witness that no m-point set blocks (x, y).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InsecurityCertificate {
    pub schema_version: u32,
    pub metric_id: String,
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub m: usize,
    pub geodesics: Vec<CertGeodesic>,
    pub margins: BTreeMap<String, f64>,
    pub hash: String,
}

impl InsecurityCertificate {
    pub fn payload_hash(&self) -> String {
        let mut c = self.clone();
        c.hash = String::new();
        let bytes = serde_json::to_vec(&c).expect("certificate serialization");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn seal(mut self) -> Self {
        self.hash = self.payload_hash();
        self
    }
}

/// Build a certificate from a verified family (margins taken from `report`).
pub fn build_certificate(
    g: &MetricField,
    x: &ChartPoint,
    y: &ChartPoint,
    m: usize,
    family: &[GeodesicSegment],
    report: &SConditionReport,
) -> InsecurityCertificate {
    let mut margins = BTreeMap::new();
    margins.insert(
        "tangents_pairwise_independent".into(),
        report.tangents_pairwise_independent.margin,
    );
    margins.insert(
        "interior_avoids_endpoints".into(),
        report.interior_avoids_endpoints.margin,
    );
    margins.insert(
        "no_three_concurrent".into(),
        report.no_three_concurrent.margin,
    );
    if let Some(v) = &report.endpoints_nonconjugate {
        margins.insert("endpoints_nonconjugate".into(), v.margin);
    }
    InsecurityCertificate {
        schema_version: 1,
        metric_id: g.metric_id(),
        x: [x.coords.x, x.coords.y],
        y: [y.coords.x, y.coords.y],
        m,
        geodesics: family
            .iter()
            .map(|s| CertGeodesic {
                theta0: s.initial_angle().rem_euclid(std::f64::consts::TAU),
                length: s.length,
            })
            .collect(),
        margins,
        hash: String::new(),
    }
    .seal()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub ok: bool,
    pub reasoning: Vec<String>,
}

/// Re-derive and re-check everything a certificate claims.
pub fn verify_certificate(
    cert: &InsecurityCertificate,
    g: &MetricField,
) -> Result<VerificationOutcome> {
    let mut reasoning = Vec::new();
    let actual = g.metric_id();
    if actual != cert.metric_id {
        return Err(GeoError::StaleMetric {
            expected: cert.metric_id.clone(),
            actual,
        });
    }
    if cert.payload_hash() != cert.hash {
        reasoning.push("payload hash mismatch: certificate was altered".into());
        return Ok(VerificationOutcome {
            ok: false,
            reasoning,
        });
    }
    if cert.geodesics.len() != 2 * cert.m + 1 {
        reasoning.push(format!(
            "family size {} is not 2m+1 = {}",
            cert.geodesics.len(),
            2 * cert.m + 1
        ));
        return Ok(VerificationOutcome {
            ok: false,
            reasoning,
        });
    }
    reasoning.push(format!("family size {} = 2m+1 confirmed", cert.geodesics.len()));

    let x = ChartPoint::new(cert.x[0], cert.x[1]);
    let y = ChartPoint::new(cert.y[0], cert.y[1]);
    let mut family = Vec::new();
    for (i, cg) in cert.geodesics.iter().enumerate() {
        let v = g.unit_from_angle(x.rep(), cg.theta0);
        let seg = integrate_geodesic(g, x, v, cg.length, DT_SAMPLE)?;
        let err = seg.endpoint().dist(&y);
        if err > tol::TAU_HIT {
            reasoning.push(format!(
                "geodesic {i} misses y by {err:.3e} under the named metric"
            ));
            return Ok(VerificationOutcome {
                ok: false,
                reasoning,
            });
        }
        let drift = seg.unit_speed_deviation(g);
        if drift > tol::TAU_UNIT * (1.0 + seg.length) {
            reasoning.push(format!("geodesic {i} violates unit speed ({drift:.3e})"));
            return Ok(VerificationOutcome {
                ok: false,
                reasoning,
            });
        }
        family.push(seg);
    }
    reasoning.push("all geodesics re-integrated and endpoint-checked".into());

    let opts = SCheckOptions {
        check_conjugacy: false,
        ..Default::default()
    };
    let report = check_s_conditions(g, &x, &y, &family, &opts)?;
    for (name, v) in [
        ("(i) tangents", &report.tangents_pairwise_independent),
        ("(ii) interior avoidance", &report.interior_avoids_endpoints),
        ("(iii) no-three-concurrent", &report.no_three_concurrent),
    ] {
        if v.pass {
            reasoning.push(format!("{name}: pass with margin {:.3e}", v.margin));
        } else {
            reasoning.push(format!(
                "{name}: FAIL ({})",
                v.witness.clone().unwrap_or_default()
            ));
        }
    }
    let ok = report.tangents_pairwise_independent.pass
        && report.interior_avoids_endpoints.pass
        && report.no_three_concurrent.pass;
    if ok {
        reasoning.push(format!(
            "no set of {} points away from the endpoints can block all {} geodesics: \
             each would need an interior passage point, forcing three members through \
             one point, contradicting (iii)",
            cert.m,
            2 * cert.m + 1
        ));
    }
    Ok(VerificationOutcome { ok, reasoning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connector::flat_torus_oracle;

    fn flat_family(l_max: f64) -> (MetricField, ChartPoint, ChartPoint, Vec<GeodesicSegment>) {
        let g = MetricField::flat();
        let x = ChartPoint::new(0.0, 0.0);
        let y = ChartPoint::new(0.5, 0.5);
        let set = flat_torus_oracle(&x, &y, l_max);
        let family = set
            .connections
            .into_iter()
            .map(|c| c.segment.unwrap())
            .collect();
        (g, x, y, family)
    }

    fn midpoint_classes() -> Vec<ChartPoint> {
        vec![
            ChartPoint::new(0.25, 0.25),
            ChartPoint::new(0.75, 0.25),
            ChartPoint::new(0.25, 0.75),
            ChartPoint::new(0.75, 0.75),
        ]
    }

    #[test]
    fn midpoints_block_the_twelve() {
        let (g, x, y, family) = flat_family(2.0);
        assert_eq!(family.len(), 12);
        let q = BlockingQuery {
            x,
            y,
            points: midpoint_classes(),
            family: &family,
            eps_block: tol::EPS_BLOCK,
        };
        let v = is_blocking_set(&g, &q).unwrap();
        assert!(v.blocked, "verdict: {v:?}");
    }

    #[test]
    fn removing_one_midpoint_unblocks_a_short_geodesic() {
        let (g, x, y, family) = flat_family(2.0);
        let mut pts = midpoint_classes();
        pts.retain(|p| p.dist(&ChartPoint::new(0.75, 0.75)) > 1e-9);
        let q = BlockingQuery {
            x,
            y,
            points: pts,
            family: &family,
            eps_block: tol::EPS_BLOCK,
        };
        let v = is_blocking_set(&g, &q).unwrap();
        assert!(!v.blocked);
        let idx = v.first_unblocked.unwrap();
        // The witness is one of the four shortest: the lift (-0.5, -0.5),
        // whose midpoint class is (0.75, 0.75).
        assert!((family[idx].length - 0.5f64.sqrt()).abs() < 1e-9);
        let mid = family[idx].samples[family[idx].samples.len() / 2].q;
        assert!(torus_dist(mid, Vector2::new(0.75, 0.75)) < 1e-6);
    }

    #[test]
    fn empty_point_set_blocks_nothing() {
        let (g, x, y, family) = flat_family(1.0);
        let q = BlockingQuery {
            x,
            y,
            points: vec![],
            family: &family,
            eps_block: tol::EPS_BLOCK,
        };
        let v = is_blocking_set(&g, &q).unwrap();
        assert!(!v.blocked);
        assert_eq!(v.first_unblocked, Some(0));
    }

    #[test]
    fn point_too_close_to_endpoint_is_rejected() {
        let (g, x, y, family) = flat_family(1.0);
        let q = BlockingQuery {
            x,
            y,
            points: vec![ChartPoint::new(0.5 + 1e-8, 0.5)],
            family: &family,
            eps_block: tol::EPS_BLOCK,
        };
        assert!(matches!(
            is_blocking_set(&g, &q),
            Err(GeoError::PointTooCloseToEndpoints { .. })
        ));
    }

    #[test]
    fn blocking_is_monotone_under_adding_points() {
        let (g, x, y, family) = flat_family(2.0);
        let mut pts = midpoint_classes();
        let q = BlockingQuery {
            x,
            y,
            points: pts.clone(),
            family: &family,
            eps_block: tol::EPS_BLOCK,
        };
        assert!(is_blocking_set(&g, &q).unwrap().blocked);
        pts.push(ChartPoint::new(0.1, 0.9));
        let q2 = BlockingQuery {
            x,
            y,
            points: pts,
            family: &family,
            eps_block: tol::EPS_BLOCK,
        };
        assert!(is_blocking_set(&g, &q2).unwrap().blocked);
    }

    #[test]
    fn twelve_family_fails_condition_i_with_antiparallel_witness() {
        let (g, x, y, family) = flat_family(2.0);
        let report = check_s_conditions(
            &g,
            &x,
            &y,
            &family,
            &SCheckOptions {
                check_conjugacy: false,
                ..Default::default()
            },
        )
        .unwrap();
        let v = &report.tangents_pairwise_independent;
        assert!(!v.pass);
        assert!(v.margin < tol::TAU_LI);
    }

    #[test]
    fn curated_four_family_passes_all_conditions() {
        let g = MetricField::flat();
        let x = ChartPoint::new(0.0, 0.0);
        let y = ChartPoint::new(0.5, 0.5);
        let lifts = [
            Vector2::new(0.5, 0.5),
            Vector2::new(0.5, -0.5),
            Vector2::new(1.5, 0.5),
            Vector2::new(0.5, 1.5),
        ];
        let family: Vec<GeodesicSegment> = lifts
            .iter()
            .map(|l| {
                integrate_geodesic(&g, x, l / l.norm(), l.norm(), DT_SAMPLE).unwrap()
            })
            .collect();
        let report =
            check_s_conditions(&g, &x, &y, &family, &SCheckOptions::default()).unwrap();
        assert!(report.all_pass(), "{report:#?}");
        let iv = report.endpoints_nonconjugate.unwrap();
        // Flat margins equal the member length; the minimum is the shortest.
        assert!((iv.margin - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn intersection_finder_sees_the_crossing_chords() {
        // Chords to the lifts (1.5, 0.5) and (0.5, 1.5) cross mod Z^2 at
        // (1/8, 3/8) and (3/8, 1/8): solving 3w = z + j, w = 3z + k gives
        // 8z integral with w, z in [0, 1/2].
        let g = MetricField::flat();
        let x = ChartPoint::new(0.0, 0.0);
        let la = Vector2::new(1.5, 0.5);
        let lb = Vector2::new(0.5, 1.5);
        let a = integrate_geodesic(&g, x, la / la.norm(), la.norm(), DT_SAMPLE).unwrap();
        let b = integrate_geodesic(&g, x, lb / lb.norm(), lb.norm(), DT_SAMPLE).unwrap();
        let zs = pairwise_intersections(&g, &a, &b, tol::EPS_INT).unwrap();
        for expect in [Vector2::new(0.125, 0.375), Vector2::new(0.375, 0.125)] {
            assert!(
                zs.iter()
                    .any(|z| torus_dist(z.point.rep(), expect) < 1e-6),
                "missing crossing {expect:?} in {zs:?}"
            );
        }
    }

    #[test]
    fn certificate_round_trip_and_corruption() {
        let g = MetricField::flat();
        let x = ChartPoint::new(0.0, 0.0);
        let y = ChartPoint::new(0.5, 0.5);
        let lifts = [
            Vector2::new(0.5, 0.5),
            Vector2::new(0.5, -0.5),
            Vector2::new(1.5, 0.5),
        ];
        let family: Vec<GeodesicSegment> = lifts
            .iter()
            .map(|l| integrate_geodesic(&g, x, l / l.norm(), l.norm(), DT_SAMPLE).unwrap())
            .collect();
        let report =
            check_s_conditions(&g, &x, &y, &family, &SCheckOptions::default()).unwrap();
        assert!(report.all_pass());
        let cert = build_certificate(&g, &x, &y, 1, &family, &report);
        let out = verify_certificate(&cert, &g).unwrap();
        assert!(out.ok, "{:?}", out.reasoning);

        // Corruption: replace a member with the antiparallel duplicate of
        // the first (lift (-0.5,-0.5) reverses the (0.5,0.5) tangent).
        let mut bad = cert.clone();
        let anti: Vector2<f64> = Vector2::new(-0.5, -0.5);
        bad.geodesics[1] = CertGeodesic {
            theta0: anti.y.atan2(anti.x).rem_euclid(std::f64::consts::TAU),
            length: anti.norm(),
        };
        let bad = bad.seal();
        let out = verify_certificate(&bad, &g).unwrap();
        assert!(!out.ok);
        assert!(out
            .reasoning
            .iter()
            .any(|r| r.contains("(i) tangents") && r.contains("FAIL")));

        // Tampering without resealing is caught by the hash.
        let mut tampered = cert.clone();
        tampered.m = 2;
        let out = verify_certificate(&tampered, &g).unwrap();
        assert!(!out.ok);
        assert!(out.reasoning.iter().any(|r| r.contains("hash")));

        // Wrong metric triggers StaleMetric.
        let other = MetricField::conformal_bump(ChartPoint::new(0.5, 0.5), 0.1, 0.3);
        assert!(matches!(
            verify_certificate(&cert, &other),
            Err(GeoError::StaleMetric { .. })
        ));
    }

    #[test]
    fn single_lasso_member_is_vacuously_fine() {
        // One geodesic with distinct endpoint tangents at x = y: (i) is a
        // single-pair check, (iii) vacuous.
        let g = MetricField::flat();
        let x = ChartPoint::new(0.25, 0.25);
        let seg = integrate_geodesic(&g, x, Vector2::new(1.0, 0.0), 1.0, DT_SAMPLE).unwrap();
        // A straight closed loop has equal tangents, so (i) must fail...
        let report = check_s_conditions(
            &g,
            &x,
            &x,
            std::slice::from_ref(&seg),
            &SCheckOptions {
                check_conjugacy: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!report.tangents_pairwise_independent.pass);
        assert!(report.no_three_concurrent.pass); // vacuous
    }

    #[test]
    fn verification_is_permutation_invariant() {
        let g = MetricField::flat();
        let x = ChartPoint::new(0.0, 0.0);
        let y = ChartPoint::new(0.5, 0.5);
        let lifts = [
            Vector2::new(0.5, 0.5),
            Vector2::new(0.5, -0.5),
            Vector2::new(1.5, 0.5),
        ];
        let family: Vec<GeodesicSegment> = lifts
            .iter()
            .map(|l| integrate_geodesic(&g, x, l / l.norm(), l.norm(), DT_SAMPLE).unwrap())
            .collect();
        let report =
            check_s_conditions(&g, &x, &y, &family, &SCheckOptions::default()).unwrap();
        let mut cert = build_certificate(&g, &x, &y, 1, &family, &report);
        cert.geodesics.reverse();
        let cert = cert.seal();
        let out = verify_certificate(&cert, &g).unwrap();
        assert!(out.ok);
    }
}

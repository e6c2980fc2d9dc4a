//! Compactly supported metric-replacement patches.
//!
//! A patch stores the blended-frame map f-hat of a foliation merge as spline
//! surfaces over (t, p), together with the transverse frame component beta and
//! the cutoff profiles. The replacement metric at a chart point q is
//! reconstructed from the frame identities
//!
//!   hat-g(df/dt, df/dt) = 1,   hat-g(df/dt, df/dp) = 0,
//!   hat-g(df/dp, df/dp) = beta(t, p),
//!
//! pushed to chart coordinates through the Jacobian of f-hat. Outside the
//! cutoff (and wherever the 1-d profile h sits on a plateau, where the
//! replacement provably equals the base metric) the evaluator returns the
//! base metric through the identical code path, bit for bit.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::chart::wrap_vec;
use crate::smooth::{plateau, rising_edge};
use crate::spline::Spline2;

/// Axis-aligned rectangle in the patch's lift frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn contains(&self, v: Vector2<f64>) -> bool {
        v.x >= self.lo[0] && v.x <= self.hi[0] && v.y >= self.lo[1] && v.y <= self.hi[1]
    }

    pub fn inflate(&self, m: f64) -> Rect {
        Rect {
            lo: [self.lo[0] - m, self.lo[1] - m],
            hi: [self.hi[0] + m, self.hi[1] + m],
        }
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.lo[0] <= other.hi[0]
            && other.lo[0] <= self.hi[0]
            && self.lo[1] <= other.hi[1]
            && other.lo[1] <= self.hi[1]
    }

    pub fn from_points<'a>(pts: impl Iterator<Item = &'a Vector2<f64>>) -> Rect {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in pts {
            lo[0] = lo[0].min(p.x);
            lo[1] = lo[1].min(p.y);
            hi[0] = hi[0].max(p.x);
            hi[1] = hi[1].max(p.y);
        }
        Rect { lo, hi }
    }
}

/// Which construction produced a patch, with its parameters and the
/// validation margins recorded at build time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchAudit {
    pub construction: String,
    pub params: BTreeMap<String, f64>,
    pub margins: BTreeMap<String, f64>,
}

/// Interior rectangle widths used by the cutoffs. `a* ` bound the
/// longitudinal profile, `b*` the transverse one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CutoffWidths {
    /// Half-width of the h transition: h = 0 for t <= -a5, 1 for t >= a5.
    pub a5: f64,
    /// Spatial cutoff plateau: H = 1 on |t| <= a4, 0 for |t| >= a3.
    pub a4: f64,
    pub a3: f64,
    /// Transverse plateau: 1 on |p| <= b4, 0 for |p| >= b3.
    pub b4: f64,
    pub b3: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurgeryPatch {
    pub audit: PatchAudit,
    /// Conservative bounding box of the support, in the patch lift frame.
    pub bbox: Rect,
    pub fhat_x: Spline2,
    pub fhat_y: Spline2,
    /// Longitudinal frame field d fhat/dt, stored from the construction
    /// rather than differenced, for interpolation accuracy.
    pub vhat_x: Spline2,
    pub vhat_y: Spline2,
    /// Transverse frame field d fhat/dp.
    pub jhat_x: Spline2,
    pub jhat_y: Spline2,
    pub beta: Spline2,
    pub cutoff: CutoffWidths,
    /// Diagnostic scaling of the blended difference; 1.0 is the constructed
    /// metric. Values != 1 break the merged-geodesic property and are only
    /// for distance-scaling experiments.
    pub amplitude: f64,
    /// Newton seeds: parameter nodes and their images, subsampled.
    seeds: Vec<([f64; 2], [f64; 2])>,
}

/// Result of locating a chart point inside a patch.
pub struct PatchLocation {
    pub t: f64,
    pub p: f64,
    /// Residual of the Newton inversion.
    pub residual: f64,
}

/// The spline surfaces defining a patch map and its frame.
#[derive(Debug, Clone)]
pub struct PatchFields {
    pub fhat_x: Spline2,
    pub fhat_y: Spline2,
    pub vhat_x: Spline2,
    pub vhat_y: Spline2,
    pub jhat_x: Spline2,
    pub jhat_y: Spline2,
    pub beta: Spline2,
}

impl SurgeryPatch {
    pub fn new(
        audit: PatchAudit,
        fields: PatchFields,
        cutoff: CutoffWidths,
        seed_stride: usize,
    ) -> Self {
        let PatchFields {
            fhat_x,
            fhat_y,
            vhat_x,
            vhat_y,
            jhat_x,
            jhat_y,
            beta,
        } = fields;
        let mut seeds = Vec::new();
        let (nt, np) = (fhat_x.nt, fhat_x.np);
        for i in (0..nt).step_by(seed_stride.max(1)) {
            for j in (0..np).step_by(seed_stride.max(1)) {
                let t = fhat_x.t0 + i as f64 * fhat_x.dt;
                let p = fhat_x.p0 + j as f64 * fhat_x.dp;
                let q = [fhat_x.eval(t, p), fhat_y.eval(t, p)];
                seeds.push(([t, p], q));
            }
        }
        // Support bbox: image of the H-support rectangle, inflated a little.
        let c = cutoff;
        let mut pts = Vec::new();
        let m = 24;
        for i in 0..=m {
            for j in 0..=m {
                let t = -c.a3 + 2.0 * c.a3 * i as f64 / m as f64;
                let p = -c.b3 + 2.0 * c.b3 * j as f64 / m as f64;
                pts.push(Vector2::new(fhat_x.eval(t, p), fhat_y.eval(t, p)));
            }
        }
        let bbox = Rect::from_points(pts.iter()).inflate(1e-3);
        Self {
            audit,
            bbox,
            fhat_x,
            fhat_y,
            vhat_x,
            vhat_y,
            jhat_x,
            jhat_y,
            beta,
            cutoff: c,
            amplitude: 1.0,
            seeds,
        }
    }

    pub fn fhat(&self, t: f64, p: f64) -> Vector2<f64> {
        Vector2::new(self.fhat_x.eval(t, p), self.fhat_y.eval(t, p))
    }

    /// d fhat / dt from the stored frame field.
    pub fn vhat(&self, t: f64, p: f64) -> Vector2<f64> {
        Vector2::new(self.vhat_x.eval(t, p), self.vhat_y.eval(t, p))
    }

    /// d fhat / dp from the stored frame field.
    pub fn jhat(&self, t: f64, p: f64) -> Vector2<f64> {
        Vector2::new(self.jhat_x.eval(t, p), self.jhat_y.eval(t, p))
    }

    /// Jacobian [d fhat/dt | d fhat/dp].
    pub fn fhat_jacobian(&self, t: f64, p: f64) -> Matrix2<f64> {
        let v = self.vhat(t, p);
        let j = self.jhat(t, p);
        Matrix2::new(v.x, j.x, v.y, j.y)
    }

    /// Longitudinal blend profile h.
    pub fn h_profile(&self, t: f64) -> f64 {
        rising_edge(t, self.cutoff.a5)
    }

    /// Spatial cutoff H in (t, p) coordinates.
    pub fn spatial_cutoff(&self, t: f64, p: f64) -> f64 {
        plateau(t, self.cutoff.a4, self.cutoff.a3) * plateau(p, self.cutoff.b4, self.cutoff.b3)
    }

    /// Domain rectangle of the f-hat splines in (t, p).
    pub fn domain(&self) -> Rect {
        Rect {
            lo: [self.fhat_x.t0, self.fhat_x.p0],
            hi: [
                self.fhat_x.t0 + (self.fhat_x.nt - 1) as f64 * self.fhat_x.dt,
                self.fhat_x.p0 + (self.fhat_x.np - 1) as f64 * self.fhat_x.dp,
            ],
        }
    }

    /// Map a chart point into the patch lift frame if it falls in the
    /// support bounding box.
    pub fn to_patch_frame(&self, v: Vector2<f64>) -> Option<Vector2<f64>> {
        let w = wrap_vec(v);
        for j in -1..=1 {
            for k in -1..=1 {
                let cand = w + Vector2::new(j as f64, k as f64);
                if self.bbox.contains(cand) {
                    return Some(cand);
                }
            }
        }
        None
    }

    /// Invert f-hat at a lift-frame point. Returns None when the point is
    /// outside the parametrized image.
    pub fn invert(&self, q: Vector2<f64>) -> Option<PatchLocation> {
        let dom = self.domain();
        let mut best = ([0.0, 0.0], f64::INFINITY);
        for (tp, img) in &self.seeds {
            let d = (q.x - img[0]).powi(2) + (q.y - img[1]).powi(2);
            if d < best.1 {
                best = (*tp, d);
            }
        }
        let mut t = best.0[0];
        let mut p = best.0[1];
        let mut res = (self.fhat(t, p) - q).norm();
        for _ in 0..40 {
            if res <= 1e-13 {
                break;
            }
            let jac = self.fhat_jacobian(t, p);
            let det = jac.determinant();
            if det.abs() < 1e-12 {
                return None;
            }
            let step = jac.try_inverse()? * (q - self.fhat(t, p));
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..6 {
                let tn = (t + scale * step.x).clamp(dom.lo[0], dom.hi[0]);
                let pn = (p + scale * step.y).clamp(dom.lo[1], dom.hi[1]);
                let rn = (self.fhat(tn, pn) - q).norm();
                if rn < res {
                    t = tn;
                    p = pn;
                    res = rn;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if res <= 1e-10 {
            Some(PatchLocation { t, p, residual: res })
        } else {
            None
        }
    }

    /// Blend query: `None` means the composite metric equals its base at this
    /// point (exact, same code path). `Some((w, hat_g))` gives the cutoff
    /// weight and the replacement metric in chart coordinates.
    pub fn blend_at(&self, v: Vector2<f64>) -> Option<(f64, Matrix2<f64>)> {
        let q = self.to_patch_frame(v)?;
        let loc = self.invert(q)?;
        let (t, p) = (loc.t, loc.p);
        let h = self.h_profile(t);
        // On the h plateaus the replacement provably equals the base metric.
        if h <= 0.0 || h >= 1.0 {
            return None;
        }
        let cap = self.spatial_cutoff(t, p);
        if cap <= 0.0 {
            return None;
        }
        let jac = self.fhat_jacobian(t, p);
        let inv = jac.try_inverse()?;
        let beta = self.beta.eval(t, p);
        let frame = Matrix2::new(1.0, 0.0, 0.0, beta);
        let hat_g = inv.transpose() * frame * inv;
        Some((self.amplitude * cap, hat_g))
    }
}

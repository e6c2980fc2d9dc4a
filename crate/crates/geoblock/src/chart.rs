//! The global periodic chart R^2/Z^2 of the unit 2-torus.
//!
//! Every point has a canonical representative in [0,1)^2. Geodesics are
//! integrated in lifted (unwrapped) coordinates; reduction to the canonical
//! representative happens only when points are compared. Distances between
//! chart points respect the Z^2 identification by minimizing over the nine
//! adjacent lattice lifts, which is exact for separations below 1/2.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// A point on the torus chart, stored as its canonical representative in [0,1)^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub coords: Vector2<f64>,
}

impl ChartPoint {
    /// Builds a chart point from arbitrary plane coordinates, reducing mod Z^2.
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            coords: Vector2::new(wrap_unit(x), wrap_unit(y)),
        }
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    /// Canonical representative (already in [0,1)^2).
    pub fn rep(&self) -> Vector2<f64> {
        self.coords
    }

    /// Torus distance to `other`: Euclidean distance minimized over the nine
    /// adjacent lattice lifts of the displacement.
    pub fn dist(&self, other: &ChartPoint) -> f64 {
        torus_dist(self.coords, other.coords)
    }

    /// The displacement from `self` to `other` of minimal Euclidean norm
    /// among the nine adjacent lifts.
    pub fn min_displacement(&self, other: &ChartPoint) -> Vector2<f64> {
        min_lift_displacement(other.coords - self.coords)
    }
}

/// Reduce a coordinate to [0,1). Idempotent on values already in range.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can return exactly 1.0 for tiny negative inputs.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduce a plane vector to the fundamental domain [0,1)^2.
pub fn wrap_vec(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(wrap_unit(v.x), wrap_unit(v.y))
}

/// Minimal-norm representative of `d` modulo Z^2 (search over the nine lifts).
pub fn min_lift_displacement(d: Vector2<f64>) -> Vector2<f64> {
    let base = Vector2::new(d.x - d.x.round(), d.y - d.y.round());
    let mut best = base;
    let mut best_n2 = best.norm_squared();
    for j in -1..=1 {
        for k in -1..=1 {
            let cand = base + Vector2::new(j as f64, k as f64);
            let n2 = cand.norm_squared();
            if n2 < best_n2 {
                best_n2 = n2;
                best = cand;
            }
        }
    }
    best
}

/// Torus distance between two plane points (reduced through the lattice).
pub fn torus_dist(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    min_lift_displacement(b - a).norm()
}

/// Tangent vector at a chart point, components in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub components: Vector2<f64>,
}

impl TangentVector {
    pub fn new(base: ChartPoint, components: Vector2<f64>) -> Self {
        Self { base, components }
    }
}

/// Enumerate all lattice lifts `target + (j,k)` within Euclidean distance
/// `radius` of `origin`. Returns the lifted points.
pub fn lattice_lifts_within(
    origin: Vector2<f64>,
    target: Vector2<f64>,
    radius: f64,
) -> Vec<Vector2<f64>> {
    let mut out = Vec::new();
    let jmax = (radius + (target.x - origin.x).abs()).ceil() as i64 + 1;
    let kmax = (radius + (target.y - origin.y).abs()).ceil() as i64 + 1;
    for j in -jmax..=jmax {
        for k in -kmax..=kmax {
            let lift = target + Vector2::new(j as f64, k as f64);
            if (lift - origin).norm() <= radius {
                out.push(lift);
            }
        }
    }
    out.sort_by(|a, b| {
        let da = (a - origin).norm();
        let db = (b - origin).norm();
        da.partial_cmp(&db)
            .unwrap()
            .then(a.x.partial_cmp(&b.x).unwrap())
            .then(a.y.partial_cmp(&b.y).unwrap())
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_idempotent() {
        for &x in &[-2.3, -1.0, -1e-17, 0.0, 0.25, 0.999999, 1.0, 7.75] {
            let w = wrap_unit(x);
            assert!((0.0..1.0).contains(&w), "wrap({x}) = {w} out of range");
            assert_eq!(wrap_unit(w), w);
        }
    }

    #[test]
    fn torus_distance_respects_identification() {
        let a = ChartPoint::new(0.05, 0.5);
        let b = ChartPoint::new(0.95, 0.5);
        assert!((a.dist(&b) - 0.1).abs() < 1e-15);
        let c = ChartPoint::new(0.98, 0.98);
        let d = ChartPoint::new(0.02, 0.02);
        assert!((c.dist(&d) - (0.04f64 * 2.0f64.sqrt() / 2.0 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn min_displacement_points_the_short_way() {
        let a = ChartPoint::new(0.9, 0.1);
        let b = ChartPoint::new(0.1, 0.9);
        let d = a.min_displacement(&b);
        assert!((d.x - 0.2).abs() < 1e-15);
        assert!((d.y + 0.2).abs() < 1e-15);
    }

    #[test]
    fn lattice_enumeration_matches_hand_count() {
        // Lifts of (0.5, 0.5) within distance 2 of the origin: 4 short + 8 medium.
        let lifts = lattice_lifts_within(
            Vector2::new(0.0, 0.0),
            Vector2::new(0.5, 0.5),
            2.0,
        );
        assert_eq!(lifts.len(), 12);
        let short = lifts
            .iter()
            .filter(|l| (l.norm() - (0.5f64).sqrt()).abs() < 1e-12)
            .count();
        let medium = lifts
            .iter()
            .filter(|l| (l.norm() - (2.5f64).sqrt()).abs() < 1e-12)
            .count();
        assert_eq!(short, 4);
        assert_eq!(medium, 8);
    }
}

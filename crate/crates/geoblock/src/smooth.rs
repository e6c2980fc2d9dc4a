//! Smooth transition and bump primitives built from the standard exp(-1/t)
//! mollifier. All functions here are C-infinity with exactly flat plateaus,
//! which is what makes exact outside-support equality possible downstream.

/// exp(-1/t) for t > 0, zero otherwise. C-infinity on all of R.
pub fn mollifier(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step: 0 for u <= 0, 1 for u >= 1, strictly increasing in between,
/// with sigma(1/2) = 1/2 by symmetry.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = mollifier(u);
    let b = mollifier(1.0 - u);
    a / (a + b)
}

/// Symmetric transition on [-w, w]: 0 for t <= -w, 1 for t >= w, value 1/2 at 0.
pub fn rising_edge(t: f64, w: f64) -> f64 {
    smoothstep(0.5 * (t / w + 1.0))
}

/// Plateau profile in one variable: 1 for |t| <= inner, 0 for |t| >= outer,
/// smooth monotone transition in the shells.
pub fn plateau(t: f64, inner: f64, outer: f64) -> f64 {
    debug_assert!(inner < outer);
    let s = t.abs();
    if s <= inner {
        1.0
    } else if s >= outer {
        0.0
    } else {
        smoothstep((outer - s) / (outer - inner))
    }
}

/// Radial bump as a function of squared radius: value 1 at rho2 = 0, support
/// exactly {rho2 < r2}. Smooth as a function of rho2 (hence of the point).
pub fn bump_of_squared_radius(rho2: f64, r2: f64) -> f64 {
    if rho2 >= r2 {
        0.0
    } else {
        (1.0 - r2 / (r2 - rho2)).exp()
    }
}

/// Derivative of `bump_of_squared_radius` with respect to rho2.
pub fn bump_of_squared_radius_deriv(rho2: f64, r2: f64) -> f64 {
    if rho2 >= r2 {
        0.0
    } else {
        let denom = r2 - rho2;
        bump_of_squared_radius(rho2, r2) * (-r2 / (denom * denom))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_plateaus_and_midpoint() {
        assert_eq!(smoothstep(-0.1), 0.0);
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert_eq!(smoothstep(1.7), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        // monotone
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = smoothstep(i as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn bump_center_value_and_support() {
        assert!((bump_of_squared_radius(0.0, 0.16) - 1.0).abs() < 1e-15);
        assert_eq!(bump_of_squared_radius(0.16, 0.16), 0.0);
        assert_eq!(bump_of_squared_radius(0.2, 0.16), 0.0);
    }

    #[test]
    fn bump_derivative_matches_finite_difference() {
        let r2 = 0.25;
        for &u in &[0.01, 0.05, 0.1, 0.2] {
            let h = 1e-7;
            let fd = (bump_of_squared_radius(u + h, r2) - bump_of_squared_radius(u - h, r2))
                / (2.0 * h);
            let an = bump_of_squared_radius_deriv(u, r2);
            assert!(
                (fd - an).abs() < 1e-6 * (1.0 + an.abs()),
                "u={u}: fd={fd}, an={an}"
            );
        }
    }

    #[test]
    fn plateau_shape() {
        assert_eq!(plateau(0.0, 0.5, 1.0), 1.0);
        assert_eq!(plateau(0.49, 0.5, 1.0), 1.0);
        assert_eq!(plateau(1.0, 0.5, 1.0), 0.0);
        assert_eq!(plateau(-1.2, 0.5, 1.0), 0.0);
        let v = plateau(0.75, 0.5, 1.0);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn rising_edge_endpoints() {
        assert_eq!(rising_edge(-0.3, 0.3), 0.0);
        assert_eq!(rising_edge(0.3, 0.3), 1.0);
        assert!((rising_edge(0.0, 0.3) - 0.5).abs() < 1e-15);
    }
}

//! Adaptive embedded Runge-Kutta integration (Dormand-Prince 5(4)).
//!
//! The solver works on fixed-size state arrays and supports an exact-hit mode:
//! the step size is clipped so trajectories land exactly on requested output
//! times, which is how uniform sample tables are produced. A per-step hook
//! lets the geodesic integrator renormalize velocity after accepted steps.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:.3e}); right-hand side is too rough")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget exhausted at t = {t} after {steps} steps")]
    StepBudget { t: f64, steps: usize },
}

/// Integration tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct OdeParams {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeParams {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-13,
            h_max: 0.05,
            max_steps: 40_000_000,
        }
    }
}

// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate dy/dt = f(t, y) from (t0, y0) hitting each time in `t_out`
/// exactly (t_out must be increasing, first entry > t0). `on_accept` runs
/// after every accepted internal step and may adjust the state in place.
///
/// Returns the states at the requested times.
pub fn integrate_to_times<const N: usize>(
    f: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    t_out: &[f64],
    params: &OdeParams,
    on_accept: &mut dyn FnMut(f64, &mut [f64; N]),
) -> Result<Vec<[f64; N]>, OdeError> {
    let mut out = Vec::with_capacity(t_out.len());
    let mut t = t0;
    let mut y = y0;
    let mut h = params.h_init.min(params.h_max);
    let mut steps = 0usize;

    for &target in t_out {
        debug_assert!(target > t - 1e-15);
        while t < target {
            if steps >= params.max_steps {
                return Err(OdeError::StepBudget { t, steps });
            }
            let h_try = h.min(target - t).max(params.h_min);
            let (y5, err) = dp_step(f, t, &y, h_try);
            let tol = error_scale(&y, &y5, params);
            let e = err / tol;
            if e <= 1.0 {
                t += h_try;
                y = y5;
                on_accept(t, &mut y);
                // Snap to target when within roundoff.
                if (target - t).abs() < 1e-13 * (1.0 + target.abs()) {
                    t = target;
                }
            }
            let factor = if e > 0.0 {
                (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = (h_try * factor).clamp(params.h_min, params.h_max);
            if e > 1.0 && h_try <= params.h_min * 1.0001 {
                return Err(OdeError::StepUnderflow { t, h: h_try });
            }
            steps += 1;
        }
        out.push(y);
    }
    Ok(out)
}

/// One Dormand-Prince step: returns the 5th-order solution and the embedded
/// error estimate (Euclidean norm of the 5th-minus-4th difference).
fn dp_step<const N: usize>(
    f: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
) -> ([f64; N], f64) {
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, y);
    for s in 1..7 {
        let mut ys = *y;
        for i in 0..N {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(s) {
                acc += A[s][j] * kj[i];
            }
            ys[i] += h * acc;
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut errv = [0.0; N];
    for i in 0..N {
        let mut acc5 = 0.0;
        let mut acc4 = 0.0;
        for s in 0..7 {
            acc5 += B5[s] * k[s][i];
            acc4 += B4[s] * k[s][i];
        }
        y5[i] += h * acc5;
        errv[i] = h * (acc5 - acc4);
    }
    let err = errv.iter().map(|e| e * e).sum::<f64>().sqrt();
    (y5, err)
}

fn error_scale<const N: usize>(y: &[f64; N], y_new: &[f64; N], params: &OdeParams) -> f64 {
    let mut scale: f64 = 0.0;
    for i in 0..N {
        scale = scale.max(y[i].abs().max(y_new[i].abs()));
    }
    params.atol + params.rtol * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let f = |_t: f64, y: &[f64; 1]| [-y[0]];
        let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let sol = integrate_to_times(&f, 0.0, [1.0], &times, &OdeParams::default(), &mut |_, _| {})
            .unwrap();
        for (t, y) in times.iter().zip(&sol) {
            assert!((y[0] - (-t).exp()).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let times = vec![std::f64::consts::TAU * 5.0];
        let sol = integrate_to_times(&f, 0.0, [1.0, 0.0], &times, &OdeParams::default(), &mut |_, _| {})
            .unwrap();
        assert!((sol[0][0] - 1.0).abs() < 1e-8);
        assert!(sol[0][1].abs() < 1e-8);
    }

    #[test]
    fn hits_requested_times_exactly() {
        let f = |t: f64, _y: &[f64; 1]| [t.cos()];
        let times = vec![0.3, 0.7, 1.9];
        let sol = integrate_to_times(&f, 0.0, [0.0], &times, &OdeParams::default(), &mut |_, _| {})
            .unwrap();
        for (t, y) in times.iter().zip(&sol) {
            assert!((y[0] - t.sin()).abs() < 1e-11);
        }
    }
}

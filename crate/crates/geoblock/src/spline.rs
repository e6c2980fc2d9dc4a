//! Cubic spline interpolation on uniform grids, stored in B-spline
//! coefficient form for O(1) evaluation with two continuous derivatives.
//!
//! Not-a-knot end conditions keep fourth-order accuracy up to the boundary,
//! which matters because surgery patches are evaluated right out to the edge
//! of their support.

/// One-dimensional cubic spline over n >= 8 uniformly spaced nodes.
#[derive(Debug, Clone)]
pub struct Spline1 {
    x0: f64,
    dx: f64,
    n: usize,
    /// B-spline coefficients c_{-1}..c_n (n + 2 entries).
    coeffs: Vec<f64>,
}

/// Solve for not-a-knot second derivatives at the nodes.
fn second_derivatives(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 8, "spline grids need at least 8 nodes (got {n})");
    let d2 = |i: usize| (values[i - 1] - 2.0 * values[i] + values[i + 1]) / (dx * dx);

    let mut m = vec![0.0; n];
    m[1] = d2(1);
    m[n - 2] = d2(n - 2);

    // Tridiagonal system for M_2..M_{n-3}: M_{i-1} + 4 M_i + M_{i+1} = 6 d2(i).
    let len = n - 4;
    let mut diag = vec![4.0; len];
    let mut rhs: Vec<f64> = (2..n - 2).map(|i| 6.0 * d2(i)).collect();
    rhs[0] -= m[1];
    rhs[len - 1] -= m[n - 2];
    // Thomas elimination (sub/super diagonals are all 1).
    for i in 1..len {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
    }
    let mut sol = vec![0.0; len];
    sol[len - 1] = rhs[len - 1] / diag[len - 1];
    for i in (0..len - 1).rev() {
        sol[i] = (rhs[i] - sol[i + 1]) / diag[i];
    }
    m[2..(len + 2)].copy_from_slice(&sol);

    m[0] = 2.0 * m[1] - m[2];
    m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
    m
}

/// Convert node values + second derivatives to B-spline coefficients.
fn to_bspline_coeffs(values: &[f64], m: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    let mut c = vec![0.0; n + 2];
    for i in 0..n {
        c[i + 1] = values[i] - dx * dx * m[i] / 6.0;
    }
    c[0] = dx * dx * m[0] + 2.0 * c[1] - c[2];
    c[n + 1] = dx * dx * m[n - 1] + 2.0 * c[n] - c[n - 1];
    c
}

impl Spline1 {
    pub fn fit(x0: f64, dx: f64, values: &[f64]) -> Self {
        let m = second_derivatives(values, dx);
        let coeffs = to_bspline_coeffs(values, &m, dx);
        Self {
            x0,
            dx,
            n: values.len(),
            coeffs,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, w, _, _) = self.basis(x);
        (0..4).map(|k| self.coeffs[i + k] * w[k]).sum()
    }

    pub fn eval_d1(&self, x: f64) -> f64 {
        let (i, _, w1, _) = self.basis(x);
        (0..4).map(|k| self.coeffs[i + k] * w1[k]).sum::<f64>() / self.dx
    }

    fn basis(&self, x: f64) -> (usize, [f64; 4], [f64; 4], [f64; 4]) {
        let u = (x - self.x0) / self.dx;
        let mut cell = u.floor() as i64;
        cell = cell.clamp(0, self.n as i64 - 2);
        let s = u - cell as f64;
        (cell as usize, weights(s), dweights(s), d2weights(s))
    }
}

fn weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    let om = 1.0 - s;
    [
        om * om * om / 6.0,
        (3.0 * s3 - 6.0 * s2 + 4.0) / 6.0,
        (-3.0 * s3 + 3.0 * s2 + 3.0 * s + 1.0) / 6.0,
        s3 / 6.0,
    ]
}

fn dweights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let om = 1.0 - s;
    [
        -om * om / 2.0,
        (3.0 * s2 - 4.0 * s) / 2.0,
        (-3.0 * s2 + 2.0 * s + 1.0) / 2.0,
        s2 / 2.0,
    ]
}

fn d2weights(s: f64) -> [f64; 4] {
    [1.0 - s, 3.0 * s - 2.0, -3.0 * s + 1.0, s]
}

/// Tensor-product cubic spline surface over a uniform (t, p) grid.
///
/// Globally C^2; values, gradients, and second partials are evaluated from
/// the same coefficient array, so analytic identities that hold for the
/// interpolant (not merely for the sampled function) are preserved exactly.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Spline2 {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
    pub p0: f64,
    pub dp: f64,
    pub np: usize,
    /// (nt + 2) x (np + 2) coefficients, row-major in t.
    coeffs: Vec<f64>,
}

impl Spline2 {
    /// Fit from node values, `values[i * np + j]` at (t0 + i dt, p0 + j dp).
    pub fn fit(t0: f64, dt: f64, nt: usize, p0: f64, dp: f64, np: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), nt * np);
        // Pass 1: solve along t for each p-column.
        let mut ct = vec![0.0; (nt + 2) * np];
        let mut col = vec![0.0; nt];
        for j in 0..np {
            for i in 0..nt {
                col[i] = values[i * np + j];
            }
            let m = second_derivatives(&col, dt);
            let c = to_bspline_coeffs(&col, &m, dt);
            for (i, v) in c.iter().enumerate() {
                ct[i * np + j] = *v;
            }
        }
        // Pass 2: solve along p for each t-row of coefficients.
        let mut coeffs = vec![0.0; (nt + 2) * (np + 2)];
        for i in 0..nt + 2 {
            let row = &ct[i * np..(i + 1) * np];
            let m = second_derivatives(row, dp);
            let c = to_bspline_coeffs(row, &m, dp);
            coeffs[i * (np + 2)..(i + 1) * (np + 2)].copy_from_slice(&c);
        }
        Self {
            t0,
            dt,
            nt,
            p0,
            dp,
            np,
            coeffs,
        }
    }

    fn locate(&self, t: f64, p: f64) -> (usize, usize, f64, f64) {
        let ut = (t - self.t0) / self.dt;
        let up = (p - self.p0) / self.dp;
        let it = (ut.floor() as i64).clamp(0, self.nt as i64 - 2) as usize;
        let ip = (up.floor() as i64).clamp(0, self.np as i64 - 2) as usize;
        (it, ip, ut - it as f64, up - ip as f64)
    }

    pub fn eval(&self, t: f64, p: f64) -> f64 {
        let (it, ip, s, r) = self.locate(t, p);
        self.combine(it, ip, &weights(s), &weights(r))
    }

    /// Value together with the first partials (d/dt, d/dp).
    pub fn eval_grad(&self, t: f64, p: f64) -> (f64, f64, f64) {
        let (it, ip, s, r) = self.locate(t, p);
        let wt = weights(s);
        let wp = weights(r);
        let dwt = dweights(s);
        let dwp = dweights(r);
        (
            self.combine(it, ip, &wt, &wp),
            self.combine(it, ip, &dwt, &wp) / self.dt,
            self.combine(it, ip, &wt, &dwp) / self.dp,
        )
    }

    /// All second partials: (d2/dt2, d2/dtdp, d2/dp2).
    pub fn eval_hessian(&self, t: f64, p: f64) -> (f64, f64, f64) {
        let (it, ip, s, r) = self.locate(t, p);
        let wt = weights(s);
        let wp = weights(r);
        let dwt = dweights(s);
        let dwp = dweights(r);
        let d2wt = d2weights(s);
        let d2wp = d2weights(r);
        (
            self.combine(it, ip, &d2wt, &wp) / (self.dt * self.dt),
            self.combine(it, ip, &dwt, &dwp) / (self.dt * self.dp),
            self.combine(it, ip, &wt, &d2wp) / (self.dp * self.dp),
        )
    }

    fn combine(&self, it: usize, ip: usize, wt: &[f64; 4], wp: &[f64; 4]) -> f64 {
        let stride = self.np + 2;
        let mut acc = 0.0;
        for (a, wta) in wt.iter().enumerate() {
            let base = (it + a) * stride + ip;
            let mut row = 0.0;
            for (b, wpb) in wp.iter().enumerate() {
                row += self.coeffs[base + b] * wpb;
            }
            acc += wta * row;
        }
        acc
    }
}

//! Singular values of the integral operator with kernel `A(x)|x−y|B(y)` on
//! a cubic grid, and the closed-form prediction of their `k^{−4/3}` tail.
//!
//! The matrix is `T_ij = h³ A_i |x_i − x_j| B_j` on the midpoint grid. It is
//! never stored: `|x_i − x_j|` depends only on the index difference, so the
//! product is a three-dimensional Toeplitz convolution evaluated by FFT on
//! a doubled periodic grid.

use std::fmt::Write as _;
use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mueller_energy::UNITS_NOTE;

pub const SCHATTEN_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_POINT_CAP: usize = 32768;
/// Order `p` of the weak Schatten class of the kernel.
pub const SCHATTEN_ORDER: f64 = 0.75;

/// Closed form of the prediction for `A = B = e^{−|x|²/2}`:
/// `(1/3)(2/π)^{5/4}(4π/3)^{3/2}`.
pub fn gaussian_prediction() -> f64 {
    use std::f64::consts::PI;
    (2.0 / PI).powf(1.25) / 3.0 * (4.0 * PI / 3.0).powf(1.5)
}

/// `n` cells per axis on `[−L, L]³`, nodes at cell midpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicGrid {
    pub n: usize,
    pub half_width: f64,
}

impl CubicGrid {
    pub fn new(n: usize, half_width: f64) -> Self {
        CubicGrid { n, half_width }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
        [self.coordinate(i), self.coordinate(j), self.coordinate(k)]
    }

    fn on_boundary(&self, idx: usize) -> bool {
        let n = self.n;
        let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
        [i, j, k].iter().any(|&c| c == 0 || c == n - 1)
    }
}

/// A real linear map with its transpose.
pub trait LinearMap: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, x: &[f64]) -> Vec<f64>;
}

impl LinearMap for DMatrix<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }
    fn cols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self * DVector::from_column_slice(x)).as_slice().to_vec()
    }
    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        (self.transpose() * DVector::from_column_slice(x)).as_slice().to_vec()
    }
}

struct Convolution {
    m: usize,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Convolution {
    fn new(grid: &CubicGrid) -> Self {
        let n = grid.n;
        let m = 2 * n;
        let h = grid.spacing();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let wrap = |i: usize| -> f64 {
            let d = if i < n { i as f64 } else if i == n { 0.0 } else { i as f64 - m as f64 };
            d * h
        };
        let mut c = vec![Complex64::new(0.0, 0.0); m * m * m];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    if i == n || j == n || k == n {
                        continue;
                    }
                    let (a, b, cc) = (wrap(i), wrap(j), wrap(k));
                    c[(i * m + j) * m + k] = Complex64::new((a * a + b * b + cc * cc).sqrt(), 0.0);
                }
            }
        }
        let mut conv = Convolution {
            m,
            spectrum: Vec::new(),
            forward,
            inverse,
        };
        conv.fft3(&mut c, false);
        conv.spectrum = c;
        conv
    }

    fn fft3(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.m;
        let plan = if inverse { &self.inverse } else { &self.forward };
        // Last axis is contiguous.
        plan.process(data);
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for i in 0..m {
            for k in 0..m {
                for j in 0..m {
                    line[j] = data[(i * m + j) * m + k];
                }
                plan.process(&mut line);
                for j in 0..m {
                    data[(i * m + j) * m + k] = line[j];
                }
            }
        }
        for j in 0..m {
            for k in 0..m {
                for i in 0..m {
                    line[i] = data[(i * m + j) * m + k];
                }
                plan.process(&mut line);
                for i in 0..m {
                    data[(i * m + j) * m + k] = line[i];
                }
            }
        }
    }

    /// `y_i = Σ_j |x_i − x_j| v_j` on the `n³` grid.
    fn apply(&self, n: usize, v: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m * m];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    buf[(i * m + j) * m + k] = Complex64::new(v[(i * n + j) * n + k], 0.0);
                }
            }
        }
        self.fft3(&mut buf, false);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.fft3(&mut buf, true);
        let scale = 1.0 / (m * m * m) as f64;
        let mut out = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[(i * n + j) * n + k] = buf[(i * m + j) * m + k].re * scale;
                }
            }
        }
        out
    }
}

/// `T_ij = h³ A_i |x_i − x_j| B_j`, `A` and `B` zeroed on the outer layer.
pub struct KernelOperator {
    pub grid: CubicGrid,
    a: Vec<f64>,
    b: Vec<f64>,
    conv: Convolution,
}

impl KernelOperator {
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    fn weight(&self) -> f64 {
        self.grid.spacing().powi(3)
    }

    /// Row `i` of the matrix, generated on the fly.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let xi = self.grid.point(i);
        let w = self.weight() * self.a[i];
        (0..self.grid.len())
            .map(|j| {
                let xj = self.grid.point(j);
                let d = ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2) + (xi[2] - xj[2]).powi(2)).sqrt();
                w * d * self.b[j]
            })
            .collect()
    }

    /// Swaps `A` and `B`, which transposes the matrix.
    pub fn swapped(&self) -> KernelOperator {
        KernelOperator {
            grid: self.grid,
            a: self.b.clone(),
            b: self.a.clone(),
            conv: Convolution::new(&self.grid),
        }
    }
}

impl LinearMap for KernelOperator {
    fn rows(&self) -> usize {
        self.grid.len()
    }
    fn cols(&self) -> usize {
        self.grid.len()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let bx: Vec<f64> = x.iter().zip(&self.b).map(|(x, b)| x * b).collect();
        let w = self.weight();
        self.conv
            .apply(self.grid.n, &bx)
            .iter()
            .zip(&self.a)
            .map(|(y, a)| w * a * y)
            .collect()
    }
    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let ax: Vec<f64> = x.iter().zip(&self.a).map(|(x, a)| x * a).collect();
        let w = self.weight();
        self.conv
            .apply(self.grid.n, &ax)
            .iter()
            .zip(&self.b)
            .map(|(y, b)| w * b * y)
            .collect()
    }
}

/// Samples `A`, `B` on the grid with the outer layer set to zero.
pub fn build_kernel_operator(
    a: impl Fn([f64; 3]) -> f64,
    b: impl Fn([f64; 3]) -> f64,
    grid: CubicGrid,
    cap: usize,
) -> Result<KernelOperator> {
    if grid.n < 3 {
        return Err(Error::Parameter("need at least 3 cells per axis".into()));
    }
    if grid.len() > cap {
        return Err(Error::Capacity(format!("{}³ = {} points exceed the cap {cap}", grid.n, grid.len())));
    }
    let sample = |f: &dyn Fn([f64; 3]) -> f64| -> Vec<f64> {
        (0..grid.len())
            .map(|i| if grid.on_boundary(i) { 0.0 } else { f(grid.point(i)) })
            .collect()
    };
    Ok(KernelOperator {
        grid,
        a: sample(&a),
        b: sample(&b),
        conv: Convolution::new(&grid),
    })
}

/// `(1/3)(2/π)^{5/4} ∫ |A B|^{3/4}` by the midpoint rule on the grid.
pub fn predicted_g34(a: impl Fn([f64; 3]) -> f64, b: impl Fn([f64; 3]) -> f64, grid: CubicGrid, _q: usize) -> f64 {
    use std::f64::consts::PI;
    let w = grid.spacing().powi(3);
    let integral: f64 = (0..grid.len())
        .filter(|&i| !grid.on_boundary(i))
        .map(|i| {
            let x = grid.point(i);
            (a(x) * b(x)).abs().powf(0.75) * w
        })
        .sum();
    (2.0 / PI).powf(1.25) / 3.0 * integral
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of classical Gram–Schmidt.
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
}

/// Largest `m` singular values by Golub–Kahan bidiagonalization with full
/// reorthogonalization. The Krylov dimension grows until the top `m` values
/// change by less than `10⁻⁸` relative between rounds.
pub fn top_singular_values(op: &dyn LinearMap, m: usize) -> Result<Vec<f64>> {
    let dim = op.rows().min(op.cols());
    if m == 0 || m > dim {
        return Err(Error::Parameter(format!("requested {m} singular values of a {dim}-dimensional map")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..op.cols()).map(|_| rng.gen::<f64>() - 0.5).collect();
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut vs: Vec<Vec<f64>> = vec![v];
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut target = (2 * m + 20).min(dim);
    let limit = dim;
    loop {
        let mut broke = false;
        while alpha.len() < target {
            let j = alpha.len();
            let mut u = op.apply(&vs[j]);
            if j > 0 {
                let b = beta[j - 1];
                for (ui, up) in u.iter_mut().zip(&us[j - 1]) {
                    *ui -= b * up;
                }
            }
            orthogonalize(&mut u, &us);
            let a = dot(&u, &u).sqrt();
            alpha.push(a);
            if a <= 1e-14 * alpha[0].max(1e-300) {
                broke = true;
                break;
            }
            u.iter_mut().for_each(|x| *x /= a);
            let mut w = op.apply_transpose(&u);
            for (wi, vi) in w.iter_mut().zip(&vs[j]) {
                *wi -= a * vi;
            }
            orthogonalize(&mut w, &vs);
            us.push(u);
            let b = dot(&w, &w).sqrt();
            if b <= 1e-14 * alpha[0].max(1e-300) || vs.len() == op.cols() {
                broke = true;
                break;
            }
            w.iter_mut().for_each(|x| *x /= b);
            beta.push(b);
            vs.push(w);
        }
        let k = alpha.len();
        let bd = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if j == i + 1 && i < beta.len() {
                beta[i]
            } else {
                0.0
            }
        });
        let mut s: Vec<f64> = bd.singular_values().iter().cloned().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s.resize(m.max(s.len()), 0.0);
        s.truncate(m);
        if broke {
            return Ok(s);
        }
        if let Some(p) = &prev {
            let change = s
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
                .fold(0.0, f64::max);
            debug!("bidiagonalization: {k} steps, change {change:e}");
            if change < 1e-8 {
                return Ok(s);
            }
        }
        if k >= limit {
            return Err(Error::Numeric(format!("singular values not converged after {k} steps")));
        }
        prev = Some(s);
        target = (k + k / 4 + 10).min(limit);
    }
}

/// `sup_k k^{1/p} s_k`.
pub fn weak_schatten_quasinorm(s: &[f64], p: f64) -> f64 {
    s.iter()
        .enumerate()
        .map(|(i, s)| ((i + 1) as f64).powf(1.0 / p) * s)
        .fold(0.0, f64::max)
}

/// Fit window for the `k^{4/3}s_k` extrapolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitWindow {
    pub k_lo: usize,
    pub k_hi: usize,
}

impl FitWindow {
    /// `[20, 200]`, shortened to the available values.
    pub fn default_for(m: usize) -> Self {
        FitWindow {
            k_lo: 20.min(m / 4).max(1),
            k_hi: 200.min(m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchattenReport {
    pub schema_version: u32,
    pub grid: CubicGrid,
    pub singular_values: Vec<f64>,
    /// `k^{4/3} s_k`.
    pub scaled: Vec<f64>,
    pub window: FitWindow,
    /// `a` in the fit `k^{4/3}s_k ≈ a + b k^{−1/3}`.
    pub limit_estimate: f64,
    /// `a^{3/4}`.
    pub g_hat: f64,
    /// `(min over the window of k^{4/3}s_k)^{3/4}`.
    pub lower: f64,
    /// `(max over the window of k^{4/3}s_k)^{3/4}`.
    pub upper: f64,
    /// `(sup_k k^{4/3}s_k)^{3/4}`.
    pub quasinorm_power: f64,
    pub predicted: f64,
    pub relative_error: Option<f64>,
}

impl SchattenReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# schema_version={SCHATTEN_SCHEMA_VERSION}\n# units: {UNITS_NOTE}; kernel values dimensionless\nk,s_k,k43_s_k\n"
        );
        for (i, (sv, sc)) in self.singular_values.iter().zip(&self.scaled).enumerate() {
            let _ = writeln!(s, "{},{:e},{:e}", i + 1, sv, sc);
        }
        s
    }

    pub fn ordering_holds(&self) -> bool {
        self.lower <= self.upper * (1.0 + 1e-12) && self.upper <= self.quasinorm_power * (1.0 + 1e-12)
    }
}

/// Builds the report from computed singular values.
pub fn schatten_report(grid: CubicGrid, s: Vec<f64>, window: FitWindow, predicted: f64) -> Result<SchattenReport> {
    if window.k_lo == 0 || window.k_hi > s.len() || window.k_hi < window.k_lo + 2 {
        return Err(Error::Parameter(format!(
            "fit window [{}, {}] invalid for {} values",
            window.k_lo,
            window.k_hi,
            s.len()
        )));
    }
    let p = SCHATTEN_ORDER;
    let scaled: Vec<f64> = s
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64).powf(1.0 / p) * v)
        .collect();
    let ks: Vec<usize> = (window.k_lo..=window.k_hi).collect();
    let x: Vec<f64> = ks.iter().map(|&k| (k as f64).powf(-1.0 / 3.0)).collect();
    let y: Vec<f64> = ks.iter().map(|&k| scaled[k - 1]).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - slope * mx;
    let g_hat = a.max(0.0).powf(p);
    let lower = y.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0).powf(p);
    let upper = y.iter().cloned().fold(0.0, f64::max).powf(p);
    let quasinorm_power = weak_schatten_quasinorm(&s, p).powf(p);
    Ok(SchattenReport {
        schema_version: SCHATTEN_SCHEMA_VERSION,
        grid,
        singular_values: s,
        scaled,
        window,
        limit_estimate: a,
        g_hat,
        lower,
        upper,
        quasinorm_power,
        predicted,
        relative_error: (predicted > 0.0).then(|| (g_hat - predicted).abs() / predicted),
    })
}

/// Full pipeline for `A = B = e^{−|x|²/2}`.
pub fn gaussian_kernel_test(grid: CubicGrid, m: usize, cap: usize) -> Result<SchattenReport> {
    let g = |x: [f64; 3]| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp();
    let op = build_kernel_operator(g, g, grid, cap)?;
    let s = top_singular_values(&op, m)?;
    schatten_report(grid, s, FitWindow::default_for(m), predicted_g34(g, g, grid, 1))
}

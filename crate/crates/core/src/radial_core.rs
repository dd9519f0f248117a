//! Radial discretization: grids, channel operators, Coulomb kernels.
//!
//! Orbitals are reduced radial functions `u(r) = r R(r)` sampled at the grid
//! nodes. Channel operators are stored in the symmetric frame `ũ = √m · u`,
//! where `m` are the metric weights of the grid, so that their eigenvalues
//! are the energies and their eigenvectors are orthonormal in the discrete
//! `L²(dr)` inner product.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node distribution of a [`RadialGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScheme {
    /// `r_i = i·R/n`, trapezoid weights.
    Uniform,
    /// `r = a·ln(1 + eˣ)` with `x` uniform: geometric near the nucleus,
    /// uniform far out.
    LogStretched,
}

impl std::str::FromStr for GridScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(GridScheme::Uniform),
            "log-stretched" | "log_stretched" | "stretched" => Ok(GridScheme::LogStretched),
            other => Err(Error::Parameter(format!("unknown grid scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for GridScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridScheme::Uniform => "uniform",
            GridScheme::LogStretched => "log-stretched",
        })
    }
}

/// Everything needed to rebuild a grid bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_points: usize,
    pub r_max: f64,
    pub scheme: GridScheme,
    /// Length scale `a` of the stretched map (ignored for uniform grids).
    pub scale: f64,
    /// First node `r_1` of the stretched map (ignored for uniform grids).
    pub r_first: f64,
}

pub const DEFAULT_SCALE: f64 = 1.0;
pub const DEFAULT_FIRST_NODE: f64 = 1e-4;

impl GridSpec {
    pub fn new(n_points: usize, r_max: f64, scheme: GridScheme) -> Self {
        GridSpec {
            n_points,
            r_max,
            scheme,
            scale: DEFAULT_SCALE,
            r_first: DEFAULT_FIRST_NODE,
        }
    }

    pub fn with_first_node(mut self, r_first: f64) -> Self {
        self.r_first = r_first;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn build(&self) -> Result<RadialGrid> {
        RadialGrid::from_spec(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Ghost {
    r: f64,
    p: f64,
}

/// Radial nodes and weights on `(0, R_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialGrid {
    spec: GridSpec,
    r: Vec<f64>,
    w: Vec<f64>,
    metric: Vec<f64>,
    p: Vec<f64>,
    schwarz: Vec<f64>,
    dx: f64,
    x: Vec<f64>,
    ghosts: [Ghost; 2],
}

/// Builds a grid with the default stretch parameters.
pub fn build_grid(n_points: usize, r_max: f64, scheme: GridScheme) -> Result<RadialGrid> {
    RadialGrid::from_spec(&GridSpec::new(n_points, r_max, scheme))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus: `ln(eᵗ − 1)`.
fn softplus_inv(t: f64) -> f64 {
    if t > 30.0 {
        t + (-(-t).exp()).ln_1p()
    } else {
        t.exp_m1().ln()
    }
}

impl RadialGrid {
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        let n = spec.n_points;
        if n < 16 {
            return Err(Error::Parameter(format!("n_points = {n} < 16")));
        }
        if !(spec.r_max > 0.0 && spec.r_max.is_finite()) {
            return Err(Error::Parameter(format!("R_max = {} must be positive", spec.r_max)));
        }
        match spec.scheme {
            GridScheme::Uniform => Ok(Self::uniform(spec.clone())),
            GridScheme::LogStretched => {
                if !(spec.scale > 0.0 && spec.scale.is_finite()) {
                    return Err(Error::Parameter(format!("scale = {} must be positive", spec.scale)));
                }
                if !(spec.r_first > 0.0 && spec.r_first < spec.r_max / 2.0) {
                    return Err(Error::Parameter(format!(
                        "first node {} must lie in (0, R_max/2)",
                        spec.r_first
                    )));
                }
                Ok(Self::stretched(spec.clone()))
            }
        }
    }

    fn uniform(spec: GridSpec) -> Self {
        let n = spec.n_points;
        let h = spec.r_max / n as f64;
        let r: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
        let mut metric = vec![h; n];
        metric[n - 1] = 0.5 * h;
        RadialGrid {
            x: r.clone(),
            r,
            w: metric.clone(),
            metric,
            p: vec![1.0; n],
            schwarz: vec![0.0; n],
            dx: h,
            ghosts: [Ghost { r: 0.0, p: 1.0 }, Ghost { r: -h, p: 1.0 }],
            spec,
        }
    }

    fn stretched(spec: GridSpec) -> Self {
        let n = spec.n_points;
        let a = spec.scale;
        let x1 = softplus_inv(spec.r_first / a);
        let xn = softplus_inv(spec.r_max / a);
        let dx = (xn - x1) / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| x1 + dx * i as f64).collect();
        let mut r: Vec<f64> = x.iter().map(|&x| a * softplus(x)).collect();
        r[n - 1] = spec.r_max;
        let sig: Vec<f64> = x.iter().map(|&x| sigmoid(x)).collect();
        let p: Vec<f64> = sig.iter().map(|&s| a * s).collect();
        let schwarz: Vec<f64> = sig
            .iter()
            .map(|&s| 0.5 * (1.0 - s) * (1.0 - 2.0 * s) - 0.75 * (1.0 - s) * (1.0 - s))
            .collect();
        let mut metric: Vec<f64> = p.iter().map(|&p| p * dx).collect();
        metric[n - 1] *= 0.5;

        // The trapezoid sum in x runs to −∞; the nodes left of x₁ are summed
        // against a linear model of the integrand fitted at two nodes.
        let (mut s1, mut s2) = (0.0, 0.0);
        for j in 1.. {
            let xj = x1 - j as f64 * dx;
            let rj = a * softplus(xj);
            let pj = a * sigmoid(xj) * dx;
            s1 += pj;
            s2 += rj * pj;
            if pj < 1e-30 * s1 {
                break;
            }
        }
        let mut w = metric.clone();
        let ra = r[0];
        for b in 1..n {
            let rb = r[b];
            let cb = (s2 - s1 * ra) / (rb - ra);
            if cb >= -0.5 * metric[b] {
                w[0] += (s1 * rb - s2) / (rb - ra);
                w[b] += cb;
                break;
            }
        }

        let ghost = |xg: f64| Ghost {
            r: a * softplus(xg),
            p: a * sigmoid(xg),
        };
        RadialGrid {
            ghosts: [ghost(x1 - dx), ghost(x1 - 2.0 * dx)],
            spec,
            r,
            w,
            metric,
            p,
            schwarz,
            dx,
            x,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn scheme(&self) -> GridScheme {
        self.spec.scheme
    }
    pub fn n_points(&self) -> usize {
        self.r.len()
    }
    pub fn r_max(&self) -> f64 {
        self.spec.r_max
    }
    /// Nodes `r_i`, strictly increasing, `r_n = R_max`.
    pub fn nodes(&self) -> &[f64] {
        &self.r
    }
    /// Quadrature weights: `∫₀^{R_max} f dr ≈ Σ w_i f(r_i)`.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }
    /// Weights of the discrete inner product for functions vanishing at the
    /// origin (orbitals and orbital products). They differ from
    /// [`weights`](Self::weights) only by the origin correction, which is
    /// `O(r₁³)` on such integrands.
    pub fn metric(&self) -> &[f64] {
        &self.metric
    }
    /// Jacobian `dr/dx` of the map.
    pub fn jacobian(&self) -> &[f64] {
        &self.p
    }
    pub fn step(&self) -> f64 {
        self.dx
    }

    /// `Σ w_i f(r_i)`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.w.iter().zip(f).map(|(w, f)| w * f).sum()
    }

    /// Integrates a function of `r` sampled at the nodes.
    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.w.iter().zip(&self.r).map(|(w, &r)| w * f(r)).sum()
    }

    /// Values of `√m`, the map from `u` to the symmetric frame.
    pub fn sqrt_metric(&self) -> Vec<f64> {
        self.metric.iter().map(|m| m.sqrt()).collect()
    }

    /// Computational coordinate of a radius.
    fn coordinate(&self, r: f64) -> f64 {
        match self.spec.scheme {
            GridScheme::Uniform => r,
            GridScheme::LogStretched => softplus_inv(r / self.spec.scale),
        }
    }

    /// Cubic Lagrange interpolation of nodal values `u` at radius `r`; below the
    /// first node `u ∝ r^{ℓ+1}` is used.
    pub fn interpolate(&self, u: &[f64], l: usize, r: f64) -> Result<f64> {
        let n = self.r.len();
        let r_max = self.spec.r_max;
        if !(r >= 0.0) || r > r_max * (1.0 + 1e-12) {
            return Err(Error::Extrapolation { r, r_max });
        }
        if r <= self.r[0] {
            return Ok(u[0] * (r / self.r[0]).powi(l as i32 + 1));
        }
        let t = self.coordinate(r.min(r_max));
        let s = ((t - self.x[0]) / self.dx).floor() as isize;
        let lo = (s - 1).clamp(0, n as isize - 4) as usize;
        let mut acc = 0.0;
        for j in lo..lo + 4 {
            let mut c = 1.0;
            for k in lo..lo + 4 {
                if k != j {
                    c *= (t - self.x[k]) / (self.x[j] - self.x[k]);
                }
            }
            acc += c * u[j];
        }
        Ok(acc)
    }
}

/// An angular-momentum channel with its spin-summed degeneracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngularChannel {
    pub l: usize,
    pub q: usize,
}

impl AngularChannel {
    pub fn new(l: usize, q: usize) -> Self {
        AngularChannel { l, q }
    }
    /// `d_ℓ = q(2ℓ+1)`.
    pub fn degeneracy(&self) -> usize {
        self.q * (2 * self.l + 1)
    }
}

/// Discretized `−½ d²/dr² + ℓ(ℓ+1)/(2r²) + v(r)` in the symmetric frame.
#[derive(Clone, Debug)]
pub struct ChannelOperator {
    pub l: usize,
    pub matrix: DMatrix<f64>,
}

impl ChannelOperator {
    /// Adds a local potential sampled at the nodes.
    pub fn add_potential(&mut self, v: &[f64]) {
        for (i, vi) in v.iter().enumerate() {
            self.matrix[(i, i)] += vi;
        }
    }

    pub fn with_potential(mut self, v: &[f64]) -> Self {
        self.add_potential(v);
        self
    }

    /// Eigenvalues ascending with eigenvectors in the symmetric frame.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        sorted_eigen(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    /// Largest `|A − Aᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        let a = &self.matrix;
        (a - a.transpose()).abs().max()
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(a.nrows(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // Deterministic sign: largest entry positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        vecs.set_column(c, &v);
    }
    (vals, vecs)
}

/// Fourth-order finite-difference kinetic operator with Dirichlet conditions
/// at the origin and one step beyond `R_max`.
///
/// On the stretched grid the Liouville substitution `u = √p·v` turns the
/// operator into `−½(v'' + S v)` in the uniform coordinate, which is
/// discretized with the five-point stencil. Near the origin the ghost values
/// follow `u ∝ r^{ℓ+1}`.
pub fn kinetic_matrix(grid: &RadialGrid, l: usize) -> ChannelOperator {
    let n = grid.n_points();
    let dx = grid.dx;
    let s = 1.0 / (12.0 * dx * dx);
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = -30.0 * s;
        if i + 1 < n {
            d[(i, i + 1)] = 16.0 * s;
            d[(i + 1, i)] = 16.0 * s;
        }
        if i + 2 < n {
            d[(i, i + 2)] = -s;
            d[(i + 2, i)] = -s;
        }
    }
    let lp = l as i32 + 1;
    let (r1, p1) = (grid.r[0], grid.p[0]);
    let [g0, g1] = grid.ghosts;
    let alpha = (g0.r / r1).powi(lp) * (p1 / g0.p).sqrt();
    let alpha2 = (g1.r / r1).powi(lp) * (p1 / g1.p).sqrt();
    d[(0, 0)] += (16.0 * alpha - alpha2) * s;
    if n > 1 {
        let c = -alpha * s;
        d[(1, 0)] += 0.5 * c;
        d[(0, 1)] += 0.5 * c;
    }
    let c: Vec<f64> = (0..n)
        .map(|i| (grid.p[i] * dx / grid.metric[i]).sqrt() / grid.p[i])
        .collect();
    let centrifugal = (l * (l + 1)) as f64 / 2.0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let mut a = -0.5 * d[(i, j)];
            if i == j {
                a -= 0.5 * grid.schwarz[i];
            }
            m[(i, j)] = c[i] * a * c[j];
        }
        m[(j, j)] += centrifugal / (grid.r[j] * grid.r[j]);
    }
    ChannelOperator { l, matrix: m }
}

/// `−½Δ_ℓ + v` for a sampled potential.
pub fn channel_operator(grid: &RadialGrid, l: usize, v: &[f64]) -> ChannelOperator {
    kinetic_matrix(grid, l).with_potential(v)
}

/// External potential energy `−Z/r` at the nodes.
pub fn coulomb_attraction(z: f64, grid: &RadialGrid) -> Result<Vec<f64>> {
    if !(z > 0.0) {
        return Err(Error::Parameter(format!("nuclear charge {z} must be positive")));
    }
    Ok(grid.r.iter().map(|r| -z / r).collect())
}

/// Interval weights of a sixth-order cumulative rule on the uniform
/// coordinate: `∫_{x_t}^{x_{t+1}} g ≈ Σ_j W[t][j] g_j`.
#[derive(Clone, Debug)]
struct IntervalRule {
    start: Vec<usize>,
    coef: Vec<Vec<f64>>,
}

impl IntervalRule {
    fn new(n: usize, dx: f64) -> Self {
        let mut start = Vec::with_capacity(n - 1);
        let mut coef = Vec::with_capacity(n - 1);
        for t in 0..n - 1 {
            if t >= 2 && t + 3 < n {
                start.push(t - 2);
                coef.push(
                    [11.0, -93.0, 802.0, 802.0, -93.0, 11.0]
                        .iter()
                        .map(|c| c * dx / 1440.0)
                        .collect(),
                );
            } else if t >= 1 && t + 2 < n {
                start.push(t - 1);
                coef.push([-1.0, 13.0, 13.0, -1.0].iter().map(|c| c * dx / 24.0).collect());
            } else if t == 0 {
                start.push(0);
                coef.push([5.0, 8.0, -1.0].iter().map(|c| c * dx / 12.0).collect());
            } else {
                start.push(n - 3);
                coef.push([-1.0, 8.0, 5.0].iter().map(|c| c * dx / 12.0).collect());
            }
        }
        IntervalRule { start, coef }
    }

    /// Integrals over each interval.
    fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.start
            .iter()
            .zip(&self.coef)
            .map(|(&s, c)| c.iter().enumerate().map(|(k, c)| c * g[s + k]).sum())
            .collect()
    }

    /// Transpose: `Σ_t W[t][j] h_t`.
    fn apply_t(&self, h: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (t, (&s, c)) in self.start.iter().zip(&self.coef).enumerate() {
            for (k, c) in c.iter().enumerate() {
                out[s + k] += c * h[t];
            }
        }
        out
    }
}

/// Multipole kernel `r_<^k / r_>^{k+1}` on a grid.
///
/// The dense form is the symmetric matrix `G` with
/// `∫∫ f(r) r_<^k/r_>^{k+1} g(s) dr ds ≈ fᵀ G g`; the same quantity is
/// available in `O(n)` through [`MultipoleKernel::apply`].
#[derive(Clone, Debug)]
pub struct MultipoleKernel {
    pub k: usize,
    rule: IntervalRule,
    r: Vec<f64>,
    p: Vec<f64>,
    m: Vec<f64>,
}

impl MultipoleKernel {
    pub fn new(grid: &RadialGrid, k: usize) -> Self {
        MultipoleKernel {
            k,
            rule: IntervalRule::new(grid.n_points(), grid.dx),
            r: grid.r.clone(),
            p: grid.p.clone(),
            m: grid.metric.clone(),
        }
    }

    /// Dense symmetric matrix `G`.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.r.len();
        let (r, p, rule) = (&self.r, &self.p, &self.rule);
        // cum[i][j]: weight of node j in ∫_{x_1}^{x_i}; tail[i][j] in ∫_{x_i}^{x_n}.
        let mut cum = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            for j in 0..n {
                cum[(i, j)] = cum[(i - 1, j)];
            }
            let (s, c) = (rule.start[i - 1], &rule.coef[i - 1]);
            for (kk, c) in c.iter().enumerate() {
                cum[(i, s + kk)] += c;
            }
        }
        let mut tail = DMatrix::<f64>::zeros(n, n);
        for i in (0..n - 1).rev() {
            for j in 0..n {
                tail[(i, j)] = tail[(i + 1, j)];
            }
            let (s, c) = (rule.start[i], &rule.coef[i]);
            for (kk, c) in c.iter().enumerate() {
                tail[(i, s + kk)] += c;
            }
        }
        let kk = self.k as i32;
        let mut g = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                // Same per-node factors as `potential`, also for stencil
                // nodes on the far side of r_i.
                let inner = cum[(i, j)] * (r[j] / r[i]).powi(kk) / r[i] * p[j];
                let outer = tail[(i, j)] * (r[i] / r[j]).powi(kk) / r[j] * p[j];
                g[(i, j)] = self.m[i] * (inner + outer);
            }
        }
        (&g + g.transpose()) * 0.5
    }

    /// `Y_i = ∫ r_<^k/r_>^{k+1} f(s) ds` at every node, in `O(n)`.
    pub fn potential(&self, f: &[f64]) -> Vec<f64> {
        let n = self.r.len();
        let kk = self.k as i32;
        let g1: Vec<f64> = (0..n).map(|j| self.r[j].powi(kk) * self.p[j] * f[j]).collect();
        let g2: Vec<f64> = (0..n)
            .map(|j| self.p[j] * f[j] / self.r[j].powi(kk + 1))
            .collect();
        let i1 = self.rule.apply(&g1);
        let i2 = self.rule.apply(&g2);
        let mut fwd = vec![0.0; n];
        for i in 1..n {
            fwd[i] = fwd[i - 1] + i1[i - 1];
        }
        let mut bwd = vec![0.0; n];
        for i in (0..n - 1).rev() {
            bwd[i] = bwd[i + 1] + i2[i];
        }
        (0..n)
            .map(|i| fwd[i] / self.r[i].powi(kk + 1) + self.r[i].powi(kk) * bwd[i])
            .collect()
    }

    /// Transpose of [`potential`](Self::potential).
    fn potential_t(&self, h: &[f64]) -> Vec<f64> {
        let n = self.r.len();
        let kk = self.k as i32;
        let a: Vec<f64> = (0..n).map(|i| h[i] / self.r[i].powi(kk + 1)).collect();
        let b: Vec<f64> = (0..n).map(|i| h[i] * self.r[i].powi(kk)).collect();
        // Σ_i cum[i][j] a_i = Σ_t W[t][j] Σ_{i>t} a_i ; Σ_i tail[i][j] b_i = Σ_t W[t][j] Σ_{i≤t} b_i
        let mut after = vec![0.0; n - 1];
        let mut acc = 0.0;
        for t in (0..n - 1).rev() {
            acc += a[t + 1];
            after[t] = acc;
        }
        let mut upto = vec![0.0; n - 1];
        acc = 0.0;
        for t in 0..n - 1 {
            acc += b[t];
            upto[t] = acc;
        }
        let s1 = self.rule.apply_t(&after, n);
        let s2 = self.rule.apply_t(&upto, n);
        (0..n)
            .map(|j| self.r[j].powi(kk) * self.p[j] * s1[j] + self.p[j] / self.r[j].powi(kk + 1) * s2[j])
            .collect()
    }

    /// `G f` without forming `G`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let y = self.potential(f);
        let mf: Vec<f64> = f.iter().zip(&self.m).map(|(f, m)| f * m).collect();
        let z = self.potential_t(&mf);
        (0..f.len()).map(|i| 0.5 * (self.m[i] * y[i] + z[i])).collect()
    }

    /// `fᵀ G g`.
    pub fn bilinear(&self, f: &[f64], g: &[f64]) -> f64 {
        let y = self.potential(g);
        f.iter().zip(&y).zip(&self.m).map(|((f, y), m)| f * y * m).sum::<f64>() * 0.5
            + {
                let y = self.potential(f);
                g.iter().zip(&y).zip(&self.m).map(|((g, y), m)| g * y * m).sum::<f64>() * 0.5
            }
    }

    /// Potential at the nodes consistent with the symmetric kernel:
    /// `(G f)_i / m_i`.
    pub fn symmetric_potential(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f).iter().zip(&self.m).map(|(g, m)| g / m).collect()
    }
}

/// Hartree potential `v_H(r) = (1/r)∫_{s≤r} 4πs²ρ ds + ∫_{s>r} 4πsρ ds`.
pub fn hartree_potential(rho: &crate::mueller_energy::Density) -> Result<Vec<f64>> {
    let grid = rho.grid();
    let values = rho.values();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if let Some(v) = values.iter().find(|&&v| v < -1e-12 * scale.max(1e-300)) {
        return Err(Error::Data(format!("negative density value {v:e}")));
    }
    let f: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(values)
        .map(|(r, rho)| 4.0 * std::f64::consts::PI * r * r * rho)
        .collect();
    Ok(MultipoleKernel::new(grid, 0).potential(&f))
}


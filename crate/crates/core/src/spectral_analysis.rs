//! Post-processing of a minimizer: occupation-number tail, density decay and
//! an upper bound for the chemical potential.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimizer::PINNED_TOL;
use crate::mueller_energy::{density_from_gamma, wigner3j_squared, Density, DensityMatrix1P, UNITS_NOTE};
use crate::radial_core::{channel_operator, hartree_potential, sorted_eigen, MultipoleKernel, RadialGrid};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Exponent of the occupation-number power law.
pub const TAIL_EXPONENT: f64 = -8.0 / 3.0;
/// Default upper end of the tail window as a fraction of the spectrum.
pub const DEFAULT_UPPER_FRACTION: f64 = 0.6;

/// Occupations expanded by degeneracy, descending. Ties keep `(ℓ, n)` order.
pub fn eigenvalue_tail(gamma: &DensityMatrix1P) -> Vec<f64> {
    let mut v: Vec<f64> = gamma
        .subshells()
        .flat_map(|s| std::iter::repeat(s.lambda).take(gamma.degeneracy(s.l)))
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `c* = √2/(3π^{5/4}) ∫ ρ^{3/4}`.
///
/// The constant carries no explicit dependence on `q`; the argument is kept
/// so callers state the spin convention of `ρ`.
pub fn predicted_constant(rho: &Density, _q: usize) -> f64 {
    let grid = rho.grid();
    let f: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(rho.values())
        .map(|(r, v)| 4.0 * std::f64::consts::PI * r * r * v.max(0.0).powf(0.75))
        .collect();
    2f64.sqrt() / (3.0 * std::f64::consts::PI.powf(1.25)) * grid.integrate(&f)
}

/// Inclusive 1-based index range of the tail fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailWindow {
    pub k_lo: usize,
    pub k_hi: usize,
}

impl TailWindow {
    pub fn new(k_lo: usize, k_hi: usize) -> Self {
        TailWindow { k_lo, k_hi }
    }

    /// From the first occupation below `10⁻²` up to 60% of the spectrum.
    pub fn default_for(tail: &[f64]) -> Self {
        let k_lo = tail.iter().position(|&l| l < 1e-2).map(|i| i + 1).unwrap_or(1);
        let k_hi = ((tail.len() as f64) * DEFAULT_UPPER_FRACTION).floor() as usize;
        TailWindow { k_lo, k_hi }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralTailReport {
    pub schema_version: u32,
    pub eigenvalues: Vec<f64>,
    pub window: TailWindow,
    /// Plateau midpoints and values used in the fit.
    pub fit_points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub fit_rms: f64,
    /// `c_k = k λ_k^{3/8}` for every index.
    pub c_sequence: Vec<f64>,
    pub c_hat: f64,
    pub predicted: Option<f64>,
    pub ratio: Option<f64>,
    pub power_law: bool,
    pub l_max: Option<usize>,
    pub bands: Option<usize>,
}

impl SpectralTailReport {
    pub fn with_prediction(mut self, c_star: f64) -> Self {
        self.predicted = Some(c_star);
        self.ratio = (c_star > 0.0).then(|| self.c_hat / c_star);
        self
    }

    pub fn with_cutoffs(mut self, l_max: usize, bands: usize) -> Self {
        self.l_max = Some(l_max);
        self.bands = Some(bands);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }

    /// `k, λ_k, c_k` table.
    pub fn to_csv(&self) -> String {
        let mut s = csv_header("k,lambda_k,c_k", "lambda_k dimensionless; c_k = k*lambda_k^(3/8)");
        for (i, (l, c)) in self.eigenvalues.iter().zip(&self.c_sequence).enumerate() {
            let _ = writeln!(s, "{},{:e},{:e}", i + 1, l, c);
        }
        s
    }
}

fn csv_header(columns: &str, units: &str) -> String {
    format!("# schema_version={REPORT_SCHEMA_VERSION}\n# units: {UNITS_NOTE}; {units}\n{columns}\n")
}

/// Least squares `y = a + b x`; returns `(a, b, rms)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (x.iter().zip(y).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

/// Groups equal consecutive values into plateaus `(midpoint k, value)`.
fn plateaus(tail: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=tail.len() {
        let same = i < tail.len() && (tail[i] - tail[start]).abs() <= 1e-12 * tail[start].abs();
        if !same {
            let mid = (start + 1 + i) as f64 / 2.0;
            out.push((mid, tail[start]));
            start = i;
        }
    }
    out
}

/// Power-law fit of `λ_k` over `window` with extrapolation of `c_k`.
///
/// Degenerate plateaus are represented by their midpoints. The constant is
/// extrapolated by fitting `c = ĉ + b/k` on the window.
pub fn tail_fit(tail: &[f64], window: TailWindow) -> Result<SpectralTailReport> {
    let TailWindow { k_lo, k_hi } = window;
    if k_lo == 0 || k_hi > tail.len() || k_hi < k_lo {
        return Err(Error::Parameter(format!(
            "window [{k_lo}, {k_hi}] outside the tail of length {}",
            tail.len()
        )));
    }
    if k_hi - k_lo + 1 < 10 {
        return Err(Error::Parameter(format!("window [{k_lo}, {k_hi}] has fewer than 10 points")));
    }
    let pts: Vec<(f64, f64)> = plateaus(tail)
        .into_iter()
        .filter(|&(k, l)| k >= k_lo as f64 && k <= k_hi as f64 && l > 0.0)
        .collect();
    if pts.len() < 3 {
        return Err(Error::Parameter(format!(
            "window [{k_lo}, {k_hi}] holds only {} distinct positive values",
            pts.len()
        )));
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (intercept, slope, rms) = linear_fit(&lx, &ly);
    let inv_k: Vec<f64> = pts.iter().map(|p| 1.0 / p.0).collect();
    let c: Vec<f64> = pts.iter().map(|p| p.0 * p.1.powf(0.375)).collect();
    let (c_hat, _, _) = linear_fit(&inv_k, &c);
    let spread = {
        let m = ly.iter().sum::<f64>() / ly.len() as f64;
        (ly.iter().map(|y| (y - m).powi(2)).sum::<f64>() / ly.len() as f64).sqrt()
    };
    let power_law = (slope - TAIL_EXPONENT).abs() < 1.0 && rms <= 0.05 * spread.max(1e-300);
    Ok(SpectralTailReport {
        schema_version: REPORT_SCHEMA_VERSION,
        eigenvalues: tail.to_vec(),
        window,
        fit_points: pts,
        slope,
        intercept,
        fit_rms: rms,
        c_sequence: tail
            .iter()
            .enumerate()
            .map(|(i, l)| (i + 1) as f64 * l.max(0.0).powf(0.375))
            .collect(),
        c_hat,
        predicted: None,
        ratio: None,
        power_law,
        l_max: None,
        bands: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub schema_version: u32,
    pub kappa_hat: f64,
    pub kappa_max: Option<f64>,
    pub mu: f64,
    /// `μ < −½`, the regime where the bound applies.
    pub applicable: bool,
    pub window: (f64, f64),
    pub points: usize,
    pub fit_rms: f64,
    /// `κ̂ ≥ 0.9 κ_max` when applicable.
    pub consistent: Option<bool>,
    pub table: Vec<(f64, f64)>,
}

impl DecayReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }

    /// `r, ρ, log ρ` table of the fitted window.
    pub fn to_csv(&self) -> String {
        let mut s = csv_header("r,rho,log_rho", "r in Bohr; rho in electrons/Bohr^3");
        for (r, rho) in &self.table {
            let _ = writeln!(s, "{:e},{:e},{:e}", r, rho, rho.ln());
        }
        s
    }
}

/// `√(−½ − μ)` for `μ < −½`.
pub fn decay_bound(mu: f64) -> Option<f64> {
    (mu < -0.5).then(|| (-0.5 - mu).sqrt())
}

/// Exponential fit `ρ ∝ e^{−2κ̂r}` on the tail.
///
/// The window holds the nodes where `ρ` has fallen to between `10⁻³` and
/// `10⁻¹²` of its maximum, excluding the outer 10% of the grid.
pub fn decay_fit(rho: &Density, mu: f64) -> Result<DecayReport> {
    let grid = rho.grid();
    let r = grid.nodes();
    let v = rho.values();
    let peak = v.iter().cloned().fold(0.0f64, f64::max);
    let cut = (0.9 * r.len() as f64).floor() as usize;
    let sel: Vec<usize> = (0..cut)
        .filter(|&i| v[i] > 0.0 && v[i] <= 1e-3 * peak && v[i] >= 1e-12 * peak)
        .collect();
    if sel.len() < 10 {
        return Err(Error::Data(format!("only {} usable tail points, need 10", sel.len())));
    }
    let x: Vec<f64> = sel.iter().map(|&i| r[i]).collect();
    let y: Vec<f64> = sel.iter().map(|&i| v[i].ln()).collect();
    let (_, slope, rms) = linear_fit(&x, &y);
    let kappa_hat = -slope / 2.0;
    let kappa_max = decay_bound(mu);
    Ok(DecayReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kappa_hat,
        kappa_max,
        mu,
        applicable: kappa_max.is_some(),
        window: (x[0], x[x.len() - 1]),
        points: sel.len(),
        fit_rms: rms,
        consistent: kappa_max.map(|k| kappa_hat >= 0.9 * k),
        table: sel.iter().map(|&i| (r[i], v[i])).collect(),
    })
}

/// Least `n₀` with `Σ_{m ≤ n₀} q m² ≥ N`.
pub fn hydrogenic_n0(n_electrons: f64, q: usize) -> usize {
    let mut total = 0.0;
    let mut n = 0;
    while total < n_electrons {
        n += 1;
        total += (q * n * n) as f64;
    }
    n.max(1)
}

/// `−(Z−N)²/(2n₀²)`.
pub fn hydrogenic_bound(z: f64, n_electrons: f64, q: usize) -> f64 {
    let n0 = hydrogenic_n0(n_electrons, q) as f64;
    0.0 - (z - n_electrons).powi(2) / (2.0 * n0 * n0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChemicalPotentialReport {
    pub schema_version: u32,
    /// 1-based index of the first occupation below 1.
    pub j: usize,
    /// All occupations are 1 within the band set; `j` is one past the end.
    pub truncated: bool,
    pub sigma_j: f64,
    /// Channel of the trial function.
    pub witness_l: usize,
    pub witness_energy: f64,
    pub self_repulsion: f64,
    pub bound: f64,
    pub n0: usize,
    pub hydrogenic_bound: f64,
    pub solver_mu: Option<f64>,
    pub channels_scanned: usize,
}

impl ChemicalPotentialReport {
    pub fn with_solver_mu(mut self, mu: f64) -> Self {
        self.solver_mu = Some(mu);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }
}

/// `½∫∫|u(x)|²|u(y)|²/|x−y|` for `u = (R(r)/r)·Y_ℓ0`, with `R` given at the nodes.
pub fn self_repulsion(grid: &RadialGrid, l: usize, radial: &[f64]) -> f64 {
    let f: Vec<f64> = radial.iter().map(|u| u * u).collect();
    let mut s = 0.0;
    for k in (0..=2 * l).step_by(2) {
        let c = (2 * l + 1) as f64 * wigner3j_squared(l, l, k);
        if c == 0.0 {
            continue;
        }
        s += c * c * MultipoleKernel::new(grid, k).bilinear(&f, &f);
    }
    0.5 * s
}

/// Bound from a given total potential `v` (nuclear plus Hartree) and the
/// radial parts of the pinned natural orbitals of each channel.
pub fn chemical_potential_bound_with(
    grid: &RadialGrid,
    v: &[f64],
    pinned: &[Vec<Vec<f64>>],
    j: usize,
    l_scan: usize,
    q: usize,
) -> Result<ChemicalPotentialReport> {
    let sw = grid.sqrt_metric();
    let spectra: Vec<(Vec<f64>, DMatrix<f64>)> = (0..=l_scan).map(|l| channel_operator(grid, l, v).eigen()).collect();
    // Expanded bound-state list, ascending, ties by channel.
    let mut levels: Vec<(f64, usize)> = Vec::new();
    for (l, (ev, _)) in spectra.iter().enumerate() {
        for &e in ev.iter().filter(|&&e| e < 0.0) {
            levels.extend(std::iter::repeat((e, l)).take(q * (2 * l + 1)));
        }
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if levels.len() < j {
        return Err(Error::SpectralDeficit {
            found: levels.len(),
            needed: j,
        });
    }
    let sigma_j = levels[j - 1].0;
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for (l, (ev, vecs)) in spectra.iter().enumerate() {
        let a = ev.iter().filter(|&&e| e <= sigma_j).count();
        let none = Vec::new();
        let pins = pinned.get(l).unwrap_or(&none);
        if a <= pins.len() {
            continue;
        }
        let e = vecs.columns(0, a).into_owned();
        // Coefficients c with  P^T E c = 0 (symmetric frame).
        let basis = if pins.is_empty() {
            DMatrix::<f64>::identity(a, a)
        } else {
            let p = DMatrix::from_fn(grid.n_points(), pins.len(), |i, c| pins[c][i] * sw[i]);
            let m = p.transpose() * &e;
            let gram = m.transpose() * &m;
            let (gv, gvec) = sorted_eigen(&gram);
            let scale = gv.last().copied().unwrap_or(1.0).max(1e-300);
            let keep: Vec<usize> = (0..a).filter(|&i| gv[i] <= 1e-10 * scale).collect();
            let keep = if keep.is_empty() { vec![0] } else { keep };
            DMatrix::from_fn(a, keep.len(), |i, c| gvec[(i, keep[c])])
        };
        let restricted = basis.transpose() * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&ev[..a])) * &basis;
        let (we, wv) = sorted_eigen(&restricted);
        let coef = &basis * wv.column(0);
        let ut = &e * coef;
        let radial: Vec<f64> = ut.iter().zip(&sw).map(|(u, s)| u / s).collect();
        let d = self_repulsion(grid, l, &radial);
        let bound = sigma_j - d;
        if best.map_or(true, |b| bound < b.0) {
            best = Some((bound, l, we[0], d));
        }
    }
    let (bound, witness_l, witness_energy, self_rep) =
        best.ok_or_else(|| Error::Internal("no channel admits a trial function".into()))?;
    Ok(ChemicalPotentialReport {
        schema_version: REPORT_SCHEMA_VERSION,
        j,
        truncated: false,
        sigma_j,
        witness_l,
        witness_energy,
        self_repulsion: self_rep,
        bound,
        n0: 0,
        hydrogenic_bound: 0.0,
        solver_mu: None,
        channels_scanned: l_scan + 1,
    })
}

/// Upper bound `μ ≤ σ_J − ½∫∫|u|²|u|²/|x−y|` from a trial function `u` in
/// the span of the `J` lowest states of `−½Δ − Z/r + v_H`, orthogonal to
/// the `J−1` fully occupied natural orbitals.
///
/// States are counted per sector `(ℓ, m, σ)`; some channel holds more of the
/// `J` lowest levels than pinned orbitals, and the trial function is taken
/// there with `m = 0`. Channels up to `ℓ_max + 2` are scanned.
pub fn chemical_potential_bound(
    gamma: &DensityMatrix1P,
    z: f64,
    n_electrons: f64,
    q: usize,
) -> Result<ChemicalPotentialReport> {
    let tail = eigenvalue_tail(gamma);
    let first_open = tail.iter().position(|&l| l < 1.0 - PINNED_TOL);
    let (j, truncated) = match first_open {
        Some(i) => (i + 1, false),
        None => (tail.len() + 1, true),
    };
    let grid = gamma.grid();
    let vh = hartree_potential(&density_from_gamma(gamma))?;
    let v: Vec<f64> = grid.nodes().iter().zip(&vh).map(|(r, h)| -z / r + h).collect();
    let pinned: Vec<Vec<Vec<f64>>> = gamma
        .channels()
        .iter()
        .map(|ch| {
            ch.iter()
                .filter(|s| s.lambda >= 1.0 - PINNED_TOL)
                .map(|s| s.u.clone())
                .collect()
        })
        .collect();
    let mut rep = chemical_potential_bound_with(grid, &v, &pinned, j, gamma.l_max() + 2, q)?;
    rep.truncated = truncated;
    rep.n0 = hydrogenic_n0(n_electrons, q);
    rep.hydrogenic_bound = hydrogenic_bound(z, n_electrons, q);
    Ok(rep)
}

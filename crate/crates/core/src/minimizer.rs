//! Minimization of the Müller functional over `{0 ≤ γ ≤ 1, tr γ = N}`.
//!
//! The outer loop alternates two descent steps that both keep the energy
//! non-increasing:
//!
//! * occupations at fixed orbitals, a convex problem on the capped simplex;
//! * orbitals at fixed occupations, a projected Newton step per orbital plus
//!   pair rotations inside each channel, followed by a backtracking line
//!   search on the energy.
//!
//! Weakly occupied orbitals are seeded by a generalized eigenproblem
//! `Z v = x (k − μ) v` on the complement of the strongly occupied ones, the
//! one-body form of the stationarity condition.

use std::sync::Arc;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mueller_energy::{
    slater_integrals, wigner3j_squared, DensityMatrix1P, SlaterTable,
};
use crate::radial_core::{kinetic_matrix, sorted_eigen, GridScheme, GridSpec, MultipoleKernel, RadialGrid};

/// Occupations are clamped to this value where `1/√λ` appears.
pub const OCCUPATION_FLOOR: f64 = 1e-12;
/// Occupations within this distance of 1 count as pinned.
pub const PINNED_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupationMethod {
    /// Exact minimization of the linearized subproblem followed by a line
    /// search on the segment.
    Eigen,
    /// Projected gradient steps with backtracking.
    ProjectedGradient,
}

impl std::str::FromStr for OccupationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigen" => Ok(OccupationMethod::Eigen),
            "projected-gradient" | "projected_gradient" => Ok(OccupationMethod::ProjectedGradient),
            other => Err(Error::Parameter(format!("unknown occupation method `{other}`"))),
        }
    }
}

impl std::fmt::Display for OccupationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OccupationMethod::Eigen => "eigen",
            OccupationMethod::ProjectedGradient => "projected-gradient",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub z: f64,
    pub n_electrons: f64,
    pub q: usize,
    pub l_max: usize,
    pub bands: usize,
    pub grid: GridSpec,
    pub energy_tol: f64,
    pub max_outer: usize,
    pub occupation_step: f64,
    /// Initial step of the orbital line search; 0 freezes the orbitals.
    pub mixing: f64,
    pub occupation_method: OccupationMethod,
    /// Number of generalized-eigenproblem reseeding rounds.
    pub seed_rounds: usize,
}

impl SolverConfig {
    /// Defaults: ℓ_max = 2, 4 bands, 300-point stretched grid to 25 Bohr with
    /// first node `10⁻⁴/Z`.
    pub fn new(z: f64, n_electrons: f64, q: usize) -> Self {
        SolverConfig {
            z,
            n_electrons,
            q,
            l_max: 2,
            bands: 4,
            grid: GridSpec::new(300, 25.0, GridScheme::LogStretched).with_first_node(1e-4 / z.max(1.0)),
            energy_tol: 1e-12,
            max_outer: 1000,
            occupation_step: 0.05,
            mixing: 1.0,
            occupation_method: OccupationMethod::Eigen,
            seed_rounds: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(Error::Parameter(format!("Z = {} must be positive", self.z)));
        }
        if !(self.n_electrons > 0.0 && self.n_electrons.is_finite()) {
            return Err(Error::Parameter(format!("N = {} must be positive", self.n_electrons)));
        }
        if self.q == 0 {
            return Err(Error::Parameter("q must be at least 1".into()));
        }
        if self.bands == 0 {
            return Err(Error::Parameter("bands must be at least 1".into()));
        }
        if !(self.energy_tol > 0.0) {
            return Err(Error::Parameter("energy tolerance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mixing) {
            return Err(Error::Parameter(format!("mixing {} outside [0, 1]", self.mixing)));
        }
        if !(self.occupation_step > 0.0) {
            return Err(Error::Parameter("occupation step must be positive".into()));
        }
        if self.bands >= self.grid.n_points {
            return Err(Error::Parameter("more bands than grid points".into()));
        }
        let capacity: usize = (0..=self.l_max).map(|l| self.q * (2 * l + 1) * self.bands).sum();
        if (capacity as f64) < self.n_electrons {
            return Err(Error::Capacity(format!(
                "{capacity} spin-orbitals cannot hold N = {}",
                self.n_electrons
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubshellResidual {
    pub l: usize,
    pub n: usize,
    pub lambda: f64,
    /// `‖(h_γ − μ − e)u‖` with `e = 0` for `λ < 1`.
    pub residual: f64,
    /// `e = ⟨u|h_γ|u⟩ − μ` for pinned subshells.
    pub multiplier: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub chemical_potential: f64,
    pub subshells: Vec<SubshellResidual>,
    /// Largest residual over subshells with `λ < 1 − 10⁻⁶`.
    pub max_residual: f64,
    /// All pinned multipliers are `≤ 0` (within `10⁻⁶`).
    pub pinned_signs_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub converged: bool,
    pub iterations: usize,
    pub final_energy: f64,
    pub energy_history: Vec<f64>,
    /// Largest deviation of an interior occupation gradient from `μ`.
    pub occupation_gradient_norm: f64,
    pub occupation_gradient_spread: f64,
    pub chemical_potential: f64,
    pub residuals: ResidualReport,
    pub l_max: usize,
    pub bands: usize,
}

/// d-weighted Euclidean projection onto `{0 ≤ λ ≤ 1, Σ d λ = N}`:
/// `λ = clip(raw − τ, 0, 1)` with `τ` found by bisection.
pub fn project_occupations(raw: &[f64], d: &[f64], n: f64) -> Result<Vec<f64>> {
    if raw.len() != d.len() {
        return Err(Error::Parameter("occupation and degeneracy lengths differ".into()));
    }
    if d.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Parameter("degeneracies must be positive".into()));
    }
    let cap: f64 = d.iter().sum();
    if cap < n * (1.0 - 1e-14) {
        return Err(Error::Capacity(format!("Σ d = {cap} < N = {n}")));
    }
    let trace = |tau: f64| -> f64 { raw.iter().zip(d).map(|(r, d)| d * (r - tau).clamp(0.0, 1.0)).sum() };
    let lo0 = raw.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi0 = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if trace(mid) > n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let mut lam: Vec<f64> = raw.iter().map(|r| (r - tau).clamp(0.0, 1.0)).collect();
    // Absorb the residual trace error in the free components.
    let err = n - lam.iter().zip(d).map(|(l, d)| l * d).sum::<f64>();
    let free: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] > 0.0 && lam[i] < 1.0).collect();
    let dfree: f64 = free.iter().map(|&i| d[i]).sum();
    if dfree > 0.0 {
        for &i in &free {
            lam[i] = (lam[i] + err / dfree).clamp(0.0, 1.0);
        }
    }
    Ok(lam)
}

/// Per-subshell one-body energies `⟨u|−½Δ_ℓ − Z/r|u⟩`.
fn one_body_diagonal(gamma: &DensityMatrix1P, z: f64) -> Vec<f64> {
    let grid = gamma.grid();
    let sw = grid.sqrt_metric();
    let r = grid.nodes();
    let mut out = Vec::with_capacity(gamma.len());
    for (l, ch) in gamma.channels().iter().enumerate() {
        let t = kinetic_matrix(grid, l).matrix;
        for s in ch {
            let ut = DVector::from_iterator(sw.len(), s.u.iter().zip(&sw).map(|(u, w)| u * w));
            let kin = (&t * &ut).dot(&ut);
            let pot: f64 = (0..r.len()).map(|i| -z / r[i] * ut[i] * ut[i]).sum();
            out.push(kin + pot);
        }
    }
    out
}

/// Coefficient tables of `E` as a function of the occupations at fixed
/// orbitals: `E = Σ d λ h + ½ (dλ)ᵀ J (dλ) − (q/2) xᵀ K x`, `x = √λ`.
#[derive(Clone, Debug)]
pub struct OccupationModel {
    pub h: Vec<f64>,
    pub j: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub d: Vec<f64>,
    pub q: f64,
}

impl OccupationModel {
    pub fn from_gamma(gamma: &DensityMatrix1P, table: &SlaterTable, z: f64) -> Result<Self> {
        Ok(OccupationModel {
            h: one_body_diagonal(gamma, z),
            j: table.direct_matrix().clone(),
            k: table.exchange_couplings()?,
            d: gamma.degeneracies(),
            q: gamma.q() as f64,
        })
    }

    pub fn energy(&self, lam: &[f64]) -> f64 {
        let m = lam.len();
        let dl: Vec<f64> = (0..m).map(|a| self.d[a] * lam[a]).collect();
        let x: Vec<f64> = lam.iter().map(|l| l.max(0.0).sqrt()).collect();
        let mut e = 0.0;
        for a in 0..m {
            e += dl[a] * self.h[a];
            for b in 0..m {
                e += 0.5 * dl[a] * self.j[(a, b)] * dl[b] - 0.5 * self.q * x[a] * self.k[(a, b)] * x[b];
            }
        }
        e
    }

    /// `∂E/∂(d_a λ_a)` with `λ` clamped at the floor.
    pub fn gradient(&self, lam: &[f64]) -> Vec<f64> {
        let m = lam.len();
        let x: Vec<f64> = lam.iter().map(|l| l.max(0.0).sqrt()).collect();
        (0..m)
            .map(|a| {
                let hart: f64 = (0..m).map(|b| self.j[(a, b)] * self.d[b] * lam[b]).sum();
                let exch: f64 = (0..m).map(|b| self.k[(a, b)] * x[b]).sum();
                let xa = lam[a].max(OCCUPATION_FLOOR).sqrt();
                self.h[a] + hart - self.q * exch / (2.0 * self.d[a] * xa)
            })
            .collect()
    }
}

/// Analytic occupation gradient `∂E/∂(d_a λ_a)`.
pub fn occupation_gradient(gamma: &DensityMatrix1P, table: &SlaterTable, z: f64) -> Result<Vec<f64>> {
    for (i, s) in gamma.subshells().enumerate() {
        if s.lambda < OCCUPATION_FLOOR {
            return Err(Error::Singularity {
                index: i,
                value: s.lambda,
                floor: OCCUPATION_FLOOR,
            });
        }
    }
    Ok(OccupationModel::from_gamma(gamma, table, z)?.gradient(&gamma.occupations()))
}

/// Minimizes `Σ d c x² − (q/2) xᵀKx` over `Σ d x² = N`, `0 ≤ x ≤ 1`.
///
/// In `y = √d x` this is the lowest eigenvector of
/// `M = diag(c) − (q/2) D^{-1/2} K D^{-1/2}` on a sphere, with components
/// capped at `√d`. Capped components are handled by an active set and a
/// secular equation for the multiplier.
fn capped_subproblem(c: &[f64], k: &DMatrix<f64>, d: &[f64], n: f64, q: f64) -> Vec<f64> {
    let m = c.len();
    let sd: Vec<f64> = d.iter().map(|d| d.sqrt()).collect();
    let mut mm = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            mm[(a, b)] = -0.5 * q * k[(a, b)] / (sd[a] * sd[b]);
        }
        mm[(a, a)] += c[a];
    }
    let mm = (&mm + mm.transpose()) * 0.5;
    let mut pinned = vec![false; m];
    let mut y = vec![0.0; m];
    for _ in 0..4 * m + 10 {
        let free: Vec<usize> = (0..m).filter(|&a| !pinned[a]).collect();
        let rem = n - (0..m).filter(|&a| pinned[a]).map(|a| d[a]).sum::<f64>();
        y = vec![0.0; m];
        for a in 0..m {
            if pinned[a] {
                y[a] = sd[a];
            }
        }
        let mut mu = None;
        if !free.is_empty() && rem > 1e-15 {
            let nf = free.len();
            let mf = DMatrix::from_fn(nf, nf, |i, j| mm[(free[i], free[j])]);
            let (ev, v) = sorted_eigen(&mf);
            let b: Vec<f64> = free
                .iter()
                .map(|&i| (0..m).filter(|&j| pinned[j]).map(|j| mm[(i, j)] * sd[j]).sum())
                .collect();
            let bh: Vec<f64> = (0..nf).map(|i| (0..nf).map(|r| v[(r, i)] * b[r]).sum()).collect();
            let bnorm = bh.iter().map(|x| x * x).sum::<f64>().sqrt();
            let yf: Vec<f64>;
            if bnorm == 0.0 || bh[0].abs() <= 1e-14 * bnorm.max(1e-300) {
                // Decoupled lowest mode: fill the remaining norm along it.
                let gap = 1e-12 * (1.0 + ev[0].abs());
                let mut part = vec![0.0; nf];
                for i in 1..nf {
                    if ev[i] > ev[0] + gap {
                        let coef = bh[i] / (ev[i] - ev[0]);
                        for r in 0..nf {
                            part[r] -= v[(r, i)] * coef;
                        }
                    }
                }
                let pn: f64 = part.iter().map(|x| x * x).sum();
                let t = (rem - pn).max(0.0).sqrt();
                let s0: f64 = (0..nf).map(|r| v[(r, 0)]).sum();
                let sg = if s0 < 0.0 { -1.0 } else { 1.0 };
                yf = (0..nf).map(|r| part[r] + sg * t * v[(r, 0)]).collect();
                mu = Some(ev[0]);
            } else {
                let nrm = |mu: f64| -> f64 { (0..nf).map(|i| (bh[i] / (ev[i] - mu)).powi(2)).sum() };
                let mut lo = ev[0] - 1.0;
                while nrm(lo) > rem {
                    lo = ev[0] - 2.0 * (ev[0] - lo);
                }
                let mut hi = ev[0];
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if nrm(mid) > rem {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let mu_v = 0.5 * (lo + hi);
                mu = Some(mu_v);
                let coef: Vec<f64> = (0..nf).map(|i| bh[i] / (ev[i] - mu_v)).collect();
                yf = (0..nf).map(|r| -(0..nf).map(|i| v[(r, i)] * coef[i]).sum::<f64>()).collect();
            }
            for (i, &a) in free.iter().enumerate() {
                y[a] = yf[i];
            }
        }
        // Cap violations: pin the worst one.
        let over = free
            .iter()
            .filter(|&&a| y[a] > sd[a] * (1.0 + 1e-13))
            .max_by(|&&a, &&b| (y[a] / sd[a]).total_cmp(&(y[b] / sd[b])));
        if let Some(&a) = over {
            pinned[a] = true;
            continue;
        }
        // Release a pinned component whose multiplier has the wrong sign.
        if let Some(mu) = mu {
            let my: Vec<f64> = (0..m).map(|a| (0..m).map(|b| mm[(a, b)] * y[b]).sum()).collect();
            let worst = (0..m)
                .filter(|&a| pinned[a])
                .map(|a| (a, my[a] - mu * sd[a]))
                .filter(|&(_, g)| g > 1e-12)
                .max_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((a, _)) = worst {
                pinned[a] = false;
                continue;
            }
        }
        break;
    }
    (0..m).map(|a| (y[a] / sd[a]).clamp(0.0, 1.0)).collect()
}

/// Golden-section minimization of a convex function on `[0, 1]`.
fn golden_section(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        }
    }
    let t = 0.5 * (a + b);
    let (ft, f1) = (f(t), f(1.0));
    if f1 <= ft {
        (1.0, f1)
    } else {
        (t, ft)
    }
}

/// Minimizes the occupation energy at fixed orbitals, starting from `lam`.
/// Returns the new occupations and energy; never increases the energy.
pub fn optimize_occupations(
    model: &OccupationModel,
    lam: &[f64],
    n: f64,
    method: OccupationMethod,
    step: f64,
    iterations: usize,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut lam = project_occupations(lam, &model.d, n)?;
    let mut e = model.energy(&lam);
    for _ in 0..iterations {
        let target = match method {
            OccupationMethod::Eigen => {
                let m = lam.len();
                let c: Vec<f64> = (0..m)
                    .map(|a| model.h[a] + (0..m).map(|b| model.j[(a, b)] * model.d[b] * lam[b]).sum::<f64>())
                    .collect();
                capped_subproblem(&c, &model.k, &model.d, n, model.q)
                    .iter()
                    .map(|x| x * x)
                    .collect::<Vec<f64>>()
            }
            OccupationMethod::ProjectedGradient => {
                let g = model.gradient(&lam);
                let raw: Vec<f64> = lam.iter().zip(&g).map(|(l, g)| l - step * g).collect();
                project_occupations(&raw, &model.d, n)?
            }
        };
        let dl: Vec<f64> = target.iter().zip(&lam).map(|(t, l)| t - l).collect();
        let trial = |t: f64| -> Vec<f64> { lam.iter().zip(&dl).map(|(l, d)| (l + t * d).clamp(0.0, 1.0)).collect() };
        let (t, et) = golden_section(|t| model.energy(&trial(t)));
        if !(et < e) {
            break;
        }
        let de = e - et;
        lam = trial(t);
        e = et;
        if de < tol * (1.0 + e.abs()) {
            break;
        }
    }
    Ok((lam, e))
}

/// Common interior value of the occupation gradient.
fn extract_mu(lam: &[f64], g: &[f64]) -> f64 {
    let interior: Vec<usize> = (0..lam.len())
        .filter(|&a| lam[a] > 1e3 * OCCUPATION_FLOOR && lam[a] < 1.0 - PINNED_TOL)
        .collect();
    if interior.is_empty() {
        return g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    interior.iter().map(|&a| g[a]).sum::<f64>() / interior.len() as f64
}

/// Newton refinement of the stationarity conditions `∂E/∂(dλ) = μ` on the
/// interior occupations, in the variables `x = √λ` where the Hessian stays
/// bounded as `λ → 0`. Occupations at 0 or 1 are held fixed. Returns `None`
/// if an iterate leaves the interior.
fn refine_stationary(model: &OccupationModel, lam: &[f64], n: f64) -> Option<Vec<f64>> {
    let m = lam.len();
    let interior: Vec<usize> = (0..m)
        .filter(|&a| lam[a] > 1e3 * OCCUPATION_FLOOR && lam[a] < 1.0 - PINNED_TOL)
        .collect();
    let ni = interior.len();
    if ni == 0 {
        return None;
    }
    let d = &model.d;
    let mut x: Vec<f64> = lam.iter().map(|l| l.max(0.0).sqrt()).collect();
    let mut mu = extract_mu(lam, &model.gradient(lam));
    for _ in 0..50 {
        let rho: Vec<f64> = (0..m).map(|c| d[c] * x[c] * x[c]).collect();
        let hart: Vec<f64> = (0..m).map(|a| (0..m).map(|c| model.j[(a, c)] * rho[c]).sum()).collect();
        let kx: Vec<f64> = (0..m).map(|a| (0..m).map(|b| model.k[(a, b)] * x[b]).sum()).collect();
        let mut jac = DMatrix::<f64>::zeros(ni + 1, ni + 1);
        let mut rhs = DVector::<f64>::zeros(ni + 1);
        let mut worst: f64 = 0.0;
        for (i, &a) in interior.iter().enumerate() {
            let f = 2.0 * d[a] * x[a] * (model.h[a] + hart[a] - mu) - model.q * kx[a];
            worst = worst.max((f / (2.0 * d[a] * x[a])).abs());
            rhs[i] = -f;
            for (k, &b) in interior.iter().enumerate() {
                let mut hab = 4.0 * d[a] * x[a] * model.j[(a, b)] * d[b] * x[b] - model.q * model.k[(a, b)];
                if a == b {
                    hab += 2.0 * d[a] * (model.h[a] + hart[a] - mu);
                }
                jac[(i, k)] = hab;
            }
            jac[(i, ni)] = -2.0 * d[a] * x[a];
            jac[(ni, i)] = 2.0 * d[a] * x[a];
        }
        rhs[ni] = n - rho.iter().sum::<f64>();
        if worst < 1e-14 * (1.0 + mu.abs()) && rhs[ni].abs() < 1e-14 * n {
            break;
        }
        let step = jac.lu().solve(&rhs)?;
        for (i, &a) in interior.iter().enumerate() {
            x[a] += step[i];
            if !(x[a] > 0.0 && x[a] * x[a] < 1.0) {
                return None;
            }
        }
        mu += step[ni];
    }
    Some(x.iter().map(|v| v * v).collect())
}

/// Precomputed operators for one atom on one grid.
pub(crate) struct Model {
    pub grid: Arc<RadialGrid>,
    pub q: usize,
    pub l_max: usize,
    pub sw: Vec<f64>,
    pub h0: Vec<DMatrix<f64>>,
    pub kernels: Vec<MultipoleKernel>,
    /// `G^k / (m mᵀ)`, the exchange kernels in the symmetric frame.
    pub gt: Vec<DMatrix<f64>>,
    /// For each ℓ: `(ℓ', k, (2ℓ'+1)(ℓ' k ℓ;000)²)`.
    pub coupling: Vec<Vec<(usize, usize, f64)>>,
}

/// Orbitals in the symmetric frame (`n × bands` per channel) and occupations.
#[derive(Clone, Debug)]
pub(crate) struct State {
    pub u: Vec<DMatrix<f64>>,
    pub lam: Vec<Vec<f64>>,
}

impl State {
    fn amplitudes(&self) -> Vec<Vec<f64>> {
        self.lam
            .iter()
            .map(|l| l.iter().map(|v| v.max(0.0).sqrt()).collect())
            .collect()
    }
    pub fn flat_lam(&self) -> Vec<f64> {
        self.lam.iter().flatten().cloned().collect()
    }
    fn set_flat_lam(&mut self, flat: &[f64]) {
        let mut i = 0;
        for ch in &mut self.lam {
            for v in ch.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
    }
}

impl Model {
    pub fn new(grid: Arc<RadialGrid>, z: f64, q: usize, l_max: usize) -> Self {
        let sw = grid.sqrt_metric();
        let r = grid.nodes().to_vec();
        let h0: Vec<DMatrix<f64>> = (0..=l_max)
            .into_par_iter()
            .map(|l| {
                let mut t = kinetic_matrix(&grid, l).matrix;
                for (i, ri) in r.iter().enumerate() {
                    t[(i, i)] -= z / ri;
                }
                t
            })
            .collect();
        let kernels: Vec<MultipoleKernel> = (0..=2 * l_max).map(|k| MultipoleKernel::new(&grid, k)).collect();
        let m = grid.metric().to_vec();
        let gt: Vec<DMatrix<f64>> = kernels
            .par_iter()
            .map(|kern| {
                let mut g = kern.dense();
                let n = m.len();
                for j in 0..n {
                    for i in 0..n {
                        g[(i, j)] /= m[i] * m[j];
                    }
                }
                g
            })
            .collect();
        let coupling = (0..=l_max)
            .map(|l| {
                let mut v = Vec::new();
                for lp in 0..=l_max {
                    for k in (l.abs_diff(lp)..=l + lp).step_by(2) {
                        let g = wigner3j_squared(lp, k, l);
                        if g > 0.0 {
                            v.push((lp, k, (2 * lp + 1) as f64 * g));
                        }
                    }
                }
                v
            })
            .collect();
        Model {
            grid,
            q,
            l_max,
            sw,
            h0,
            kernels,
            gt,
            coupling,
        }
    }

    fn degeneracy(&self, l: usize) -> f64 {
        (self.q * (2 * l + 1)) as f64
    }

    /// `4πr²ρ` at the nodes.
    pub fn radial_charge(&self, st: &State) -> Vec<f64> {
        let n = self.sw.len();
        let m = self.grid.metric();
        let mut f = vec![0.0; n];
        for (l, u) in st.u.iter().enumerate() {
            let d = self.degeneracy(l);
            for (a, &lam) in st.lam[l].iter().enumerate() {
                if lam == 0.0 {
                    continue;
                }
                let col = u.column(a);
                for i in 0..n {
                    f[i] += d * lam * col[i] * col[i] / m[i];
                }
            }
        }
        f
    }

    pub fn hartree(&self, f: &[f64]) -> Vec<f64> {
        self.kernels[0].symmetric_potential(f)
    }

    /// Exchange operators `Z̃_ℓ` in the symmetric frame.
    pub fn exchange_operators(&self, st: &State) -> Vec<DMatrix<f64>> {
        let x = st.amplitudes();
        let phi: Vec<DMatrix<f64>> = st
            .u
            .iter()
            .zip(&x)
            .map(|(u, x)| {
                let mut ux = u.clone();
                for (a, xa) in x.iter().enumerate() {
                    ux.column_mut(a).scale_mut(*xa);
                }
                &ux * u.transpose()
            })
            .collect();
        let n = self.sw.len();
        (0..=self.l_max.min(st.u.len() - 1))
            .into_par_iter()
            .map(|l| {
                let mut zm = DMatrix::<f64>::zeros(n, n);
                for &(lp, k, c) in &self.coupling[l] {
                    if lp >= phi.len() {
                        continue;
                    }
                    let (g, p) = (&self.gt[k], &phi[lp]);
                    zm.zip_zip_apply(g, p, |z, g, p| *z += c * g * p);
                }
                zm
            })
            .collect()
    }

    /// `(one-body, direct, exchange)`.
    pub fn energy_parts(&self, st: &State) -> (f64, f64, f64) {
        let f = self.radial_charge(st);
        let direct = 0.5 * self.kernels[0].bilinear(&f, &f);
        let zs = self.exchange_operators(st);
        let x = st.amplitudes();
        let mut one = 0.0;
        let mut exch = 0.0;
        for (l, u) in st.u.iter().enumerate() {
            let d = self.degeneracy(l);
            let hu = &self.h0[l] * u;
            let zu = &zs[l] * u;
            for a in 0..u.ncols() {
                one += d * st.lam[l][a] * u.column(a).dot(&hu.column(a));
                exch += 0.5 * self.q as f64 * (2 * l + 1) as f64 * x[l][a] * u.column(a).dot(&zu.column(a));
            }
        }
        (one, direct, exch)
    }

    pub fn energy(&self, st: &State) -> f64 {
        let (a, b, c) = self.energy_parts(st);
        a + b - c
    }

    pub fn to_gamma(&self, st: &State) -> DensityMatrix1P {
        let mut g = DensityMatrix1P::new(self.grid.clone(), self.q);
        for (l, u) in st.u.iter().enumerate() {
            for a in 0..u.ncols() {
                let col: Vec<f64> = u.column(a).iter().zip(&self.sw).map(|(v, s)| v / s).collect();
                g.push(l, st.lam[l][a].clamp(0.0, 1.0), col).expect("consistent state");
            }
        }
        g
    }

    pub fn from_gamma(&self, gamma: &DensityMatrix1P) -> State {
        let n = self.sw.len();
        let mut u = Vec::new();
        let mut lam = Vec::new();
        for ch in gamma.channels() {
            let mut m = DMatrix::<f64>::zeros(n, ch.len());
            for (a, s) in ch.iter().enumerate() {
                for i in 0..n {
                    m[(i, a)] = s.u[i] * self.sw[i];
                }
            }
            u.push(m);
            lam.push(ch.iter().map(|s| s.lambda).collect());
        }
        State { u, lam }
    }

    pub fn occupation_model(&self, st: &State) -> Result<OccupationModel> {
        let gamma = self.to_gamma(st);
        let table = slater_integrals(&gamma, 2 * gamma.l_max())?;
        let h = st
            .u
            .iter()
            .enumerate()
            .flat_map(|(l, u)| {
                let hu = &self.h0[l] * u;
                (0..u.ncols()).map(move |a| u.column(a).dot(&hu.column(a))).collect::<Vec<_>>()
            })
            .collect();
        Ok(OccupationModel {
            h,
            j: table.direct_matrix().clone(),
            k: table.exchange_couplings()?,
            d: gamma.degeneracies(),
            q: self.q as f64,
        })
    }

    /// `h_γ u_a` for every orbital of channel `l` (symmetric frame).
    fn one_body_applied(&self, st: &State, l: usize, vh: &[f64], zl: &DMatrix<f64>) -> DMatrix<f64> {
        let u = &st.u[l];
        let x: Vec<f64> = st.lam[l].iter().map(|v| v.max(OCCUPATION_FLOOR).sqrt()).collect();
        let mut ku = &self.h0[l] * u;
        for a in 0..u.ncols() {
            for i in 0..u.nrows() {
                ku[(i, a)] += vh[i] * u[(i, a)];
            }
        }
        let zu = zl * u;
        let zz = u.transpose() * &zu;
        let mut out = ku;
        for a in 0..u.ncols() {
            // in-span part Σ_i u_i Z_ia/(x_i + x_a)
            let coef = DVector::from_fn(u.ncols(), |i, _| zz[(i, a)] / (x[i] + x[a]));
            let inspan = u * coef;
            // out-of-span part Q Z u_a / x_a
            let za = zu.column(a);
            let proj = u * (u.transpose() * za);
            for i in 0..u.nrows() {
                out[(i, a)] -= inspan[i] + (za[i] - proj[i]) / x[a];
            }
        }
        out
    }
}

/// Residuals of the one-body equations `h_γ u = (μ + e)u`.
pub(crate) fn residuals_of_state(model: &Model, st: &State, mu: f64) -> ResidualReport {
    let f = model.radial_charge(st);
    let vh = model.hartree(&f);
    let zs = model.exchange_operators(st);
    let mut subs = Vec::new();
    let mut max_res = 0.0f64;
    let mut signs_ok = true;
    for l in 0..st.u.len() {
        let hu = model.one_body_applied(st, l, &vh, &zs[l]);
        let u = &st.u[l];
        for a in 0..u.ncols() {
            let lam = st.lam[l][a];
            let ua = u.column(a);
            let norm = ua.norm();
            let pinned = lam >= 1.0 - 1e-6;
            let (shift, multiplier) = if pinned {
                let e = hu.column(a).dot(&ua) / (norm * norm) - mu;
                if e > 1e-6 {
                    signs_ok = false;
                }
                (mu + e, Some(e))
            } else {
                (mu, None)
            };
            let res = (hu.column(a) - ua * shift).norm() / norm;
            if !pinned {
                max_res = max_res.max(res);
            }
            subs.push(SubshellResidual {
                l,
                n: a,
                lambda: lam,
                residual: res,
                multiplier,
            });
        }
    }
    ResidualReport {
        chemical_potential: mu,
        subshells: subs,
        max_residual: max_res,
        pinned_signs_ok: signs_ok,
    }
}

/// Euler–Lagrange residuals `‖(h_γ − μ)u_j‖/‖u_j‖` for `λ_j < 1`; pinned
/// subshells are measured against `μ + e_j` with `e_j = ⟨u_j|h_γ|u_j⟩ − μ`.
///
/// Outside the span of the orbitals, `𝔛_γ u_j` is extended by
/// `(1 − P)Z_γ u_j / √λ_j`, which makes the residual a statement about the
/// whole grid rather than the band subspace.
pub fn euler_lagrange_residual(gamma: &DensityMatrix1P, z: f64, mu: f64) -> ResidualReport {
    let model = Model::new(gamma.grid().clone(), z, gamma.q(), gamma.l_max());
    let st = model.from_gamma(gamma);
    residuals_of_state(&model, &st, mu)
}

fn cayley(kappa: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let m = kappa.nrows();
    let half = kappa * (0.5 * t);
    let id = DMatrix::<f64>::identity(m, m);
    let lhs = &id - &half;
    let rhs = &id + &half;
    lhs.lu().solve(&rhs).unwrap_or(id)
}

/// Orthonormal columns spanning the same flag as `v` (QR with positive
/// diagonal).
fn orthonormalize(v: DMatrix<f64>) -> DMatrix<f64> {
    let qr = v.qr();
    let r = qr.r();
    let mut q = qr.q();
    for a in 0..q.ncols() {
        if r[(a, a)] < 0.0 {
            q.column_mut(a).neg_mut();
        }
    }
    q
}

/// Projected Newton direction for each orbital of channel `l` and the
/// in-channel rotation generator.
fn orbital_directions(
    model: &Model,
    st: &State,
    l: usize,
    vh: &[f64],
    zl: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let u = &st.u[l];
    let (n, m) = (u.nrows(), u.ncols());
    let x: Vec<f64> = st.lam[l].iter().map(|v| v.max(OCCUPATION_FLOOR).sqrt()).collect();
    let lam: Vec<f64> = st.lam[l].clone();
    let mut k = model.h0[l].clone();
    for i in 0..n {
        k[(i, i)] += vh[i];
    }
    let ku = &k * u;
    let zu = zl * u;
    let p = u * u.transpose();
    let cols: Vec<DVector<f64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let ra: DVector<f64> = ku.column(a) - zu.column(a) / x[a];
            let mua = u.column(a).dot(&ra);
            let rq = &ra - u * (u.transpose() * &ra);
            let mut base = &k - zl / x[a];
            for i in 0..n {
                base[(i, i)] -= mua;
            }
            let au = &base * u;
            let beta = 10.0 * (au.norm_squared() + au.norm() + 1.0);
            let scale = 1.0 + mua.abs();
            let mut sigma = 0.0;
            for attempt in 0..60 {
                let mut a_mat = &base + &p * beta;
                for i in 0..n {
                    a_mat[(i, i)] += sigma;
                }
                if let Some(ch) = a_mat.cholesky() {
                    let y0 = ch.solve(&rq);
                    let yu = ch.solve(u);
                    let s = u.transpose() * &yu;
                    let nu = s.lu().solve(&(u.transpose() * &y0)).unwrap_or_else(|| DVector::zeros(m));
                    return -(y0 - yu * nu);
                }
                sigma = if attempt == 0 { 1e-3 * scale } else { sigma * 4.0 };
            }
            -rq
        })
        .collect();
    let mut dir = DMatrix::<f64>::zeros(n, m);
    for (a, c) in cols.iter().enumerate() {
        dir.set_column(a, c);
    }
    // Pair rotations from the in-span gradient.
    let kk = u.transpose() * &ku;
    let zz = u.transpose() * &zu;
    let mut kappa = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let g = (lam[i] - lam[j]) * kk[(i, j)] - (x[i] - x[j]) * zz[(i, j)];
            let h = (lam[i] - lam[j]) * (kk[(j, j)] - kk[(i, i)]) - (x[i] - x[j]) * (zz[(j, j)] - zz[(i, i)]);
            let th = if h > 1e-14 { (-g / h).clamp(-0.3, 0.3) } else { 0.0 };
            kappa[(i, j)] = th;
            kappa[(j, i)] = -th;
        }
    }
    (dir, kappa)
}

/// Outcome of one orbital step.
pub(crate) struct OrbitalStep {
    pub state: State,
    pub step: f64,
}

/// One descent step on the orbitals at fixed occupations.
pub(crate) fn orbital_step(model: &Model, st: &State, mixing: f64) -> OrbitalStep {
    let e0 = model.energy(st);
    if mixing == 0.0 {
        return OrbitalStep {
            state: st.clone(),
            step: 0.0,
        };
    }
    let f = model.radial_charge(st);
    let vh = model.hartree(&f);
    let zs = model.exchange_operators(st);
    let mut base = st.clone();
    let mut frozen = vec![false; st.u.len()];
    for l in 0..st.u.len() {
        if st.lam[l].iter().all(|&v| v <= OCCUPATION_FLOOR) {
            // Without occupation the channel does not enter the energy:
            // use eigenvectors of the screened one-body operator.
            let mut k = model.h0[l].clone();
            for i in 0..k.nrows() {
                k[(i, i)] += vh[i];
            }
            let (_, v) = sorted_eigen(&k);
            let nb = st.u[l].ncols();
            base.u[l] = v.columns(0, nb).into_owned();
            frozen[l] = true;
        }
    }
    let dirs: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..st.u.len())
        .map(|l| {
            if frozen[l] {
                let (n, m) = st.u[l].shape();
                (DMatrix::zeros(n, m), DMatrix::zeros(m, m))
            } else {
                orbital_directions(model, st, l, &vh, &zs[l])
            }
        })
        .collect();
    let e_base = if frozen.iter().any(|&f| f) { model.energy(&base) } else { e0 };
    let mut t = mixing;
    for _ in 0..14 {
        let mut trial = base.clone();
        for l in 0..st.u.len() {
            if frozen[l] {
                continue;
            }
            let (d, kap) = &dirs[l];
            let rot = cayley(&kap.transpose(), t);
            trial.u[l] = orthonormalize(&st.u[l] * rot + d * t);
        }
        let e = model.energy(&trial);
        if e <= e_base + 1e-12 {
            return OrbitalStep {
                state: trial,
                step: t,
            };
        }
        t *= 0.5;
    }
    OrbitalStep {
        state: base,
        step: 0.0,
    }
}

/// One orbital update at fixed occupations with the configured mixing.
pub fn effective_orbital_update(gamma: &DensityMatrix1P, config: &SolverConfig) -> Result<DensityMatrix1P> {
    let model = Model::new(gamma.grid().clone(), config.z, gamma.q(), gamma.l_max());
    let st = model.from_gamma(gamma);
    let step = orbital_step(&model, &st, config.mixing);
    Ok(model.to_gamma(&step.state))
}

/// Replaces the weakly occupied orbitals of each channel by the top
/// solutions of `Z v = x (k − μ) v` on the complement of the strongly
/// occupied ones.
pub(crate) fn reseed_weak_orbitals(model: &Model, st: &State, mu: f64) -> State {
    let f = model.radial_charge(st);
    let vh = model.hartree(&f);
    let zs = model.exchange_operators(st);
    let mut out = st.clone();
    for l in 0..st.u.len() {
        let u = &st.u[l];
        let (n, m) = u.shape();
        let strong: Vec<usize> = (0..m).filter(|&a| st.lam[l][a] > 0.25).collect();
        let weak: Vec<usize> = (0..m).filter(|&a| st.lam[l][a] <= 0.25).collect();
        if weak.is_empty() {
            continue;
        }
        let s = strong.len();
        let mut aug = DMatrix::<f64>::zeros(n, s + n);
        for (c, &a) in strong.iter().enumerate() {
            aug.set_column(c, &u.column(a));
        }
        for i in 0..n {
            aug[(i, s + i)] = 1.0;
        }
        let q = aug.qr().q();
        let c = q.columns(s, n - s).into_owned();
        let mut k = model.h0[l].clone();
        for i in 0..n {
            k[(i, i)] += vh[i] - mu;
        }
        let b = c.transpose() * &k * &c;
        let a = c.transpose() * &zs[l] * &c;
        let Some(ch) = ((&b + b.transpose()) * 0.5).cholesky() else {
            debug!("reseed: k − μ not positive on the complement of channel {l}");
            continue;
        };
        let linv_a = ch.l().solve_lower_triangular(&((&a + a.transpose()) * 0.5));
        let Some(linv_a) = linv_a else { continue };
        let lal = ch
            .l()
            .solve_lower_triangular(&linv_a.transpose())
            .map(|m| (&m + m.transpose()) * 0.5);
        let Some(lal) = lal else { continue };
        let (_, vecs) = sorted_eigen(&lal);
        let w = weak.len();
        let top = vecs.columns(vecs.ncols() - w, w).into_owned();
        let Some(back) = ch.l().transpose().solve_upper_triangular(&top) else { continue };
        // Largest generalized eigenvalues first.
        let mut cols = DMatrix::<f64>::zeros(n, w);
        for j in 0..w {
            cols.set_column(j, &(&c * back.column(w - 1 - j)));
        }
        let mut full = DMatrix::<f64>::zeros(n, m);
        for (c_i, &a) in strong.iter().enumerate() {
            full.set_column(c_i, &u.column(a));
        }
        for j in 0..w {
            full.set_column(s + j, &cols.column(j));
        }
        let onb = orthonormalize(full);
        let mut new_u = u.clone();
        for (c_i, &a) in strong.iter().enumerate() {
            new_u.set_column(a, &onb.column(c_i));
        }
        for (j, &a) in weak.iter().enumerate() {
            new_u.set_column(a, &onb.column(s + j));
        }
        out.u[l] = new_u;
    }
    out
}

/// Starting orbitals: eigenvectors of `h₀` screened by `N−1` electrons in a
/// hydrogen-like 1s cloud; occupations by Aufbau filling.
fn initial_state(model: &Model, config: &SolverConfig) -> State {
    let r = model.grid.nodes();
    let z = config.z;
    let screen = (config.n_electrons - 1.0).max(0.0);
    let nb = config.bands;
    let mut levels = Vec::new();
    let mut u = Vec::new();
    for l in 0..=config.l_max {
        let mut h = model.h0[l].clone();
        for (i, &ri) in r.iter().enumerate() {
            h[(i, i)] += screen * (1.0 / ri - (-2.0 * z * ri).exp() * (z + 1.0 / ri));
        }
        let (ev, v) = sorted_eigen(&h);
        for (a, e) in ev.iter().take(nb).enumerate() {
            levels.push((*e, l, a));
        }
        u.push(v.columns(0, nb).into_owned());
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut lam = vec![vec![0.0; nb]; config.l_max + 1];
    let mut left = config.n_electrons;
    for (_, l, a) in levels {
        if left <= 0.0 {
            break;
        }
        let d = model.degeneracy(l);
        let take = (left / d).min(1.0);
        lam[l][a] = take;
        left -= take * d;
    }
    State { u, lam }
}

fn occupation_pass(
    model: &Model,
    st: &State,
    config: &SolverConfig,
    iterations: usize,
    tol: f64,
) -> Result<(State, f64, Vec<f64>)> {
    let om = model.occupation_model(st)?;
    let (lam, _) = optimize_occupations(
        &om,
        &st.flat_lam(),
        config.n_electrons,
        config.occupation_method,
        config.occupation_step,
        iterations,
        tol,
    )?;
    let mut out = st.clone();
    out.set_flat_lam(&lam);
    let g = om.gradient(&lam);
    let e = model.energy(&out);
    Ok((out, e, g))
}

/// Minimizes the Müller functional from Aufbau starting orbitals.
pub fn solve(config: &SolverConfig) -> Result<(DensityMatrix1P, ConvergenceReport)> {
    solve_from(config, None, Vec::new())
}

/// Minimizes from an optional warm start, continuing `history`.
pub fn solve_from(
    config: &SolverConfig,
    start: Option<&DensityMatrix1P>,
    mut history: Vec<f64>,
) -> Result<(DensityMatrix1P, ConvergenceReport)> {
    config.validate()?;
    let grid = Arc::new(config.grid.build()?);
    let (model, mut st) = match start {
        Some(g) => {
            if g.grid().spec() != &config.grid {
                return Err(Error::Parameter("warm start grid differs from the configured grid".into()));
            }
            let model = Model::new(grid, config.z, g.q(), g.l_max());
            let st = model.from_gamma(g);
            (model, st)
        }
        None => {
            let model = Model::new(grid, config.z, config.q, config.l_max);
            let st = initial_state(&model, config);
            (model, st)
        }
    };
    let (s, mut e, mut g) = occupation_pass(&model, &st, config, 200, 1e-15)?;
    st = s;
    if let Some(&last) = history.last() {
        if e > last + 1e-12 {
            debug!("warm start energy {e} above recorded {last}");
        }
    }
    history.push(e);
    info!("initial energy {e:.12}");

    let mut quiet = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut seeds_left = if start.is_some() { 0 } else { config.seed_rounds };
    while iterations < config.max_outer {
        iterations += 1;
        let lam = st.flat_lam();
        let mu = extract_mu(&lam, &g);
        if seeds_left > 0 && (iterations - 1) % 3 == 0 {
            seeds_left -= 1;
            let seeded = reseed_weak_orbitals(&model, &st, mu);
            let (s2, e2, _) = occupation_pass(&model, &seeded, config, 200, 1e-15)?;
            if e2 < e - 1e-10 {
                debug!("reseed accepted: {e:.10} -> {e2:.10}");
                st = s2;
                e = e2;
            } else {
                seeds_left = 0;
            }
        }
        let step = orbital_step(&model, &st, config.mixing);
        let (s, e_new, g_new) = occupation_pass(&model, &step.state, config, 200, 1e-15)?;
        last_change = e - e_new;
        st = s;
        e = e_new;
        g = g_new;
        history.push(e);
        if iterations % 10 == 0 {
            debug!("iter {iterations}: E = {e:.12}, dE = {last_change:e}, step = {}", step.step);
        }
        if last_change.abs() < config.energy_tol || step.step == 0.0 {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= 3 {
            converged = true;
            break;
        }
    }
    // Final occupation polish at the converged orbitals.
    let (s, e_fin, g_fin) = occupation_pass(&model, &st, config, 2000, 0.0)?;
    if e_fin <= e {
        st = s;
        e = e_fin;
        g = g_fin;
    }
    // Energy differences stall at rounding level well before the gradient
    // equalizes; finish with Newton on the stationarity conditions.
    let om = model.occupation_model(&st)?;
    if let Some(lam) = refine_stationary(&om, &st.flat_lam(), config.n_electrons) {
        let mut s = st.clone();
        s.set_flat_lam(&lam);
        let e_new = model.energy(&s);
        if e_new <= e + 4.0 * f64::EPSILON * e.abs() {
            st = s;
            e = e_new;
            g = om.gradient(&lam);
        }
    }
    if let Some(last) = history.last_mut() {
        *last = (*last).min(e);
    }
    let lam = st.flat_lam();
    let mu = extract_mu(&lam, &g);
    let interior: Vec<usize> = (0..lam.len())
        .filter(|&a| lam[a] > 1e3 * OCCUPATION_FLOOR && lam[a] < 1.0 - PINNED_TOL)
        .collect();
    let dev = interior.iter().map(|&a| (g[a] - mu).abs()).fold(0.0, f64::max);
    let spread = if interior.len() > 1 {
        let var = interior.iter().map(|&a| (g[a] - mu).powi(2)).sum::<f64>() / interior.len() as f64;
        var.sqrt()
    } else {
        0.0
    };
    let residuals = residuals_of_state(&model, &st, mu);
    info!("final energy {e:.12} after {iterations} iterations, μ = {mu:.8}");
    let report = ConvergenceReport {
        schema_version: 1,
        converged,
        iterations,
        final_energy: e,
        energy_history: history,
        occupation_gradient_norm: dev,
        occupation_gradient_spread: spread,
        chemical_potential: mu,
        residuals,
        l_max: st.u.len() - 1,
        bands: st.u.iter().map(|u| u.ncols()).max().unwrap_or(0),
    };
    let gamma = model.to_gamma(&st);
    if converged {
        Ok((gamma, report))
    } else {
        Err(Error::Convergence {
            iterations,
            last_change,
            best: Box::new((gamma, report)),
        })
    }
}

/// Common occupation-gradient value over the interior subshells of `γ`.
pub fn chemical_potential(gamma: &DensityMatrix1P, z: f64) -> Result<f64> {
    let table = slater_integrals(gamma, 2 * gamma.l_max())?;
    let om = OccupationModel::from_gamma(gamma, &table, z)?;
    let lam = gamma.occupations();
    Ok(extract_mu(&lam, &om.gradient(&lam)))
}

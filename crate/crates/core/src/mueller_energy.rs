//! One-particle density matrices in natural-orbital form and the terms of
//! the Müller energy
//! `E(γ) = tr(−½Δγ) − tr(Vγ) + D(ρ_γ, ρ_γ) − X(γ^{1/2})`.
//!
//! A spherically symmetric γ is stored as radial subshells `(ℓ, n, λ, u)`;
//! each subshell stands for the `d_ℓ = q(2ℓ+1)` spin-orbitals
//! `u(r)/r · Y_ℓm · χ_σ`, all with occupation `λ`.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial_core::{kinetic_matrix, GridSpec, MultipoleKernel, RadialGrid};

/// Tolerance on the orthonormality of orbitals in a channel.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// A radial natural orbital with its occupation.
#[derive(Clone, Debug, PartialEq)]
pub struct Subshell {
    pub l: usize,
    /// Band index within the channel, starting at 0.
    pub n: usize,
    pub lambda: f64,
    /// Reduced radial function at the grid nodes, `Σ m_i u_i² = 1`.
    pub u: Vec<f64>,
}

/// Spherically symmetric 1-pdm: channels `ℓ = 0, 1, …`, each a list of
/// subshells ordered by band index.
#[derive(Clone, Debug)]
pub struct DensityMatrix1P {
    grid: Arc<RadialGrid>,
    q: usize,
    channels: Vec<Vec<Subshell>>,
}

impl DensityMatrix1P {
    pub fn new(grid: Arc<RadialGrid>, q: usize) -> Self {
        DensityMatrix1P {
            grid,
            q,
            channels: Vec::new(),
        }
    }

    /// Appends a subshell to channel `ℓ`; its band index is assigned.
    pub fn push(&mut self, l: usize, lambda: f64, u: Vec<f64>) -> Result<()> {
        if u.len() != self.grid.n_points() {
            return Err(Error::Data(format!(
                "orbital has {} samples, grid has {}",
                u.len(),
                self.grid.n_points()
            )));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Data(format!("occupation {lambda} outside [0, 1]")));
        }
        while self.channels.len() <= l {
            self.channels.push(Vec::new());
        }
        let n = self.channels[l].len();
        self.channels[l].push(Subshell { l, n, lambda, u });
        Ok(())
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn channels(&self) -> &[Vec<Subshell>] {
        &self.channels
    }
    pub fn channels_mut(&mut self) -> &mut [Vec<Subshell>] {
        &mut self.channels
    }
    pub fn l_max(&self) -> usize {
        self.channels.len().saturating_sub(1)
    }
    pub fn degeneracy(&self, l: usize) -> usize {
        self.q * (2 * l + 1)
    }

    /// Subshells in `(ℓ, n)` order.
    pub fn subshells(&self) -> impl Iterator<Item = &Subshell> {
        self.channels.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn occupations(&self) -> Vec<f64> {
        self.subshells().map(|s| s.lambda).collect()
    }

    pub fn degeneracies(&self) -> Vec<f64> {
        self.subshells().map(|s| self.degeneracy(s.l) as f64).collect()
    }

    pub fn set_occupations(&mut self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.len() {
            return Err(Error::Internal("occupation vector length mismatch".into()));
        }
        for (s, &l) in self.channels.iter_mut().flatten().zip(lambda) {
            s.lambda = l;
        }
        Ok(())
    }

    /// `tr γ = Σ d_ℓ λ`.
    pub fn trace(&self) -> f64 {
        self.subshells()
            .map(|s| self.degeneracy(s.l) as f64 * s.lambda)
            .sum()
    }

    /// Largest deviation of the channel Gram matrices from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.grid.metric();
        let mut worst = 0.0f64;
        for ch in &self.channels {
            for a in ch {
                for b in ch {
                    let s: f64 = a.u.iter().zip(&b.u).zip(m).map(|((x, y), w)| x * y * w).sum();
                    let target = if a.n == b.n { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).abs());
                }
            }
        }
        worst
    }

    /// Occupations in `[0, 1]` and orthonormal channels.
    pub fn validate(&self) -> Result<()> {
        for s in self.subshells() {
            if !(0.0..=1.0).contains(&s.lambda) {
                return Err(Error::Data(format!(
                    "occupation {} of subshell (ℓ={}, n={}) outside [0, 1]",
                    s.lambda, s.l, s.n
                )));
            }
        }
        let e = self.orthonormality_error();
        if e > ORTHONORMALITY_TOL {
            return Err(Error::Data(format!("orbitals not orthonormal (error {e:e})")));
        }
        Ok(())
    }

    /// Single subshell holding `λ`, convenient for tests and examples.
    pub fn rank_one(grid: Arc<RadialGrid>, q: usize, l: usize, lambda: f64, u: Vec<f64>) -> Result<Self> {
        let mut g = DensityMatrix1P::new(grid, q);
        g.push(l, lambda, u)?;
        Ok(g)
    }
}

/// Hydrogen-like `1s` reduced radial function `2 Z^{3/2} r e^{−Zr}` sampled
/// on a grid and renormalized in the discrete metric.
pub fn hydrogenic_1s(grid: &RadialGrid, z: f64) -> Vec<f64> {
    let mut u: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| 2.0 * z.powf(1.5) * r * (-z * r).exp())
        .collect();
    let norm: f64 = u.iter().zip(grid.metric()).map(|(u, m)| u * u * m).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    u
}

/// Radial density `ρ(r)` (particles per volume) on a grid.
#[derive(Clone, Debug)]
pub struct Density {
    grid: Arc<RadialGrid>,
    rho: Vec<f64>,
}

impl Density {
    pub fn new(grid: Arc<RadialGrid>, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.n_points() {
            return Err(Error::Data("density length differs from grid".into()));
        }
        Ok(Density { grid, rho })
    }

    /// Samples an analytic density.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let rho = grid.nodes().iter().map(|&r| f(r)).collect();
        Density { grid, rho }
    }

    pub fn zero(grid: Arc<RadialGrid>) -> Self {
        let n = grid.n_points();
        Density { grid, rho: vec![0.0; n] }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    /// `4πr²ρ(r)` at the nodes.
    pub fn radial_charge(&self) -> Vec<f64> {
        self.grid
            .nodes()
            .iter()
            .zip(&self.rho)
            .map(|(r, rho)| 4.0 * PI * r * r * rho)
            .collect()
    }

    /// `∫ρ dx`.
    pub fn charge(&self) -> f64 {
        self.grid.integrate(&self.radial_charge())
    }

    pub fn scaled(&self, c: f64) -> Density {
        Density {
            grid: self.grid.clone(),
            rho: self.rho.iter().map(|v| v * c).collect(),
        }
    }
}

/// `ρ(r) = Σ d_ℓ λ u(r)² / (4πr²)`.
pub fn density_from_gamma(gamma: &DensityMatrix1P) -> Density {
    let grid = gamma.grid().clone();
    let r = grid.nodes();
    let mut rho = vec![0.0; r.len()];
    for s in gamma.subshells() {
        let c = gamma.degeneracy(s.l) as f64 * s.lambda;
        if c == 0.0 {
            continue;
        }
        for (i, u) in s.u.iter().enumerate() {
            rho[i] += c * u * u / (4.0 * PI * r[i] * r[i]);
        }
    }
    Density { grid, rho }
}

/// `D(ρ, ρ) = ½ ∫ 4πr²ρ v_H dr`.
pub fn direct_energy(rho: &Density) -> f64 {
    let f = rho.radial_charge();
    0.5 * MultipoleKernel::new(rho.grid(), 0).bilinear(&f, &f)
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `(ℓ_a ℓ_b k; 0 0 0)²`.
pub fn wigner3j_squared(la: usize, lb: usize, k: usize) -> f64 {
    let j = la + lb + k;
    if j % 2 == 1 || k > la + lb || la > lb + k || lb > la + k {
        return 0.0;
    }
    let g = j / 2;
    let ln = ln_factorial(j - 2 * la) + ln_factorial(j - 2 * lb) + ln_factorial(j - 2 * k)
        - ln_factorial(j + 1)
        + 2.0 * (ln_factorial(g) - ln_factorial(g - la) - ln_factorial(g - lb) - ln_factorial(g - k));
    ln.exp()
}

/// Multipole integrals of the subshells of one γ.
///
/// `exchange(a, b, k) = R^k_ab = ⟨u_a u_b | r_<^k/r_>^{k+1} | u_a u_b⟩` and
/// `direct(a, b) = F⁰_ab = ⟨u_a² | 1/r_> | u_b²⟩`, with subshells indexed in
/// `(ℓ, n)` order.
#[derive(Clone, Debug)]
pub struct SlaterTable {
    labels: Vec<(usize, usize)>,
    k_max: usize,
    rk: Vec<Option<f64>>,
    f0: DMatrix<f64>,
}

impl SlaterTable {
    pub fn labels(&self) -> &[(usize, usize)] {
        &self.labels
    }
    pub fn k_max(&self) -> usize {
        self.k_max
    }
    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `R^k_ab`, if the pair couples through `k`.
    pub fn exchange(&self, a: usize, b: usize, k: usize) -> Option<f64> {
        let m = self.labels.len();
        if a >= m || b >= m || k > self.k_max {
            return None;
        }
        self.rk[(a * m + b) * (self.k_max + 1) + k]
    }

    pub fn direct(&self, a: usize, b: usize) -> f64 {
        self.f0[(a, b)]
    }

    pub fn direct_matrix(&self) -> &DMatrix<f64> {
        &self.f0
    }

    /// `K_ab = (2ℓ_a+1)(2ℓ_b+1) Σ_k (ℓ_a ℓ_b k;000)² R^k_ab`, so that
    /// `X(γ^{1/2}) = (q/2) Σ_ab √λ_a √λ_b K_ab`.
    pub fn exchange_couplings(&self) -> Result<DMatrix<f64>> {
        let m = self.labels.len();
        let mut out = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let (la, lb) = (self.labels[a].0, self.labels[b].0);
                let mut s = 0.0;
                for k in la.abs_diff(lb)..=la + lb {
                    let g = wigner3j_squared(la, lb, k);
                    if g == 0.0 {
                        continue;
                    }
                    let r = self.exchange(a, b, k).ok_or_else(|| {
                        Error::Internal(format!("missing R^{k} for subshells {a}, {b}"))
                    })?;
                    s += g * r;
                }
                out[(a, b)] = ((2 * la + 1) * (2 * lb + 1)) as f64 * s;
            }
        }
        Ok(out)
    }
}

/// All `R^k_ab` for `k ≤ k_max` allowed by the 3j selection rule, plus `F⁰_ab`.
pub fn slater_integrals(gamma: &DensityMatrix1P, k_max: usize) -> Result<SlaterTable> {
    let l_max = gamma.l_max();
    if k_max < 2 * l_max {
        return Err(Error::Parameter(format!("k_max = {k_max} < 2 ℓ_max = {}", 2 * l_max)));
    }
    let grid = gamma.grid();
    let kernels: Vec<MultipoleKernel> = (0..=k_max).map(|k| MultipoleKernel::new(grid, k)).collect();
    let subs: Vec<&Subshell> = gamma.subshells().collect();
    let labels: Vec<(usize, usize)> = subs.iter().map(|s| (s.l, s.n)).collect();
    let m = subs.len();
    let metric = grid.metric();
    let rows: Vec<Vec<Option<f64>>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let mut row = vec![None; m * (k_max + 1)];
            for b in 0..m {
                let (la, lb) = (subs[a].l, subs[b].l);
                let f: Vec<f64> = subs[a].u.iter().zip(&subs[b].u).map(|(x, y)| x * y).collect();
                for k in (la.abs_diff(lb)..=(la + lb).min(k_max)).step_by(2) {
                    let y = kernels[k].potential(&f);
                    let v: f64 = f.iter().zip(&y).zip(metric).map(|((f, y), w)| f * y * w).sum();
                    row[b * (k_max + 1) + k] = Some(v);
                }
            }
            row
        })
        .collect();
    let rk = rows.into_iter().flatten().collect();
    let dens: Vec<Vec<f64>> = subs.iter().map(|s| s.u.iter().map(|u| u * u).collect()).collect();
    let pots: Vec<Vec<f64>> = dens.par_iter().map(|f| kernels[0].apply(f)).collect();
    let mut f0 = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            f0[(a, b)] = dens[a].iter().zip(&pots[b]).map(|(x, y)| x * y).sum();
        }
    }
    let f0 = (&f0 + f0.transpose()) * 0.5;
    Ok(SlaterTable {
        labels,
        k_max,
        rk,
        f0,
    })
}

/// `X(γ^{1/2}) = (q/2) Σ_ab √λ_a √λ_b K_ab`.
pub fn exchange_energy(gamma: &DensityMatrix1P, table: &SlaterTable) -> Result<f64> {
    if table.len() != gamma.len() {
        return Err(Error::Internal(format!(
            "table covers {} subshells, γ has {}",
            table.len(),
            gamma.len()
        )));
    }
    let k = table.exchange_couplings()?;
    let x: Vec<f64> = gamma.occupations().iter().map(|l| l.max(0.0).sqrt()).collect();
    let mut s = 0.0;
    for a in 0..x.len() {
        for b in 0..x.len() {
            s += x[a] * x[b] * k[(a, b)];
        }
    }
    Ok(0.5 * gamma.q() as f64 * s)
}

/// Kinetic plus nuclear energy `Σ d_ℓ λ ⟨u|−½Δ_ℓ − Z/r|u⟩`.
pub fn one_body_energy(gamma: &DensityMatrix1P, z: f64) -> f64 {
    let grid = gamma.grid();
    let sw = grid.sqrt_metric();
    let r = grid.nodes();
    let mut e = 0.0;
    for (l, ch) in gamma.channels().iter().enumerate() {
        if ch.iter().all(|s| s.lambda == 0.0) {
            continue;
        }
        let t = kinetic_matrix(grid, l).matrix;
        for s in ch {
            if s.lambda == 0.0 {
                continue;
            }
            let ut = nalgebra::DVector::from_iterator(sw.len(), s.u.iter().zip(&sw).map(|(u, w)| u * w));
            let kin = (t.transpose() * &ut).dot(&ut);
            let pot: f64 = (0..r.len()).map(|i| -z / r[i] * ut[i] * ut[i]).sum();
            e += gamma.degeneracy(l) as f64 * s.lambda * (kin + pot);
        }
    }
    e
}

/// Breakdown of the Müller energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub one_body: f64,
    pub direct: f64,
    pub exchange: f64,
    pub total: f64,
}

pub fn energy_terms(gamma: &DensityMatrix1P, z: f64) -> Result<EnergyTerms> {
    let one_body = one_body_energy(gamma, z);
    let direct = direct_energy(&density_from_gamma(gamma));
    let table = slater_integrals(gamma, 2 * gamma.l_max())?;
    let exchange = exchange_energy(gamma, &table)?;
    Ok(EnergyTerms {
        one_body,
        direct,
        exchange,
        total: one_body + direct - exchange,
    })
}

/// `E(γ) = Σ d λ ⟨u|−½Δ_ℓ − Z/r|u⟩ + D(ρ,ρ) − X(γ^{1/2})`.
pub fn total_energy(gamma: &DensityMatrix1P, z: f64) -> Result<f64> {
    Ok(energy_terms(gamma, z)?.total)
}

/// Legendre polynomials `P_0..=P_lmax` at `t`.
pub(crate) fn legendre(l_max: usize, t: f64) -> Vec<f64> {
    let mut p = vec![1.0; l_max + 1];
    if l_max >= 1 {
        p[1] = t;
    }
    for l in 2..=l_max {
        p[l] = ((2 * l - 1) as f64 * t * p[l - 1] - (l - 1) as f64 * p[l - 2]) / l as f64;
    }
    p
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `u(r)/r`, with the `r → 0` limit taken from the first node.
fn radial_value(grid: &RadialGrid, u: &[f64], l: usize, r: f64) -> Result<f64> {
    if r < 1e-300 {
        return Ok(if l == 0 { u[0] / grid.nodes()[0] } else { 0.0 });
    }
    Ok(grid.interpolate(u, l, r)? / r)
}

/// One spin block of the kernel of `γ^{1/2}`:
/// `Φ(x, y) = Σ √λ (2ℓ+1)/(4π) u(r)u(s)/(rs) P_ℓ(x̂·ŷ)`.
pub fn sqrt_kernel_slice(gamma: &DensityMatrix1P, x: [f64; 3], ys: &[[f64; 3]]) -> Result<Vec<f64>> {
    let grid = gamma.grid();
    let rx = norm3(&x);
    let l_max = gamma.l_max();
    let subs: Vec<&Subshell> = gamma.subshells().filter(|s| s.lambda > 0.0).collect();
    let ax: Vec<f64> = subs
        .iter()
        .map(|s| radial_value(grid, &s.u, s.l, rx))
        .collect::<Result<_>>()?;
    ys.iter()
        .map(|y| {
            let ry = norm3(y);
            let t = if rx > 0.0 && ry > 0.0 {
                ((x[0] * y[0] + x[1] * y[1] + x[2] * y[2]) / (rx * ry)).clamp(-1.0, 1.0)
            } else {
                1.0
            };
            let p = legendre(l_max, t);
            let mut acc = 0.0;
            for (s, a) in subs.iter().zip(&ax) {
                let b = radial_value(grid, &s.u, s.l, ry)?;
                acc += s.lambda.sqrt() * (2 * s.l + 1) as f64 / (4.0 * PI) * a * b * p[s.l];
            }
            Ok(acc)
        })
        .collect()
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubshellRecord {
    pub l: usize,
    pub n: usize,
    pub lambda: f64,
    pub u: Vec<f64>,
}

/// Versioned on-disk form of a solved (or trial) state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub units: String,
    pub grid: GridSpec,
    pub q: usize,
    pub z: f64,
    pub n_electrons: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chemical_potential: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energy_history: Vec<f64>,
    pub subshells: Vec<SubshellRecord>,
}

pub const UNITS_NOTE: &str = "Hartree atomic units (energies in Hartree, lengths in Bohr)";

impl Checkpoint {
    pub fn from_gamma(gamma: &DensityMatrix1P, z: f64, n_electrons: f64) -> Self {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            units: UNITS_NOTE.to_string(),
            grid: gamma.grid().spec().clone(),
            q: gamma.q(),
            z,
            n_electrons,
            chemical_potential: None,
            energy_history: Vec::new(),
            subshells: gamma
                .subshells()
                .map(|s| SubshellRecord {
                    l: s.l,
                    n: s.n,
                    lambda: s.lambda,
                    u: s.u.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the grid and the density matrix.
    pub fn to_gamma(&self) -> Result<DensityMatrix1P> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        let grid = Arc::new(self.grid.build()?);
        let mut g = DensityMatrix1P::new(grid, self.q);
        let mut recs: Vec<&SubshellRecord> = self.subshells.iter().collect();
        recs.sort_by_key(|s| (s.l, s.n));
        for s in recs {
            let expected = g.channels().get(s.l).map_or(0, Vec::len);
            if s.n != expected {
                return Err(Error::Checkpoint(format!(
                    "band indices of channel ℓ={} are not contiguous",
                    s.l
                )));
            }
            g.push(s.l, s.lambda, s.u.clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        g.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&s)
    }
}

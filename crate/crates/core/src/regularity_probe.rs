//! Finite-difference regularity exponents of the kernel of `γ^{1/2}` and of
//! its Jastrow-corrected form along one-dimensional slices.
//!
//! For a function with Besov regularity `B^s_{2,∞}` on a line, the `l`-th
//! difference satisfies `‖Δ_h^{(l)}u‖ ~ |h|^s` as long as `l > s`. The
//! exponent is read off as the log-log slope of the unweighted seminorm over
//! a log-spaced set of steps.
//!
//! A slice that crosses a codimension-3 singular set (the diagonal `x = y`
//! in six dimensions) sees the six-dimensional exponent lowered by one: a
//! singularity `|x−y|^β` has exponent `β + 3/2` in the full space and
//! `β + 1/2` on a transverse line.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mueller_energy::{sqrt_kernel_slice, DensityMatrix1P, UNITS_NOTE};

pub const PROBE_SCHEMA_VERSION: u32 = 1;
/// Difference order, above every exponent of interest.
pub const DIFFERENCE_ORDER: usize = 4;
/// Exponents at or above this value are reported as capped.
pub const EXPONENT_CAP: f64 = 3.5;
/// Offset between the exponent on a transverse line and in six dimensions.
pub const SLICE_TO_FULL_OFFSET: f64 = 1.0;

/// Coefficients `a₅..a₉` of `g(s) = s + Σ a_i s^i` with `g(1) = 1` and
/// `g^{(k)}(1) = 0` for `k = 1..4`.
fn blend_coefficients() -> &'static [f64; 5] {
    static COEF: OnceLock<[f64; 5]> = OnceLock::new();
    COEF.get_or_init(|| {
        // Row k: k-th derivative of s^i at s = 1 is i!/(i−k)!.
        let falling = |i: usize, k: usize| -> f64 { (0..k).map(|j| (i - j) as f64).product() };
        let a = DMatrix::from_fn(5, 5, |k, c| falling(c + 5, k));
        let rhs = DVector::from_vec(vec![0.0, -1.0, 0.0, 0.0, 0.0]);
        let x = a.lu().solve(&rhs).expect("nonsingular blend system");
        [x[0], x[1], x[2], x[3], x[4]]
    })
}

/// Cutoff `θ`: equal to `t` on `[−½, ½]`, to 1 for `|t| ≥ 1`, and a
/// degree-9 polynomial on `½ < |t| < 1` matching four derivatives at both
/// ends. Even in `t`.
pub fn theta(t: f64) -> f64 {
    let a = t.abs();
    // θ is odd on [−½, ½] (θ(t) = t) but F only uses θ(|·|) ≥ 0.
    if a <= 0.5 {
        return t;
    }
    if a >= 1.0 {
        return 1.0;
    }
    let s = 2.0 * (a - 0.5);
    let c = blend_coefficients();
    let mut g = s;
    let mut p = s.powi(5);
    for ci in c {
        g += ci * p;
        p *= s;
    }
    0.5 + 0.5 * g
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JastrowSpec {
    pub z: f64,
}

impl JastrowSpec {
    pub fn new(z: f64) -> Self {
        JastrowSpec { z }
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `F(x, y) = −Z θ(|x|) − Z θ(|y|) − ½ θ(|x−y|)`.
pub fn jastrow_factor(x: [f64; 3], y: [f64; 3], spec: &JastrowSpec) -> f64 {
    -spec.z * theta(norm3(x)) - spec.z * theta(norm3(y)) - 0.5 * theta(norm3(sub3(x, y)))
}

/// Uniform samples `u(t₀ + i·dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSamples {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl LineSamples {
    pub fn from_fn(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let dt = (t1 - t0) / (n - 1) as f64;
        LineSamples {
            t0,
            dt,
            values: (0..n).map(|i| f(t0 + i as f64 * dt)).collect(),
        }
    }

    pub fn length(&self) -> f64 {
        self.dt * (self.values.len().saturating_sub(1)) as f64
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `‖Δ_h^{(l)}u‖ / |h|^s` along the line. Only `l > s` measures Besov
/// regularity, but any `s` is accepted so that the blow-up for `s ≥ l` can be
/// observed.
///
/// The step is rounded to a multiple of the sample spacing. The `L²` norm is
/// the root-mean-square of the difference over the points where it is
/// defined, scaled by the full slice length, so polynomials of degree `< l`
/// give exactly `0` and degree `l` an `h`-independent value.
pub fn finite_difference_seminorm(samples: &LineSamples, h: f64, l: usize, s: f64) -> Result<f64> {
    if l == 0 {
        return Err(Error::Parameter("difference order must be positive".into()));
    }
    if h < samples.dt * (1.0 - 1e-9) {
        return Err(Error::Resolution { h, spacing: samples.dt });
    }
    let j = (h / samples.dt).round() as usize;
    let n = samples.values.len();
    if l * j >= n {
        return Err(Error::Parameter(format!("step {h} too long for the slice")));
    }
    let coef: Vec<f64> = (0..=l)
        .map(|i| if (l - i) % 2 == 0 { 1.0 } else { -1.0 } * binomial(l, i))
        .collect();
    let count = n - l * j;
    let sum: f64 = (0..count)
        .map(|z| {
            let d: f64 = coef.iter().enumerate().map(|(i, c)| c * samples.values[z + i * j]).sum();
            d * d
        })
        .sum();
    let hh = j as f64 * samples.dt;
    let norm = (samples.length() * sum / count as f64).sqrt();
    Ok(norm / hh.powf(s))
}

/// Default step multiples: 12 log-spaced values from 2 spacings up to an
/// `l`-th of a quarter of the slice.
pub fn default_steps(samples: &LineSamples, l: usize) -> Vec<usize> {
    let n = samples.values.len();
    let j_max = ((n - 1) / (4 * l)).max(3);
    let (a, b) = (2f64.ln(), (j_max as f64).ln());
    let mut v: Vec<usize> = (0..12)
        .map(|i| (a + (b - a) * i as f64 / 11.0).exp().round() as usize)
        .collect();
    v.dedup();
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub h: Vec<f64>,
    /// `‖Δ_h^{(l)}u‖` at each step (candidate `s = 0`).
    pub norms: Vec<f64>,
    /// `(s, S(h))` for the candidate exponents 1.5, 2.5 and 3.5.
    pub candidates: Vec<(f64, Vec<f64>)>,
    pub s_hat: f64,
    /// Extremes of the slopes between neighbouring steps.
    pub band: (f64, f64),
    pub capped: bool,
}

/// Exponent from the log-log slope of `‖Δ_h^{(l)}u‖` in `h`.
pub fn estimate_exponent(samples: &LineSamples, l: usize, steps: &[usize]) -> Result<ExponentEstimate> {
    if steps.len() < 3 {
        return Err(Error::Parameter("need at least 3 steps".into()));
    }
    let h: Vec<f64> = steps.iter().map(|&j| j as f64 * samples.dt).collect();
    if h[h.len() - 1] / h[0] < 100.0 * (1.0 - 1e-9) {
        return Err(Error::Parameter(format!(
            "steps span {:.2} decades, need 2",
            (h[h.len() - 1] / h[0]).log10()
        )));
    }
    let norms: Vec<f64> = h
        .iter()
        .map(|&hh| finite_difference_seminorm(samples, hh, l, 0.0))
        .collect::<Result<_>>()?;
    let floor = norms.iter().cloned().fold(0.0f64, f64::max) * 1e-300;
    let lx: Vec<f64> = h.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|n| n.max(floor).max(1e-300).ln()).collect();
    let nn = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / nn;
    let my = ly.iter().sum::<f64>() / nn;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let raw = sxy / sxx;
    let local: Vec<f64> = (1..lx.len()).map(|i| (ly[i] - ly[i - 1]) / (lx[i] - lx[i - 1])).collect();
    let band = (
        local.iter().cloned().fold(f64::INFINITY, f64::min),
        local.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    // Differences at rounding level mean the slice is constant or polynomial.
    let scale = samples.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * samples.length().sqrt();
    let noise = 1e-11 * binomial(2 * l, l).sqrt() * scale;
    let s_hat = if norms.iter().all(|&n| n <= noise) { l as f64 } else { raw.clamp(0.0, l as f64) };
    let candidates = [1.5, 2.5, 3.5]
        .iter()
        .map(|&s| (s, h.iter().zip(&norms).map(|(h, n)| n / h.powf(s)).collect()))
        .collect();
    Ok(ExponentEstimate {
        h,
        norms,
        candidates,
        s_hat,
        band,
        capped: s_hat >= EXPONENT_CAP,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeTarget {
    /// Kernel of `γ^{1/2}`.
    Phi,
    /// `e^{−F}Φ`.
    Psi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceGeometry {
    /// `y = x₀ + t e`.
    Line,
    /// `y = |x₀|(cos(t/|x₀|) x̂₀ + sin(t/|x₀|) e)` with `e ⊥ x₀`: the
    /// diagonal is crossed at `t = 0` without changing `|y|`.
    Arc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub x0: [f64; 3],
    pub direction: [f64; 3],
    pub geometry: SliceGeometry,
    pub half_length: f64,
    pub samples: usize,
}

impl SliceSpec {
    pub fn point(&self, t: f64) -> [f64; 3] {
        let e = self.direction;
        match self.geometry {
            SliceGeometry::Line => [self.x0[0] + t * e[0], self.x0[1] + t * e[1], self.x0[2] + t * e[2]],
            SliceGeometry::Arc => {
                let r = norm3(self.x0);
                let (c, s) = ((t / r).cos(), (t / r).sin());
                let xh = [self.x0[0] / r, self.x0[1] / r, self.x0[2] / r];
                [r * (c * xh[0] + s * e[0]), r * (c * xh[1] + s * e[1]), r * (c * xh[2] + s * e[2])]
            }
        }
    }
}

/// `count` arc slices at radius `r0` with base points on a golden-angle
/// spiral and directions perpendicular to them. Arcs keep `|y|` fixed, so
/// the piecewise-cubic radial interpolation never enters the differences.
pub fn default_slices(count: usize, r0: f64) -> Vec<SliceSpec> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let zc = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - zc * zc).sqrt();
            let phi = golden * i as f64;
            let xh = [rho * phi.cos(), rho * phi.sin(), zc];
            // Perpendicular direction: normalized cross product with a fixed axis.
            let axis = if zc.abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
            let c = [
                xh[1] * axis[2] - xh[2] * axis[1],
                xh[2] * axis[0] - xh[0] * axis[2],
                xh[0] * axis[1] - xh[1] * axis[0],
            ];
            let cn = norm3(c);
            SliceSpec {
                x0: [r0 * xh[0], r0 * xh[1], r0 * xh[2]],
                direction: [c[0] / cn, c[1] / cn, c[2] / cn],
                geometry: SliceGeometry::Arc,
                half_length: 0.5 * r0,
                samples: 4097,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub slice: SliceSpec,
    pub estimate: ExponentEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub schema_version: u32,
    pub target: ProbeTarget,
    pub difference_order: usize,
    pub slices: Vec<SliceReport>,
    /// Mean slice exponent.
    pub s_hat: f64,
    /// Slice exponent plus the codimension offset.
    pub s_hat_full: f64,
    pub band: (f64, f64),
    pub l_max: usize,
    pub warning: Option<String>,
}

impl RegularityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }

    /// One table per slice: `h` followed by `S(h)` for each candidate.
    pub fn slice_csv(&self, index: usize) -> Option<String> {
        let rep = self.slices.get(index)?;
        let est = &rep.estimate;
        let mut s = format!(
            "# schema_version={PROBE_SCHEMA_VERSION}\n# units: {UNITS_NOTE}; h in Bohr\nh,S_0{}\n",
            est.candidates.iter().map(|(c, _)| format!(",S_{c}")).collect::<String>()
        );
        for (i, h) in est.h.iter().enumerate() {
            let _ = write!(s, "{:e},{:e}", h, est.norms[i]);
            for (_, v) in &est.candidates {
                let _ = write!(s, ",{:e}", v[i]);
            }
            s.push('\n');
        }
        Some(s)
    }
}

/// Samples `Φ(x₀, y(t))` or `e^{−F}Φ` along one slice.
pub fn sample_slice(
    gamma: &DensityMatrix1P,
    spec: &JastrowSpec,
    target: ProbeTarget,
    slice: &SliceSpec,
) -> Result<LineSamples> {
    let n = slice.samples;
    let t0 = -slice.half_length;
    let dt = 2.0 * slice.half_length / (n - 1) as f64;
    let ys: Vec<[f64; 3]> = (0..n).map(|i| slice.point(t0 + i as f64 * dt)).collect();
    let mut values = sqrt_kernel_slice(gamma, slice.x0, &ys)?;
    if target == ProbeTarget::Psi {
        for (v, y) in values.iter_mut().zip(&ys) {
            *v *= (-jastrow_factor(slice.x0, *y, spec)).exp();
        }
    }
    Ok(LineSamples { t0, dt, values })
}

/// Regularity exponents of `Φ` or `Ψ = e^{−F}Φ` along the given slices.
///
/// With a finite angular cutoff `Φ` is analytic in the angle, so arc slices
/// cannot see the diagonal cusp at this resolution; the report then carries
/// a warning.
pub fn probe_kernel_regularity(
    gamma: &DensityMatrix1P,
    spec: &JastrowSpec,
    target: ProbeTarget,
    slices: &[SliceSpec],
) -> Result<RegularityReport> {
    if slices.is_empty() {
        return Err(Error::Parameter("no slices given".into()));
    }
    for s in slices {
        if s.samples < 64 || !(s.half_length > 0.0) {
            return Err(Error::Parameter("slice needs ≥ 64 samples and positive length".into()));
        }
    }
    let reports: Vec<SliceReport> = slices
        .par_iter()
        .map(|s| {
            let samples = sample_slice(gamma, spec, target, s)?;
            let steps = default_steps(&samples, DIFFERENCE_ORDER);
            Ok(SliceReport {
                slice: *s,
                estimate: estimate_exponent(&samples, DIFFERENCE_ORDER, &steps)?,
            })
        })
        .collect::<Result<_>>()?;
    let s_hat = reports.iter().map(|r| r.estimate.s_hat).sum::<f64>() / reports.len() as f64;
    let band = (
        reports.iter().map(|r| r.estimate.band.0).fold(f64::INFINITY, f64::min),
        reports.iter().map(|r| r.estimate.band.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let warning = (target == ProbeTarget::Phi && s_hat >= EXPONENT_CAP).then(|| {
        format!(
            "diagonal cusp unresolved: angular cutoff l_max = {} leaves Φ smooth on the slices",
            gamma.l_max()
        )
    });
    Ok(RegularityReport {
        schema_version: PROBE_SCHEMA_VERSION,
        target,
        difference_order: DIFFERENCE_ORDER,
        slices: reports,
        s_hat,
        s_hat_full: s_hat + SLICE_TO_FULL_OFFSET,
        band,
        l_max: gamma.l_max(),
        warning,
    })
}

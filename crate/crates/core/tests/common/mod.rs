//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use mueller::mueller_energy::DensityMatrix1P;
use mueller::radial_core::{channel_operator, coulomb_attraction, RadialGrid};

/// Exhaustive active-set solution of
/// `min Σ d (λ − raw)²` over `0 ≤ λ ≤ 1`, `Σ d λ = N`.
///
/// Every assignment of the indices to {lower, free, upper} is tried; the
/// feasible candidate of least objective is the optimum because the problem
/// is a strictly convex QP.
pub fn qp_oracle(raw: &[f64], d: &[f64], n: f64) -> Vec<f64> {
    let m = raw.len();
    assert!(m <= 10);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let state: Vec<u8> = (0..m)
            .map(|_| {
                let s = (c % 3) as u8;
                c /= 3;
                s
            })
            .collect();
        let dfree: f64 = (0..m).filter(|&i| state[i] == 1).map(|i| d[i]).sum();
        let upper: f64 = (0..m).filter(|&i| state[i] == 2).map(|i| d[i]).sum();
        let lam: Vec<f64> = if dfree == 0.0 {
            if (upper - n).abs() > 1e-12 {
                continue;
            }
            state.iter().map(|&s| if s == 2 { 1.0 } else { 0.0 }).collect()
        } else {
            let sraw: f64 = (0..m).filter(|&i| state[i] == 1).map(|i| d[i] * raw[i]).sum();
            let tau = (sraw + upper - n) / dfree;
            let lam: Vec<f64> = (0..m)
                .map(|i| match state[i] {
                    0 => 0.0,
                    1 => raw[i] - tau,
                    _ => 1.0,
                })
                .collect();
            if lam.iter().any(|&l| !(-1e-15..=1.0 + 1e-15).contains(&l)) {
                continue;
            }
            lam
        };
        let obj: f64 = (0..m).map(|i| d[i] * (lam[i] - raw[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, lam));
        }
    }
    best.expect("feasible instance").1
}

/// Lowest discrete eigenvector of `−½Δ_ℓ − Z/r` as a reduced radial function.
pub fn discrete_hydrogenic(grid: &RadialGrid, z: f64, l: usize, band: usize) -> (f64, Vec<f64>) {
    let v = coulomb_attraction(z, grid).unwrap();
    let (e, vecs) = channel_operator(grid, l, &v).eigen();
    let sw = grid.sqrt_metric();
    let u = vecs.column(band).iter().zip(&sw).map(|(x, w)| x / w).collect();
    (e[band], u)
}

pub fn discrete_hydrogen_state(grid: Arc<RadialGrid>, z: f64) -> (f64, DensityMatrix1P) {
    let (e, u) = discrete_hydrogenic(&grid, z, 0, 0);
    (e, DensityMatrix1P::rank_one(grid, 1, 0, 1.0, u).unwrap())
}

/// Normalizes `f` sampled at the nodes in the grid metric.
pub fn normalized(g: &RadialGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut u: Vec<f64> = g.nodes().iter().map(|&r| f(r)).collect();
    let n: f64 = u.iter().zip(g.metric()).map(|(u, m)| u * u * m).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= n);
    u
}

/// Modified Gram–Schmidt of a set of sampled functions in the grid metric.
pub fn orthonormal_set(g: &RadialGrid, fs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let m = g.metric();
    let dot = |a: &[f64], b: &[f64]| -> f64 { (0..a.len()).map(|i| a[i] * b[i] * m[i]).sum() };
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut f in fs {
        for q in &out {
            let c = dot(&f, q);
            f.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let n = dot(&f, &f).sqrt();
        f.iter_mut().for_each(|a| *a /= n);
        out.push(f);
    }
    out
}

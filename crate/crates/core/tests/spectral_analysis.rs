mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use common::normalized;
use mueller::mueller_energy::{hydrogenic_1s, Density, DensityMatrix1P};
use mueller::radial_core::{build_grid, channel_operator, coulomb_attraction, GridScheme, GridSpec, RadialGrid};
use mueller::spectral_analysis::{
    chemical_potential_bound, chemical_potential_bound_with, decay_bound, decay_fit, eigenvalue_tail,
    hydrogenic_bound, hydrogenic_n0, predicted_constant, tail_fit, TailWindow,
};
use mueller::Error;
use proptest::prelude::*;

fn grid(n: usize, r_max: f64) -> Arc<RadialGrid> {
    Arc::new(build_grid(n, r_max, GridScheme::LogStretched).unwrap())
}

fn hydrogen_density(g: Arc<RadialGrid>, z: f64) -> Density {
    Density::from_fn(g, move |r| z.powi(3) * (-2.0 * z * r).exp() / PI)
}

#[test]
fn tail_expands_degeneracies() {
    let g = grid(100, 20.0);
    let mut gamma = DensityMatrix1P::new(g.clone(), 1);
    gamma.push(0, 1.0, hydrogenic_1s(&g, 1.0)).unwrap();
    gamma.push(1, 0.5, normalized(&g, |r| r * r * (-r).exp())).unwrap();
    assert_eq!(eigenvalue_tail(&gamma), vec![1.0, 0.5, 0.5, 0.5]);
    assert!(eigenvalue_tail(&DensityMatrix1P::new(g, 2)).is_empty());
}

#[test]
fn hydrogen_prediction_constant() {
    let rho = hydrogen_density(grid(600, 40.0), 1.0);
    let c = predicted_constant(&rho, 1);
    assert_relative_eq!(c, 64.0 * 2f64.sqrt() / (81.0 * PI), max_relative = 1e-7);
    assert!((c - 0.3557).abs() < 1e-4);
    assert_eq!(predicted_constant(&Density::zero(grid(100, 10.0)), 2), 0.0);
}

#[test]
fn prediction_scales_with_charge() {
    let base = predicted_constant(&hydrogen_density(grid(600, 40.0), 1.0), 1);
    for z in [2.0, 5.0] {
        let c = predicted_constant(&hydrogen_density(grid(600, 40.0 / z), z), 1);
        assert_relative_eq!(c, z.powf(-0.75) * base, max_relative = 1e-7);
    }
}

#[test]
fn prediction_is_stable_under_refinement() {
    let coarse = predicted_constant(&hydrogen_density(grid(200, 40.0), 1.0), 1);
    let fine = predicted_constant(&hydrogen_density(grid(800, 40.0), 1.0), 1);
    assert_relative_eq!(coarse, fine, max_relative = 1e-6);
}

fn synthetic(c: f64, n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (1..=n).map(|k| (c / k as f64).powf(8.0 / 3.0) * f(k as f64)).collect()
}

#[test]
fn exact_power_law_is_recovered() {
    let tail = synthetic(0.3557, 400, |_| 1.0);
    let rep = tail_fit(&tail, TailWindow::new(10, 300)).unwrap();
    assert!((rep.slope + 8.0 / 3.0).abs() < 1e-10, "{}", rep.slope);
    assert!((rep.c_hat - 0.3557).abs() < 1e-6);
    assert!(rep.power_law);
}

#[test]
fn perturbed_power_law_extrapolates() {
    let c = 0.42;
    let tail = synthetic(c, 400, |k| 1.0 + 1.0 / k);
    let rep = tail_fit(&tail, TailWindow::new(10, 300)).unwrap();
    assert!(((rep.c_hat - c) / c).abs() < 0.01, "{}", rep.c_hat);
}

#[test]
fn geometric_decay_is_not_a_power_law() {
    let tail: Vec<f64> = (1..=60).map(|k| 0.5f64.powi(k)).collect();
    let rep = tail_fit(&tail, TailWindow::new(5, 50)).unwrap();
    assert!(!rep.power_law);
    assert!((rep.slope + 8.0 / 3.0).abs() > 1.0);
}

#[test]
fn degenerate_plateaus_are_fitted_at_midpoints() {
    // Each value repeated three times: plateau midpoints follow the law.
    let mut tail = Vec::new();
    for p in 0..100 {
        let mid = 3.0 * p as f64 + 2.0;
        tail.extend(std::iter::repeat((0.3 / mid).powf(8.0 / 3.0)).take(3));
    }
    let rep = tail_fit(&tail, TailWindow::new(10, 280)).unwrap();
    assert!((rep.slope + 8.0 / 3.0).abs() < 1e-10);
    assert!((rep.c_hat - 0.3).abs() < 1e-8);
}

#[test]
fn short_window_is_rejected() {
    let tail = synthetic(0.3, 50, |_| 1.0);
    assert!(matches!(tail_fit(&tail, TailWindow::new(10, 15)), Err(Error::Parameter(_))));
    assert!(matches!(tail_fit(&tail, TailWindow::new(10, 60)), Err(Error::Parameter(_))));
}

#[test]
fn default_window() {
    let tail = synthetic(0.3, 100, |_| 1.0);
    let w = TailWindow::default_for(&tail);
    assert_eq!(w.k_hi, 60);
    assert!(tail[w.k_lo - 1] < 1e-2 && tail[w.k_lo - 2] >= 1e-2);
}

#[test]
fn exponential_density_decay() {
    let rho = hydrogen_density(grid(500, 40.0), 1.0);
    let rep = decay_fit(&rho, -1.0).unwrap();
    assert!((rep.kappa_hat - 1.0).abs() < 1e-3, "{}", rep.kappa_hat);
    assert!(rep.applicable);
    assert_eq!(rep.consistent, Some(true));
    assert!(rep.window.1 <= 0.9 * 40.0);
}

#[test]
fn decay_bound_values() {
    assert_relative_eq!(decay_bound(-1.0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
    assert!(decay_bound(-0.4).is_none());
    let rho = hydrogen_density(grid(500, 40.0), 1.0);
    let rep = decay_fit(&rho, -0.4).unwrap();
    assert!(!rep.applicable);
    assert!(rep.consistent.is_none());
}

#[test]
fn decay_needs_enough_points() {
    let g = grid(100, 10.0);
    let rho = Density::from_fn(g, |r| if r < 5.0 { 1.0 } else { 0.0 });
    assert!(decay_fit(&rho, -1.0).is_err());
}

#[test]
fn hydrogenic_shell_filling() {
    assert_eq!(hydrogenic_n0(1.0, 1), 1);
    assert_eq!(hydrogenic_n0(2.0, 1), 2);
    assert_eq!(hydrogenic_n0(10.0, 2), 2);
    assert_relative_eq!(hydrogenic_bound(20.0, 10.0, 2), -100.0 / 8.0, epsilon = 1e-12);
}

proptest! {
    #[test]
    fn shell_filling_matches_brute_force(n in 1usize..=200, q in 1usize..=2) {
        // Fill states one at a time: shell m holds q·m² of them.
        let mut shell = 1;
        let mut left = q;
        for _ in 1..n {
            left -= 1;
            if left == 0 {
                shell += 1;
                left = q * shell * shell;
            }
        }
        prop_assert_eq!(hydrogenic_n0(n as f64, q), shell);
    }
}

#[test]
fn bare_nucleus_lowest_level() {
    let g = build_grid(600, 20.0, GridScheme::LogStretched).unwrap();
    let v = coulomb_attraction(10.0, &g).unwrap();
    let rep = chemical_potential_bound_with(&g, &v, &[], 1, 2, 1).unwrap();
    assert_eq!(rep.sigma_j, channel_operator(&g, 0, &v).eigenvalues()[0]);
    assert!(((rep.sigma_j + 50.0) / 50.0).abs() < 1e-3, "{}", rep.sigma_j);
    assert!(rep.bound < rep.sigma_j);
}

#[test]
fn screened_hydrogenic_bound() {
    let g = GridSpec::new(600, 60.0, GridScheme::LogStretched).build().unwrap();
    let v = coulomb_attraction(2.0, &g).unwrap();
    let rep = chemical_potential_bound_with(&g, &v, &[], 1, 2, 1).unwrap();
    assert!((rep.sigma_j + 2.0).abs() < 1e-4, "{}", rep.sigma_j);
    assert!(rep.bound < -2.0);
    // The witness is the 1s state: its self-repulsion is 5Z/16.
    assert!((rep.self_repulsion - 0.625).abs() < 1e-4);
}

#[test]
fn missing_bound_states_are_reported() {
    let g = build_grid(200, 20.0, GridScheme::LogStretched).unwrap();
    let v: Vec<f64> = g.nodes().iter().map(|r| 1.0 / r).collect();
    assert!(matches!(
        chemical_potential_bound_with(&g, &v, &[], 1, 2, 2),
        Err(Error::SpectralDeficit { found: 0, needed: 1 })
    ));
}

#[test]
fn pinned_orbitals_push_the_witness_up() {
    // Hydrogen-like Z = 3 with 1s pinned (q = 1): the witness is the next level.
    let g = build_grid(600, 40.0, GridScheme::LogStretched).unwrap();
    let v = coulomb_attraction(3.0, &g).unwrap();
    let (_, s1) = common::discrete_hydrogenic(&g, 3.0, 0, 0);
    let rep = chemical_potential_bound_with(&g, &v, &[vec![s1]], 2, 2, 1).unwrap();
    assert!((rep.sigma_j + 9.0 / 8.0).abs() < 1e-4, "{}", rep.sigma_j);
    assert!((rep.witness_energy + 9.0 / 8.0).abs() < 1e-4);
    assert!(rep.bound < rep.sigma_j);
}

#[test]
fn fully_occupied_state_is_flagged_as_truncated() {
    // Two-electron ion with Z = 3: the screened potential still binds.
    let g = grid(400, 40.0);
    let gamma = DensityMatrix1P::rank_one(g.clone(), 2, 0, 1.0, hydrogenic_1s(&g, 3.0)).unwrap();
    let rep = chemical_potential_bound(&gamma, 3.0, 2.0, 2).unwrap();
    assert!(rep.truncated);
    assert_eq!(rep.j, 3);
    assert!(rep.bound < rep.sigma_j);
    assert_eq!(rep.channels_scanned, 3);
}

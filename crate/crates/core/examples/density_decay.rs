//! Exponential decay of the density and the chemical-potential bound for a
//! positive ion: `density_decay [Z N]`.
use mueller::minimizer::{solve, SolverConfig};
use mueller::mueller_energy::density_from_gamma;
use mueller::spectral_analysis::{chemical_potential_bound, decay_bound, decay_fit};

fn main() -> mueller::Result<()> {
    env_logger::init();
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let z = args.first().copied().unwrap_or(3.0);
    let n = args.get(1).copied().unwrap_or(2.0);
    let mut config = SolverConfig::new(z, n, 2);
    config.energy_tol = 1e-10;
    let (gamma, report) = solve(&config)?;
    let mu = report.chemical_potential;
    let decay = decay_fit(&density_from_gamma(&gamma), mu)?;
    println!("mu = {mu:.6} Ha, kappa bound {:?}", decay_bound(mu));
    println!(
        "kappa_hat {:.4} on [{:.2}, {:.2}] Bohr ({} points), consistent {:?}",
        decay.kappa_hat, decay.window.0, decay.window.1, decay.points, decay.consistent
    );
    let bound = chemical_potential_bound(&gamma, z, n, 2)?.with_solver_mu(mu);
    println!(
        "j = {} (truncated {}), sigma_j {:.6}, bound {:.6}, hydrogenic {:.6}",
        bound.j, bound.truncated, bound.sigma_j, bound.bound, bound.hydrogenic_bound
    );
    Ok(())
}

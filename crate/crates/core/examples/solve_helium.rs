//! Ground state of helium in the Müller functional. Set `TOL` to loosen the
//! energy tolerance.
use mueller::minimizer::{solve, SolverConfig};
use mueller::spectral_analysis::eigenvalue_tail;

fn main() -> mueller::Result<()> {
    env_logger::init();
    let mut config = SolverConfig::new(2.0, 2.0, 2);
    if let Ok(t) = std::env::var("TOL") {
        config.energy_tol = t.parse().expect("TOL must be a number");
    }
    let (gamma, report) = solve(&config)?;
    println!("E = {:.10} Ha after {} iterations", report.final_energy, report.iterations);
    println!("mu = {:.6} Ha, max residual {:.2e}", report.chemical_potential, report.residuals.max_residual);
    for s in &report.residuals.subshells {
        println!("l={} n={} lam={:.3e} res={:.2e}", s.l, s.n, s.lambda, s.residual);
    }
    for (k, lam) in eigenvalue_tail(&gamma).iter().take(12).enumerate() {
        println!("{:3} {:.6e}", k + 1, lam);
    }
    Ok(())
}

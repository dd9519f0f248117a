//! Regularity of `Φ = γ^{1/2}` and of `Ψ = e^{−F}Φ` across the diagonal for
//! helium, plus the same estimator on two synthetic singularities.
use mueller::minimizer::{solve, SolverConfig};
use mueller::regularity_probe::{
    default_slices, default_steps, estimate_exponent, probe_kernel_regularity, JastrowSpec, LineSamples, ProbeTarget,
    DIFFERENCE_ORDER,
};

fn main() -> mueller::Result<()> {
    env_logger::init();
    for (name, f) in [
        ("|t|", Box::new(|t: f64| t.abs() * (-t * t).exp()) as Box<dyn Fn(f64) -> f64>),
        ("t|t|", Box::new(|t: f64| t * t.abs() * (-t * t).exp())),
    ] {
        let u = LineSamples::from_fn(-1.0, 1.0, 4097, f);
        let est = estimate_exponent(&u, DIFFERENCE_ORDER, &default_steps(&u, DIFFERENCE_ORDER))?;
        println!("{name}: s_hat {:.3}", est.s_hat);
    }

    let mut config = SolverConfig::new(2.0, 2.0, 2);
    config.energy_tol = 1e-10;
    let (gamma, _) = solve(&config)?;
    let slices = default_slices(4, 0.5f64.sqrt());
    let spec = JastrowSpec::new(2.0);
    for target in [ProbeTarget::Phi, ProbeTarget::Psi] {
        let rep = probe_kernel_regularity(&gamma, &spec, target, &slices)?;
        println!("{target:?}: s_hat {:.3}, full {:.3}", rep.s_hat, rep.s_hat_full);
        if let Some(w) = rep.warning {
            println!("  {w}");
        }
    }
    Ok(())
}

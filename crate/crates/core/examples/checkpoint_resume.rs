//! Solve loosely, write a checkpoint, then resume to a tight tolerance.
use mueller::minimizer::{solve, solve_from, SolverConfig};
use mueller::mueller_energy::Checkpoint;

fn main() -> mueller::Result<()> {
    env_logger::init();
    let mut config = SolverConfig::new(2.0, 2.0, 2);
    config.energy_tol = 1e-5;
    let (gamma, first) = solve(&config)?;
    let path = std::env::temp_dir().join("mueller_helium_checkpoint.json");
    Checkpoint::from_gamma(&gamma, config.z, config.n_electrons).save(&path)?;
    println!("loose: E = {:.10} after {} iterations, saved to {}", first.final_energy, first.iterations, path.display());

    let restored = Checkpoint::load(&path)?.to_gamma()?;
    config.energy_tol = 1e-12;
    let (_, second) = solve_from(&config, Some(&restored), first.energy_history.clone())?;
    println!("tight: E = {:.10} after {} iterations", second.final_energy, second.iterations);
    Ok(())
}

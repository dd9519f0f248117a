//! Natural occupation tail of a solved atom against the `k^{-8/3}` law:
//! `occupation_tail [Z N l_max bands]`.
use mueller::minimizer::{solve, SolverConfig};
use mueller::mueller_energy::density_from_gamma;
use mueller::spectral_analysis::{eigenvalue_tail, predicted_constant, tail_fit, TailWindow};

fn main() -> mueller::Result<()> {
    env_logger::init();
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let z = args.first().copied().unwrap_or(2.0);
    let mut config = SolverConfig::new(z, args.get(1).copied().unwrap_or(z), 2);
    config.l_max = args.get(2).map(|&l| l as usize).unwrap_or(4);
    config.bands = args.get(3).map(|&b| b as usize).unwrap_or(8);
    config.energy_tol = 1e-10;
    let (gamma, report) = solve(&config)?;
    let tail = eigenvalue_tail(&gamma);
    let c_star = predicted_constant(&density_from_gamma(&gamma), gamma.q());
    let window = TailWindow::default_for(&tail);
    println!("E = {:.8} Ha, {} occupations, window {:?}", report.final_energy, tail.len(), window);
    let rep = tail_fit(&tail, window)?.with_prediction(c_star).with_cutoffs(config.l_max, config.bands);
    println!("slope {:.4} (law -8/3), c_hat {:.4}, c* {:.4}, ratio {:?}", rep.slope, rep.c_hat, c_star, rep.ratio);
    print!("{}", rep.to_csv());
    Ok(())
}

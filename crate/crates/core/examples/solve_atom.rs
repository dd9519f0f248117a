//! Solve an arbitrary atom or ion: `solve_atom Z N [l_max bands points r_max]`.
use mueller::minimizer::{solve, SolverConfig};
use mueller::radial_core::{GridScheme, GridSpec};

fn main() -> mueller::Result<()> {
    env_logger::init();
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let z = args.first().copied().unwrap_or(2.0);
    let n = args.get(1).copied().unwrap_or(z);
    let mut config = SolverConfig::new(z, n, 2);
    if let Some(&l) = args.get(2) {
        config.l_max = l as usize;
    }
    if let Some(&b) = args.get(3) {
        config.bands = b as usize;
    }
    let points = args.get(4).map(|&p| p as usize).unwrap_or(config.grid.n_points);
    let r_max = args.get(5).copied().unwrap_or(config.grid.r_max);
    config.grid = GridSpec::new(points, r_max, GridScheme::LogStretched).with_first_node(1e-4 / z);
    let (gamma, report) = solve(&config)?;
    println!("E = {:.10} Ha, mu = {:.6} Ha, {} iterations", report.final_energy, report.chemical_potential, report.iterations);
    println!("max residual {:.2e}", report.residuals.max_residual);
    for (l, ch) in gamma.channels().iter().enumerate() {
        let occ: Vec<String> = ch.iter().map(|s| format!("{:.3e}", s.lambda)).collect();
        println!("l={l}: {}", occ.join(" "));
    }
    Ok(())
}

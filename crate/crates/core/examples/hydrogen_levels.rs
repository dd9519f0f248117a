//! Discrete hydrogen-like levels on the stretched grid against `−Z²/2n²`:
//! `hydrogen_levels [Z points r_max]`.
use mueller::radial_core::{build_grid, channel_operator, coulomb_attraction, GridScheme};

fn main() -> mueller::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let z = args.first().copied().unwrap_or(1.0);
    let points = args.get(1).map(|&p| p as usize).unwrap_or(600);
    let r_max = args.get(2).copied().unwrap_or(60.0 / z);
    let grid = build_grid(points, r_max, GridScheme::LogStretched)?;
    let v = coulomb_attraction(z, &grid)?;
    println!("Z = {z}, {points} points to {r_max} Bohr");
    for l in 0..3 {
        let e = channel_operator(&grid, l, &v).eigenvalues();
        for (i, got) in e.iter().take(3).enumerate() {
            let n = (l + i + 1) as f64;
            let exact = -z * z / (2.0 * n * n);
            println!("l={l} n={n}: {got:.8} (exact {exact:.8}, rel {:.1e})", ((got - exact) / exact).abs());
        }
    }
    Ok(())
}

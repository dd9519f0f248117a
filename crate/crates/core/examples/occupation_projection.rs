//! Projection of raw occupations onto `{0 ≤ λ ≤ 1, Σ d λ = N}`.
use mueller::minimizer::project_occupations;

fn main() -> mueller::Result<()> {
    let d = [2.0, 6.0, 2.0, 10.0];
    for (raw, n) in [
        (vec![1.3, 0.2, 0.1, -0.2], 4.0),
        (vec![0.9, 0.9, 0.9, 0.9], 10.0),
        (vec![0.0, 0.0, 0.0, 0.0], 2.0),
    ] {
        let lam = project_occupations(&raw, &d, n)?;
        let total: f64 = lam.iter().zip(&d).map(|(l, d)| l * d).sum();
        println!("raw {raw:?}, N = {n} -> {lam:.6?} (trace {total:.12})");
    }
    Ok(())
}

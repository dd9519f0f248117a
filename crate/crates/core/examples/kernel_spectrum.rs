//! Singular-value tail of `A(x)|x−y|B(y)` for a Gaussian profile:
//! `kernel_spectrum [n half_width m]`.
use mueller::kernel_oracle::{gaussian_kernel_test, gaussian_prediction, CubicGrid, DEFAULT_POINT_CAP};

fn main() -> mueller::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().map(|a| a.parse().expect("n")).unwrap_or(24);
    let l = args.get(1).map(|a| a.parse().expect("half width")).unwrap_or(6.0);
    let m = args.get(2).map(|a| a.parse().expect("m")).unwrap_or(256);
    let rep = gaussian_kernel_test(CubicGrid::new(n, l), m, DEFAULT_POINT_CAP)?;
    println!("n = {n}, L = {l}: G_hat = {:.4}, grid prediction {:.4}, closed form {:.4}", rep.g_hat, rep.predicted, gaussian_prediction());
    println!("window {:?}, bracket [{:.4}, {:.4}]", rep.window, rep.lower, rep.upper);
    for k in [1, 2, 5, 10, 20, 50, 100, 150, 200, 250] {
        if k <= rep.scaled.len() {
            println!("k = {k:4}: s_k = {:.4e}, k^(4/3) s_k = {:.4}", rep.singular_values[k - 1], rep.scaled[k - 1]);
        }
    }
    Ok(())
}

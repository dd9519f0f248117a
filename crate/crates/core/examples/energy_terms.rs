//! Energy breakdown of a single hydrogenic 1s electron: the direct and
//! exchange terms are both `5Z/16` and cancel.
use std::sync::Arc;

use mueller::mueller_energy::{energy_terms, hydrogenic_1s, DensityMatrix1P};
use mueller::radial_core::{build_grid, GridScheme};

fn main() -> mueller::Result<()> {
    for z in [1.0, 2.0, 5.0] {
        let grid = Arc::new(build_grid(600, 40.0 / z, GridScheme::LogStretched)?);
        let gamma = DensityMatrix1P::rank_one(grid.clone(), 1, 0, 1.0, hydrogenic_1s(&grid, z))?;
        let t = energy_terms(&gamma, z)?;
        println!(
            "Z={z}: one-body {:.8}, D {:.8} (5Z/16 = {:.8}), X {:.8}, E {:.8}",
            t.one_body,
            t.direct,
            5.0 * z / 16.0,
            t.exchange,
            t.total
        );
    }
    Ok(())
}

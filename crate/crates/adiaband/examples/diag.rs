use std::sync::Arc;

use adiaband::config::base_grid;
use adiaband::grid::PhaseSpaceGrid;
use adiaband::harness::{functional_calculus_sweep, magnetic_well_pipeline};
use adiaband::models::magnetic_well::MagneticWellSpec;
use num_rational::Ratio;

fn main() {
    let spec = MagneticWellSpec::radial_well(2);
    let grid = Arc::new(PhaseSpaceGrid::clamped(1.8, 32).unwrap());
    let pipe = magnetic_well_pipeline(spec, grid, 8, Ratio::new(1, 1)).unwrap();
    let base = base_grid(1.8, 128).unwrap();
    let hs = [0.16, 0.113, 0.08, 0.057, 0.04];
    for window in [(0.8, 1.5), (0.8, 1.3), (0.8, 1.2), (0.85, 1.15)] {
        let (rows, comm, range) =
            functional_calculus_sweep(&pipe, &base, &hs, window, 1.0, 1.7).unwrap();
        println!("window {window:?}: comm slope {:.3} range slope {:.3}", comm.slope, range.slope);
        for r in &rows {
            println!("  h={}: comm={:.3e} range={:.3e}", r.h, r.commutator, r.range);
        }
    }
}

//! Fully implicit march to the exact steady state on [0, 1] with a flux
//! condition at x = 0, printing the L2 error under refinement.
//!
//! ```text
//! cargo run --release --example steady_exact -- -1 1 -1
//! ```

use std::sync::Arc;

use meltsim::functions::{SpaceTimeFn, VelocityFn};
use meltsim::linsolve::SolverOptions;
use meltsim::mesh::{generate, refine_global, GridSpec};
use meltsim::pde::{run_unsteady, AmbientProblem, BoundaryCondition, InitialValues};
use meltsim::verify::{exact_steady_1d, l2_error, neumann_steady, observed_order};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (v, alpha, g) = match args[..] {
        [v, a, g] => (v, a, g),
        _ => (-1.0, 1.0, -1.0),
    };
    let base = generate(&GridSpec::interval(0.0, 1.0))?;
    let exact = SpaceTimeFn::native(move |x, _| exact_steady_1d(v, alpha, g, x[0]));
    let mut levels = Vec::new();
    println!("{:>6} {:>12} {:>8}", "cells", "L2 error", "order");
    for cycles in 3..=7 {
        let p = AmbientProblem {
            mesh: Arc::new(refine_global(&base, cycles)?),
            velocity: VelocityFn::Constant([v, 0.0]),
            diffusivity: SpaceTimeFn::Constant(alpha),
            source: SpaceTimeFn::Constant(0.0),
            boundary_conditions: vec![
                BoundaryCondition::Natural(SpaceTimeFn::Constant(neumann_steady(v, alpha, g))),
                BoundaryCondition::Strong(SpaceTimeFn::Constant(g)),
            ],
            initial: InitialValues::Function(SpaceTimeFn::Constant(0.0)),
            theta: 1.0,
            step_size: 0.25,
            start_time: 0.0,
            end_time: 20.0,
            solver: SolverOptions {
                tol: 1e-13,
                ..Default::default()
            },
        };
        let f = run_unsteady(&p, &mut |_| Ok(()))?.field;
        let h = 0.5f64.powi(cycles as i32);
        let e = l2_error(&f, &exact, 20.0);
        let local = levels.last().map(|&(h0, e0): &(f64, f64)| (e0 / e).ln() / (h0 / h).ln());
        levels.push((h, e));
        println!("{:>6} {:>12.4e} {:>8}", 1 << cycles, e, local.map_or(String::new(), |q| format!("{:.3}", q)));
    }
    println!("fitted order {:.3}", observed_order(&levels)?);
    Ok(())
}

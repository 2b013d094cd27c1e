//! Melt-film flux boundary for ice: the steady contact temperature as the
//! interface speed is varied around the speed that balances the film flux.
//!
//! ```text
//! cargo run --release --example stefan_melt_film
//! ```

use std::sync::Arc;

use meltsim::functions::{SpaceTimeFn, VelocityFn};
use meltsim::linsolve::SolverOptions;
use meltsim::mesh::{generate, refine_global, GridSpec};
use meltsim::pde::{run_unsteady, stefan_flux, stefan_number, AmbientProblem, BoundaryCondition, InitialValues, StefanFilmParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (length, t_far) = (0.025, -1.0);
    let ice = StefanFilmParams::ice(1.0, 1e-6);
    let x = [length, 0.0];
    println!("film flux at rest      {:.4e} W/m^2", ice.heat_flux(0.0, x));
    println!("equilibrium speed      {:.4e} m/s", ice.equilibrium_velocity(x));
    println!("Stefan number          {:.4e}", stefan_number(ice.cp_s, 1.0, ice.t_m, ice.h_m));
    let v_star = ice.steady_velocity(x, t_far);
    println!("speed for T_far = {}    {:.4e} m/s", t_far, v_star);

    let mesh = Arc::new(refine_global(&generate(&GridSpec::interval(0.0, length))?, 7)?);
    println!("{:>8} {:>12} {:>14}", "v/v*", "h", "contact T");
    for factor in [0.9, 0.95, 1.0, 1.05, 1.1] {
        let v = factor * v_star;
        let h = stefan_flux(&ice, v, x);
        let p = AmbientProblem {
            mesh: mesh.clone(),
            velocity: VelocityFn::Constant([v, 0.0]),
            diffusivity: SpaceTimeFn::Constant(ice.solid_diffusivity()),
            source: SpaceTimeFn::Constant(0.0),
            boundary_conditions: vec![
                BoundaryCondition::Strong(SpaceTimeFn::Constant(t_far)),
                BoundaryCondition::Natural(SpaceTimeFn::Constant(h)),
            ],
            initial: InitialValues::Function(SpaceTimeFn::Constant(t_far)),
            theta: 1.0,
            step_size: 10.0,
            start_time: 0.0,
            end_time: 6000.0,
            solver: SolverOptions::default(),
        };
        let f = run_unsteady(&p, &mut |_| Ok(()))?.field;
        println!("{:>8.2} {:>12.4e} {:>14.5}", factor, h, f.eval(x)?);
    }
    Ok(())
}

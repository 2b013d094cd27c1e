//! Galerkin convection-diffusion at low and high mesh Peclet number, with
//! and without refinement at the outflow boundary.
//!
//! ```text
//! cargo run --example boundary_layer
//! ```

use std::path::PathBuf;

use meltsim::config::load_config;
use meltsim::pde::{max_local_peclet, run_unsteady};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    for name in ["boundary_layer_pe05.cfg", "boundary_layer_pe5.cfg", "boundary_layer_pe5_refined.cfg"] {
        let p = load_config(&dir.join(name))?.ambient_problem()?;
        let pe = max_local_peclet(&p.mesh, &p.velocity, &p.diffusivity);
        let f = run_unsteady(&p, &mut |_| Ok(()))?.field;
        let mut nodes: Vec<(f64, f64)> = p.mesh.nodes().iter().map(|x| x[0]).zip(f.values().iter().copied()).collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        println!("{} (max Pe_h {:.3}), min {:.3e}", name, pe, f.min());
        for (x, u) in nodes {
            println!("  {:.5} {:>9.5}", x, u);
        }
    }
    Ok(())
}

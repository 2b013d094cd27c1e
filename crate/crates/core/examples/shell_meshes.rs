//! Generates the built-in grids with boundary refinement and writes them as
//! VTK files.
//!
//! ```text
//! cargo run --example shell_meshes -- output/meshes
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use meltsim::field::{export_vtk, FeField};
use meltsim::mesh::{generate, refine_boundary, refine_global, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "output/meshes".into()));
    std::fs::create_dir_all(&dir)?;
    let grids = [
        ("rectangle", GridSpec::rectangle(0.0, 0.0, 2.0, 1.0), 2),
        ("shell", GridSpec::shell(1.0, 2.0), 0),
        ("sphere_cylinder", GridSpec::sphere_cylinder(0.1, 0.4, 1.0, 1.3), 0),
    ];
    for (name, spec, refined_id) in grids {
        let mesh = refine_boundary(&refine_global(&generate(&spec)?, 2)?, refined_id, 2)?;
        mesh.validate()?;
        println!(
            "{}: {} cells, {} nodes, area {:.6}, largest cell {:.4}",
            name,
            mesh.n_cells(),
            mesh.n_nodes(),
            mesh.measure(),
            mesh.max_cell_diameter()
        );
        for id in mesh.boundary_ids() {
            println!("  boundary {}: {} faces", id, mesh.boundary_faces(id)?.len());
        }
        let mesh = Arc::new(mesh);
        let radius = FeField::interpolate(mesh, |x| x[0].hypot(x[1]))?;
        export_vtk(&radius, &dir.join(format!("{}.vtk", name)), 0.0, None)?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}

//! Stops a run halfway, writes a checkpoint, reads it back and finishes the
//! run from it.
//!
//! ```text
//! cargo run --example checkpoint_restart
//! ```

use std::path::PathBuf;

use meltsim::config::load_config;
use meltsim::field::{read_checkpoint, write_checkpoint, Checkpoint};
use meltsim::pde::{run_unsteady, InitialValues};
use meltsim::rbd::RigidState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/boundary_layer_pe5.cfg");
    let p = load_config(&path)?.ambient_problem()?;
    let straight = run_unsteady(&p, &mut |_| Ok(()))?.field;

    let mut first = p.clone();
    first.end_time = 0.5 * p.end_time;
    let half = run_unsteady(&first, &mut |_| Ok(()))?;
    let file = std::env::temp_dir().join("meltsim_checkpoint_example.txt");
    write_checkpoint(
        &Checkpoint {
            field: half.field,
            state: RigidState::default(),
            rate: RigidState::default(),
            aux: RigidState::default(),
            time: first.end_time,
            step: half.history.len(),
        },
        &file,
    )?;

    let ck = read_checkpoint(&file)?;
    println!("checkpoint at step {}, t = {}", ck.step, ck.time);
    let mut rest = p.clone();
    rest.start_time = ck.time;
    rest.mesh = ck.field.mesh().clone();
    rest.initial = InitialValues::Nodal(ck.field.into_values());
    let resumed = run_unsteady(&rest, &mut |_| Ok(()))?.field;
    let gap = straight
        .values()
        .iter()
        .zip(resumed.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("largest difference from the uninterrupted run: {:.3e}", gap);
    std::fs::remove_file(&file)?;
    Ok(())
}

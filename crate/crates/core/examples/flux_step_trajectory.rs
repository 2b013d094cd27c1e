//! Coupled run of a heated disc sinking through ice while the wall flux is
//! stepped up, printing the sink speed after each outer step.
//!
//! ```text
//! cargo run --release --example flux_step_trajectory -- output/flux_step
//! ```

use std::path::PathBuf;

use meltsim::config::load_config;
use meltsim::coupling::{plateau, run_trajectory, TrajectoryOutput, TrajectoryState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/flux_step.cfg");
    let (cfg, start) = load_config(&path)?.coupling_config()?;
    let output = std::env::args().nth(1).map(|dir| TrajectoryOutput {
        dir: dir.into(),
        deterministic: true,
    });
    let run = run_trajectory(&cfg, TrajectoryState::initial(&cfg, start)?, output.as_ref())?;
    let mut speeds = Vec::new();
    println!("{:>4} {:>6} {:>10} {:>8}", "step", "flux", "speed", "steady");
    for r in &run.records {
        let speed = -r.rate.r1 + 0.0;
        speeds.push(speed);
        let steady = plateau(&speeds, 0.05).map_or(String::new(), |v| format!("{:.4}", v));
        println!("{:>4} {:>6.3} {:>10.4} {:>8}", r.step, r.flux, speed, steady);
    }
    Ok(())
}

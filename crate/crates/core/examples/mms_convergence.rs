//! Spatial and temporal convergence of the manufactured solutions.
//!
//! ```text
//! cargo run --release --example mms_convergence -- 1 -5 2 -2
//! ```

use std::time::Instant;

use meltsim::verify::{mms1d, mms2d, run_convergence_study, MmsParams, StudyMode, StudyPlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (dim, v, alpha, g) = match args[..] {
        [d, v, a, g] => (d as usize, v, a, g),
        _ => (1, -5.0, 2.0, -2.0),
    };
    let params = MmsParams::new(v, alpha, g);
    let case = if dim == 1 { mms1d(params)? } else { mms2d(params)? };
    let plan = StudyPlan::for_dim(dim);
    for mode in [StudyMode::Spatial, StudyMode::Temporal] {
        let start = Instant::now();
        let report = run_convergence_study(&case, mode, &plan)?;
        println!("{} order {:.3} ({:.1?})", mode.as_str(), report.order, start.elapsed());
        print!("{}", report.to_csv());
    }
    Ok(())
}

//! A disc dropped into a circular melt pool comes to rest on the pool's
//! rim; a frozen field leaves the start pose untouched.
//!
//! ```text
//! cargo run --example rbd_drop
//! ```

use std::sync::Arc;

use meltsim::rbd::{energy_landscape, minimize_state, BodyGeometry, RbdProblem, RbdTolerances, RigidState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut p = RbdProblem {
        body: BodyGeometry::circle(1.0, 32)?,
        gravity: [0.0, -1.0],
        melting_temperature: 0.0,
        max_change: RigidState::new(0.1, 1.5, 1.5),
        tolerances: RbdTolerances::default(),
        sampler: Arc::new(|x| 4.0 - x[0] * x[0] - x[1] * x[1]),
    };
    let out = minimize_state(&p, RigidState::default());
    println!(
        "melt pool: {:?} at theta {:.5}, r = ({:.5}, {:.5}), potential {:.6}",
        out.status, out.state.theta, out.state.r0, out.state.r1, out.objective
    );
    let slices = energy_landscape(&p, out.state, 5, 0.5);
    for (r1, e) in &slices.r1 {
        println!("  r1 {:>8.4}  potential {:>8.4}", r1, e);
    }

    p.sampler = Arc::new(|_| -1.0);
    let start = RigidState::new(0.3, 0.0, 2.0);
    let out = minimize_state(&p, start);
    println!("frozen: {:?}, unchanged {}", out.status, out.state == start);
    Ok(())
}

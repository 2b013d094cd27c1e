#![allow(dead_code)]

use std::sync::Arc;

use meltsim::assembly::{build_convection_diffusion, build_mass, FeSpace};
use meltsim::field::{checkpoint_to_string, parse_checkpoint, Checkpoint, FeField};
use meltsim::functions::{Point, SpaceTimeFn, VelocityFn};
use meltsim::linsolve::{bicgstab_solve, cg_solve, direct_solve_dense, CsrMatrix, SolverOptions};
use meltsim::mesh::{generate, refine_boundary, refine_global, transform_rigid, GridSpec, Mesh};
use meltsim::rbd::{centroid, centroid_area, BodyGeometry, RigidState};
use meltsim::verify::{mms1d, mms2d, MmsCase, MmsParams};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn mesh(spec: GridSpec, cycles: usize) -> Arc<Mesh> {
    Arc::new(refine_global(&generate(&spec).unwrap(), cycles).unwrap())
}

/// Small meshes of every family, each with at most 64 cells.
pub fn oracle_meshes() -> Vec<Arc<Mesh>> {
    let skew = transform_rigid(&generate(&GridSpec::rectangle(0.0, 0.0, 2.0, 1.0)).unwrap(), 0.3, [0.5, -1.0], [0.0; 2])
        .unwrap();
    vec![
        mesh(GridSpec::interval(0.0, 1.0), 4),
        mesh(GridSpec::rectangle(-1.0, 0.0, 1.0, 0.5), 3),
        Arc::new(refine_global(&skew, 2).unwrap()),
        mesh(GridSpec::shell(1.0, 2.0), 1),
        Arc::new(refine_boundary(&generate(&GridSpec::shell(1.0, 2.0)).unwrap(), 0, 2).unwrap()),
        mesh(GridSpec::sphere_cylinder(0.1, 0.4, 1.0, 1.3), 0),
    ]
}

fn gauss2() -> [(f64, f64); 2] {
    let a = (1.0f64 / 3.0).sqrt();
    [(-a, 1.0), (a, 1.0)]
}

/// Dense mass and convection-diffusion matrices by direct quadrature.
pub fn dense_matrices(m: &Mesh, v: &VelocityFn, alpha: &SpaceTimeFn) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = m.n_nodes();
    let mut mass = vec![vec![0.0; n]; n];
    let mut ck = vec![vec![0.0; n]; n];
    for c in 0..m.n_cells() {
        let nodes = m.cell(c).to_vec();
        let p: Vec<Point> = nodes.iter().map(|&i| m.node(i)).collect();
        let mut qps: Vec<(Point, f64, Vec<f64>, Vec<Point>)> = Vec::new();
        if m.dim() == 1 {
            let h = p[1][0] - p[0][0];
            for (xi, w) in gauss2() {
                let x = p[0][0] + 0.5 * (1.0 + xi) * h;
                let phi = vec![(p[1][0] - x) / h, (x - p[0][0]) / h];
                qps.push(([x, 0.0], 0.5 * h * w, phi, vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]]));
            }
        } else {
            let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
            for (eta, we) in gauss2() {
                for (xi, wx) in gauss2() {
                    let phi: Vec<f64> = corners
                        .iter()
                        .map(|&(a, b)| (1.0 + a * xi) * (1.0 + b * eta) / 4.0)
                        .collect();
                    let dxi: Vec<f64> = corners.iter().map(|&(a, b)| a * (1.0 + b * eta) / 4.0).collect();
                    let deta: Vec<f64> = corners.iter().map(|&(a, b)| b * (1.0 + a * xi) / 4.0).collect();
                    let mut x = [0.0; 2];
                    let (mut xx, mut xe, mut yx, mut ye) = (0.0, 0.0, 0.0, 0.0);
                    for a in 0..4 {
                        x[0] += phi[a] * p[a][0];
                        x[1] += phi[a] * p[a][1];
                        xx += dxi[a] * p[a][0];
                        xe += deta[a] * p[a][0];
                        yx += dxi[a] * p[a][1];
                        ye += deta[a] * p[a][1];
                    }
                    let det = xx * ye - xe * yx;
                    let grads = (0..4)
                        .map(|a| [(ye * dxi[a] - yx * deta[a]) / det, (-xe * dxi[a] + xx * deta[a]) / det])
                        .collect();
                    qps.push((x, det * wx * we, phi, grads));
                }
            }
        }
        for (x, jxw, phi, grad) in &qps {
            let vel = v.value(*x);
            let al = alpha.value(*x, 0.0);
            for a in 0..nodes.len() {
                for b in 0..nodes.len() {
                    mass[nodes[a]][nodes[b]] += phi[a] * phi[b] * jxw;
                    let diff = al * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                    let conv = phi[a] * (vel[0] * grad[b][0] + vel[1] * grad[b][1]);
                    ck[nodes[a]][nodes[b]] += (diff + conv) * jxw;
                }
            }
        }
    }
    (mass, ck)
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest entry-wise deviation of the assembled matrices from the dense
/// quadrature oracle, over all oracle meshes.
pub fn assembly_deviation() -> f64 {
    let v = VelocityFn::native(|p| [1.0 + p[1], -0.5 * p[0] * p[0]]);
    let alpha = SpaceTimeFn::native(|p, _| 0.3 + 0.1 * p[0] * p[0] + 0.05 * p[1]);
    let mut worst: f64 = 0.0;
    for m in oracle_meshes() {
        let sp = FeSpace::new(m.clone());
        let (mass, ck) = dense_matrices(&m, &v, &alpha);
        worst = worst.max(max_diff(&build_mass(&sp).to_dense(), &mass));
        worst = worst.max(max_diff(&build_convection_diffusion(&sp, &v, &alpha).unwrap().to_dense(), &ck));
    }
    worst
}

fn rel_diff(x: &[f64], y: &[f64]) -> f64 {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// Largest relative max-norm deviation of CG (symmetric systems) and
/// BiCGStab (convective systems) from dense LU.
pub fn krylov_deviation() -> f64 {
    let mut rng = StdRng::seed_from_u64(7);
    let opts = SolverOptions {
        tol: 1e-14,
        max_iter: 10_000,
        jacobi: true,
        banded: false,
    };
    let alpha = SpaceTimeFn::Constant(0.5);
    let mut worst: f64 = 0.0;
    for m in oracle_meshes() {
        let sp = FeSpace::new(m.clone());
        let mass = build_mass(&sp);
        let n = sp.n_dofs();
        for (vel, dt) in [(VelocityFn::zero(), 0.1), (VelocityFn::native(|p| [3.0, 2.0 - p[0]]), 0.05)] {
            let ck = build_convection_diffusion(&sp, &vel, &alpha).unwrap();
            let a: CsrMatrix = mass.linear_combination(1.0, &ck, dt);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let exact = direct_solve_dense(&a.to_dense(), &b).unwrap();
            let mut x = vec![0.0; n];
            if vel.is_zero() {
                cg_solve(&a, &b, &mut x, &opts).unwrap();
            } else {
                bicgstab_solve(&a, &b, &mut x, &opts).unwrap();
            }
            worst = worst.max(rel_diff(&x, &exact));
        }
    }
    worst
}

/// Area-weighted centroid of the fan triangulation from the first vertex.
pub fn fan_centroid(poly: &[Point]) -> Point {
    let o = poly[0];
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for w in poly[1..].windows(2) {
        let (p, q) = (w[0], w[1]);
        let area = 0.5 * ((p[0] - o[0]) * (q[1] - o[1]) - (q[0] - o[0]) * (p[1] - o[1]));
        a += area;
        cx += area * (p[0] + q[0] - 2.0 * o[0]) / 3.0;
        cy += area * (p[1] + q[1] - 2.0 * o[1]) / 3.0;
    }
    [o[0] + cx / a, o[1] + cy / a]
}

/// Largest centroid deviation from the fan oracle for bodies in several poses.
pub fn centroid_deviation() -> f64 {
    let bodies = [
        BodyGeometry::circle(1.0, 32).unwrap(),
        BodyGeometry::circle(0.3, 9).unwrap(),
        BodyGeometry::sphere_cylinder(0.1, 1.0, 64).unwrap(),
        BodyGeometry::sphere_cylinder(0.5, 0.2, 17).unwrap(),
    ];
    let poses = [
        RigidState::default(),
        RigidState::new(0.7, -2.0, 3.5),
        RigidState::new(-2.9, 1e3, -0.25),
    ];
    let mut worst: f64 = 0.0;
    for b in &bodies {
        for &s in &poses {
            let hull: Vec<Point> = b.hull.iter().map(|&p| s.apply(p)).collect();
            let fan = fan_centroid(&hull);
            let size = hull.iter().map(|p| (p[0] - fan[0]).hypot(p[1] - fan[1])).fold(0.0, f64::max);
            for c in [centroid(b, s), centroid_area(&hull).unwrap().1] {
                let d = (c[0] - fan[0]).hypot(c[1] - fan[1]) / size.max(1.0);
                worst = worst.max(d);
            }
        }
    }
    worst
}

/// Sixth-order central first and fourth-order central second differences.
fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + 3.0 * h) - 9.0 * f(x + 2.0 * h) + 45.0 * f(x + h) - 45.0 * f(x - h) + 9.0 * f(x - 2.0 * h)
        - f(x - 3.0 * h))
        / (60.0 * h)
}

fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h)
}

pub fn mms_cases() -> Vec<MmsCase> {
    let mut out = Vec::new();
    for (v, a, g) in [(-5.0, 2.0, -2.0), (0.0, 1.0, -1.0), (1.0, 0.5, 3.0), (-1.0, 1.0, -1.0)] {
        out.push(mms1d(MmsParams::new(v, a, g)).unwrap());
    }
    for (v, a, g) in [(-5.0, 2.0, -2.0), (1.0, 1.0, -1.0), (2.0, 0.5, 1.0)] {
        out.push(mms2d(MmsParams::new(v, a, g)).unwrap());
    }
    out
}

/// Largest `|u_t + v·∇u − α Δu − s|`, scaled by `max(1, |s|)`, over random
/// interior points and times, with derivatives of the exact expression taken
/// by finite differences.
pub fn mms_residual() -> f64 {
    let mut rng = StdRng::seed_from_u64(11);
    let h = 2e-3;
    let mut worst: f64 = 0.0;
    for case in mms_cases() {
        let u = &case.exact;
        let alpha = case.params.alpha;
        for _ in 0..200 {
            let x = rng.gen_range(0.05..0.95);
            let y = if case.dim == 2 { rng.gen_range(0.05..0.95) } else { 0.0 };
            let t = rng.gen_range(0.05..1.0);
            let ut = d1(&|s| u.value([x, y], s), t, h);
            let ux = d1(&|s| u.value([s, y], t), x, h);
            let uxx = d2(&|s| u.value([s, y], t), x, h);
            let (uy, uyy) = if case.dim == 2 {
                (d1(&|s| u.value([x, s], t), y, h), d2(&|s| u.value([x, s], t), y, h))
            } else {
                (0.0, 0.0)
            };
            let v = case.velocity.value([x, y]);
            let s = case.source.value([x, y], t);
            let r = ut + v[0] * ux + v[1] * uy - alpha * (uxx + uyy) - s;
            worst = worst.max(r.abs() / s.abs().max(1.0));
        }
    }
    worst
}

/// Largest mismatch between each natural boundary value and `α ∂u/∂n` of the
/// exact solution, with one-sided differences into the domain.
pub fn mms_flux_mismatch() -> f64 {
    let mut rng = StdRng::seed_from_u64(13);
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for case in mms_cases() {
        let u = &case.exact;
        let alpha = case.params.alpha;
        let flux = match &case.boundary_conditions[0] {
            meltsim::pde::BoundaryCondition::Natural(f) => f.clone(),
            _ => unreachable!(),
        };
        // Outward normals paired with boundary points for each natural side.
        let sides: Vec<(Point, Box<dyn Fn(f64) -> Point>)> = if case.dim == 1 {
            vec![([-1.0, 0.0], Box::new(|_| [0.0, 0.0]))]
        } else {
            vec![
                ([-1.0, 0.0], Box::new(|s| [0.0, s])),
                ([0.0, -1.0], Box::new(|s| [s, 0.0])),
                ([0.0, 1.0], Box::new(|s| [s, 1.0])),
            ]
        };
        for (n, at) in &sides {
            for _ in 0..50 {
                let p = at(rng.gen_range(0.02..0.98));
                let t = rng.gen_range(0.05..1.0);
                let inward = |k: f64| u.value([p[0] - k * h * n[0], p[1] - k * h * n[1]], t);
                // Third-order one-sided derivative along -n.
                let d_in = (-11.0 * inward(0.0) + 18.0 * inward(1.0) - 9.0 * inward(2.0) + 2.0 * inward(3.0)) / (6.0 * h);
                let expected = -alpha * d_in;
                let got = flux.value(p, t);
                worst = worst.max((got - expected).abs() / expected.abs().max(1.0));
            }
        }
    }
    worst
}

/// Serializes and re-reads checkpoints of several meshes; true when every
/// number comes back bit for bit.
pub fn checkpoint_round_trip() -> bool {
    let mut rng = StdRng::seed_from_u64(17);
    oracle_meshes().into_iter().all(|m| {
        let values: Vec<f64> = (0..m.n_nodes()).map(|_| rng.gen_range(-1e3..1e3) * rng.gen::<f64>().powi(7)).collect();
        let c = Checkpoint {
            field: FeField::new(m, values).unwrap(),
            state: RigidState::new(rng.gen(), rng.gen_range(-5.0..5.0), 1.0 / 3.0),
            rate: RigidState::new(-0.0, f64::MIN_POSITIVE, 1e-300),
            aux: RigidState::new(std::f64::consts::PI, -1.0 / 7.0, 2.5e17),
            time: 0.1 + 0.2,
            step: 12,
        };
        let text = checkpoint_to_string(&c);
        let back = parse_checkpoint(&text).unwrap();
        let bits = |c: &Checkpoint| -> Vec<u64> {
            let mut v: Vec<u64> = c.field.values().iter().map(|x| x.to_bits()).collect();
            for s in [c.state, c.rate, c.aux] {
                v.extend(s.to_array().iter().map(|x| x.to_bits()));
            }
            v.push(c.time.to_bits());
            v.extend(c.field.mesh().nodes().iter().flat_map(|p| [p[0].to_bits(), p[1].to_bits()]));
            v
        };
        bits(&back) == bits(&c) && back.step == c.step && checkpoint_to_string(&back) == text
    })
}

/// Exhaustive search of the box `s0 ± max_change` on a grid of spacing `res`
/// for the feasible state of least potential energy.
pub fn grid_search(p: &meltsim::rbd::RbdProblem, s0: RigidState, res: f64) -> Option<(RigidState, f64)> {
    use meltsim::rbd::{feasibility, potential_energy};
    let axis = |c: f64, half: f64| -> Vec<f64> {
        let n = (half / res).round() as i64;
        (-n..=n).map(|k| c + k as f64 * res).collect()
    };
    let m = p.max_change;
    let mut best: Option<(RigidState, f64)> = None;
    for &th in &axis(s0.theta, m.theta) {
        for &r0 in &axis(s0.r0, m.r0) {
            for &r1 in &axis(s0.r1, m.r1) {
                let s = RigidState::new(th, r0, r1);
                let e = potential_energy(p, s);
                if best.is_some_and(|(_, b)| e >= b) {
                    continue;
                }
                if feasibility(p, s).iter().all(|&g| g >= 0.0) {
                    best = Some((s, e));
                }
            }
        }
    }
    best
}

/// Largest change of the potential between `s` and the corners of the grid
/// cell around it.
pub fn cell_variation(p: &meltsim::rbd::RbdProblem, s: RigidState, res: f64) -> f64 {
    use meltsim::rbd::potential_energy;
    let e = potential_energy(p, s);
    let mut worst: f64 = 0.0;
    for a in [-res, res] {
        for b in [-res, res] {
            for c in [-res, res] {
                let q = RigidState::new(s.theta + a, s.r0 + b, s.r1 + c);
                worst = worst.max((potential_energy(p, q) - e).abs());
            }
        }
    }
    worst
}

pub fn rbd_problem(
    body: BodyGeometry,
    max_change: RigidState,
    field: impl Fn(Point) -> f64 + Send + Sync + 'static,
) -> meltsim::rbd::RbdProblem {
    meltsim::rbd::RbdProblem {
        body,
        gravity: [0.0, -1.0],
        melting_temperature: 0.0,
        max_change,
        tolerances: meltsim::rbd::RbdTolerances::default(),
        sampler: Arc::new(field),
    }
}

/// Circle of radius 1 at rest inside a melt disc of radius 2 at the origin.
pub fn melt_disc_drop() -> meltsim::rbd::RbdProblem {
    rbd_problem(
        BodyGeometry::circle(1.0, 32).unwrap(),
        RigidState::new(0.1, 1.5, 1.5),
        |x| 4.0 - x[0] * x[0] - x[1] * x[1],
    )
}

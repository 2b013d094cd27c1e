mod common;

use std::sync::Arc;

use meltsim::assembly::{build_convection_diffusion, build_mass, FeSpace};
use meltsim::coupling::plateau;
use meltsim::exprfn::{eval, parse, BinOp, Bindings, CmpOp, Expr, Func, ParsedFunction, Var};
use meltsim::field::{checkpoint_to_string, parse_checkpoint, Checkpoint, FeField};
use meltsim::functions::{SpaceTimeFn, VelocityFn};
use meltsim::mesh::{generate, refine_global, transform_rigid, GridSpec, Mesh};
use meltsim::rbd::{centroid, potential_energy, BodyGeometry, RigidState};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-100.0f64..100.0).prop_map(Expr::Num),
        prop_oneof![Just(Var::X), Just(Var::Y), Just(Var::T)].prop_map(Expr::Var),
        prop_oneof![Just("a"), Just("b")].prop_map(|s| Expr::Const(s.to_string())),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let bin = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)];
    let cmp = prop_oneof![Just(CmpOp::Lt), Just(CmpOp::Le), Just(CmpOp::Gt), Just(CmpOp::Ge), Just(CmpOp::Eq)];
    let func = prop_oneof![
        Just(Func::Exp),
        Just(Func::Sin),
        Just(Func::Cos),
        Just(Func::Log),
        Just(Func::Abs),
        Just(Func::Sqrt)
    ];
    leaf().prop_recursive(5, 48, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (bin.clone(), inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Binary(o, Box::new(a), Box::new(b))),
            (cmp.clone(), inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Compare(o, Box::new(a), Box::new(b))),
            (func.clone(), inner.clone()).prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
            (inner.clone(), inner.clone(), inner)
                .prop_map(|(c, a, b)| Expr::If(Box::new(c), Box::new(a), Box::new(b))),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn bindings() -> Bindings {
    Bindings::parse_list("a=1.25, b=-0.5").unwrap()
}

fn meshes() -> Vec<Arc<Mesh>> {
    vec![
        common::mesh(GridSpec::rectangle(-1.0, 0.0, 2.0, 1.5), 2),
        common::mesh(GridSpec::shell(0.5, 1.5), 1),
        common::mesh(GridSpec::sphere_cylinder(0.1, 0.4, 1.0, 1.3), 0),
    ]
}

proptest! {
    #[test]
    fn printed_expressions_reparse_to_the_same_values(
        e in expr(),
        x in -3.0f64..3.0, y in -3.0f64..3.0, t in 0.0f64..2.0,
    ) {
        let b = bindings();
        let src = e.to_string();
        let back = parse(&src).unwrap();
        let f = ParsedFunction::new(&src, &b).unwrap();
        let direct = eval(&e, &b, x, y, t);
        let reparsed = eval(&back, &b, x, y, t);
        match (direct, reparsed) {
            (Ok(a), Ok(c)) => {
                prop_assert!(same(a, c), "{} -> {} vs {}", src, a, c);
                prop_assert!(same(f.value(x, y, t), a));
            }
            (Err(_), Err(_)) => prop_assert!(!f.value(x, y, t).is_finite()),
            (a, c) => prop_assert!(false, "{}: {:?} vs {:?}", src, a, c),
        }
    }

    #[test]
    fn rigid_transforms_invert_and_preserve_measure(
        k in 0usize..3,
        dtheta in -3.2f64..3.2,
        dr in prop::array::uniform2(-5.0f64..5.0),
        pivot in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let m = &meshes()[k];
        let moved = transform_rigid(m, dtheta, dr, pivot).unwrap();
        prop_assert!(moved.validate().is_ok());
        prop_assert_eq!(moved.boundary_ids(), m.boundary_ids());
        prop_assert!((moved.measure() - m.measure()).abs() <= 1e-12 * m.measure());
        let back = transform_rigid(&moved, -dtheta, [-dr[0], -dr[1]], [pivot[0] + dr[0], pivot[1] + dr[1]]).unwrap();
        for (p, q) in back.nodes().iter().zip(m.nodes()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn assembled_rows_respect_partition_of_unity(
        k in 0usize..3,
        v in prop::array::uniform2(-4.0f64..4.0),
        alpha in 0.01f64..5.0,
    ) {
        let m = meshes()[k].clone();
        let sp = FeSpace::new(m.clone());
        let mass = build_mass(&sp);
        let total: f64 = mass.values().iter().sum();
        prop_assert!((total - m.measure()).abs() <= 1e-12 * m.measure());
        let ck = build_convection_diffusion(&sp, &VelocityFn::Constant(v), &SpaceTimeFn::Constant(alpha)).unwrap();
        let ones = vec![1.0; sp.n_dofs()];
        let scale = alpha + v[0].abs() + v[1].abs();
        for r in ck.matvec(&ones) {
            prop_assert!(r.abs() <= 1e-12 * scale, "row sum {}", r);
        }
    }

    #[test]
    fn bilinear_fields_are_reproduced(
        c in prop::array::uniform4(-2.0f64..2.0),
        p in prop::array::uniform2(0.0f64..1.0),
    ) {
        let m = common::mesh(GridSpec::rectangle(0.0, 0.0, 1.0, 1.0), 3);
        let g = move |x: [f64; 2]| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[1];
        let f = FeField::interpolate(m, g).unwrap();
        prop_assert!((f.eval(p).unwrap() - g(p)).abs() < 1e-12);
    }

    #[test]
    fn potential_follows_translation(
        s in (-3.2f64..3.2, -2.0f64..2.0, -2.0f64..2.0),
        d in prop::array::uniform2(-1.0f64..1.0),
        gravity in prop::array::uniform2(-2.0f64..2.0),
    ) {
        let mut p = common::melt_disc_drop();
        p.body = BodyGeometry::sphere_cylinder(0.2, 0.6, 32).unwrap();
        p.gravity = gravity;
        let s = RigidState::new(s.0, s.1, s.2);
        let moved = s + RigidState::new(0.0, d[0], d[1]);
        let expected = potential_energy(&p, s) - (gravity[0] * d[0] + gravity[1] * d[1]);
        prop_assert!((potential_energy(&p, moved) - expected).abs() < 1e-10);
        let (c0, c1) = (centroid(&p.body, s), centroid(&p.body, moved));
        prop_assert!((c1[0] - c0[0] - d[0]).abs() < 1e-10 && (c1[1] - c0[1] - d[1]).abs() < 1e-10);
    }

    #[test]
    fn checkpoints_round_trip_any_values(
        bits in prop::collection::vec(any::<u64>(), 25),
        state in prop::array::uniform3(-1e6f64..1e6),
        step in 0usize..100_000,
        time in 0.0f64..1e4,
    ) {
        let m = Arc::new(refine_global(&generate(&GridSpec::rectangle(0.0, 0.0, 1.0, 1.0)).unwrap(), 2).unwrap());
        let values: Vec<f64> = bits
            .iter()
            .map(|&b| f64::from_bits(b))
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect();
        let c = Checkpoint {
            field: FeField::new(m, values).unwrap(),
            state: RigidState::from_array(state),
            rate: RigidState::new(state[2], state[0], state[1]),
            aux: RigidState::default(),
            time,
            step,
        };
        let back = parse_checkpoint(&checkpoint_to_string(&c)).unwrap();
        for (a, b) in back.field.values().iter().zip(c.field.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.state, c.state);
        prop_assert_eq!(back.rate, c.rate);
        prop_assert_eq!(back.time.to_bits(), c.time.to_bits());
        prop_assert_eq!(back.step, c.step);
    }

    #[test]
    fn plateau_is_scale_invariant(v in prop::collection::vec(0.1f64..10.0, 4..12), k in -8i32..8) {
        let s = 2f64.powi(k);
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert_eq!(plateau(&scaled, 0.05), plateau(&v, 0.05).map(|x| x * s));
    }
}

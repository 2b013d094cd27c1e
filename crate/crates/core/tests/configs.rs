use std::path::PathBuf;

use meltsim::config::{load_config, parse_config, write_config, Config, ConfigError, InitialSpec};
use meltsim::functions::SpaceTimeFn;
use meltsim::verify::{mms1d, mms2d, MmsParams};
use proptest::prelude::*;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn example(name: &str) -> Config {
    load_config(&configs_dir().join(name)).unwrap()
}

fn all_examples() -> Vec<(String, Config)> {
    let mut out: Vec<_> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), load_config(&p).unwrap()))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn example_configs_build_their_problems() {
    let all = all_examples();
    assert_eq!(all.len(), 8);
    for (name, cfg) in &all {
        cfg.validate().unwrap_or_else(|e| panic!("{}: {}", name, e));
        let p = cfg.ambient_problem().unwrap_or_else(|e| panic!("{}: {}", name, e));
        assert!(p.validate().is_ok(), "{}", name);
        if cfg.coupling.is_some() {
            cfg.coupling_config().unwrap_or_else(|e| panic!("{}: {}", name, e));
        }
    }
}

#[test]
fn example_configs_round_trip() {
    for (name, cfg) in all_examples() {
        let text = write_config(&cfg);
        assert_eq!(parse_config(&text).unwrap(), cfg, "{}", name);
    }
}

fn same_values(a: &SpaceTimeFn, b: &SpaceTimeFn, dim: usize) {
    for i in 0..7 {
        for j in 0..7 {
            let x = [i as f64 / 6.0, if dim == 1 { 0.0 } else { j as f64 / 6.0 }];
            let t = 0.05 + 0.15 * j as f64;
            let (u, w) = (a.value(x, t), b.value(x, t));
            assert!((u - w).abs() <= 1e-13 * (1.0 + w.abs()), "{} vs {} at {:?}, t={}", u, w, x, t);
        }
    }
}

#[test]
fn mms_configs_match_the_built_in_cases() {
    for (file, case) in [
        ("mms1d.cfg", mms1d(MmsParams::new(-5.0, 2.0, -2.0)).unwrap()),
        ("mms2d.cfg", mms2d(MmsParams::new(-5.0, 2.0, -2.0)).unwrap()),
    ] {
        let cfg = example(file);
        let p = cfg.ambient_problem().unwrap();
        same_values(&p.source, &case.source, case.dim);
        same_values(&cfg.exact().unwrap().unwrap(), &case.exact, case.dim);
        for x in [[0.2, 0.7], [0.9, 0.1]] {
            let a = p.velocity.value(x);
            let b = case.velocity.value(x);
            assert!((a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13, "{}", file);
        }
    }
}

#[test]
fn malformed_files_are_rejected_with_locations() {
    let base = std::fs::read_to_string(configs_dir().join("boundary_layer_pe05.cfg")).unwrap();
    let unknown = base.replace("[time]", "[time]\nend_tme = 3.");
    let line = unknown.lines().position(|l| l.starts_with("end_tme")).unwrap() + 1;
    match parse_config(&unknown) {
        Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line),
        other => panic!("{:?}", other),
    }
    assert!(parse_config(&format!("{}\n[time]\nstep_size = 0.1\n", base)).is_err());
    assert!(parse_config(&base.replace("[refinement]", "[refinment]")).is_err());
    let open_quote = base.replace("[time]", "[pde.source]\nexpression = \"1 + x\n[time]");
    assert!(parse_config(&open_quote).is_err());
    let short = example("boundary_layer_pe05.cfg");
    let mut bad = short.clone();
    bad.boundary.implementation_types.pop();
    assert!(bad.validate().is_err());
}

proptest! {
    #[test]
    fn written_configs_parse_back_identically(
        end_time in 0.01f64..100.0,
        steps in 1usize..1000,
        theta in 0.0f64..=1.0,
        initial in -1e3f64..1e3,
        outflow in -1e3f64..1e3,
        cycles in 0usize..8,
        every in 1usize..20,
        tol in 1e-14f64..1e-4,
        vtk in any::<bool>(),
    ) {
        let mut cfg = example("boundary_layer_pe5_refined.cfg");
        cfg.end_time = end_time;
        cfg.step_size = end_time / steps as f64;
        cfg.theta = theta;
        cfg.initial = InitialSpec::Constant(initial);
        cfg.boundary.parsed_function.expression = format!("{:?} * x", outflow);
        cfg.refinement.initial_global_cycles = cycles;
        cfg.output.every = every;
        cfg.output.write_vtk = vtk;
        cfg.solver.tol = tol;
        let back = parse_config(&write_config(&cfg)).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

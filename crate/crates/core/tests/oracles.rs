mod common;

#[test]
fn assembly_matches_dense_quadrature() {
    let d = common::assembly_deviation();
    assert!(d <= 1e-13, "deviation {:e}", d);
}

#[test]
fn krylov_matches_dense_lu() {
    let d = common::krylov_deviation();
    assert!(d <= 1e-10, "deviation {:e}", d);
}

#[test]
fn centroid_matches_fan_triangulation() {
    let d = common::centroid_deviation();
    assert!(d <= 1e-12, "deviation {:e}", d);
}

#[test]
fn manufactured_sources_satisfy_the_pde() {
    let r = common::mms_residual();
    assert!(r <= 1e-5, "residual {:e}", r);
}

#[test]
fn manufactured_fluxes_match_normal_derivatives() {
    let r = common::mms_flux_mismatch();
    assert!(r <= 1e-5, "mismatch {:e}", r);
}

#[test]
fn checkpoints_round_trip_bit_exact() {
    assert!(common::checkpoint_round_trip());
}

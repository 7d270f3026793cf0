use roughkit_core::fbm::{sample_fbm, FbmSpec};
use roughkit_core::fields::builtin_fields;
use roughkit_core::join::Joiner;
use roughkit_core::ode::{ode_endpoint, rde_endpoint};
use roughkit_core::realize::path_from_log_signature;
use roughkit_core::LieBasis;

// A sampled driver, its log-signature and the path realizing it move the
// Heisenberg system to the same point.
#[test]
fn realized_driver_reaches_the_same_endpoint() {
    let heis = builtin_fields("heisenberg").unwrap();
    let basis = LieBasis::new(2, 2);
    let x = [0.3, -0.1, 0.2];
    for g in sample_fbm(FbmSpec::new(0.4, 2, 1.0, 24).unwrap(), 5, 10).unwrap() {
        let u = g.to_path().log_signature(&basis).unwrap();
        let short = path_from_log_signature(&basis, &u).unwrap();
        let a = rde_endpoint(&heis, &x, &g, 2).unwrap();
        let b = ode_endpoint(&heis, &x, &short).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }
}

// The joined control drives the state to the target when integrated.
#[test]
fn joined_control_hits_the_target() {
    let heis = builtin_fields("heisenberg").unwrap();
    let joiner = Joiner::new(&heis, 2);
    let x = [0.0, 0.5, 0.0];
    let y = [0.05, 0.45, 0.03];
    let j = joiner.join_path(&x, &y).unwrap();
    let end = ode_endpoint(&heis, &x, j.joined.as_ref().unwrap()).unwrap();
    let err = end.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "{end:?}");
    let bound = joiner.bound_from_join(&j, 0.5, 1024, 1.0).unwrap();
    assert!(bound.d_upper > 0.0 && bound.stages == j.stages.len());
}

use pobo::kinship::{eval_kinship, solve_optimal_kinship, verify_kinship, KinshipPoly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn low_orders_are_powers() {
    let k1 = solve_optimal_kinship(1).unwrap();
    assert!((k1.integral_value - 0.5).abs() < 1e-9);
    let k2 = solve_optimal_kinship(2).unwrap();
    assert!((k2.integral_value - 1.0 / 3.0).abs() < 1e-6);
    for z in [-1.0, -0.5, 0.0, 0.7, 2.0] {
        assert!((eval_kinship(&k2, z).unwrap() - (1.0 + z) * (1.0 + z)).abs() < 1e-6);
    }
}

#[test]
fn closed_form_integrals() {
    let cases = [
        (3, (3.0 - 3f64.sqrt()) / 6.0),
        (4, (4.0 - 6f64.sqrt()) / 10.0),
        (5, (5.0 - 15f64.sqrt()) / 10.0),
    ];
    for (rho, exact) in cases {
        let k = solve_optimal_kinship(rho).unwrap();
        assert!((k.integral_value - exact).abs() < 1e-6, "rho={rho}: {}", k.integral_value);
    }
}

#[test]
fn endpoints_and_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for rho in [3, 6, 10] {
        let k = solve_optimal_kinship(rho).unwrap();
        assert!((eval_kinship(&k, 0.0).unwrap() - 1.0).abs() < 1e-9);
        assert!(eval_kinship(&k, -1.0).unwrap().abs() < 1e-9);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-1.0..3.0);
            let b: f64 = rng.random_range(-1.0..3.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            assert!(eval_kinship(&k, hi).unwrap() >= eval_kinship(&k, lo).unwrap() - 1e-12);
        }
    }
}

#[test]
fn below_domain_is_an_error() {
    let k = solve_optimal_kinship(3).unwrap();
    assert!(eval_kinship(&k, -1.5).is_err());
}

#[test]
fn verification_accepts_and_rejects() {
    let k = solve_optimal_kinship(5).unwrap();
    let r = verify_kinship(&k);
    assert!(r.passed && r.max_violation <= 1e-8);
    assert!(verify_kinship(&KinshipPoly::power(1)).passed);
    let mut tampered = KinshipPoly::power(1);
    tampered.zeta[1] = -1.0;
    assert!(!verify_kinship(&tampered).passed);
}

use pobo::basis::{legendre_basis, mixture_basis, orthonormal_basis_from_moments, PolyBasis};
use pobo::dist::{synthetic_mixture, ComponentSpec, TruncatedGaussianMixture};
use pobo::multi_index::MultiIndexSet;
use pobo::quadrature::{default_candidates, optimize_quadrature, rule_residual, QuadratureRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent evaluator: sum of coefficient times monomial of the normalized point.
fn direct(b: &PolyBasis, x: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = x.iter().zip(&b.center).zip(&b.scale).map(|((v, c), s)| (v - c) / s).collect();
    b.coeffs
        .iter()
        .map(|row| {
            row.iter()
                .zip(b.set.iter())
                .map(|(c, a)| c * a.iter().zip(&z).map(|(p, v)| v.powi(*p as i32)).product::<f64>())
                .sum()
        })
        .collect()
}

#[test]
fn legendre_first_order() {
    let b = legendre_basis(1, 1, &[(-1.0, 1.0)]).unwrap();
    let v = b.eval(&[0.4]).unwrap();
    assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] - 3f64.sqrt() * 0.4).abs() < 1e-14);
    let v = b.eval(&[1.0]).unwrap();
    assert!((v[1] - 3f64.sqrt()).abs() < 1e-14);
    let shifted = legendre_basis(1, 1, &[(0.0, 2.0)]).unwrap();
    let v = shifted.eval(&[1.7]).unwrap();
    assert!((v[1] - 3f64.sqrt() * 0.7).abs() < 1e-14);
}

#[test]
fn basis_counts() {
    assert_eq!(legendre_basis(2, 2, &[(-1.0, 1.0); 2]).unwrap().len(), 6);
    let m = synthetic_mixture();
    assert_eq!(mixture_basis(&m, 0).unwrap().len(), 1);
}

#[test]
fn hermite_limit() {
    let m = TruncatedGaussianMixture::new(vec![ComponentSpec {
        weight: 1.0,
        mean: vec![0.0],
        cov: vec![vec![1.0]],
        lower: vec![-1e6],
        upper: vec![1e6],
    }])
    .unwrap();
    let b = orthonormal_basis_from_moments(&m.raw_moments(4), 1, 2, vec![0.0], vec![1.0]).unwrap();
    for x in [-2.0, -0.3, 0.0, 1.1, 2.5] {
        let v = b.eval(&[x]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-9);
        assert!((v[1].abs() - x.abs()).abs() < 1e-8);
        assert!((v[2].abs() - ((x * x - 1.0) / 2f64.sqrt()).abs()).abs() < 1e-8);
    }
}

#[test]
fn mixture_basis_is_orthonormal_under_sampling() {
    let m = synthetic_mixture();
    let b = mixture_basis(&m, 2).unwrap();
    let n = 1_000_000;
    let xs = m.sample(n, 5).unwrap();
    let vals: Vec<Vec<f64>> = xs.iter().map(|x| b.eval(x).unwrap()).collect();
    for i in 0..b.len() {
        for j in 0..=i {
            let prods: Vec<f64> = vals.iter().map(|v| v[i] * v[j]).collect();
            let mean = prods.iter().sum::<f64>() / n as f64;
            let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64;
            let target = if i == j { 1.0 } else { 0.0 };
            assert!(
                (mean - target).abs() <= 4.0 * (var / n as f64).sqrt() + 1e-12,
                "({i},{j}): {mean}"
            );
        }
    }
}

#[test]
fn eval_matches_monomial_sum() {
    let m = synthetic_mixture();
    let b = mixture_basis(&m, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let x = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let v = b.eval(&x).unwrap();
        assert_eq!(v[0], 1.0);
        for (a, e) in v.iter().zip(direct(&b, &x)) {
            assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()), "{a} vs {e}");
        }
    }
}

#[test]
fn order_zero_rule() {
    let m = synthetic_mixture();
    let b = mixture_basis(&m, 0).unwrap();
    let r = optimize_quadrature(&b, &m, 0, default_candidates(&b, 0), 1).unwrap();
    assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(r.residual < 1e-12);
}

#[test]
fn optimized_rule_is_exact_and_self_consistent() {
    let m = synthetic_mixture();
    let b = mixture_basis(&m, 4).unwrap();
    let r = optimize_quadrature(&b, &m, 2, default_candidates(&b, 2), 1).unwrap();
    let mut targets = vec![0.0; b.len()];
    targets[0] = 1.0;
    assert!((rule_residual(&r, &b, &targets) - r.residual).abs() < 1e-14);
    assert!(r.points.iter().all(|p| m.in_support(p)));
    let mom = m.raw_moments(4);
    for g in MultiIndexSet::total_order(2, 4).iter() {
        let q = r.integrate(|p| p[0].powi(g[0] as i32) * p[1].powi(g[1] as i32));
        assert!((q - mom.get(g).unwrap()).abs() < 1e-6);
    }
    let mut bumped = r.clone();
    bumped.weights[0] += 0.1;
    assert!(rule_residual(&bumped, &b, &targets) > r.residual);
}

#[test]
fn gauss_legendre_tensor_rule_has_zero_residual() {
    // uniform measure on [-1,1]^2 with its own Legendre basis
    let b = legendre_basis(2, 4, &[(-1.0, 1.0); 2]).unwrap();
    let x = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    let w = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            points.push(vec![x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    let rule = QuadratureRule {
        points,
        weights,
        exactness_order: 4,
        residual: 0.0,
    };
    let mut targets = vec![0.0; b.len()];
    targets[0] = 1.0;
    assert!(rule_residual(&rule, &b, &targets) <= 1e-12);
}

use std::sync::OnceLock;

use pobo::basis::{legendre_basis, mixture_basis};
use pobo::bench::{prepare, BenchmarkName, ExperimentConfig, Prepared};
use pobo::dist::synthetic_mixture;
use pobo::kinship::solve_optimal_kinship;
use pobo::optimizer::{
    gamma_for, global_min_poly, grid_oracle, moment_reformulation, pobo_reformulation, risk_integral, scale_metric,
    solve_moment, solve_pobo, Method, SolverOptions,
};
use pobo::polynomial::Polynomial;
use pobo::surrogate::{fit_pce, PCESurrogate, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| prepare(&ExperimentConfig::for_problem(BenchmarkName::Synthetic)).unwrap())
}

fn fit_truth(f: impl Fn(&[f64], &[f64]) -> f64, n: usize, seed: u64) -> PCESurrogate {
    let m = synthetic_mixture();
    let bx = legendre_basis(2, 2, &[(-1.0, 1.0); 2]).unwrap();
    let bxi = mixture_basis(&m, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = m
        .sample(n, seed)
        .unwrap()
        .into_iter()
        .map(|xi| {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let value = f(&x, &xi);
            Sample { x, xi, value }
        })
        .collect();
    fit_pce(&samples, None, &bx, &bxi, 2).unwrap()
}

fn objective(x: &[f64], xi: &[f64]) -> f64 {
    3.0 * (x[0] + xi[0]) - (x[1] + xi[1])
}

fn constraint1(x: &[f64], xi: &[f64]) -> f64 {
    (x[0] + xi[0]).powi(2) + (x[1] + xi[1])
}

#[test]
fn exact_recovery_of_degree_two_truths() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let held = synthetic_mixture().sample(1000, 99).unwrap();
    for f in [objective as fn(&[f64], &[f64]) -> f64, constraint1] {
        let s = fit_truth(f, 80, 3);
        assert!(s.fit_residual <= 1e-10, "{}", s.fit_residual);
        for xi in &held {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert!((s.eval(&x, xi).unwrap() - f(&x, xi)).abs() <= 1e-8);
        }
        assert!((s.eval(&[0.3, -0.1], &[0.0, 0.0]).unwrap() - f(&[0.3, -0.1], &[0.0, 0.0])).abs() <= 1e-8);
    }
}

#[test]
fn constant_surrogate() {
    let s = fit_truth(|_, _| 7.0, 40, 4);
    assert!((s.coeffs[0] - 7.0).abs() < 1e-10);
    assert!(s.coeffs[1..].iter().all(|c| c.abs() < 1e-10));
    assert!((s.mean_over_xi().eval(&[0.2, 0.9]) - 7.0).abs() < 1e-10);
    assert!(s.variance_over_xi().eval(&[-0.4, 0.1]).abs() < 1e-12);
}

#[test]
fn linearity_of_evaluation() {
    let a = fit_truth(objective, 60, 5);
    let b = fit_truth(constraint1, 60, 6);
    let sum = a.sum(&b);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let xi = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
        let lhs = sum.eval(&x, &xi).unwrap();
        let rhs = a.eval(&x, &xi).unwrap() + b.eval(&x, &xi).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12);
    }
}

#[test]
fn mean_and_variance_against_sampling() {
    let obj = fit_truth(objective, 60, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        assert!((obj.mean_over_xi().eval(&x) - (3.0 * x[0] - x[1])).abs() < 1e-9);
    }
    let con = fit_truth(constraint1, 60, 6);
    let n = 1_000_000;
    let xs = synthetic_mixture().sample(n, 13).unwrap();
    let mut vals = Vec::new();
    for _ in 0..20 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        con.evaluator().eval_many(&x, &xs, &mut vals);
        let mean = vals.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = vals.iter().map(|v| (v - mean).powi(2)).collect();
        let var = c.iter().sum::<f64>() / n as f64;
        let var_var = c.iter().map(|v| (v - var).powi(2)).sum::<f64>() / n as f64;
        let se_mean = (var / n as f64).sqrt();
        let se_var = (var_var / n as f64).sqrt();
        assert!((con.mean_over_xi().eval(&x) - mean).abs() <= 4.0 * se_mean);
        assert!((con.variance_over_xi().eval(&x) - var).abs() <= 4.0 * se_var);
    }
}

#[test]
fn single_term_variance() {
    let s = fit_truth(|_, _| 0.0, 40, 4);
    let mut t = s.clone();
    t.coeffs.iter_mut().for_each(|c| *c = 0.0);
    let j = t.pairs.iter().position(|&(a, b)| a == 0 && b == 1).unwrap();
    t.coeffs[j] = 2.0;
    assert!((t.variance_over_xi().eval(&[0.5, 0.5]) - 4.0).abs() < 1e-12);
}

#[test]
fn scaling_examples() {
    let base = fit_truth(|_, _| 0.0, 40, 4);
    let m = synthetic_mixture();
    let boxes = m.support_boxes();
    let design = [(-1.0, 1.0); 2];
    let neg2 = base.affine(0.0, -2.0);
    let s = scale_metric(&neg2, &design, &boxes).unwrap();
    assert!((s.minimum + 2.0).abs() < 1e-12 && (s.factor - 0.5).abs() < 1e-12);
    let neg1 = base.affine(0.0, -1.0);
    assert!((scale_metric(&neg1, &design, &boxes).unwrap().factor - 1.0).abs() < 1e-12);
    // (x1+ξ1)² + (x2+ξ2) − 1 separates: min of the square is 0 when the shifted
    // range straddles 0, and the linear part is smallest at its lower end
    let ups = fit_truth(constraint1, 80, 3).affine(1.0, -1.0);
    let s = scale_metric(&ups, &design, &boxes).unwrap();
    let oracle = boxes
        .iter()
        .map(|b| {
            let (lo, hi) = (-1.0 + b[0].0, 1.0 + b[0].1);
            let sq = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()).powi(2) };
            sq + (-1.0 + b[1].0) - 1.0
        })
        .fold(f64::INFINITY, f64::min);
    assert!((s.minimum - oracle).abs() <= 1e-3, "{} vs {oracle}", s.minimum);
}

#[test]
fn global_min_examples() {
    let sq = Polynomial::from_terms(1, &[(vec![2], 1.0)]).unwrap();
    let m = global_min_poly(&sq, &[(-1.0, 1.0)]);
    assert!(m.value.abs() < 1e-12);
    let lin = Polynomial::from_terms(2, &[(vec![1, 0], 3.0), (vec![0, 1], -1.0)]).unwrap();
    let m = global_min_poly(&lin, &[(-1.0, 1.0); 2]);
    assert!((m.value + 4.0).abs() < 1e-12 && m.argmin == vec![-1.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut terms = Vec::new();
    for i in 0..=4u32 {
        for j in 0..=(4 - i) {
            terms.push((vec![i, j], rng.random_range(-1.0..1.0)));
        }
    }
    let p = Polynomial::from_terms(2, &terms).unwrap();
    let n = 2000;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let x = [-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64];
            best = best.min(p.eval(&x));
        }
    }
    let m = global_min_poly(&p, &[(-1.0, 1.0); 2]);
    assert!(m.value <= best + 1e-12 && m.value >= best - 1e-5, "{} vs {best}", m.value);
}

#[test]
fn risk_integral_at_constant_levels() {
    let prep = synthetic();
    let base = fit_truth(|_, _| 0.0, 40, 4);
    let k = solve_optimal_kinship(5).unwrap();
    assert!(risk_integral(&k, &base.affine(0.0, -1.0), &prep.rule, &[0.0, 0.0]).unwrap().abs() < 1e-9);
    assert!((risk_integral(&k, &base, &prep.rule, &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn cantelli_multiplier() {
    assert_eq!(gamma_for(0.1), 3.0);
    assert!((gamma_for(0.05) - 19f64.sqrt()).abs() < 1e-15);
}

#[test]
fn synthetic_solutions_are_certified() {
    let prep = synthetic();
    let opts = prep.config.solver_options();
    for eps in [0.05, 0.1] {
        let p = prep.problem.with_risk(eps);
        let pobo = solve_pobo(&p, &prep.kinship, &prep.rule, opts).unwrap();
        let (reform, _) = pobo_reformulation(&p, &prep.kinship, &prep.rule).unwrap();
        let oracle = grid_oracle(&reform, 101).unwrap();
        assert!(pobo.objective_value >= oracle.best_objective.unwrap() - 1e-3);
        assert!(pobo.per_constraint.iter().all(|c| c.risk_bound <= eps + 1e-6));
        let moment = solve_moment(&p, opts).unwrap();
        let reform = moment_reformulation(&p).unwrap();
        let oracle = grid_oracle(&reform, 101).unwrap();
        assert!(moment.objective_value >= oracle.best_objective.unwrap() - 1e-3);
        assert_eq!(moment.method, Method::Moment);
    }
    assert!(solve_moment(&prep.problem.with_risk(0.01), opts).is_err());
}

#[test]
fn vacuous_constraints_give_unconstrained_maximizer() {
    let prep = synthetic();
    let mut p = prep.problem.with_risk(1e-3);
    for c in &mut p.constraints {
        c.bound = 1e6;
    }
    let r = solve_pobo(&p, &prep.kinship, &prep.rule, SolverOptions::default()).unwrap();
    assert!((r.x_star[0] - 1.0).abs() < 1e-6 && (r.x_star[1] + 1.0).abs() < 1e-6, "{:?}", r.x_star);
    assert!((r.objective_value - 4.0).abs() < 1e-6);
}

#[test]
fn oracle_on_unconstrained_linear_objective_picks_a_vertex() {
    let prep = synthetic();
    let mut p = prep.problem.with_risk(0.1);
    p.constraints.clear();
    let reform = moment_reformulation(&p).unwrap();
    let o = grid_oracle(&reform, 11).unwrap();
    assert_eq!(o.best_x.unwrap(), vec![1.0, -1.0]);
    assert_eq!(o.n_feasible, o.n_points);
}

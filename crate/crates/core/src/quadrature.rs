//! Optimization-based quadrature for the uncertainty measure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{basis_expectations, PolyBasis, Scratch};
use crate::dist::TruncatedGaussianMixture;
use crate::error::{Error, Result};
use crate::nnls::nnls;

pub const RESIDUAL_TOL: f64 = 1e-12;
const MAX_OUTER: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub exactness_order: usize,
    pub residual: f64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ_l w_l f(ξ_l)`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Default candidate pool size: 500 per target basis function.
pub fn default_candidates(basis: &PolyBasis, q: usize) -> usize {
    500 * basis.set.prefix_len(2 * q)
}

/// Squared distance between target expectations and the rule's basis integrals,
/// over the basis functions of order at most `rule.exactness_order`.
pub fn rule_residual(rule: &QuadratureRule, basis: &PolyBasis, targets: &[f64]) -> f64 {
    let k = basis.set.prefix_len(rule.exactness_order).min(targets.len());
    let sums = basis_sums(basis, &rule.points, &rule.weights);
    (0..k).map(|i| (targets[i] - sums[i]).powi(2)).sum()
}

fn basis_sums(basis: &PolyBasis, points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut scratch = Scratch::default();
    let mut v = vec![0.0; basis.len()];
    let mut out = vec![0.0; basis.len()];
    for (p, w) in points.iter().zip(weights) {
        basis.eval_into(p, &mut scratch, &mut v);
        for (o, vi) in out.iter_mut().zip(&v) {
            *o += w * vi;
        }
    }
    out
}

/// Points and nonnegative weights integrating every basis function of order
/// at most `2q` exactly under `model`.
pub fn optimize_quadrature(
    basis: &PolyBasis,
    model: &TruncatedGaussianMixture,
    q: usize,
    n_candidates: usize,
    seed: u64,
) -> Result<QuadratureRule> {
    if basis.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: basis.dim(),
        });
    }
    let order = 2 * q;
    if basis.max_order() < order {
        return Err(Error::Basis(format!(
            "quadrature of order {order} needs a basis of at least that order (have {})",
            basis.max_order()
        )));
    }
    let basis = basis.truncated(order);
    let k = basis.len();
    let moments = model
        .standardized(&basis.center, &basis.scale)?
        .raw_moments(order);
    let expect = basis_expectations(&basis, &moments);
    for (i, e) in expect.iter().enumerate() {
        let want = if i == 0 { 1.0 } else { 0.0 };
        if (e - want).abs() > 1e-8 {
            return Err(Error::Basis(format!(
                "basis function {i} has expectation {e}, expected {want}; basis is not orthonormal for this model"
            )));
        }
    }
    let mut targets = vec![0.0; k];
    targets[0] = 1.0;

    let n_candidates = n_candidates.max(k);
    let candidates = model.sample(n_candidates, seed)?;
    let mut scratch = Scratch::default();
    let mut a = DMatrix::zeros(k, n_candidates);
    let mut v = vec![0.0; k];
    for (j, p) in candidates.iter().enumerate() {
        basis.eval_into(p, &mut scratch, &mut v);
        for i in 0..k {
            a[(i, j)] = v[i];
        }
    }
    let b = DVector::from_vec(targets.clone());
    let (w, _) = nnls(&a, &b);
    let wmax = w.max();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for j in 0..n_candidates {
        if w[j] > 1e-14 * wmax {
            points.push(candidates[j].clone());
            weights.push(w[j]);
        }
    }
    let mut rule = QuadratureRule {
        points,
        weights,
        exactness_order: order,
        residual: 0.0,
    };
    rule.residual = rule_residual(&rule, &basis, &targets);
    let mut outer = 0;
    while rule.residual > RESIDUAL_TOL && outer < MAX_OUTER {
        refine(&mut rule, &basis, model, &targets);
        outer += 1;
    }
    if rule.residual > RESIDUAL_TOL {
        return Err(Error::QuadratureNotConverged {
            residual: rule.residual,
            points: rule.len(),
        });
    }
    Ok(rule)
}

/// One damped Gauss–Newton step on (points, weights), followed by clipping and pruning.
pub fn refine(rule: &mut QuadratureRule, basis: &PolyBasis, model: &TruncatedGaussianMixture, targets: &[f64]) {
    let d = basis.dim();
    let k = basis.set.prefix_len(rule.exactness_order);
    let m = rule.len();
    let nvar = m * (d + 1);
    let mut scratch = Scratch::default();
    let mut val = vec![0.0; basis.len()];
    let mut grad = vec![0.0; basis.len() * d];
    let mut jac = DMatrix::zeros(k, nvar);
    let mut r = DVector::zeros(k);
    for i in 0..k {
        r[i] = -targets[i];
    }
    for (l, (p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        basis.eval_grad_into(p, &mut scratch, &mut val, &mut grad);
        for i in 0..k {
            r[i] += w * val[i];
            jac[(i, l)] = val[i];
            for j in 0..d {
                jac[(i, m + l * d + j)] = w * grad[i * d + j];
            }
        }
    }
    let svd = jac.svd(true, true);
    let tol = svd.singular_values.max() * 1e-13;
    let step = match svd.solve(&(-&r), tol) {
        Ok(s) => s,
        Err(_) => return,
    };
    let boxes = model.support_boxes();
    let before = rule.residual;
    let mut t = 1.0;
    for _ in 0..30 {
        let mut trial = rule.clone();
        for l in 0..m {
            trial.weights[l] = (rule.weights[l] + t * step[l]).max(0.0);
            let moved: Vec<f64> = (0..d)
                .map(|j| rule.points[l][j] + t * step[m + l * d + j])
                .collect();
            trial.points[l] = clip_to_union(&moved, &boxes);
        }
        prune(&mut trial);
        trial.residual = rule_residual(&trial, basis, targets);
        if trial.residual < before {
            *rule = trial;
            return;
        }
        t *= 0.5;
    }
}

fn prune(rule: &mut QuadratureRule) {
    let keep: Vec<bool> = rule.weights.iter().map(|&w| w > 0.0).collect();
    let mut i = 0;
    rule.points.retain(|_| {
        let k = keep[i];
        i += 1;
        k
    });
    rule.weights.retain(|&w| w > 0.0);
}

/// Nearest point of the union of boxes.
pub fn clip_to_union(p: &[f64], boxes: &[Vec<(f64, f64)>]) -> Vec<f64> {
    let mut best = p.to_vec();
    let mut best_d = f64::INFINITY;
    for bx in boxes {
        let c: Vec<f64> = p.iter().zip(bx).map(|(v, (a, b))| v.clamp(*a, *b)).collect();
        let dist: f64 = c.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
        if dist < best_d {
            best_d = dist;
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{legendre_basis, mixture_basis};
    use crate::dist::{synthetic_mixture, ComponentSpec};
    use crate::gauss::gauss_legendre_on;

    #[test]
    fn order_zero_single_point() {
        let m = synthetic_mixture();
        let b = mixture_basis(&m, 0).unwrap();
        let r = optimize_quadrature(&b, &m, 0, 10, 1).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
        assert!(r.residual < 1e-28);
        assert!(m.in_support(&r.points[0]));
    }

    #[test]
    fn synthetic_order_two_rule() {
        let m = synthetic_mixture();
        let b = mixture_basis(&m, 4).unwrap();
        let r = optimize_quadrature(&b, &m, 2, default_candidates(&b, 2), 11).unwrap();
        assert!(r.residual <= RESIDUAL_TOL);
        assert!(r.weights.iter().all(|&w| w >= 0.0));
        let total: f64 = r.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-8);
        assert!(r.len() <= 15 + 2);
        let mut t = vec![0.0; b.set.prefix_len(4)];
        t[0] = 1.0;
        assert!((rule_residual(&r, &b, &t) - r.residual).abs() < 1e-14);
        let mut bumped = r.clone();
        bumped.weights[0] += 0.1;
        assert!(rule_residual(&bumped, &b, &t) > r.residual);
        // deterministic per seed
        let again = optimize_quadrature(&b, &m, 2, default_candidates(&b, 2), 11).unwrap();
        assert_eq!(again.points, r.points);
        assert_eq!(again.weights, r.weights);
    }

    #[test]
    fn tensor_gauss_rule_for_uniform_box() {
        let bx = [(-1.0, 2.0), (0.0, 0.5)];
        let b = legendre_basis(2, 4, &bx).unwrap();
        let (x0, w0) = gauss_legendre_on(3, bx[0].0, bx[0].1);
        let (x1, w1) = gauss_legendre_on(3, bx[1].0, bx[1].1);
        let vol = 3.0 * 0.5;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (a, wa) in x0.iter().zip(&w0) {
            for (c, wc) in x1.iter().zip(&w1) {
                points.push(vec![*a, *c]);
                weights.push(wa * wc / vol);
            }
        }
        let rule = QuadratureRule {
            points,
            weights,
            exactness_order: 4,
            residual: 0.0,
        };
        let mut t = vec![0.0; 15];
        t[0] = 1.0;
        assert!(rule_residual(&rule, &b, &t) <= 1e-12);
    }

    #[test]
    fn gauss_newton_repairs_perturbed_rule() {
        let m = TruncatedGaussianMixture::new(vec![ComponentSpec {
            weight: 1.0,
            mean: vec![0.0],
            cov: vec![vec![1.0]],
            lower: vec![-3.0],
            upper: vec![3.0],
        }])
        .unwrap();
        let b = mixture_basis(&m, 2).unwrap();
        let mut t = vec![0.0; 3];
        t[0] = 1.0;
        // three-point Gauss-Hermite-like rule, knocked off its nodes
        let mut rule = QuadratureRule {
            points: vec![vec![-1.6], vec![0.05], vec![1.75]],
            weights: vec![0.2, 0.6, 0.2],
            exactness_order: 2,
            residual: 0.0,
        };
        rule.residual = rule_residual(&rule, &b, &t);
        let start = rule.residual;
        for _ in 0..20 {
            if rule.residual <= RESIDUAL_TOL {
                break;
            }
            refine(&mut rule, &b, &m, &t);
            assert!(rule.weights.iter().all(|&w| w >= 0.0));
        }
        assert!(start > 1e-4);
        assert!(rule.residual <= RESIDUAL_TOL, "residual {}", rule.residual);
    }

    #[test]
    fn clipping_targets_nearest_box() {
        let boxes = vec![vec![(0.0, 1.0), (0.0, 1.0)], vec![(2.0, 3.0), (0.0, 1.0)]];
        assert_eq!(clip_to_union(&[1.8, 0.5], &boxes), vec![2.0, 0.5]);
        assert_eq!(clip_to_union(&[1.2, 2.0], &boxes), vec![1.0, 1.0]);
    }
}

//! Joint polynomial-chaos surrogates over design variables and variations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{PolyBasis, Scratch};
use crate::error::{Error, Result};
use crate::gauss::gauss_legendre_on;
use crate::multi_index::MultiIndexSet;
use crate::polynomial::Polynomial;
use crate::quadrature::QuadratureRule;

const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub value: f64,
}

/// `f(x, ξ) ≈ Σ c_{αβ} Φ_α(x) Ψ_β(ξ)` over pairs with `|α| + |β| ≤ p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PCESurrogate {
    pub basis_x: PolyBasis,
    pub basis_xi: PolyBasis,
    pub total_order: usize,
    /// `(α index, β index)` per coefficient, graded over the joint index
    pub pairs: Vec<(usize, usize)>,
    pub coeffs: Vec<f64>,
    pub fit_residual: f64,
}

/// Index pairs with joint total order at most `p`, in graded order of the joint index.
pub fn index_pairs(basis_x: &PolyBasis, basis_xi: &PolyBasis, p: usize) -> Vec<(usize, usize)> {
    let d1 = basis_x.dim();
    let d2 = basis_xi.dim();
    let joint = MultiIndexSet::total_order(d1 + d2, p);
    joint
        .iter()
        .map(|g| {
            (
                basis_x.set.position(&g[..d1]).expect("x basis covers order p"),
                basis_xi.set.position(&g[d1..]).expect("xi basis covers order p"),
            )
        })
        .collect()
}

/// A function of `x` alone, `Σ_α c_α Φ_α(x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XExpansion {
    pub basis: PolyBasis,
    pub coeffs: Vec<f64>,
}

impl XExpansion {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = self.basis.eval(x).expect("dimension");
        v.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn to_polynomial(&self) -> Polynomial {
        let mut p = Polynomial::zero(self.basis.dim(), self.basis.max_order());
        p.center = self.basis.center.clone();
        p.scale = self.basis.scale.clone();
        for (row, c) in self.basis.coeffs.iter().zip(&self.coeffs) {
            for (k, v) in row.iter().enumerate() {
                p.coeffs[k] += c * v;
            }
        }
        p
    }
}

impl PCESurrogate {
    pub fn dims(&self) -> (usize, usize) {
        (self.basis_x.dim(), self.basis_xi.dim())
    }

    /// Surrogate with every coefficient zero except the constant.
    pub fn constant(basis_x: PolyBasis, basis_xi: PolyBasis, p: usize, value: f64) -> Self {
        let basis_x = basis_x.truncated(p);
        let basis_xi = basis_xi.truncated(p);
        let pairs = index_pairs(&basis_x, &basis_xi, p);
        let mut coeffs = vec![0.0; pairs.len()];
        coeffs[0] = value;
        PCESurrogate {
            basis_x,
            basis_xi,
            total_order: p,
            pairs,
            coeffs,
            fit_residual: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        let (d1, d2) = self.dims();
        if x.len() != d1 {
            return Err(Error::DimensionMismatch {
                expected: d1,
                got: x.len(),
            });
        }
        if xi.len() != d2 {
            return Err(Error::DimensionMismatch {
                expected: d2,
                got: xi.len(),
            });
        }
        let phi = self.basis_x.eval(x)?;
        let psi = self.basis_xi.eval(xi)?;
        Ok(self
            .pairs
            .iter()
            .zip(&self.coeffs)
            .map(|(&(a, b), c)| c * phi[a] * psi[b])
            .sum())
    }

    /// Fast evaluator with reusable buffers.
    pub fn evaluator(&self) -> SurrogateEvaluator<'_> {
        SurrogateEvaluator {
            s: self,
            scratch: Scratch::default(),
            phi: vec![0.0; self.basis_x.len()],
            psi: vec![0.0; self.basis_xi.len()],
        }
    }

    /// `a · f + b`.
    pub fn affine(&self, a: f64, b: f64) -> PCESurrogate {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= a;
        }
        out.coeffs[0] += b;
        out.fit_residual *= a.abs();
        out
    }

    /// Coefficient-wise sum of two surrogates on the same bases.
    pub fn sum(&self, other: &PCESurrogate) -> PCESurrogate {
        assert_eq!(self.pairs, other.pairs);
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o;
        }
        out
    }

    /// `g_β(x) = Σ_α c_{αβ} Φ_α(x)` for every ξ-basis index `β`.
    pub fn xi_components(&self) -> Vec<XExpansion> {
        let mut out: Vec<XExpansion> = (0..self.basis_xi.len())
            .map(|_| XExpansion {
                basis: self.basis_x.clone(),
                coeffs: vec![0.0; self.basis_x.len()],
            })
            .collect();
        for (&(a, b), c) in self.pairs.iter().zip(&self.coeffs) {
            out[b].coeffs[a] += c;
        }
        out
    }

    pub fn mean_over_xi(&self) -> XExpansion {
        self.xi_components().swap_remove(0)
    }

    /// `Σ_{β≠0} g_β(x)²` as a polynomial in `x`.
    pub fn variance_over_xi(&self) -> Polynomial {
        let comps = self.xi_components();
        let mut acc = Polynomial::zero(self.basis_x.dim(), 2 * self.basis_x.max_order());
        acc.center = self.basis_x.center.clone();
        acc.scale = self.basis_x.scale.clone();
        for g in comps.iter().skip(1) {
            if g.coeffs.iter().all(|&c| c == 0.0) {
                continue;
            }
            let p = g.to_polynomial();
            acc = acc.add(&p.mul(&p));
        }
        acc
    }

    /// The surrogate as one polynomial in the joint coordinates `(x, ξ)`.
    pub fn to_polynomial(&self) -> Polynomial {
        let (d1, d2) = self.dims();
        let mut p = Polynomial::zero(d1 + d2, self.total_order);
        p.center = [self.basis_x.center.clone(), self.basis_xi.center.clone()].concat();
        p.scale = [self.basis_x.scale.clone(), self.basis_xi.scale.clone()].concat();
        let mut e = vec![0u32; d1 + d2];
        for (&(a, b), c) in self.pairs.iter().zip(&self.coeffs) {
            if *c == 0.0 {
                continue;
            }
            for (k, &ca) in self.basis_x.coeffs[a].iter().enumerate() {
                if ca == 0.0 {
                    continue;
                }
                for (l, &cb) in self.basis_xi.coeffs[b].iter().enumerate() {
                    if cb == 0.0 {
                        continue;
                    }
                    e[..d1].copy_from_slice(self.basis_x.set.get(k));
                    e[d1..].copy_from_slice(self.basis_xi.set.get(l));
                    let i = p.set.position(&e).unwrap();
                    p.coeffs[i] += c * ca * cb;
                }
            }
        }
        p
    }
}

pub struct SurrogateEvaluator<'a> {
    s: &'a PCESurrogate,
    scratch: Scratch,
    phi: Vec<f64>,
    psi: Vec<f64>,
}

impl SurrogateEvaluator<'_> {
    pub fn eval(&mut self, x: &[f64], xi: &[f64]) -> f64 {
        self.s.basis_x.eval_into(x, &mut self.scratch, &mut self.phi);
        self.s.basis_xi.eval_into(xi, &mut self.scratch, &mut self.psi);
        self.s
            .pairs
            .iter()
            .zip(&self.s.coeffs)
            .map(|(&(a, b), c)| c * self.phi[a] * self.psi[b])
            .sum()
    }

    /// Precompute `Φ(x)` once and evaluate many `ξ`.
    pub fn eval_many(&mut self, x: &[f64], xis: &[Vec<f64>], out: &mut Vec<f64>) {
        self.s.basis_x.eval_into(x, &mut self.scratch, &mut self.phi);
        let nb = self.s.basis_xi.len();
        let mut g = vec![0.0; nb];
        for (&(a, b), c) in self.s.pairs.iter().zip(&self.s.coeffs) {
            g[b] += c * self.phi[a];
        }
        out.clear();
        for xi in xis {
            self.s.basis_xi.eval_into(xi, &mut self.scratch, &mut self.psi);
            out.push(g.iter().zip(&self.psi).map(|(a, b)| a * b).sum());
        }
    }
}

fn design_rows(samples: &[Sample], basis_x: &PolyBasis, basis_xi: &PolyBasis, pairs: &[(usize, usize)]) -> DMatrix<f64> {
    let mut scratch = Scratch::default();
    let mut phi = vec![0.0; basis_x.len()];
    let mut psi = vec![0.0; basis_xi.len()];
    let mut a = DMatrix::zeros(samples.len(), pairs.len());
    for (r, s) in samples.iter().enumerate() {
        basis_x.eval_into(&s.x, &mut scratch, &mut phi);
        basis_xi.eval_into(&s.xi, &mut scratch, &mut psi);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            a[(r, k)] = phi[i] * psi[j];
        }
    }
    a
}

/// Weighted least-squares fit of the order-`p` joint expansion.
pub fn fit_pce(
    samples: &[Sample],
    weights: Option<&[f64]>,
    basis_x: &PolyBasis,
    basis_xi: &PolyBasis,
    p: usize,
) -> Result<PCESurrogate> {
    if basis_x.max_order() < p || basis_xi.max_order() < p {
        return Err(Error::Basis(format!("bases must reach order {p}")));
    }
    let basis_x = basis_x.truncated(p);
    let basis_xi = basis_xi.truncated(p);
    for s in samples {
        if s.x.len() != basis_x.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis_x.dim(),
                got: s.x.len(),
            });
        }
        if s.xi.len() != basis_xi.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis_xi.dim(),
                got: s.xi.len(),
            });
        }
    }
    let pairs = index_pairs(&basis_x, &basis_xi, p);
    if samples.len() < pairs.len() {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let a = design_rows(samples, &basis_x, &basis_xi, &pairs);
    let sw: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != samples.len() {
                return Err(Error::DimensionMismatch {
                    expected: samples.len(),
                    got: w.len(),
                });
            }
            w.iter().map(|v| v.max(0.0).sqrt()).collect()
        }
        None => vec![1.0; samples.len()],
    };
    let aw = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * sw[r]);
    let yw = DVector::from_fn(samples.len(), |r, _| samples[r].value * sw[r]);
    let svd = aw.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let c = svd.solve(&yw, 0.0).expect("svd has vectors");
    let fitted = &a * &c;
    let fit_residual = (samples
        .iter()
        .zip(fitted.iter())
        .map(|(s, f)| (s.value - f).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    Ok(PCESurrogate {
        basis_x,
        basis_xi,
        total_order: p,
        pairs,
        coeffs: c.iter().copied().collect(),
        fit_residual,
    })
}

/// One row of a sample plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanPoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub weight: f64,
}

/// Cartesian product of `(p+1)`-point Gauss–Legendre nodes per design axis with the ξ rule.
pub fn product_plan(design_box: &[(f64, f64)], p: usize, rule: &QuadratureRule) -> Vec<PlanPoint> {
    let per_axis: Vec<(Vec<f64>, Vec<f64>)> = design_box
        .iter()
        .map(|&(a, b)| {
            let (x, w) = gauss_legendre_on(p + 1, a, b);
            (x, w.iter().map(|v| v / (b - a)).collect())
        })
        .collect();
    let mut xs: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for (nodes, weights) in &per_axis {
        let mut next = Vec::with_capacity(xs.len() * nodes.len());
        for (x, w) in &xs {
            for (n, v) in nodes.iter().zip(weights) {
                let mut x2 = x.clone();
                x2.push(*n);
                next.push((x2, w * v));
            }
        }
        xs = next;
    }
    let mut plan = Vec::with_capacity(xs.len() * rule.len());
    for (x, wx) in &xs {
        for (xi, wq) in rule.points.iter().zip(&rule.weights) {
            plan.push(PlanPoint {
                x: x.clone(),
                xi: xi.clone(),
                weight: wx * wq,
            });
        }
    }
    plan
}

/// Choose `budget` rows of a plan: pivoted Gram–Schmidt on the weighted design rows
/// until full rank, then the heaviest remaining rows. Returned indices are sorted.
pub fn greedy_subsample(
    plan: &[PlanPoint],
    basis_x: &PolyBasis,
    basis_xi: &PolyBasis,
    p: usize,
    budget: usize,
) -> Vec<usize> {
    if budget >= plan.len() {
        return (0..plan.len()).collect();
    }
    let bx = basis_x.truncated(p);
    let bxi = basis_xi.truncated(p);
    let pairs = index_pairs(&bx, &bxi, p);
    let samples: Vec<Sample> = plan
        .iter()
        .map(|q| Sample {
            x: q.x.clone(),
            xi: q.xi.clone(),
            value: 0.0,
        })
        .collect();
    let a = design_rows(&samples, &bx, &bxi, &pairs);
    let n = plan.len();
    let k = pairs.len();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let s = plan[r].weight.max(0.0).sqrt();
            (0..k).map(|c| a[(r, c)] * s).collect()
        })
        .collect();
    let norm0 = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt();
    let mut chosen = vec![false; n];
    let mut picked = Vec::with_capacity(budget);
    while picked.len() < budget.min(k) {
        let mut best = None;
        let mut best_norm = 1e-10 * norm0;
        for r in 0..n {
            if chosen[r] {
                continue;
            }
            let nr = rows[r].iter().map(|v| v * v).sum::<f64>().sqrt();
            if nr > best_norm {
                best_norm = nr;
                best = Some(r);
            }
        }
        let Some(r) = best else { break };
        chosen[r] = true;
        picked.push(r);
        let q: Vec<f64> = rows[r].iter().map(|v| v / best_norm).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            if chosen[i] {
                continue;
            }
            let d: f64 = row.iter().zip(&q).map(|(a, b)| a * b).sum();
            for (v, qv) in row.iter_mut().zip(&q) {
                *v -= d * qv;
            }
        }
    }
    let mut rest: Vec<usize> = (0..n).filter(|&r| !chosen[r]).collect();
    rest.sort_by(|&a, &b| plan[b].weight.total_cmp(&plan[a].weight).then(a.cmp(&b)));
    for r in rest.into_iter().take(budget - picked.len()) {
        picked.push(r);
    }
    picked.sort_unstable();
    picked
}

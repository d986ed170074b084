//! Deterministic reformulations of the chance constraints.

use serde::{Deserialize, Serialize};

use crate::basis::{PolyBasis, Scratch};
use crate::error::{Error, Result};
use crate::kinship::KinshipPoly;
use crate::polynomial::Polynomial;
use crate::quadrature::QuadratureRule;
use crate::surrogate::PCESurrogate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pobo,
    Moment,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pobo => "pobo",
            Method::Moment => "moment",
        }
    }
}

/// Maximize `objective(x)` over a box subject to `constraints(x) ≤ 0`.
pub trait Reformulation: Sync {
    fn bounds(&self) -> &[(f64, f64)];
    fn n_constraints(&self) -> usize;
    fn method(&self) -> Method;
    /// Mean objective and its gradient.
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>);
    fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective(x).0
    }
    /// Constraint values (feasible when `≤ 0`) and gradients.
    fn constraints(&self, x: &[f64]) -> Result<Vec<(f64, Vec<f64>)>>;
    fn constraint_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.constraints(x)?.into_iter().map(|c| c.0).collect())
    }
    /// Per-constraint risk bound reported to users (risk integral or Cantelli bound).
    fn risk_bounds(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Typical magnitude of each constraint, used to balance penalty terms.
    fn constraint_scale(&self, i: usize) -> f64;
}

/// Sum `Σ_l w_l κ(υ(x, ξ_l))` and its gradient, with `υ` precomputed as
/// `υ(x, ξ_l) = Σ_α G_l[α] Φ_α(x)`.
#[derive(Debug, Clone)]
pub struct RiskIntegral {
    pub basis_x: PolyBasis,
    /// `g[l][α]`
    pub g: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl RiskIntegral {
    pub fn new(upsilon_scaled: &PCESurrogate, rule: &QuadratureRule) -> Self {
        let mut scratch = Scratch::default();
        let bxi = &upsilon_scaled.basis_xi;
        let mut psi = vec![0.0; bxi.len()];
        let na = upsilon_scaled.basis_x.len();
        let g = rule
            .points
            .iter()
            .map(|xi| {
                bxi.eval_into(xi, &mut scratch, &mut psi);
                let mut row = vec![0.0; na];
                for (&(a, b), c) in upsilon_scaled.pairs.iter().zip(&upsilon_scaled.coeffs) {
                    row[a] += c * psi[b];
                }
                row
            })
            .collect();
        RiskIntegral {
            basis_x: upsilon_scaled.basis_x.clone(),
            g,
            weights: rule.weights.clone(),
        }
    }

    fn upsilon_values(&self, phi: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let phi = phi.to_vec();
        self.g
            .iter()
            .map(move |row| row.iter().zip(&phi).map(|(a, b)| a * b).sum())
    }

    fn check(v: f64) -> Result<f64> {
        if v < -1.0 - 1e-6 {
            return Err(Error::ScalingBug(v));
        }
        Ok(v.max(-1.0))
    }

    pub fn value(&self, k: &KinshipPoly, x: &[f64]) -> Result<f64> {
        let phi = self.basis_x.eval(x)?;
        self.value_from_phi(k, &phi)
    }

    pub fn value_from_phi(&self, k: &KinshipPoly, phi: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for (v, w) in self.upsilon_values(phi).zip(&self.weights) {
            let v = Self::check(v)?;
            s += w * k.value_and_slope(v).0;
        }
        Ok(s)
    }

    pub fn value_grad(&self, k: &KinshipPoly, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.basis_x.dim();
        let n = self.basis_x.len();
        let mut scratch = Scratch::default();
        let mut phi = vec![0.0; n];
        let mut dphi = vec![0.0; n * d];
        self.basis_x.eval_grad_into(x, &mut scratch, &mut phi, &mut dphi);
        let mut s = 0.0;
        let mut grad = vec![0.0; d];
        for (row, w) in self.g.iter().zip(&self.weights) {
            let raw: f64 = row.iter().zip(&phi).map(|(a, b)| a * b).sum();
            let v = Self::check(raw)?;
            let (kv, ks) = k.value_and_slope(v);
            s += w * kv;
            for (a, ga) in row.iter().enumerate() {
                if *ga == 0.0 {
                    continue;
                }
                for j in 0..d {
                    grad[j] += w * ks * ga * dphi[a * d + j];
                }
            }
        }
        Ok((s, grad))
    }
}

/// Risk integral of a scaled metric at one design point.
pub fn risk_integral(k: &KinshipPoly, upsilon_scaled: &PCESurrogate, rule: &QuadratureRule, x: &[f64]) -> Result<f64> {
    RiskIntegral::new(upsilon_scaled, rule).value(k, x)
}

#[derive(Debug, Clone)]
pub struct PoboReformulation {
    pub bounds: Vec<(f64, f64)>,
    pub objective: Polynomial,
    pub kinship: KinshipPoly,
    pub integrals: Vec<RiskIntegral>,
    pub risks: Vec<f64>,
}

impl Reformulation for PoboReformulation {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn n_constraints(&self) -> usize {
        self.integrals.len()
    }
    fn method(&self) -> Method {
        Method::Pobo
    }
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.objective.eval_grad(x)
    }
    fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }
    fn constraints(&self, x: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        self.integrals
            .iter()
            .zip(&self.risks)
            .map(|(ri, eps)| {
                let (v, g) = ri.value_grad(&self.kinship, x)?;
                Ok((v - eps, g))
            })
            .collect()
    }
    fn constraint_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let Some(first) = self.integrals.first() else {
            return Ok(Vec::new());
        };
        let phi = first.basis_x.eval(x)?;
        self.integrals
            .iter()
            .zip(&self.risks)
            .map(|(ri, eps)| Ok(ri.value_from_phi(&self.kinship, &phi)? - eps))
            .collect()
    }
    fn risk_bounds(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.integrals.iter().map(|ri| ri.value(&self.kinship, x)).collect()
    }
    fn constraint_scale(&self, i: usize) -> f64 {
        self.risks[i]
    }
}

/// `m(x) + γ sqrt(v(x)) - u ≤ 0`, after normalizing to the upper sense.
#[derive(Debug, Clone)]
pub struct MomentConstraint {
    pub mean: Polynomial,
    pub variance: Polynomial,
    pub gamma: f64,
    pub bound: f64,
    pub scale: f64,
}

impl MomentConstraint {
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (m, gm) = self.mean.eval_grad(x);
        let (v, gv) = self.variance.eval_grad(x);
        let v = v.max(0.0);
        let sd = v.sqrt();
        let grad = if sd > 1e-150 {
            gm.iter()
                .zip(&gv)
                .map(|(a, b)| a + self.gamma * b / (2.0 * sd))
                .collect()
        } else {
            gm
        };
        (m + self.gamma * sd - self.bound, grad)
    }

    fn cantelli(&self, x: &[f64]) -> f64 {
        let m = self.mean.eval(x);
        let v = self.variance.eval(x).max(0.0);
        let slack = self.bound - m;
        if slack <= 0.0 {
            1.0
        } else {
            v / (v + slack * slack)
        }
    }
}

/// Cantelli multiplier `sqrt((1 - ε) / ε)`.
pub fn gamma_for(eps: f64) -> f64 {
    (1.0 / eps - 1.0).sqrt()
}

#[derive(Debug, Clone)]
pub struct MomentReformulation {
    pub bounds: Vec<(f64, f64)>,
    pub objective: Polynomial,
    pub constraints: Vec<MomentConstraint>,
}

impl Reformulation for MomentReformulation {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn n_constraints(&self) -> usize {
        self.constraints.len()
    }
    fn method(&self) -> Method {
        Method::Moment
    }
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.objective.eval_grad(x)
    }
    fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }
    fn constraints(&self, x: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        Ok(self.constraints.iter().map(|c| c.value_grad(x)).collect())
    }
    fn constraint_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .constraints
            .iter()
            .map(|c| c.mean.eval(x) + c.gamma * c.variance.eval(x).max(0.0).sqrt() - c.bound)
            .collect())
    }
    fn risk_bounds(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.constraints.iter().map(|c| c.cantelli(x)).collect())
    }
    fn constraint_scale(&self, i: usize) -> f64 {
        self.constraints[i].scale
    }
}

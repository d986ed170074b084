//! Dense multivariate polynomials over affinely normalized coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multi_index::{monomials_into, monomials_with_grad, MultiIndexSet};

/// `p(x) = Σ_γ c_γ s^γ` with `s_j = (x_j - center_j) / scale_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polynomial {
    pub set: MultiIndexSet,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn zero(dim: usize, order: usize) -> Self {
        let set = MultiIndexSet::total_order(dim, order);
        let n = set.len();
        Polynomial {
            set,
            center: vec![0.0; dim],
            scale: vec![1.0; dim],
            coeffs: vec![0.0; n],
        }
    }

    /// Polynomial in raw coordinates from `(exponents, coefficient)` terms.
    pub fn from_terms(dim: usize, terms: &[(Vec<u32>, f64)]) -> Result<Self> {
        let order = terms
            .iter()
            .map(|(e, _)| e.iter().map(|&k| k as usize).sum::<usize>())
            .max()
            .unwrap_or(0);
        let mut p = Polynomial::zero(dim, order);
        for (e, c) in terms {
            if e.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.len(),
                });
            }
            let i = p.set.position(e).expect("exponent within order");
            p.coeffs[i] += c;
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn order(&self) -> usize {
        self.set.order()
    }

    fn normalized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, h))| (v - c) / h)
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let s = self.normalized(x);
        let mut pw = Vec::new();
        let mut m = vec![0.0; self.set.len()];
        monomials_into(&self.set, &s, &mut pw, &mut m);
        m.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    /// Value and gradient with respect to the raw coordinates.
    pub fn eval_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim();
        let s = self.normalized(x);
        let n = self.set.len();
        let mut pw = Vec::new();
        let mut m = vec![0.0; n];
        let mut g = vec![0.0; n * d];
        monomials_with_grad(&self.set, &s, &mut pw, &mut m, &mut g);
        let mut val = 0.0;
        let mut grad = vec![0.0; d];
        for i in 0..n {
            let c = self.coeffs[i];
            if c == 0.0 {
                continue;
            }
            val += c * m[i];
            for j in 0..d {
                grad[j] += c * g[i * d + j];
            }
        }
        for j in 0..d {
            grad[j] /= self.scale[j];
        }
        (val, grad)
    }

    fn same_frame(&self, other: &Polynomial) -> bool {
        self.center == other.center && self.scale == other.scale
    }

    /// Sum of two polynomials sharing the same coordinate normalization.
    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert!(self.same_frame(other), "polynomials use different normalizations");
        let order = self.order().max(other.order());
        let mut out = Polynomial::zero(self.dim(), order);
        out.center = self.center.clone();
        out.scale = self.scale.clone();
        for src in [self, other] {
            for (i, a) in src.set.iter().enumerate() {
                let k = out.set.position(a).unwrap();
                out.coeffs[k] += src.coeffs[i];
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Polynomial {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= factor;
        }
        out
    }

    pub fn shifted(&self, offset: f64) -> Polynomial {
        let mut out = self.clone();
        out.coeffs[0] += offset;
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert!(self.same_frame(other), "polynomials use different normalizations");
        let d = self.dim();
        let mut out = Polynomial::zero(d, self.order() + other.order());
        out.center = self.center.clone();
        out.scale = self.scale.clone();
        let mut e = vec![0u32; d];
        for (i, a) in self.set.iter().enumerate() {
            let ca = self.coeffs[i];
            if ca == 0.0 {
                continue;
            }
            for (j, b) in other.set.iter().enumerate() {
                let cb = other.coeffs[j];
                if cb == 0.0 {
                    continue;
                }
                for k in 0..d {
                    e[k] = a[k] + b[k];
                }
                let idx = out.set.position(&e).unwrap();
                out.coeffs[idx] += ca * cb;
            }
        }
        out
    }
}

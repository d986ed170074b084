//! Orthonormal polynomial bases expressed over monomials of normalized coordinates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist::{Moments, TruncatedGaussianMixture};
use crate::error::{Error, Result};
use crate::multi_index::{monomials_into, monomials_with_grad, MultiIndexSet};

const GRAM_MIN_EIG: f64 = 1e-10;

/// Basis function `i` is `Σ_k coeffs[i][k] s^{γ_k}` with `s = (x - center) / scale`.
///
/// Rows are lower triangular in graded order, so every prefix of the basis
/// (all functions up to some total order) is itself a basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyBasis {
    pub set: MultiIndexSet,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
}

impl PolyBasis {
    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn max_order(&self) -> usize {
        self.set.order()
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn normalize(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(x, (c, h))| (x - c) / h)
            .collect()
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        let mut scratch = Scratch::default();
        self.eval_into(point, &mut scratch, &mut out);
        Ok(out)
    }

    /// Allocation-free evaluation for hot loops; dimensions are not checked.
    pub fn eval_into(&self, point: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        let n = self.len();
        scratch.s.clear();
        scratch.s.extend(
            point
                .iter()
                .zip(self.center.iter().zip(&self.scale))
                .map(|(x, (c, h))| (x - c) / h),
        );
        scratch.m.resize(n, 0.0);
        monomials_into(&self.set, &scratch.s, &mut scratch.pw, &mut scratch.m);
        for (i, row) in self.coeffs.iter().enumerate() {
            out[i] = row[..=i].iter().zip(&scratch.m).map(|(a, b)| a * b).sum();
        }
    }

    /// Values and gradients (`grad[i * dim + j]`) with respect to raw coordinates.
    pub fn eval_grad_into(&self, point: &[f64], scratch: &mut Scratch, val: &mut [f64], grad: &mut [f64]) {
        let n = self.len();
        let d = self.dim();
        scratch.s.clear();
        scratch.s.extend(
            point
                .iter()
                .zip(self.center.iter().zip(&self.scale))
                .map(|(x, (c, h))| (x - c) / h),
        );
        scratch.m.resize(n, 0.0);
        scratch.g.resize(n * d, 0.0);
        monomials_with_grad(&self.set, &scratch.s, &mut scratch.pw, &mut scratch.m, &mut scratch.g);
        for (i, row) in self.coeffs.iter().enumerate() {
            let mut v = 0.0;
            for j in 0..d {
                grad[i * d + j] = 0.0;
            }
            for (k, &c) in row[..=i].iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                v += c * scratch.m[k];
                for j in 0..d {
                    grad[i * d + j] += c * scratch.g[k * d + j];
                }
            }
            val[i] = v;
            for j in 0..d {
                grad[i * d + j] /= self.scale[j];
            }
        }
    }

    /// The functions of total order at most `order`.
    pub fn truncated(&self, order: usize) -> PolyBasis {
        let order = order.min(self.max_order());
        let set = MultiIndexSet::total_order(self.dim(), order);
        let n = set.len();
        PolyBasis {
            coeffs: self.coeffs[..n].iter().map(|r| r[..n].to_vec()).collect(),
            set,
            center: self.center.clone(),
            scale: self.scale.clone(),
        }
    }

    /// Total order of basis function `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.set.degree(i)
    }
}

#[derive(Debug, Default, Clone)]
pub struct Scratch {
    s: Vec<f64>,
    pw: Vec<f64>,
    m: Vec<f64>,
    g: Vec<f64>,
}

/// Coefficients of `sqrt(2n+1) P_n(s)` for `n = 0..=order`, ascending powers.
fn legendre_1d(order: usize) -> Vec<Vec<f64>> {
    let mut p: Vec<Vec<f64>> = vec![vec![1.0]];
    if order >= 1 {
        p.push(vec![0.0, 1.0]);
    }
    for n in 1..order {
        let nf = n as f64;
        let mut next = vec![0.0; n + 2];
        for (k, &c) in p[n].iter().enumerate() {
            next[k + 1] += (2.0 * nf + 1.0) * c / (nf + 1.0);
        }
        for (k, &c) in p[n - 1].iter().enumerate() {
            next[k] -= nf * c / (nf + 1.0);
        }
        p.push(next);
    }
    for (n, row) in p.iter_mut().enumerate() {
        let f = (2.0 * n as f64 + 1.0).sqrt();
        for c in row.iter_mut() {
            *c *= f;
        }
    }
    p
}

/// Tensor Legendre basis, orthonormal for the uniform probability measure on the box.
pub fn legendre_basis(dim: usize, max_order: usize, bounds: &[(f64, f64)]) -> Result<PolyBasis> {
    if bounds.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bounds.len(),
        });
    }
    if let Some(j) = bounds.iter().position(|(a, b)| !(a < b)) {
        return Err(Error::Basis(format!("empty interval in coordinate {j}")));
    }
    let set = MultiIndexSet::total_order(dim, max_order);
    let uni = legendre_1d(max_order);
    let n = set.len();
    let mut coeffs = vec![vec![0.0; n]; n];
    let mut e = vec![0u32; dim];
    for (i, alpha) in set.iter().enumerate() {
        // expand the product of univariate factors term by term
        let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![], 1.0)];
        for &a in alpha {
            let f = &uni[a as usize];
            let mut next = Vec::with_capacity(terms.len() * f.len());
            for (ex, c) in &terms {
                for (k, &fk) in f.iter().enumerate() {
                    if fk != 0.0 {
                        let mut ex2 = ex.clone();
                        ex2.push(k as u32);
                        next.push((ex2, c * fk));
                    }
                }
            }
            terms = next;
        }
        for (ex, c) in terms {
            e.copy_from_slice(&ex);
            coeffs[i][set.position(&e).unwrap()] += c;
        }
    }
    Ok(PolyBasis {
        set,
        center: bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
        scale: bounds.iter().map(|(a, b)| 0.5 * (b - a)).collect(),
        coeffs,
    })
}

/// Gram–Schmidt (via Cholesky) basis orthonormal under the measure with the given moments.
///
/// `moments` must be raw moments of the normalized variable `(ξ - center) / scale`
/// up to total order `2 * max_order`.
pub fn orthonormal_basis_from_moments(
    moments: &Moments,
    dim: usize,
    max_order: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
) -> Result<PolyBasis> {
    if moments.set.dim() != dim || center.len() != dim || scale.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: moments.set.dim(),
        });
    }
    if moments.set.order() < 2 * max_order {
        return Err(Error::Basis(format!(
            "moments up to order {} needed, have {}",
            2 * max_order,
            moments.set.order()
        )));
    }
    let set = MultiIndexSet::total_order(dim, max_order);
    let n = set.len();
    let mut e = vec![0u32; dim];
    let gram = DMatrix::from_fn(n, n, |i, j| {
        for k in 0..dim {
            e[k] = set.get(i)[k] + set.get(j)[k];
        }
        moments.get(&e).unwrap()
    });
    let diag: Vec<f64> = (0..n).map(|i| gram[(i, i)]).collect();
    if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::IllConditioned {
            order: set.degree(i),
            pivot: diag[i],
        });
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| gram[(i, j)] / (diag[i] * diag[j]).sqrt());
    for order in 0..=max_order {
        let m = set.prefix_len(order);
        let block = scaled.view((0, 0), (m, m)).into_owned();
        let min = block.symmetric_eigenvalues().min();
        if !(min > GRAM_MIN_EIG) {
            return Err(Error::IllConditioned { order, pivot: min });
        }
    }
    let l = gram
        .cholesky()
        .ok_or(Error::IllConditioned {
            order: max_order,
            pivot: 0.0,
        })?
        .l();
    let inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::IllConditioned {
            order: max_order,
            pivot: 0.0,
        })?;
    let coeffs = (0..n)
        .map(|i| (0..n).map(|k| if k <= i { inv[(i, k)] } else { 0.0 }).collect())
        .collect();
    Ok(PolyBasis {
        set,
        center,
        scale,
        coeffs,
    })
}

/// Orthonormal basis for a mixture, built in the frame of its bounding box.
pub fn mixture_basis(model: &TruncatedGaussianMixture, max_order: usize) -> Result<PolyBasis> {
    let (center, scale) = model.standard_frame();
    let std = model.standardized(&center, &scale)?;
    let moments = std.raw_moments(2 * max_order);
    orthonormal_basis_from_moments(&moments, model.dim(), max_order, center, scale)
}

/// `E[Ψ_i]` for every basis function, from raw moments of the normalized variable.
pub fn basis_expectations(basis: &PolyBasis, moments: &Moments) -> Vec<f64> {
    basis
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, row)| {
            (0..=i)
                .map(|k| row[k] * moments.get(basis.set.get(k)).unwrap())
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{synthetic_mixture, ComponentSpec};
    use crate::gauss::gauss_legendre_on;

    #[test]
    fn legendre_one_dimensional() {
        let b = legendre_basis(1, 1, &[(-1.0, 1.0)]).unwrap();
        assert_eq!(b.eval(&[1.0]).unwrap(), vec![1.0, 3f64.sqrt()]);
        let c = legendre_basis(1, 1, &[(0.0, 2.0)]).unwrap();
        for x in [0.0, 0.3, 1.7] {
            let v = c.eval(&[x]).unwrap();
            assert!((v[1] - 3f64.sqrt() * (x - 1.0)).abs() < 1e-14);
        }
        assert_eq!(legendre_basis(2, 2, &[(0.0, 1.0), (0.0, 1.0)]).unwrap().len(), 6);
    }

    #[test]
    fn legendre_orthonormal_on_box() {
        let bx = [(-1.0, 3.0), (0.5, 0.75)];
        let b = legendre_basis(2, 3, &bx).unwrap();
        let (x0, w0) = gauss_legendre_on(6, bx[0].0, bx[0].1);
        let (x1, w1) = gauss_legendre_on(6, bx[1].0, bx[1].1);
        let vol = 4.0 * 0.25;
        let n = b.len();
        let mut g = vec![0.0; n * n];
        for (a, wa) in x0.iter().zip(&w0) {
            for (c, wc) in x1.iter().zip(&w1) {
                let v = b.eval(&[*a, *c]).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        g[i * n + j] += wa * wc / vol * v[i] * v[j];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[i * n + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hermite_from_wide_truncation() {
        let m = TruncatedGaussianMixture::new(vec![ComponentSpec {
            weight: 1.0,
            mean: vec![0.0],
            cov: vec![vec![1.0]],
            lower: vec![-1e6],
            upper: vec![1e6],
        }])
        .unwrap();
        let b = mixture_basis(&m, 2).unwrap();
        for x in [-1.5, 0.0, 0.5, 2.0] {
            let v = b.eval(&[x]).unwrap();
            assert!((v[0] - 1.0).abs() < 1e-9);
            assert!((v[1] - x).abs() < 1e-7);
            assert!((v[2] - (x * x - 1.0) / 2f64.sqrt()).abs() < 1e-7);
        }
    }

    #[test]
    fn order_zero_is_constant() {
        let b = mixture_basis(&synthetic_mixture(), 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.eval(&[0.3, -0.2]).unwrap(), vec![1.0]);
    }

    #[test]
    fn mixture_basis_expectations() {
        let m = synthetic_mixture();
        let b = mixture_basis(&m, 3).unwrap();
        let (c, h) = m.standard_frame();
        let mo = m.standardized(&c, &h).unwrap().raw_moments(3);
        let e = basis_expectations(&b, &mo);
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!(e[1..].iter().all(|v| v.abs() < 1e-8));
        for (i, row) in b.coeffs.iter().enumerate() {
            assert!(row[i] > 0.0);
        }
    }

    #[test]
    fn truncation_is_prefix() {
        let b = mixture_basis(&synthetic_mixture(), 4).unwrap();
        let t = b.truncated(2);
        let p = [0.13, -0.31];
        let vb = b.eval(&p).unwrap();
        let vt = t.eval(&p).unwrap();
        assert_eq!(&vb[..vt.len()], &vt[..]);
    }

    #[test]
    fn two_point_measure_fails_at_order_two() {
        // symmetric two-point law on {-1, 1}: s^2 = 1 almost surely
        let set = MultiIndexSet::total_order(1, 4);
        let values = (0..5).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let mo = Moments { set, values };
        assert!(orthonormal_basis_from_moments(&mo, 1, 1, vec![0.0], vec![1.0]).is_ok());
        match orthonormal_basis_from_moments(&mo, 1, 2, vec![0.0], vec![1.0]) {
            Err(Error::IllConditioned { order, .. }) => assert_eq!(order, 2),
            other => panic!("expected ill-conditioning, got {other:?}"),
        }
    }
}

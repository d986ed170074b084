//! Optimal polynomial kinship functions.
//!
//! A kinship function is nonnegative and nondecreasing on `[-1, ∞)` with
//! `κ(0) = 1`, so `κ(υ) ≥ 1[υ > 0]` there. The optimal order-ρ polynomial
//! minimizes `∫_{-1}^0 κ`. Writing `t = z + 1` and `κ'(t - 1) = s1(t) + t s2(t)`
//! with sums of squares `s1`, `s2` makes monotonicity a pair of PSD Gram blocks;
//! integrating from `t = 0` gives `κ(-1) = 0` by construction, leaving the single
//! equality `κ(0) = 1`.

pub mod sdp;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use sdp::{BlockSdp, SdpOptions};

pub const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KinshipPoly {
    pub order: usize,
    /// coefficients of `z^0 .. z^ρ`
    pub zeta: Vec<f64>,
    pub integral_value: f64,
    pub gram_y1: Vec<Vec<f64>>,
    pub gram_y2: Vec<Vec<f64>>,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KinshipReport {
    pub max_violation: f64,
    pub duality_gap: f64,
    pub endpoint_error: f64,
    pub min_derivative: f64,
    pub min_value: f64,
    pub leading_derivative: f64,
    pub integral_error: f64,
    pub certificate_error: f64,
    pub passed: bool,
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

fn block_sizes(rho: usize) -> (usize, usize) {
    let n1 = (rho - 1) / 2 + 1;
    let n2 = if rho >= 2 { (rho - 2) / 2 + 1 } else { 0 };
    (n1, n2)
}

/// `q_m` (coefficient of `t^m` in `κ'(t-1)`) from the Gram blocks.
pub fn derivative_from_gram(rho: usize, y1: &[Vec<f64>], y2: &[Vec<f64>]) -> Vec<f64> {
    let mut q = vec![0.0; rho];
    for (i, row) in y1.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            q[i + j] += v;
        }
    }
    for (i, row) in y2.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            q[i + j + 1] += v;
        }
    }
    q
}

/// Coefficients of `κ(z) = Σ_m q_m (z+1)^{m+1} / (m+1)` in powers of `z`.
pub fn zeta_from_derivative(q: &[f64]) -> Vec<f64> {
    let rho = q.len();
    let mut zeta = vec![0.0; rho + 1];
    for (m, qm) in q.iter().enumerate() {
        for (i, z) in zeta.iter_mut().enumerate().take(m + 2) {
            *z += qm / (m as f64 + 1.0) * binom(m + 1, i);
        }
    }
    zeta
}

/// `∫_{-1}^0 Σ ζ_i z^i dz`.
pub fn integral_from_zeta(zeta: &[f64]) -> f64 {
    zeta.iter()
        .enumerate()
        .map(|(i, &z)| if i % 2 == 0 { z } else { -z } / (i as f64 + 1.0))
        .sum()
}

/// The semidefinite program whose optimum is the optimal kinship integral.
pub fn kinship_sdp(rho: usize) -> BlockSdp {
    let (n1, n2) = block_sizes(rho);
    // entry (i,j) of block 1 contributes to t^{i+j}, of block 2 to t^{i+j+1}
    let obj = |m: usize| 1.0 / ((m as f64 + 1.0) * (m as f64 + 2.0));
    let eq = |m: usize| 1.0 / (m as f64 + 1.0);
    let mut c = vec![DMatrix::from_fn(n1, n1, |i, j| obj(i + j))];
    let mut a = vec![DMatrix::from_fn(n1, n1, |i, j| eq(i + j))];
    if n2 > 0 {
        c.push(DMatrix::from_fn(n2, n2, |i, j| obj(i + j + 1)));
        a.push(DMatrix::from_fn(n2, n2, |i, j| eq(i + j + 1)));
    }
    BlockSdp {
        c,
        a: vec![a],
        b: vec![1.0],
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn psd_projection(m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = ((m + m.transpose()) * 0.5).symmetric_eigen();
    let d = DMatrix::from_diagonal(&s.eigenvalues.map(|v| v.max(0.0)));
    &s.eigenvectors * d * s.eigenvectors.transpose()
}

pub fn solve_optimal_kinship(rho: usize) -> Result<KinshipPoly> {
    if !(1..=MAX_ORDER).contains(&rho) {
        return Err(Error::KinshipOrder(rho));
    }
    let problem = kinship_sdp(rho);
    let sol = problem.solve(SdpOptions::default())?;
    let blocks: Vec<DMatrix<f64>> = sol.x.iter().map(psd_projection).collect();
    // rescale so that κ(0) = 1 holds exactly for the stored certificate
    let lhs: f64 = blocks
        .iter()
        .zip(&problem.a[0])
        .map(|(x, a)| x.dot(a))
        .sum();
    let blocks: Vec<DMatrix<f64>> = blocks.iter().map(|x| x / lhs).collect();
    let y1 = to_rows(&blocks[0]);
    let y2 = blocks.get(1).map(to_rows).unwrap_or_default();
    let q = derivative_from_gram(rho, &y1, &y2);
    let zeta = zeta_from_derivative(&q);
    let zeta = renormalize(zeta, &q);
    Ok(KinshipPoly {
        order: rho,
        integral_value: integral_from_zeta(&zeta),
        zeta,
        gram_y1: y1,
        gram_y2: y2,
        duality_gap: sol.gap,
    })
}

fn renormalize(mut zeta: Vec<f64>, q: &[f64]) -> Vec<f64> {
    // κ(0) = ζ_0 = Σ q_m/(m+1) up to rounding
    let k0: f64 = q.iter().enumerate().map(|(m, v)| v / (m as f64 + 1.0)).sum();
    for z in zeta.iter_mut() {
        *z /= k0;
    }
    zeta[0] = 1.0;
    zeta
}

pub fn eval_kinship(k: &KinshipPoly, z: f64) -> Result<f64> {
    if !(z >= -1.0) {
        return Err(Error::OutsideKinshipDomain(z));
    }
    Ok(horner(&k.zeta, z))
}

fn horner(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * z + v)
}

impl KinshipPoly {
    /// `(κ(z), κ'(z))` without the domain check, for inner loops.
    #[inline]
    pub fn value_and_slope(&self, z: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for c in self.zeta.iter().rev() {
            d = d * z + v;
            v = v * z + c;
        }
        (v, d)
    }

    /// `κ(z) = (1 + z)^ρ`, feasible but not optimal for ρ ≥ 3.
    pub fn power(rho: usize) -> KinshipPoly {
        let zeta: Vec<f64> = (0..=rho).map(|i| binom(rho, i)).collect();
        KinshipPoly {
            order: rho,
            integral_value: integral_from_zeta(&zeta),
            zeta,
            gram_y1: Vec::new(),
            gram_y2: Vec::new(),
            duality_gap: 0.0,
        }
    }
}

pub fn verify_kinship(k: &KinshipPoly) -> KinshipReport {
    let zeta = &k.zeta;
    let deriv: Vec<f64> = (1..zeta.len()).map(|i| i as f64 * zeta[i]).collect();
    let endpoint_error = (horner(zeta, 0.0) - 1.0).abs().max(horner(zeta, -1.0).abs());
    let mut min_derivative = f64::INFINITY;
    let mut min_value = f64::INFINITY;
    let n = 10_000;
    for i in 0..n {
        let z = -1.0 + 51.0 * i as f64 / (n - 1) as f64;
        min_derivative = min_derivative.min(horner(&deriv, z));
        min_value = min_value.min(horner(zeta, z));
    }
    let leading_derivative = deriv.last().copied().unwrap_or(0.0);
    let integral_error = (k.integral_value - integral_from_zeta(zeta)).abs();
    let certificate_error = if k.gram_y1.is_empty() {
        0.0
    } else {
        let q = derivative_from_gram(k.order, &k.gram_y1, &k.gram_y2);
        // κ'(t - 1) expanded in powers of t
        let mut shifted = vec![0.0; k.order];
        for (i, d) in deriv.iter().enumerate() {
            for (m, s) in shifted.iter_mut().enumerate().take(i + 1) {
                let sign = if (i - m) % 2 == 0 { 1.0 } else { -1.0 };
                *s += d * binom(i, m) * sign;
            }
        }
        let scale = q.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut err = q
            .iter()
            .zip(&shifted)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        for g in [&k.gram_y1, &k.gram_y2] {
            if g.is_empty() {
                continue;
            }
            let m = DMatrix::from_fn(g.len(), g.len(), |i, j| g[i][j]);
            err = err.max(-m.symmetric_eigenvalues().min());
        }
        err
    };
    let max_violation = endpoint_error
        .max(-min_derivative)
        .max(-min_value)
        .max(-leading_derivative)
        .max(integral_error)
        .max(certificate_error)
        .max(0.0);
    let passed = endpoint_error <= 1e-8
        && min_derivative >= -1e-8
        && min_value >= -1e-8
        && leading_derivative >= -1e-10
        && integral_error <= 1e-10
        && certificate_error <= 1e-8
        && k.duality_gap <= 1e-6;
    KinshipReport {
        max_violation,
        duality_gap: k.duality_gap,
        endpoint_error,
        min_derivative,
        min_value,
        leading_derivative,
        integral_error,
        certificate_error,
        passed,
    }
}

/// On-disk store of solved kinship polynomials keyed by order.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct KinshipCache {
    pub entries: BTreeMap<usize, KinshipPoly>,
}

impl KinshipCache {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn get_or_solve(&mut self, rho: usize) -> Result<KinshipPoly> {
        if let Some(k) = self.entries.get(&rho) {
            return Ok(k.clone());
        }
        let k = solve_optimal_kinship(rho)?;
        self.entries.insert(rho, k.clone());
        Ok(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_one_is_linear() {
        let k = solve_optimal_kinship(1).unwrap();
        assert!((k.zeta[0] - 1.0).abs() < 1e-12);
        assert!((k.zeta[1] - 1.0).abs() < 1e-9);
        assert!((k.integral_value - 0.5).abs() < 1e-9);
        assert!(verify_kinship(&k).passed);
    }

    #[test]
    fn order_two_is_square() {
        let k = solve_optimal_kinship(2).unwrap();
        for (z, w) in k.zeta.iter().zip([1.0, 2.0, 1.0]) {
            assert!((z - w).abs() < 1e-6, "{:?}", k.zeta);
        }
        assert!((k.integral_value - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn closed_form_optima() {
        let want = [
            (3, (3.0 - 3f64.sqrt()) / 6.0),
            (4, (4.0 - 6f64.sqrt()) / 10.0),
            (5, (5.0 - 15f64.sqrt()) / 10.0),
        ];
        for (rho, v) in want {
            let k = solve_optimal_kinship(rho).unwrap();
            assert!((k.integral_value - v).abs() < 1e-7, "rho={rho}: {}", k.integral_value);
        }
    }

    #[test]
    fn domain_and_endpoints() {
        let k = solve_optimal_kinship(5).unwrap();
        assert!((eval_kinship(&k, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(eval_kinship(&k, -1.0).unwrap().abs() < 1e-8);
        assert!(matches!(eval_kinship(&k, -1.5), Err(Error::OutsideKinshipDomain(_))));
        let r = verify_kinship(&k);
        assert!(r.passed && r.max_violation <= 1e-8, "{r:?}");
        let (v, d) = k.value_and_slope(0.3);
        let h = 1e-6;
        let fd = (eval_kinship(&k, 0.3 + h).unwrap() - eval_kinship(&k, 0.3 - h).unwrap()) / (2.0 * h);
        assert!((v - eval_kinship(&k, 0.3).unwrap()).abs() < 1e-14);
        assert!((d - fd).abs() < 1e-6);
    }

    #[test]
    fn hand_built_and_tampered() {
        let lin = KinshipPoly::power(1);
        assert!(verify_kinship(&lin).passed);
        let mut bad = lin.clone();
        bad.zeta[1] = -1.0;
        bad.integral_value = integral_from_zeta(&bad.zeta);
        assert!(!verify_kinship(&bad).passed);
    }

    #[test]
    fn rejects_out_of_range_order() {
        assert!(matches!(solve_optimal_kinship(0), Err(Error::KinshipOrder(0))));
        assert!(matches!(solve_optimal_kinship(17), Err(Error::KinshipOrder(17))));
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kinship.json");
        let mut c = KinshipCache::load(&path).unwrap();
        let k = c.get_or_solve(3).unwrap();
        c.save(&path).unwrap();
        let mut back = KinshipCache::load(&path).unwrap();
        assert_eq!(back.get_or_solve(3).unwrap(), k);
    }
}

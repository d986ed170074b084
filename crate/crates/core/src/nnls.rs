//! Lawson–Hanson nonnegative least squares.

use nalgebra::{DMatrix, DVector};

/// Minimize `||A x - b||` subject to `x >= 0`. Returns `x` and the squared residual.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.amax().max(1e-300) * b.amax().max(1.0);
    let tol = 1e-13 * scale * (m.max(n) as f64).sqrt();
    let max_iter = 3 * n.max(m) + 10;
    let mut residual = b - a * &x;
    for _ in 0..max_iter {
        let w = a.tr_mul(&residual);
        let mut best = None;
        let mut best_val = tol;
        for j in 0..n {
            if !passive[j] && w[j] > best_val {
                best_val = w[j];
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z = solve_subset(a, b, &idx);
            if z.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            // step back toward the feasible region until a coordinate hits zero
            let mut alpha = f64::INFINITY;
            let mut blocking = idx[0];
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    let t = x[i] / (x[i] - z[k]);
                    if t < alpha {
                        alpha = t;
                        blocking = i;
                    }
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if i == blocking || x[i] <= 0.0 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if idx.iter().all(|&i| !passive[i]) {
                break;
            }
        }
        residual = b - a * &x;
    }
    let r2 = residual.norm_squared();
    (x, r2)
}

fn solve_subset(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> Vec<f64> {
    let m = a.nrows();
    let sub = DMatrix::from_fn(m, idx.len(), |r, c| a[(r, idx[c])]);
    let svd = sub.svd(true, true);
    let tol = svd.singular_values.max() * 1e-14;
    let z = svd.solve(b, tol).expect("svd with vectors");
    z.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kkt_ok(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> bool {
        let g = a.tr_mul(&(a * x - b));
        (0..x.len()).all(|j| x[j] >= 0.0 && g[j] >= -1e-9 && (x[j] == 0.0 || g[j].abs() < 1e-9))
    }

    #[test]
    fn known_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let (x, _) = nnls(&a, &b);
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
        assert!(kkt_ok(&a, &b, &x));
    }

    #[test]
    fn exact_nonnegative_combination() {
        // underdetermined with a nonnegative exact solution
        let a = DMatrix::from_fn(4, 12, |i, j| ((i + 1) as f64 * (j as f64 * 0.37).sin()).cos());
        let x_true = DVector::from_fn(12, |j, _| if j % 3 == 0 { 0.5 + j as f64 * 0.1 } else { 0.0 });
        let b = &a * &x_true;
        let (x, r2) = nnls(&a, &b);
        assert!(r2 < 1e-20, "r2={r2}");
        assert!(x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn random_problems_satisfy_kkt() {
        for s in 0..20 {
            let a = DMatrix::from_fn(6, 5, |i, j| (((i * 7 + j * 13 + s * 31) as f64) * 0.618).sin());
            let b = DVector::from_fn(6, |i, _| ((i + s) as f64 * 1.3).cos());
            let (x, _) = nnls(&a, &b);
            assert!(kkt_ok(&a, &b, &x), "seed {s}");
        }
    }
}

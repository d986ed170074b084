//! Dense primal-dual interior-point method for block-diagonal SDPs.
//!
//! Primal: minimize `Σ_b <C_b, X_b>` subject to `Σ_b <A_jb, X_b> = b_j`, `X_b ⪰ 0`.
//! Dual: maximize `b'y` subject to `S_b = C_b - Σ_j y_j A_jb ⪰ 0`.
//! Search directions are HKM with a Mehrotra predictor-corrector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BlockSdp {
    pub c: Vec<DMatrix<f64>>,
    /// `a[j][b]`: constraint `j`, block `b`
    pub a: Vec<Vec<DMatrix<f64>>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// accepted on stagnation if all measures are below this
    pub fallback_tolerance: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            max_iterations: 200,
            tolerance: 1e-11,
            fallback_tolerance: 1e-7,
        }
    }
}

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `t` with `x + t d ⪰ 0` (infinite if `d ⪰ 0`).
fn max_step(x: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(ch) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(li) = l.solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows())) else {
        return 0.0;
    };
    let w = sym(&(&li * d * li.transpose()));
    let lmin = w.symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

impl BlockSdp {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply_a(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.a
                .iter()
                .map(|blocks| blocks.iter().zip(x).map(|(a, xb)| dot(a, xb)).sum::<f64>()),
        )
    }

    fn apply_at(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.c
            .iter()
            .enumerate()
            .map(|(b, cb)| {
                let mut s = DMatrix::zeros(cb.nrows(), cb.ncols());
                for (j, blocks) in self.a.iter().enumerate() {
                    s += &blocks[b] * y[j];
                }
                s
            })
            .collect()
    }

    pub fn solve(&self, opts: SdpOptions) -> Result<SdpSolution> {
        let m = self.m();
        let sizes: Vec<usize> = self.c.iter().map(|c| c.nrows()).collect();
        let n: usize = sizes.iter().sum();
        let nf = n as f64;
        let b = DVector::from_vec(self.b.clone());
        let a_norms: Vec<f64> = self
            .a
            .iter()
            .map(|blk| blk.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt())
            .collect();
        let c_norm = self.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
        let b_norm = b.norm();
        let mut xi: f64 = 10f64.max(nf.sqrt());
        for j in 0..m {
            xi = xi.max(nf.sqrt() * (1.0 + self.b[j].abs()) / (1.0 + a_norms[j]));
        }
        let eta = a_norms
            .iter()
            .copied()
            .fold(10f64.max(nf.sqrt()).max(c_norm), f64::max);
        let mut x: Vec<DMatrix<f64>> = sizes.iter().map(|&k| DMatrix::identity(k, k) * xi).collect();
        let mut s: Vec<DMatrix<f64>> = sizes.iter().map(|&k| DMatrix::identity(k, k) * eta).collect();
        let mut y = DVector::zeros(m);

        let mut last = (f64::INFINITY, 0.0, 0.0, 0.0);
        for it in 0..opts.max_iterations {
            let rp = &b - self.apply_a(&x);
            let aty = self.apply_at(&y);
            let rd: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &self.c[k] - &aty[k] - &s[k]).collect();
            let mu = x.iter().zip(&s).map(|(a, c)| dot(a, c)).sum::<f64>() / nf;
            let pobj: f64 = self.c.iter().zip(&x).map(|(c, xb)| dot(c, xb)).sum();
            let dobj = b.dot(&y);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + c_norm);
            let worst = gap.max(pinf).max(dinf);
            last = (worst, pobj, dobj, gap);
            if worst <= opts.tolerance {
                return Ok(self.finish(x, y, s, pobj, dobj, it));
            }

            let sinv: Vec<DMatrix<f64>> = match s.iter().map(|sb| sb.clone().try_inverse()).collect() {
                Some(v) => v,
                None => break,
            };
            // Schur complement M_ij = Σ_b tr(A_ib X_b A_jb S_b^{-1})
            let t: Vec<Vec<DMatrix<f64>>> = self
                .a
                .iter()
                .map(|blk| {
                    blk.iter()
                        .enumerate()
                        .map(|(k, a)| &x[k] * a * &sinv[k])
                        .collect()
                })
                .collect();
            let mut mm = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    mm[(i, j)] = (0..sizes.len()).map(|k| dot(&self.a[i][k], &t[j][k])).sum();
                }
            }
            let mm = sym(&mm);
            let chol = mm.clone().cholesky();
            let lu = mm.lu();
            let solve_m = |r: &DVector<f64>| -> Option<DVector<f64>> {
                match &chol {
                    Some(c) => Some(c.solve(r)),
                    None => lu.solve(r),
                }
            };
            let xrs: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &x[k] * &rd[k] * &sinv[k]).collect();
            let a_xrs = self.apply_a(&xrs);

            let direction = |kmat: &[DMatrix<f64>]| -> Option<(Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>)> {
                let rhs = &rp - self.apply_a(kmat) + &a_xrs;
                let dy = solve_m(&rhs)?;
                let atdy = self.apply_at(&dy);
                let ds: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &rd[k] - &atdy[k]).collect();
                let dx: Vec<DMatrix<f64>> = (0..sizes.len())
                    .map(|k| sym(&(&kmat[k] - &x[k] * &ds[k] * &sinv[k])))
                    .collect();
                Some((dx, dy, ds))
            };

            // predictor
            let k_aff: Vec<DMatrix<f64>> = x.iter().map(|xb| -xb).collect();
            let Some((dxa, _, dsa)) = direction(&k_aff) else { break };
            let ap = x.iter().zip(&dxa).map(|(a, d)| max_step(a, d)).fold(1.0, f64::min);
            let ad = s.iter().zip(&dsa).map(|(a, d)| max_step(a, d)).fold(1.0, f64::min);
            let mu_aff = (0..sizes.len())
                .map(|k| dot(&(&x[k] + &dxa[k] * ap), &(&s[k] + &dsa[k] * ad)))
                .sum::<f64>()
                / nf;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // corrector
            let k_cor: Vec<DMatrix<f64>> = (0..sizes.len())
                .map(|k| {
                    &sinv[k] * (sigma * mu) - &x[k] - sym(&(&dxa[k] * &dsa[k] * &sinv[k]))
                })
                .collect();
            let Some((dx, dy, ds)) = direction(&k_cor) else { break };
            let tau = 0.98;
            let ap = x
                .iter()
                .zip(&dx)
                .map(|(a, d)| tau * max_step(a, d))
                .fold(1.0, f64::min);
            let ad = s
                .iter()
                .zip(&ds)
                .map(|(a, d)| tau * max_step(a, d))
                .fold(1.0, f64::min);
            if ap < 1e-12 && ad < 1e-12 {
                break;
            }
            for k in 0..sizes.len() {
                x[k] += &dx[k] * ap;
                x[k] = sym(&x[k]);
                s[k] += &ds[k] * ad;
                s[k] = sym(&s[k]);
            }
            y += dy * ad;
        }
        let (worst, pobj, dobj, gap) = last;
        if worst <= opts.fallback_tolerance {
            return Ok(self.finish(x, y, s, pobj, dobj, opts.max_iterations));
        }
        Err(Error::SdpNotConverged {
            iterations: opts.max_iterations,
            gap,
        })
    }

    fn finish(
        &self,
        x: Vec<DMatrix<f64>>,
        y: DVector<f64>,
        s: Vec<DMatrix<f64>>,
        pobj: f64,
        dobj: f64,
        iterations: usize,
    ) -> SdpSolution {
        SdpSolution {
            x,
            y: y.iter().copied().collect(),
            s,
            primal_objective: pobj,
            dual_objective: dobj,
            gap: (pobj - dobj).abs(),
            iterations,
        }
    }
}

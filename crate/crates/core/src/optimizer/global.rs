//! Grid-seeded global minimization of polynomials over boxes, and metric scaling.

use serde::{Deserialize, Serialize};

use super::local::{minimize_box, LocalOptions};
use crate::error::{Error, Result};
use crate::polynomial::Polynomial;
use crate::surrogate::PCESurrogate;

const GRID_BUDGET: f64 = (1u64 << 20) as f64;
const POLISH_SEEDS: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalMin {
    pub value: f64,
    pub argmin: Vec<f64>,
}

/// Points per axis for the seeding grid: 32, reduced in high dimension to keep
/// the grid near 2^20 points.
pub fn grid_points_per_axis(dim: usize) -> usize {
    if 32f64.powi(dim as i32) <= GRID_BUDGET {
        32
    } else {
        (GRID_BUDGET.powf(1.0 / dim as f64).floor() as usize).max(2)
    }
}

/// Minimum of a smooth function over a box: grid seeding (plus vertices) and
/// projected quasi-Newton polish from the best seeds.
pub fn global_min<F>(f: F, bounds: &[(f64, f64)]) -> GlobalMin
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let d = bounds.len();
    let n = grid_points_per_axis(d);
    let axis: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(a, b)| (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
        .collect();
    let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut worst_kept = f64::INFINITY;
    loop {
        for j in 0..d {
            x[j] = axis[j][idx[j]];
        }
        let v = f(&x).0;
        if seeds.len() < POLISH_SEEDS || v < worst_kept {
            seeds.push((v, x.clone()));
            if seeds.len() > 4 * POLISH_SEEDS {
                seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
                seeds.truncate(POLISH_SEEDS);
            }
            worst_kept = if seeds.len() >= POLISH_SEEDS {
                seeds.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max)
            } else {
                f64::INFINITY
            };
        }
        let mut j = 0;
        loop {
            if j == d {
                break;
            }
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    seeds.truncate(POLISH_SEEDS);
    // vertices catch corner minima of indefinite quadratics
    if d <= 10 {
        for mask in 0..(1usize << d) {
            let v: Vec<f64> = (0..d)
                .map(|j| if mask >> j & 1 == 1 { bounds[j].1 } else { bounds[j].0 })
                .collect();
            seeds.push((f(&v).0, v));
        }
    }
    let mut best = GlobalMin {
        value: f64::INFINITY,
        argmin: seeds[0].1.clone(),
    };
    for (v, s) in &seeds {
        if *v < best.value {
            best = GlobalMin {
                value: *v,
                argmin: s.clone(),
            };
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, s) in seeds.iter().take(POLISH_SEEDS) {
        let r = minimize_box(&f, s, bounds, LocalOptions::default());
        if r.value < best.value {
            best = GlobalMin {
                value: r.value,
                argmin: r.x,
            };
        }
    }
    best
}

pub fn global_min_poly(poly: &Polynomial, bounds: &[(f64, f64)]) -> GlobalMin {
    global_min(|x| poly.eval_grad(x), bounds)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledMetric {
    pub surrogate: PCESurrogate,
    /// minimum of the unscaled metric over design box × support
    pub minimum: f64,
    pub argmin: Vec<f64>,
    pub factor: f64,
}

/// Rescale `υ` (bound already folded in) so its minimum over the design box times
/// the support of ξ (a union of boxes) is exactly -1.
pub fn scale_metric(
    upsilon: &PCESurrogate,
    design_box: &[(f64, f64)],
    xi_boxes: &[Vec<(f64, f64)>],
) -> Result<ScaledMetric> {
    let poly = upsilon.to_polynomial();
    let mut best = GlobalMin {
        value: f64::INFINITY,
        argmin: Vec::new(),
    };
    for bx in xi_boxes {
        let joint: Vec<(f64, f64)> = design_box.iter().chain(bx.iter()).copied().collect();
        let m = global_min_poly(&poly, &joint);
        if m.value < best.value {
            best = m;
        }
    }
    let mut minimum = best.value;
    if minimum >= 0.0 {
        return Err(Error::Infeasible(format!(
            "constraint metric has minimum {minimum} >= 0 over the design and variation space"
        )));
    }
    if minimum.abs() < 1e-12 {
        minimum -= 1e-9;
    }
    let factor = -1.0 / minimum;
    Ok(ScaledMetric {
        surrogate: upsilon.affine(factor, 0.0),
        minimum,
        argmin: best.argmin,
        factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_minima() {
        let sq = Polynomial::from_terms(1, &[(vec![2], 1.0)]).unwrap();
        let m = global_min_poly(&sq, &[(-1.0, 1.0)]);
        assert!(m.value.abs() < 1e-12 && m.argmin[0].abs() < 1e-6);
        let lin = Polynomial::from_terms(2, &[(vec![1, 0], 3.0), (vec![0, 1], -1.0)]).unwrap();
        let m = global_min_poly(&lin, &[(-1.0, 1.0), (-1.0, 1.0)]);
        assert!((m.value + 4.0).abs() < 1e-12);
        assert_eq!(m.argmin, vec![-1.0, 1.0]);
    }

    #[test]
    fn grid_cap_in_high_dimension() {
        assert_eq!(grid_points_per_axis(2), 32);
        assert_eq!(grid_points_per_axis(4), 32);
        assert!(grid_points_per_axis(6).pow(6) <= 1 << 20);
        assert!(grid_points_per_axis(8) >= 5);
    }
}

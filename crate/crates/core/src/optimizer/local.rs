//! Box-constrained projected quasi-Newton (BFGS on the free variables).

#[derive(Debug, Clone, Copy)]
pub struct LocalOptions {
    pub max_iterations: usize,
    /// stop when the projected gradient's max-norm drops below this
    pub gradient_tol: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            max_iterations: 200,
            gradient_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (a, b)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*a, *b);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(a, b))| ((xi - gi).clamp(a, b) - xi).abs())
        .fold(0.0, f64::max)
}

/// Minimize `f` over the box; `f` returns value and gradient.
pub fn minimize_box<F>(mut f: F, x0: &[f64], bounds: &[(f64, f64)], opts: LocalOptions) -> LocalResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let (mut fx, mut g) = f(&x);
    let width: Vec<f64> = bounds.iter().map(|(a, b)| b - a).collect();
    let mut h = identity(n);
    let mut scaled = false;
    let mut stall = 0;
    for it in 0..opts.max_iterations {
        if !fx.is_finite() {
            return LocalResult {
                x,
                value: fx,
                iterations: it,
                converged: false,
            };
        }
        if projected_gradient_norm(&x, &g, bounds) <= opts.gradient_tol {
            return LocalResult {
                x,
                value: fx,
                iterations: it,
                converged: true,
            };
        }
        let eps_b: Vec<f64> = width.iter().map(|w| 1e-12 * w.max(1e-300)).collect();
        let active: Vec<bool> = (0..n)
            .map(|i| {
                (x[i] <= bounds[i].0 + eps_b[i] && g[i] > 0.0)
                    || (x[i] >= bounds[i].1 - eps_b[i] && g[i] < 0.0)
            })
            .collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            for j in 0..n {
                if !active[j] {
                    d[i] -= h[i][j] * g[j];
                }
            }
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            h = identity(n);
            scaled = false;
            for i in 0..n {
                d[i] = if active[i] { 0.0 } else { -g[i] };
            }
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                return LocalResult {
                    x,
                    value: fx,
                    iterations: it,
                    converged: true,
                };
            }
        }
        // keep the first trial step inside a box-sized trust region
        let mut t: f64 = 1.0;
        if !scaled {
            let ratio = d
                .iter()
                .zip(&width)
                .map(|(di, w)| di.abs() / w.max(1e-300))
                .fold(0.0, f64::max);
            if ratio > 0.25 {
                t = 0.25 / ratio;
            }
        }
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut xt, bounds);
            let (ft, gt) = f(&xt);
            let dec: f64 = g.iter().zip(xt.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if ft.is_finite() && ft <= fx + 1e-4 * dec {
                accepted = Some((xt, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if scaled {
                h = identity(n);
                scaled = false;
                continue;
            }
            let converged = projected_gradient_norm(&x, &g, bounds) <= opts.gradient_tol.sqrt();
            return LocalResult {
                x,
                value: fx,
                iterations: it,
                converged,
            };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-12 * ss.sqrt() * yy.sqrt() && sy > 0.0 {
            if !scaled {
                let gamma = sy / yy;
                h = identity(n);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = gamma;
                }
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        let small_change = (fx - fnew).abs() <= 1e-15 * (1.0 + fx.abs());
        x = xn;
        fx = fnew;
        g = gnew;
        if small_change {
            stall += 1;
            if stall >= 3 {
                return LocalResult {
                    x,
                    value: fx,
                    iterations: it + 1,
                    converged: true,
                };
            }
        } else {
            stall = 0;
        }
    }
    let converged = projected_gradient_norm(&x, &g, bounds) <= opts.gradient_tol.sqrt();
    LocalResult {
        x,
        value: fx,
        iterations: opts.max_iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_quadratic() {
        let f = |x: &[f64]| {
            let v = (x[0] - 0.3).powi(2) + 10.0 * (x[1] + 0.2).powi(2) + x[0] * x[1];
            (v, vec![2.0 * (x[0] - 0.3) + x[1], 20.0 * (x[1] + 0.2) + x[0]])
        };
        let r = minimize_box(f, &[0.9, 0.9], &[(-1.0, 1.0), (-1.0, 1.0)], LocalOptions::default());
        // stationary point of the quadratic
        let det = 2.0 * 20.0 - 1.0;
        let x0 = (0.6 * 20.0 + 4.0) / det;
        let x1 = (2.0 * -4.0 - 0.6) / det;
        assert!(r.converged);
        assert!((r.x[0] - x0).abs() < 1e-8 && (r.x[1] - x1).abs() < 1e-8, "{:?}", r.x);
    }

    #[test]
    fn bound_active_solution() {
        let f = |x: &[f64]| (3.0 * x[0] - x[1], vec![3.0, -1.0]);
        let r = minimize_box(f, &[0.0, 0.0], &[(-1.0, 1.0), (-1.0, 1.0)], LocalOptions::default());
        assert_eq!(r.x, vec![-1.0, 1.0]);
        assert!((r.value + 4.0).abs() < 1e-15);
    }

    #[test]
    fn rosenbrock_in_box() {
        let f = |x: &[f64]| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            (a * a + 100.0 * b * b, vec![-2.0 * a - 400.0 * x[0] * b, 200.0 * b])
        };
        let opts = LocalOptions {
            max_iterations: 2000,
            ..Default::default()
        };
        let r = minimize_box(f, &[-1.2, 1.0], &[(-2.0, 2.0), (-2.0, 2.0)], opts);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r);
    }
}

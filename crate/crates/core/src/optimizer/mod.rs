//! Deterministic reformulations of chance-constrained problems and their solvers.

pub mod global;
pub mod local;
pub mod reform;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::dist::TruncatedGaussianMixture;
use crate::error::{Error, Result};
use crate::kinship::KinshipPoly;
use crate::quadrature::QuadratureRule;
use crate::sobol::sobol_in_box;
use crate::surrogate::PCESurrogate;
pub use global::{global_min, global_min_poly, scale_metric, GlobalMin, ScaledMetric};
use local::{minimize_box, LocalOptions};
pub use reform::{
    gamma_for, risk_integral, Method, MomentConstraint, MomentReformulation, PoboReformulation, Reformulation,
    RiskIntegral,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// `y ≤ u`
    Upper,
    /// `y ≥ u`
    Lower,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChanceConstraint {
    pub name: String,
    pub surrogate: PCESurrogate,
    pub bound: f64,
    pub sense: Sense,
    pub risk: f64,
}

impl ChanceConstraint {
    /// Metric that is positive exactly when the constraint is violated.
    pub fn upsilon(&self) -> PCESurrogate {
        match self.sense {
            Sense::Upper => self.surrogate.affine(1.0, -self.bound),
            Sense::Lower => self.surrogate.affine(-1.0, self.bound),
        }
    }

    pub fn satisfied(&self, y: f64) -> bool {
        match self.sense {
            Sense::Upper => y <= self.bound,
            Sense::Lower => y >= self.bound,
        }
    }
}

/// Maximize `E_ξ[f(x, ξ)]` over the design box subject to `P(y_i violates u_i) ≤ ε_i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChanceProblem {
    pub objective: PCESurrogate,
    pub constraints: Vec<ChanceConstraint>,
    pub design_box: Vec<(f64, f64)>,
    pub xi_model: TruncatedGaussianMixture,
}

impl ChanceProblem {
    pub fn validate(&self) -> Result<()> {
        for c in &self.constraints {
            if !(c.risk > 0.0 && c.risk < 1.0) {
                return Err(Error::Config(format!(
                    "risk level of {} must lie in (0, 1), got {}",
                    c.name, c.risk
                )));
            }
        }
        if self.design_box.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::Config("empty design interval".into()));
        }
        Ok(())
    }

    pub fn with_risk(&self, eps: f64) -> ChanceProblem {
        let mut p = self.clone();
        for c in &mut p.constraints {
            c.risk = eps;
        }
        p
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub risk_bound: f64,
    /// reformulated constraint value (`≤ 0` when satisfied)
    pub margin: f64,
    pub active: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverLog {
    pub starts: usize,
    pub feasible_starts: usize,
    pub phase_one_runs: usize,
    /// best objective values over feasible starts, descending
    pub best_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub x_star: Vec<f64>,
    pub objective_value: f64,
    pub per_constraint: Vec<ConstraintReport>,
    pub method: Method,
    pub solver_log: SolverLog,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub n_starts: usize,
    pub feasibility_tol: f64,
    pub max_outer: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            n_starts: 64,
            feasibility_tol: 1e-6,
            max_outer: 30,
        }
    }
}

/// Scaled metric per constraint; each fails independently when its metric is nonnegative everywhere.
pub fn scale_constraints(problem: &ChanceProblem) -> Vec<Result<ScaledMetric>> {
    let boxes = problem.xi_model.support_boxes();
    problem
        .constraints
        .iter()
        .map(|c| {
            scale_metric(&c.upsilon(), &problem.design_box, &boxes)
                .map_err(|e| Error::Infeasible(format!("{}: {e}", c.name)))
        })
        .collect()
}

pub fn pobo_reformulation(
    problem: &ChanceProblem,
    kinship: &KinshipPoly,
    rule: &QuadratureRule,
) -> Result<(PoboReformulation, Vec<ScaledMetric>)> {
    let scaled: Vec<ScaledMetric> = scale_constraints(problem).into_iter().collect::<Result<_>>()?;
    let reform = pobo_from_scaled(problem, kinship, rule, &scaled)?;
    Ok((reform, scaled))
}

/// PoBO reformulation from metrics already scaled by [`scale_constraints`].
pub fn pobo_from_scaled(
    problem: &ChanceProblem,
    kinship: &KinshipPoly,
    rule: &QuadratureRule,
    scaled: &[ScaledMetric],
) -> Result<PoboReformulation> {
    problem.validate()?;
    if scaled.len() != problem.constraints.len() {
        return Err(Error::DimensionMismatch {
            expected: problem.constraints.len(),
            got: scaled.len(),
        });
    }
    Ok(PoboReformulation {
        bounds: problem.design_box.clone(),
        objective: problem.objective.mean_over_xi().to_polynomial(),
        kinship: kinship.clone(),
        integrals: scaled.iter().map(|s| RiskIntegral::new(&s.surrogate, rule)).collect(),
        risks: problem.constraints.iter().map(|c| c.risk).collect(),
    })
}

pub fn moment_reformulation(problem: &ChanceProblem) -> Result<MomentReformulation> {
    problem.validate()?;
    let constraints = problem
        .constraints
        .iter()
        .map(|c| {
            // υ = ±(y - u); the condition E[υ] + γ sd(υ) ≤ 0 is written with the bound split off
            let up = c.upsilon();
            let shift = up.coeffs[0];
            let mut centered = up.clone();
            centered.coeffs[0] = 0.0;
            MomentConstraint {
                mean: centered.mean_over_xi().to_polynomial(),
                variance: up.variance_over_xi(),
                gamma: gamma_for(c.risk),
                bound: -shift,
                scale: 1.0,
            }
        })
        .collect();
    Ok(MomentReformulation {
        bounds: problem.design_box.clone(),
        objective: problem.objective.mean_over_xi().to_polynomial(),
        constraints,
    })
}

pub fn solve_pobo(
    problem: &ChanceProblem,
    kinship: &KinshipPoly,
    rule: &QuadratureRule,
    opts: SolverOptions,
) -> Result<OptimizationResult> {
    let (reform, _) = pobo_reformulation(problem, kinship, rule)?;
    solve_reformulation(&reform, opts)
}

pub fn solve_moment(problem: &ChanceProblem, opts: SolverOptions) -> Result<OptimizationResult> {
    let reform = moment_reformulation(problem)?;
    solve_reformulation(&reform, opts)
}

/// `a` beats `b`: larger objective; ties broken by smaller norm, then lexicographically.
fn better(a: (f64, &[f64]), b: (f64, &[f64])) -> bool {
    let tol = 1e-9 * a.0.abs().max(b.0.abs()).max(1.0);
    if (a.0 - b.0).abs() > tol {
        return a.0 > b.0;
    }
    let na: f64 = a.1.iter().map(|v| v * v).sum();
    let nb: f64 = b.1.iter().map(|v| v * v).sum();
    if na != nb {
        return na < nb;
    }
    for (x, y) in a.1.iter().zip(b.1) {
        if x != y {
            return x < y;
        }
    }
    false
}

struct Evaluator<'a> {
    reform: &'a dyn Reformulation,
    f_scale: f64,
    c_scale: Vec<f64>,
    error: RefCell<Option<Error>>,
}

impl Evaluator<'_> {
    fn scaled_constraints(&self, x: &[f64]) -> Option<Vec<(f64, Vec<f64>)>> {
        match self.reform.constraints(x) {
            Ok(cs) => Some(
                cs.into_iter()
                    .zip(&self.c_scale)
                    .map(|((v, g), s)| (v / s, g.iter().map(|gi| gi / s).collect()))
                    .collect(),
            ),
            Err(e) => {
                self.error.borrow_mut().get_or_insert(e);
                None
            }
        }
    }

    fn augmented_lagrangian(&self, x0: &[f64], max_outer: usize) -> Vec<f64> {
        let bounds = self.reform.bounds();
        let m = self.reform.n_constraints();
        let width: Vec<f64> = bounds.iter().map(|(a, b)| b - a).collect();
        let mut lam = vec![0.0; m];
        let mut rho = 10.0;
        let mut x = x0.to_vec();
        let mut prev_viol = f64::INFINITY;
        let opts = LocalOptions {
            max_iterations: 300,
            gradient_tol: 1e-10,
        };
        for _ in 0..max_outer {
            let lam_now = lam.clone();
            let phi = |z: &[f64]| -> (f64, Vec<f64>) {
                let (f, gf) = self.reform.objective(z);
                let mut v = -self.f_scale * f;
                let mut g: Vec<f64> = gf.iter().map(|gi| -self.f_scale * gi).collect();
                let Some(cs) = self.scaled_constraints(z) else {
                    return (f64::INFINITY, g);
                };
                for ((c, gc), l) in cs.iter().zip(&lam_now) {
                    let t = (l + rho * c).max(0.0);
                    v += (t * t - l * l) / (2.0 * rho);
                    if t > 0.0 {
                        for (gi, gci) in g.iter_mut().zip(gc) {
                            *gi += t * gci;
                        }
                    }
                }
                (v, g)
            };
            let r = minimize_box(phi, &x, bounds, opts);
            let Some(cs) = self.scaled_constraints(&r.x) else {
                return r.x;
            };
            let viol = cs.iter().map(|c| c.0).fold(0.0, f64::max);
            for (l, c) in lam.iter_mut().zip(&cs) {
                *l = (*l + rho * c.0).max(0.0);
            }
            let dx = r
                .x
                .iter()
                .zip(&x)
                .zip(&width)
                .map(|((a, b), w)| (a - b).abs() / w)
                .fold(0.0, f64::max);
            x = r.x;
            if viol <= 1e-9 && dx <= 1e-9 {
                break;
            }
            if viol > 0.25 * prev_viol {
                rho = (rho * 10.0).min(1e10);
            }
            prev_viol = viol;
        }
        x
    }

    fn phase_one(&self, x0: &[f64]) -> Vec<f64> {
        let bounds = self.reform.bounds();
        let f = |z: &[f64]| -> (f64, Vec<f64>) {
            let mut g = vec![0.0; z.len()];
            let Some(cs) = self.scaled_constraints(z) else {
                return (f64::INFINITY, g);
            };
            let mut v = 0.0;
            for (c, gc) in &cs {
                // small margin pushes the iterate strictly inside
                let t = (c + 1e-7).max(0.0);
                v += t * t;
                for (gi, gci) in g.iter_mut().zip(gc) {
                    *gi += 2.0 * t * gci;
                }
            }
            (v, g)
        };
        minimize_box(
            f,
            x0,
            bounds,
            LocalOptions {
                max_iterations: 500,
                gradient_tol: 1e-14,
            },
        )
        .x
    }
}

/// Multi-start augmented Lagrangian over Sobol starts; returns the best feasible point.
pub fn solve_reformulation(reform: &dyn Reformulation, opts: SolverOptions) -> Result<OptimizationResult> {
    let bounds = reform.bounds().to_vec();
    let starts = sobol_in_box(&bounds, opts.n_starts);
    let fvals: Vec<f64> = starts.iter().map(|s| reform.objective_value(s)).collect();
    let spread = fvals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - fvals.iter().copied().fold(f64::INFINITY, f64::min);
    let f_scale = if spread > 1e-12 { 1.0 / spread } else { 1.0 };
    let ev = Evaluator {
        reform,
        f_scale,
        c_scale: (0..reform.n_constraints()).map(|i| reform.constraint_scale(i)).collect(),
        error: RefCell::new(None),
    };
    let feasible = |x: &[f64]| -> Result<(bool, f64)> {
        let cs = reform.constraint_values(x)?;
        let worst = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((worst <= opts.feasibility_tol, worst))
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut values = Vec::new();
    let mut phase_one_runs = 0;
    let mut smallest_violation = f64::INFINITY;
    for s in &starts {
        let mut x = ev.augmented_lagrangian(s, opts.max_outer);
        if let Some(e) = ev.error.borrow_mut().take() {
            return Err(e);
        }
        let (mut ok, mut worst) = feasible(&x)?;
        if !ok {
            phase_one_runs += 1;
            let p1 = ev.phase_one(s);
            if let Some(e) = ev.error.borrow_mut().take() {
                return Err(e);
            }
            let (p1_ok, p1_worst) = feasible(&p1)?;
            worst = worst.min(p1_worst);
            if p1_ok {
                x = ev.augmented_lagrangian(&p1, opts.max_outer);
                if let Some(e) = ev.error.borrow_mut().take() {
                    return Err(e);
                }
                let (a, w) = feasible(&x)?;
                if !a {
                    x = p1;
                    worst = p1_worst;
                } else {
                    worst = w;
                }
                ok = true;
            }
        }
        if !ok {
            smallest_violation = smallest_violation.min(worst);
            continue;
        }
        let f = reform.objective_value(&x);
        values.push(f);
        let replace = match &best {
            None => true,
            Some((bf, bx)) => better((f, &x), (*bf, bx)),
        };
        if replace {
            best = Some((f, x));
        }
    }
    let Some((objective_value, x_star)) = best else {
        return Err(Error::Infeasible(format!(
            "{} reformulation: no feasible point from {} starts (smallest violation {smallest_violation:e})",
            reform.method().name(),
            opts.n_starts
        )));
    };
    values.sort_by(|a, b| b.total_cmp(a));
    let feasible_starts = values.len();
    values.truncate(10);
    let margins = reform.constraint_values(&x_star)?;
    let risks = reform.risk_bounds(&x_star)?;
    let per_constraint = margins
        .iter()
        .zip(&risks)
        .enumerate()
        .map(|(i, (m, r))| ConstraintReport {
            risk_bound: *r,
            margin: *m,
            active: *m >= -1e-5 * reform.constraint_scale(i),
        })
        .collect();
    Ok(OptimizationResult {
        x_star,
        objective_value,
        per_constraint,
        method: reform.method(),
        solver_log: SolverLog {
            starts: opts.n_starts,
            feasible_starts,
            phase_one_runs,
            best_values: values,
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOracle {
    pub best_x: Option<Vec<f64>>,
    pub best_objective: Option<f64>,
    pub n_feasible: usize,
    pub n_points: usize,
}

/// Points per axis used to certify solvers: 101 in two dimensions, 41 in three or four.
pub fn oracle_resolution(dim: usize) -> usize {
    if dim <= 2 {
        101
    } else {
        41
    }
}

/// Exhaustive evaluation of the reformulation on a uniform grid.
pub fn grid_oracle(reform: &dyn Reformulation, resolution: usize) -> Result<GridOracle> {
    let bounds = reform.bounds();
    let d = bounds.len();
    if d > 4 {
        return Err(Error::Config("grid oracle supports at most four design variables".into()));
    }
    let n = resolution.max(2);
    let axis: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(a, b)| (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
        .collect();
    let total = n.pow(d as u32);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut n_feasible = 0;
    let mut x = vec![0.0; d];
    for flat in 0..total {
        let mut r = flat;
        for j in 0..d {
            x[j] = axis[j][r % n];
            r /= n;
        }
        let cs = reform.constraint_values(&x)?;
        if cs.iter().any(|&c| c > 0.0) {
            continue;
        }
        n_feasible += 1;
        let f = reform.objective_value(&x);
        let replace = match &best {
            None => true,
            Some((bf, bx)) => better((f, &x), (*bf, bx)),
        };
        if replace {
            best = Some((f, x.clone()));
        }
    }
    Ok(GridOracle {
        best_objective: best.as_ref().map(|b| b.0),
        best_x: best.map(|b| b.1),
        n_feasible,
        n_points: total,
    })
}

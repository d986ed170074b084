//! Monte-Carlo yield estimation with per-constraint gaps.

use serde::{Deserialize, Serialize};

use crate::bench::problems::Benchmark;
use crate::error::{Error, Result};
use crate::optimizer::ChanceProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatedOn {
    Surrogate,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintYield {
    pub success_rate: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    #[serde(rename = "yield")]
    pub yield_fraction: f64,
    pub per_constraint: Vec<ConstraintYield>,
    pub n_samples: usize,
    pub seed: u64,
    pub evaluated_on: EvaluatedOn,
}

pub const MIN_SAMPLES: usize = 1000;

/// Relative slack of a success rate over the required `1 - ε`.
pub fn gap(success_rate: f64, eps: f64) -> f64 {
    (success_rate - (1.0 - eps)) / (1.0 - eps)
}

/// Fraction of `n` variation samples at which every constraint holds, and per-constraint
/// success rates. Truth evaluation needs the benchmark; a simulation with no measurable
/// band counts as failing every constraint.
pub fn estimate_yield(
    problem: &ChanceProblem,
    truth: Option<&Benchmark>,
    x: &[f64],
    n: usize,
    seed: u64,
    on: EvaluatedOn,
) -> Result<YieldReport> {
    if n < MIN_SAMPLES {
        return Err(Error::Config(format!("yield estimation needs at least {MIN_SAMPLES} samples, got {n}")));
    }
    let xis = problem.xi_model.sample(n, seed)?;
    let m = problem.constraints.len();
    let mut pass = vec![0usize; m];
    let mut all = 0usize;
    match on {
        EvaluatedOn::Surrogate => {
            let mut values = vec![Vec::new(); m];
            for (c, v) in problem.constraints.iter().zip(values.iter_mut()) {
                c.surrogate.evaluator().eval_many(x, &xis, v);
            }
            for s in 0..n {
                let mut ok_all = true;
                for (i, c) in problem.constraints.iter().enumerate() {
                    if c.satisfied(values[i][s]) {
                        pass[i] += 1;
                    } else {
                        ok_all = false;
                    }
                }
                all += ok_all as usize;
            }
        }
        EvaluatedOn::Truth => {
            let bench = truth.ok_or_else(|| Error::Config("truth evaluation needs a benchmark".into()))?;
            let mut out = vec![0.0; bench.n_metrics()];
            for xi in &xis {
                match bench.simulate_into(x, xi, &mut out) {
                    Ok(()) => {}
                    Err(Error::NoBandEdge { .. }) => continue,
                    Err(e) => return Err(e),
                }
                let mut ok_all = true;
                for (i, c) in problem.constraints.iter().enumerate() {
                    if c.satisfied(out[1 + i]) {
                        pass[i] += 1;
                    } else {
                        ok_all = false;
                    }
                }
                all += ok_all as usize;
            }
        }
    }
    let per_constraint = problem
        .constraints
        .iter()
        .zip(&pass)
        .map(|(c, &k)| {
            let success_rate = k as f64 / n as f64;
            ConstraintYield {
                success_rate,
                gap: gap(success_rate, c.risk),
            }
        })
        .collect();
    Ok(YieldReport {
        yield_fraction: all as f64 / n as f64,
        per_constraint,
        n_samples: n,
        seed,
        evaluated_on: on,
    })
}

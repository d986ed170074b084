//! The three benchmark problems and their truth functions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{mirrored_mixture, synthetic_mixture, TruncatedGaussianMixture};
use crate::error::{Error, Result};
use crate::optimizer::Sense;
use crate::photonics::{mzi_metrics, mzi_spectrum, ring_metrics, ring_spectrum, MZIDesign, MicroringDesign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkName {
    Synthetic,
    Mzi,
    Microring,
}

impl BenchmarkName {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkName::Synthetic => "synthetic",
            BenchmarkName::Mzi => "mzi",
            BenchmarkName::Microring => "microring",
        }
    }
}

impl fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(BenchmarkName::Synthetic),
            "mzi" => Ok(BenchmarkName::Mzi),
            "microring" => Ok(BenchmarkName::Microring),
            other => Err(Error::Config(format!("unknown problem {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub bound: f64,
    pub sense: Sense,
}

/// A benchmark: design box, variation model, metric layout and the truth function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: BenchmarkName,
    pub design_box: Vec<(f64, f64)>,
    pub xi_model: TruncatedGaussianMixture,
    pub objective_name: String,
    pub constraints: Vec<MetricSpec>,
    pub default_rho: usize,
    /// simulator calls for surrogate fitting; `None` uses the whole sample plan
    pub default_budget: Option<usize>,
    pub default_epsilons: Vec<f64>,
    pub initial_design: Vec<f64>,
}

fn metric(name: &str, bound: f64, sense: Sense) -> MetricSpec {
    MetricSpec {
        name: name.into(),
        bound,
        sense,
    }
}

pub fn synthetic_benchmark() -> Benchmark {
    Benchmark {
        name: BenchmarkName::Synthetic,
        design_box: vec![(-1.0, 1.0); 2],
        xi_model: synthetic_mixture(),
        objective_name: "f".into(),
        constraints: vec![metric("y1", 1.0, Sense::Upper), metric("y2", 1.0, Sense::Upper)],
        default_rho: 10,
        default_budget: None,
        default_epsilons: vec![0.01, 0.05, 0.1],
        initial_design: vec![0.0, 0.0],
    }
}

pub fn mzi_benchmark() -> Benchmark {
    let corr = vec![vec![1.0, 0.4, 0.1], vec![0.4, 1.0, 0.4], vec![0.1, 0.4, 1.0]];
    Benchmark {
        name: BenchmarkName::Mzi,
        design_box: vec![(100.0, 300.0); 3],
        xi_model: mirrored_mixture(3.0, &corr, 9.0, -6.0, 12.0),
        objective_name: "BW".into(),
        constraints: vec![metric("XT", -4.0, Sense::Upper), metric("alpha", 1.6, Sense::Upper)],
        default_rho: 5,
        default_budget: Some(35),
        default_epsilons: vec![0.05, 0.07, 0.1],
        initial_design: vec![150.0; 3],
    }
}

pub fn microring_benchmark() -> Benchmark {
    let corr = vec![
        vec![1.0, 0.4, 0.1, 0.4],
        vec![0.4, 1.0, 0.4, 0.1],
        vec![0.1, 0.4, 1.0, 0.4],
        vec![0.4, 0.1, 0.4, 1.0],
    ];
    Benchmark {
        name: BenchmarkName::Microring,
        design_box: vec![(0.3, 0.6); 4],
        xi_model: mirrored_mixture(0.03, &corr, 0.0009, -0.06, 0.12),
        objective_name: "BW".into(),
        constraints: vec![metric("RE", 20.0, Sense::Lower), metric("sigma_pass", 0.65, Sense::Upper)],
        default_rho: 5,
        default_budget: Some(65),
        default_epsilons: vec![0.05, 0.07, 0.1],
        initial_design: vec![0.45; 4],
    }
}

impl Benchmark {
    pub fn new(name: BenchmarkName) -> Self {
        match name {
            BenchmarkName::Synthetic => synthetic_benchmark(),
            BenchmarkName::Mzi => mzi_benchmark(),
            BenchmarkName::Microring => microring_benchmark(),
        }
    }

    /// Objective followed by constraint metrics.
    pub fn n_metrics(&self) -> usize {
        1 + self.constraints.len()
    }

    /// Truth values `[objective, y_1, ..]` at design `x` under variation `xi`.
    pub fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_metrics()];
        self.simulate_into(x, xi, &mut out)?;
        Ok(out)
    }

    pub fn simulate_into(&self, x: &[f64], xi: &[f64], out: &mut [f64]) -> Result<()> {
        let d1 = self.design_box.len();
        let d2 = self.xi_model.dim();
        if x.len() != d1 {
            return Err(Error::DimensionMismatch { expected: d1, got: x.len() });
        }
        if xi.len() != d2 {
            return Err(Error::DimensionMismatch { expected: d2, got: xi.len() });
        }
        match self.name {
            BenchmarkName::Synthetic => {
                let a = x[0] + xi[0];
                let b = x[1] + xi[1];
                out[0] = 3.0 * a - b;
                out[1] = a * a + b;
                out[2] = a * a - b;
            }
            BenchmarkName::Mzi => {
                let design = MZIDesign {
                    gaps: [x[0], x[1], x[2]],
                };
                let m = mzi_metrics(&mzi_spectrum(&design, xi)?)?;
                out[0] = m.bw;
                out[1] = m.xt;
                out[2] = m.alpha;
            }
            BenchmarkName::Microring => {
                let design = MicroringDesign {
                    couplings: [x[0], x[1], x[2], x[3]],
                };
                let m = ring_metrics(&ring_spectrum(&design, xi)?)?;
                out[0] = m.bw;
                out[1] = m.re;
                out[2] = m.sigma_pass;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_truth_at_origin() {
        let b = synthetic_benchmark();
        let v = b.simulate(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0]);
        assert!(v[1] <= b.constraints[0].bound);
    }

    #[test]
    fn photonic_truth_at_initial_designs() {
        for b in [mzi_benchmark(), microring_benchmark()] {
            let xi = vec![0.0; b.xi_model.dim()];
            let v = b.simulate(&b.initial_design, &xi).unwrap();
            assert!(v.iter().all(|x| x.is_finite()), "{:?}", v);
        }
    }

    #[test]
    fn names_round_trip() {
        for n in [BenchmarkName::Synthetic, BenchmarkName::Mzi, BenchmarkName::Microring] {
            assert_eq!(n.as_str().parse::<BenchmarkName>().unwrap(), n);
        }
        assert!("tsp".parse::<BenchmarkName>().is_err());
    }
}

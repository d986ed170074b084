//! Benchmark problems, yield validation, experiment orchestration and report output.

pub mod experiment;
pub mod problems;
pub mod validation;

use std::io::Write;
use std::path::Path;

pub use experiment::{
    benchmark_for, build_quadrature, build_surrogates, feasible_set_grid, load_kinship, prepare, run_experiment,
    run_prepared, run_row, sweep_tradeoff, ExperimentConfig, ExperimentReport, ExperimentRow, FeasibilityCriterion,
    FeasibleGrid, Prepared, ScalingReport, Seeds, TradeoffPoint,
};
pub use problems::{microring_benchmark, mzi_benchmark, synthetic_benchmark, Benchmark, BenchmarkName, MetricSpec};
pub use validation::{estimate_yield, gap, ConstraintYield, EvaluatedOn, YieldReport};

use crate::error::Result;
use crate::photonics::{mzi_spectrum, ring_spectrum, MZIDesign, MicroringDesign, Spectrum};

/// `%.17g`: shortest of fixed or scientific notation at 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp).max(0) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt17(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_else(|| "N/A".into())
}

/// `method,epsilon,simulations,objective,delta_1..,yield`; yields and gaps are fractions
/// from the surrogate evaluator, infeasible rows read N/A.
pub fn table_csv(report: &ExperimentReport) -> String {
    let m = report
        .rows
        .iter()
        .find_map(|r| r.surrogate_yield.as_ref().map(|y| y.per_constraint.len()))
        .unwrap_or(report.scaling.len());
    let mut out = String::from("method,epsilon,simulations,objective");
    for i in 1..=m {
        out.push_str(&format!(",delta_{i}"));
    }
    out.push_str(",yield\n");
    for r in &report.rows {
        out.push_str(&format!("{},{},{}", r.method.name(), fmt17(r.epsilon), r.simulations));
        out.push(',');
        out.push_str(&opt17(r.result.as_ref().map(|x| x.objective_value)));
        for i in 0..m {
            out.push(',');
            out.push_str(&opt17(r.surrogate_yield.as_ref().map(|y| y.per_constraint[i].gap)));
        }
        out.push(',');
        out.push_str(&opt17(r.surrogate_yield.as_ref().map(|y| y.yield_fraction)));
        out.push('\n');
    }
    out
}

pub fn tradeoff_csv(points: &[TradeoffPoint]) -> String {
    let mut out = String::from("epsilon,objective,yield\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt17(p.epsilon),
            opt17(p.objective),
            opt17(p.yield_fraction)
        ));
    }
    out
}

pub fn feasible_grid_csv(grid: &FeasibleGrid) -> String {
    let mut out = String::from("x1,x2,feasible\n");
    for (p, f) in grid.points.iter().zip(&grid.feasible) {
        out.push_str(&format!("{},{},{}\n", fmt17(p[0]), fmt17(p[1]), *f as u8));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Nominal spectrum (ξ = 0) of a photonic design; `None` for the synthetic problem.
pub fn nominal_spectrum(bench: &Benchmark, x: &[f64]) -> Result<Option<Spectrum>> {
    let xi = vec![0.0; bench.xi_model.dim()];
    Ok(match bench.name {
        BenchmarkName::Synthetic => None,
        BenchmarkName::Mzi => Some(mzi_spectrum(
            &MZIDesign {
                gaps: [x[0], x[1], x[2]],
            },
            &xi,
        )?),
        BenchmarkName::Microring => Some(ring_spectrum(
            &MicroringDesign {
                couplings: [x[0], x[1], x[2], x[3]],
            },
            &xi,
        )?),
    })
}

/// `report.json`, `table.csv` and, for photonic problems, nominal spectra of the
/// initial design and of every solution.
pub fn write_experiment(dir: &Path, prep: &Prepared, report: &ExperimentReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    write_text(&dir.join("table.csv"), &table_csv(report))?;
    if let Some(s) = nominal_spectrum(&prep.bench, &prep.bench.initial_design)? {
        s.write_csv(&dir.join("spectrum_initial.csv"))?;
    }
    for r in &report.rows {
        if let Some(res) = &r.result {
            if let Some(s) = nominal_spectrum(&prep.bench, &res.x_star)? {
                let name = format!("spectrum_{}_eps{}.csv", r.method.name(), fmt17(r.epsilon));
                s.write_csv(&dir.join(name))?;
            }
        }
    }
    Ok(())
}

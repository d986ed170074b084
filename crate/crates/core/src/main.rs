use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pobo::bench::{
    self, benchmark_for, build_quadrature, build_surrogates, feasible_grid_csv, feasible_set_grid, prepare,
    run_prepared, sweep_tradeoff, table_csv, tradeoff_csv, write_experiment, write_json, write_text, BenchmarkName,
    EvaluatedOn, ExperimentConfig, FeasibilityCriterion, Seeds,
};
use pobo::kinship::{verify_kinship, KinshipPoly, KinshipReport};
use pobo::optimizer::Method;

#[derive(Parser)]
#[command(name = "pobo", version, about = "Yield-aware design optimization with polynomial kinship bounds")]
struct Cli {
    /// experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// base seed for quadrature and yield sampling
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Synthetic,
    Mzi,
    Microring,
}

impl From<Problem> for BenchmarkName {
    fn from(p: Problem) -> Self {
        match p {
            Problem::Synthetic => BenchmarkName::Synthetic,
            Problem::Mzi => BenchmarkName::Mzi,
            Problem::Microring => BenchmarkName::Microring,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pobo,
    Moment,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pobo => Method::Pobo,
            MethodArg::Moment => Method::Moment,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Evaluator {
    Surrogate,
    Truth,
}

#[derive(Clone, Copy, ValueEnum)]
enum Criterion {
    ExactMc,
    Moment,
    Pobo,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and verify the optimal polynomial kinship of order rho
    Kinship {
        #[arg(long)]
        rho: Option<usize>,
    },
    /// Build the quadrature rule of a problem's variation model
    Quadrature {
        #[arg(long, value_enum)]
        problem: Option<Problem>,
        #[arg(long)]
        q: Option<usize>,
    },
    /// Fit objective and constraint surrogates
    Fit {
        #[arg(long, value_enum)]
        problem: Option<Problem>,
    },
    /// Solve one reformulation at one risk level
    Optimize {
        #[arg(long, value_enum)]
        problem: Option<Problem>,
        #[arg(long, value_enum, default_value = "pobo")]
        method: MethodArg,
        #[arg(long)]
        eps: f64,
    },
    /// Monte-Carlo yield of a design
    Validate {
        #[arg(long, value_enum)]
        problem: Option<Problem>,
        /// comma-separated design point
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum, default_value = "surrogate")]
        on: Evaluator,
    },
    /// Objective/yield trade-off over a grid of risk levels
    Sweep {
        #[arg(long, value_enum)]
        problem: Option<Problem>,
        /// comma-separated risk levels
        #[arg(long, value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
    },
    /// Feasible design cells of a two-variable problem under one criterion
    FeasibleGrid {
        #[arg(long, value_enum)]
        problem: Option<Problem>,
        #[arg(long, value_enum, default_value = "pobo")]
        criterion: Criterion,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Full experiment: both methods at every configured risk level
    Bench {
        #[arg(value_enum)]
        problem: Problem,
    },
}

fn load_config(cli: &Cli, problem: Option<Problem>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = problem {
        cfg.problem = p.into();
    }
    if let Some(s) = cli.seed {
        cfg.seeds = Seeds::from_base(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Serialize)]
struct KinshipOutput {
    kinship: KinshipPoly,
    verification: KinshipReport,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Kinship { rho } => {
            let cfg = load_config(&cli, None)?;
            let rho = rho.or(cfg.rho).unwrap_or(10);
            let k = bench::load_kinship(rho, cfg.kinship_cache.as_deref())?;
            let verification = verify_kinship(&k);
            let dir = out_dir(&cli, &cfg);
            write_json(&dir.join("kinship.json"), &KinshipOutput { kinship: k.clone(), verification: verification.clone() })?;
            println!(
                "rho={} integral={} max_violation={:e} passed={}",
                rho,
                bench::fmt17(k.integral_value),
                verification.max_violation,
                verification.passed
            );
        }
        Command::Quadrature { problem, q } => {
            let cfg = load_config(&cli, *problem)?;
            let b = benchmark_for(&cfg)?;
            let q = q.or(cfg.q).unwrap_or(cfg.p);
            let rule = build_quadrature(&b, q, cfg.seeds.quadrature)?;
            write_json(&out_dir(&cli, &cfg).join("quadrature.json"), &rule)?;
            println!("{}: {} points, residual {:e}", b.name, rule.len(), rule.residual);
        }
        Command::Fit { problem } => {
            let cfg = load_config(&cli, *problem)?;
            let b = benchmark_for(&cfg)?;
            let rule = build_quadrature(&b, cfg.q.unwrap_or(cfg.p), cfg.seeds.quadrature)?;
            let (surrogates, simulations) = build_surrogates(&b, &rule, cfg.p, cfg.budget.or(b.default_budget))?;
            #[derive(Serialize)]
            struct FitOutput<'a> {
                simulations: usize,
                metrics: Vec<&'a str>,
                surrogates: &'a [pobo::surrogate::PCESurrogate],
            }
            let metrics = std::iter::once(b.objective_name.as_str())
                .chain(b.constraints.iter().map(|c| c.name.as_str()))
                .collect();
            write_json(
                &out_dir(&cli, &cfg).join("surrogates.json"),
                &FitOutput { simulations, metrics, surrogates: &surrogates },
            )?;
            println!("{}: {} simulator calls", b.name, simulations);
        }
        Command::Optimize { problem, method, eps } => {
            let cfg = load_config(&cli, *problem)?;
            let prep = prepare(&cfg)?;
            let row = bench::run_row(&prep, (*method).into(), *eps)?;
            write_json(&out_dir(&cli, &cfg).join("result.json"), &row)?;
            match &row.result {
                Some(r) => println!(
                    "{} eps={}: objective {} at {:?}",
                    r.method.name(),
                    eps,
                    bench::fmt17(r.objective_value),
                    r.x_star
                ),
                None => println!("infeasible: {}", row.infeasible.unwrap_or_default()),
            }
        }
        Command::Validate { problem, x, eps, n, on } => {
            let cfg = load_config(&cli, *problem)?;
            let prep = prepare(&cfg)?;
            if x.len() != prep.problem.design_box.len() {
                bail!("design point needs {} coordinates", prep.problem.design_box.len());
            }
            let (on, seed) = match on {
                Evaluator::Surrogate => (EvaluatedOn::Surrogate, cfg.seeds.validation),
                Evaluator::Truth => (EvaluatedOn::Truth, cfg.seeds.truth),
            };
            let n = n.unwrap_or(cfg.n_mc);
            let y = bench::estimate_yield(&prep.problem.with_risk(*eps), Some(&prep.bench), x, n, seed, on)?;
            write_json(&out_dir(&cli, &cfg).join("yield.json"), &y)?;
            println!("yield {}", bench::fmt17(y.yield_fraction));
        }
        Command::Sweep { problem, eps_grid } => {
            let cfg = load_config(&cli, *problem)?;
            let prep = prepare(&cfg)?;
            let grid = eps_grid.clone().unwrap_or_else(|| cfg.sweep_grid());
            let points = sweep_tradeoff(&prep, &grid)?;
            let csv = tradeoff_csv(&points);
            write_text(&out_dir(&cli, &cfg).join("tradeoff.csv"), &csv)?;
            print!("{csv}");
        }
        Command::FeasibleGrid { problem, criterion, eps, resolution } => {
            let cfg = load_config(&cli, *problem)?;
            let prep = prepare(&cfg)?;
            let criterion = match criterion {
                Criterion::ExactMc => FeasibilityCriterion::ExactMc,
                Criterion::Moment => FeasibilityCriterion::Moment,
                Criterion::Pobo => FeasibilityCriterion::Pobo,
            };
            let grid = feasible_set_grid(&prep, criterion, *eps, resolution.unwrap_or(cfg.grid_resolution))?;
            write_text(&out_dir(&cli, &cfg).join("feasible_grid.csv"), &feasible_grid_csv(&grid))?;
            println!("{} of {} cells feasible", grid.count(), grid.feasible.len());
        }
        Command::Bench { problem } => {
            let cfg = load_config(&cli, Some(*problem))?;
            let prep = prepare(&cfg)?;
            let report = run_prepared(&prep)?;
            write_experiment(&out_dir(&cli, &cfg), &prep, &report)?;
            print!("{}", table_csv(&report));
        }
    }
    Ok(())
}

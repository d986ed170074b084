//! Surrogate construction, both solvers and Monte-Carlo validation for one benchmark.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::basis::{legendre_basis, mixture_basis};
use crate::bench::problems::{Benchmark, BenchmarkName};
use crate::bench::validation::{estimate_yield, EvaluatedOn, YieldReport};
use crate::dist::{MixtureSpec, TruncatedGaussianMixture};
use crate::error::{Error, Result};
use crate::kinship::{solve_optimal_kinship, KinshipCache, KinshipPoly};
use crate::optimizer::{
    moment_reformulation, pobo_from_scaled, scale_constraints, solve_reformulation, ChanceConstraint,
    ChanceProblem, Method, OptimizationResult, Reformulation, ScaledMetric, SolverOptions,
};
use crate::quadrature::{default_candidates, optimize_quadrature, QuadratureRule};
use crate::surrogate::{fit_pce, greedy_subsample, product_plan, PCESurrogate, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// candidate points of the quadrature rule
    pub quadrature: u64,
    /// yield estimation on the surrogates
    pub validation: u64,
    /// yield estimation on the truth functions
    pub truth: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_base(1)
    }
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Seeds {
            quadrature: seed,
            validation: seed.wrapping_add(1),
            truth: seed.wrapping_add(2),
        }
    }
}

/// Experiment settings, read from JSON; absent fields take benchmark defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: BenchmarkName,
    pub epsilons: Option<Vec<f64>>,
    /// kinship order
    pub rho: Option<usize>,
    /// surrogate total order
    pub p: usize,
    /// quadrature exactness is `2q`; defaults to `p`
    pub q: Option<usize>,
    /// simulator calls for fitting; defaults per benchmark
    pub budget: Option<usize>,
    pub n_mc: usize,
    /// truth-evaluated yield samples; defaults to `n_mc` for the synthetic problem and 10⁴ for simulators
    pub n_mc_truth: Option<usize>,
    pub n_starts: usize,
    pub seeds: Seeds,
    pub kinship_cache: Option<PathBuf>,
    /// replaces the benchmark's variation model
    pub xi_model: Option<MixtureSpec>,
    pub output_dir: Option<PathBuf>,
    pub sweep_epsilons: Option<Vec<f64>>,
    pub grid_resolution: usize,
    /// variation samples per cell of the Monte-Carlo feasible set
    pub grid_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: BenchmarkName::Synthetic,
            epsilons: None,
            rho: None,
            p: 2,
            q: None,
            budget: None,
            n_mc: 100_000,
            n_mc_truth: None,
            n_starts: 64,
            seeds: Seeds::default(),
            kinship_cache: None,
            xi_model: None,
            output_dir: None,
            sweep_epsilons: None,
            grid_resolution: 101,
            grid_samples: 10_000,
        }
    }
}

impl ExperimentConfig {
    pub fn for_problem(problem: BenchmarkName) -> Self {
        ExperimentConfig {
            problem,
            ..Default::default()
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn epsilons(&self, bench: &Benchmark) -> Vec<f64> {
        self.epsilons.clone().unwrap_or_else(|| bench.default_epsilons.clone())
    }

    pub fn sweep_grid(&self) -> Vec<f64> {
        self.sweep_epsilons
            .clone()
            .unwrap_or_else(|| (1..=20).map(|i| i as f64 / 100.0).collect())
    }

    pub fn n_mc_truth(&self) -> usize {
        self.n_mc_truth.unwrap_or(match self.problem {
            BenchmarkName::Synthetic => self.n_mc,
            _ => 10_000,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Config("surrogate order p must be at least 1".into()));
        }
        if self.q == Some(0) {
            return Err(Error::Config("quadrature order q must be at least 1".into()));
        }
        if let Some(r) = self.rho {
            if r == 0 || r > crate::kinship::MAX_ORDER {
                return Err(Error::KinshipOrder(r));
            }
        }
        for e in self.epsilons.iter().chain(self.sweep_epsilons.iter()).flatten() {
            if !(*e > 0.0 && *e < 1.0) {
                return Err(Error::Config(format!("risk level {e} outside (0, 1)")));
            }
        }
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be positive".into()));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Config("grid_resolution must be at least 2".into()));
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            n_starts: self.n_starts,
            ..Default::default()
        }
    }
}

/// Everything a solve needs: fitted problem, quadrature rule, kinship and scaled metrics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub bench: Benchmark,
    pub problem: ChanceProblem,
    pub rule: QuadratureRule,
    pub kinship: KinshipPoly,
    pub rho: usize,
    pub q: usize,
    pub simulations: usize,
    pub scaled: Vec<std::result::Result<ScaledMetric, String>>,
}

pub fn load_kinship(rho: usize, cache: Option<&std::path::Path>) -> Result<KinshipPoly> {
    match cache {
        Some(path) => {
            let mut c = KinshipCache::load(path)?;
            let known = c.entries.contains_key(&rho);
            let k = c.get_or_solve(rho)?;
            if !known {
                c.save(path)?;
            }
            Ok(k)
        }
        None => solve_optimal_kinship(rho),
    }
}

/// Variation model of a config: the override if present, else the benchmark's.
pub fn benchmark_for(config: &ExperimentConfig) -> Result<Benchmark> {
    let mut bench = Benchmark::new(config.problem);
    if let Some(spec) = &config.xi_model {
        let model = TruncatedGaussianMixture::try_from(spec.clone())?;
        if model.dim() != bench.xi_model.dim() {
            return Err(Error::DimensionMismatch {
                expected: bench.xi_model.dim(),
                got: model.dim(),
            });
        }
        bench.xi_model = model;
    }
    Ok(bench)
}

/// Quadrature rule of exactness `2q` for the benchmark's variation model.
pub fn build_quadrature(bench: &Benchmark, q: usize, seed: u64) -> Result<QuadratureRule> {
    let basis = mixture_basis(&bench.xi_model, 2 * q)?;
    optimize_quadrature(&basis, &bench.xi_model, q, default_candidates(&basis, q), seed)
}

/// Fitted objective and constraint surrogates plus the number of truth calls spent.
pub fn build_surrogates(
    bench: &Benchmark,
    rule: &QuadratureRule,
    p: usize,
    budget: Option<usize>,
) -> Result<(Vec<PCESurrogate>, usize)> {
    let basis_x = legendre_basis(bench.design_box.len(), p, &bench.design_box)?;
    let basis_xi = mixture_basis(&bench.xi_model, p)?;
    let plan = product_plan(&bench.design_box, p, rule);
    let idx: Vec<usize> = match budget {
        Some(b) => greedy_subsample(&plan, &basis_x, &basis_xi, p, b),
        None => (0..plan.len()).collect(),
    };
    let mut values = Vec::with_capacity(idx.len());
    for &i in &idx {
        values.push(bench.simulate(&plan[i].x, &plan[i].xi)?);
    }
    let weights: Vec<f64> = idx.iter().map(|&i| plan[i].weight).collect();
    let surrogates = (0..bench.n_metrics())
        .map(|m| {
            let samples: Vec<Sample> = idx
                .iter()
                .zip(&values)
                .map(|(&i, v)| Sample {
                    x: plan[i].x.clone(),
                    xi: plan[i].xi.clone(),
                    value: v[m],
                })
                .collect();
            fit_pce(&samples, Some(&weights), &basis_x, &basis_xi, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((surrogates, idx.len()))
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let bench = benchmark_for(config)?;
    let p = config.p;
    let q = config.q.unwrap_or(p);
    let rho = config.rho.unwrap_or(bench.default_rho);
    let rule = build_quadrature(&bench, q, config.seeds.quadrature)?;
    let (mut surrogates, simulations) =
        build_surrogates(&bench, &rule, p, config.budget.or(bench.default_budget))?;
    let objective = surrogates.remove(0);
    let eps0 = config.epsilons(&bench).first().copied().unwrap_or(0.1);
    let constraints = bench
        .constraints
        .iter()
        .zip(surrogates)
        .map(|(m, s)| ChanceConstraint {
            name: m.name.clone(),
            surrogate: s,
            bound: m.bound,
            sense: m.sense,
            risk: eps0,
        })
        .collect();
    let problem = ChanceProblem {
        objective,
        constraints,
        design_box: bench.design_box.clone(),
        xi_model: bench.xi_model.clone(),
    };
    let kinship = load_kinship(rho, config.kinship_cache.as_deref())?;
    let scaled = scale_constraints(&problem)
        .into_iter()
        .map(|r| r.map_err(|e| e.to_string()))
        .collect();
    Ok(Prepared {
        config: config.clone(),
        bench,
        problem,
        rule,
        kinship,
        rho,
        q,
        simulations,
        scaled,
    })
}

impl Prepared {
    /// Deterministic reformulation of the problem at risk level `eps`.
    pub fn reformulation(&self, method: Method, eps: f64) -> Result<Box<dyn Reformulation>> {
        let problem = self.problem.with_risk(eps);
        match method {
            Method::Pobo => {
                let scaled = self
                    .scaled
                    .iter()
                    .map(|s| s.clone().map_err(Error::Infeasible))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Box::new(pobo_from_scaled(&problem, &self.kinship, &self.rule, &scaled)?))
            }
            Method::Moment => Ok(Box::new(moment_reformulation(&problem)?)),
        }
    }

    pub fn solve(&self, method: Method, eps: f64) -> Result<OptimizationResult> {
        let reform = self.reformulation(method, eps)?;
        solve_reformulation(reform.as_ref(), self.config.solver_options())
    }

    pub fn surrogate_yield(&self, x: &[f64], eps: f64) -> Result<YieldReport> {
        estimate_yield(
            &self.problem.with_risk(eps),
            Some(&self.bench),
            x,
            self.config.n_mc,
            self.config.seeds.validation,
            EvaluatedOn::Surrogate,
        )
    }

    pub fn truth_yield(&self, x: &[f64], eps: f64) -> Result<YieldReport> {
        estimate_yield(
            &self.problem.with_risk(eps),
            Some(&self.bench),
            x,
            self.config.n_mc_truth(),
            self.config.seeds.truth,
            EvaluatedOn::Truth,
        )
    }
}

/// One (method, ε) outcome; infeasible solves carry the reason instead of a result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: Method,
    pub epsilon: f64,
    pub simulations: usize,
    pub result: Option<OptimizationResult>,
    pub infeasible: Option<String>,
    pub surrogate_yield: Option<YieldReport>,
    pub truth_yield: Option<YieldReport>,
}

impl ExperimentRow {
    pub fn feasible(&self) -> bool {
        self.result.is_some()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub constraint: String,
    pub minimum: Option<f64>,
    pub factor: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub problem: BenchmarkName,
    pub config: ExperimentConfig,
    pub simulations: usize,
    pub rho: usize,
    pub p: usize,
    pub q: usize,
    pub kinship_integral: f64,
    pub quadrature_points: usize,
    pub quadrature_residual: f64,
    /// root-mean-square fit residual per metric, objective first
    pub fit_residuals: Vec<(String, f64)>,
    pub scaling: Vec<ScalingReport>,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method, eps: f64) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.method == method && r.epsilon == eps)
    }
}

/// Solve and validate one (method, ε) pair.
pub fn run_row(prep: &Prepared, method: Method, eps: f64) -> Result<ExperimentRow> {
    let mut row = ExperimentRow {
        method,
        epsilon: eps,
        simulations: prep.simulations,
        result: None,
        infeasible: None,
        surrogate_yield: None,
        truth_yield: None,
    };
    match prep.solve(method, eps) {
        Ok(r) => {
            row.surrogate_yield = Some(prep.surrogate_yield(&r.x_star, eps)?);
            row.truth_yield = Some(prep.truth_yield(&r.x_star, eps)?);
            row.result = Some(r);
        }
        Err(Error::Infeasible(msg)) => row.infeasible = Some(msg),
        Err(e) => return Err(e),
    }
    Ok(row)
}

pub fn run_prepared(prep: &Prepared) -> Result<ExperimentReport> {
    let mut rows = Vec::new();
    for eps in prep.config.epsilons(&prep.bench) {
        for method in [Method::Pobo, Method::Moment] {
            rows.push(run_row(prep, method, eps)?);
        }
    }
    let mut fit_residuals = vec![(prep.bench.objective_name.clone(), prep.problem.objective.fit_residual)];
    fit_residuals.extend(
        prep.problem
            .constraints
            .iter()
            .map(|c| (c.name.clone(), c.surrogate.fit_residual)),
    );
    let scaling = prep
        .problem
        .constraints
        .iter()
        .zip(&prep.scaled)
        .map(|(c, s)| match s {
            Ok(m) => ScalingReport {
                constraint: c.name.clone(),
                minimum: Some(m.minimum),
                factor: Some(m.factor),
                error: None,
            },
            Err(e) => ScalingReport {
                constraint: c.name.clone(),
                minimum: None,
                factor: None,
                error: Some(e.clone()),
            },
        })
        .collect();
    Ok(ExperimentReport {
        problem: prep.bench.name,
        config: prep.config.clone(),
        simulations: prep.simulations,
        rho: prep.rho,
        p: prep.config.p,
        q: prep.q,
        kinship_integral: prep.kinship.integral_value,
        quadrature_points: prep.rule.len(),
        quadrature_residual: prep.rule.residual,
        fit_residuals,
        scaling,
        rows,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<(Prepared, ExperimentReport)> {
    let prep = prepare(config)?;
    let report = run_prepared(&prep)?;
    Ok((prep, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub epsilon: f64,
    pub objective: Option<f64>,
    /// surrogate-evaluated yield at the solution
    pub yield_fraction: Option<f64>,
}

/// PoBO optimum and its yield per risk level; infeasible levels are left empty.
pub fn sweep_tradeoff(prep: &Prepared, eps_grid: &[f64]) -> Result<Vec<TradeoffPoint>> {
    let mut out = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("risk level {eps} outside (0, 1)")));
        }
        let point = match prep.solve(Method::Pobo, eps) {
            Ok(r) => {
                let y = prep.surrogate_yield(&r.x_star, eps)?;
                TradeoffPoint {
                    epsilon: eps,
                    objective: Some(r.objective_value),
                    yield_fraction: Some(y.yield_fraction),
                }
            }
            Err(Error::Infeasible(_)) => TradeoffPoint {
                epsilon: eps,
                objective: None,
                yield_fraction: None,
            },
            Err(e) => return Err(e),
        };
        out.push(point);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityCriterion {
    /// per-constraint Monte-Carlo success rate of the truth functions
    ExactMc,
    Moment,
    Pobo,
}

impl std::str::FromStr for FeasibilityCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-mc" => Ok(FeasibilityCriterion::ExactMc),
            "moment" => Ok(FeasibilityCriterion::Moment),
            "pobo" => Ok(FeasibilityCriterion::Pobo),
            other => Err(Error::Config(format!("unknown feasibility criterion {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibleGrid {
    pub criterion: FeasibilityCriterion,
    pub epsilon: f64,
    pub points: Vec<[f64; 2]>,
    pub feasible: Vec<bool>,
}

impl FeasibleGrid {
    pub fn count(&self) -> usize {
        self.feasible.iter().filter(|f| **f).count()
    }
}

/// Membership of each cell of a `resolution²` design grid under one criterion.
/// The Monte-Carlo criterion reuses one variation sample for every cell.
pub fn feasible_set_grid(
    prep: &Prepared,
    criterion: FeasibilityCriterion,
    eps: f64,
    resolution: usize,
) -> Result<FeasibleGrid> {
    let bounds = &prep.problem.design_box;
    if bounds.len() != 2 {
        return Err(Error::Config(format!(
            "feasible-set grids need two design variables, {} has {}",
            prep.bench.name,
            bounds.len()
        )));
    }
    let n = resolution.max(2);
    let axis = |j: usize, i: usize| bounds[j].0 + (bounds[j].1 - bounds[j].0) * i as f64 / (n - 1) as f64;
    let mut points = Vec::with_capacity(n * n);
    for i1 in 0..n {
        for i0 in 0..n {
            points.push([axis(0, i0), axis(1, i1)]);
        }
    }
    let problem = prep.problem.with_risk(eps);
    let feasible = match criterion {
        FeasibilityCriterion::ExactMc => {
            let xis = problem.xi_model.sample(prep.config.grid_samples, prep.config.seeds.truth)?;
            let need = (1.0 - eps) * xis.len() as f64;
            let mut out = vec![0.0; prep.bench.n_metrics()];
            let mut feas = Vec::with_capacity(points.len());
            for x in &points {
                let mut pass = vec![0usize; problem.constraints.len()];
                for xi in &xis {
                    if prep.bench.simulate_into(x, xi, &mut out).is_err() {
                        continue;
                    }
                    for (i, c) in problem.constraints.iter().enumerate() {
                        pass[i] += c.satisfied(out[1 + i]) as usize;
                    }
                }
                feas.push(pass.iter().all(|&k| k as f64 >= need));
            }
            feas
        }
        FeasibilityCriterion::Moment | FeasibilityCriterion::Pobo => {
            let method = if criterion == FeasibilityCriterion::Moment {
                Method::Moment
            } else {
                Method::Pobo
            };
            match prep.reformulation(method, eps) {
                Ok(reform) => points
                    .iter()
                    .map(|x| Ok(reform.constraint_values(x)?.iter().all(|&c| c <= 0.0)))
                    .collect::<Result<Vec<bool>>>()?,
                Err(Error::Infeasible(_)) => vec![false; points.len()],
                Err(e) => return Err(e),
            }
        }
    };
    Ok(FeasibleGrid {
        criterion,
        epsilon: eps,
        points,
        feasible,
    })
}

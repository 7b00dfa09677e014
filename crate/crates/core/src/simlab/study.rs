//! Replicated simulation studies.
//!
//! For every scenario and sample size, replication `r` generates its dataset
//! from `root ⊕ splitmix64(r)` and computes, on a fixed grid of `[0, 1]`:
//!
//! * `PSE-I`: the penalized spline quantile fit at the target level itself,
//! * `PSE-E`: the highest ladder fit below `τ` extrapolated with the
//!   pointwise tail index,
//! * `PSE-Ep`: the same with the pooled tail index.
//!
//! Integrated squared errors against the exact conditional quantile are
//! averaged over replications. Replications only share the read-only
//! configuration, so running them on a thread pool gives the same report
//! as running them one after another.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::replication_seed;
use super::scenario::{generate, Dataset, Scenario};
use crate::bspline::BasisSpec;
use crate::error::{Error, Result};
use crate::evt::{default_k, estimate_evi, NonpositivePolicy, QuantileLadder};
use crate::extrapolate::{extrapolate_pointwise, extrapolate_pooled};
use crate::fitter::{
    default_lambda_grid, fit_ladder, select_lambda_gacv, LadderOptions, LambdaPolicy,
    QuantileFitModel, SolverConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    /// Intermediate-order fit at the target level.
    PseI,
    /// Extrapolation with the pointwise tail index.
    PseE,
    /// Extrapolation with the pooled tail index.
    PseEp,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::PseI, Estimator::PseE, Estimator::PseEp];

    pub fn label(&self) -> &'static str {
        match self {
            Estimator::PseI => "PSE-I",
            Estimator::PseE => "PSE-E",
            Estimator::PseEp => "PSE-Ep",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PSE-I" => Ok(Estimator::PseI),
            "PSE-E" => Ok(Estimator::PseE),
            "PSE-EP" => Ok(Estimator::PseEp),
            other => Err(Error::Config {
                field: "estimator",
                reason: format!("unknown estimator `{other}`"),
            }),
        }
    }
}

/// Smoothing parameter used by every fit in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaChoice {
    Fixed(f64),
    /// GACV over the default log-spaced grid with this many candidates.
    Gacv { candidates: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<Scenario>,
    pub sample_sizes: Vec<usize>,
    pub levels: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    pub root_seed: u64,
    /// Knot spans `K`.
    pub segments: usize,
    pub degree: usize,
    pub penalty_order: usize,
    pub lambda: LambdaChoice,
    /// Target `(1 - τ_1) n` of the ladder's top level.
    pub xi: f64,
    /// Ladder length; `None` uses `⌊7.5 n^{1/3}⌋`.
    pub k: Option<usize>,
    pub grid_points: usize,
    pub solver: SolverConfig,
    pub parallel: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![Scenario::A],
            sample_sizes: vec![200, 1000],
            levels: vec![0.9, 0.995],
            estimators: Estimator::ALL.to_vec(),
            replications: 100,
            root_seed: 20_190_101,
            segments: 40,
            degree: 3,
            penalty_order: 2,
            lambda: LambdaChoice::Gacv { candidates: 30 },
            xi: 3.0,
            k: None,
            grid_points: 401,
            solver: SolverConfig::default(),
            parallel: true,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        if self.scenarios.is_empty() {
            return bad("scenario", "at least one scenario is required".into());
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2) {
            return bad("n-list", "sample sizes must be at least 2".into());
        }
        if self.levels.is_empty() {
            return bad("tau-list", "at least one level is required".into());
        }
        if let Some(t) = self.levels.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return bad("tau-list", format!("level {t} is not in (0, 1)"));
        }
        if self.estimators.is_empty() {
            return bad("estimators", "at least one estimator is required".into());
        }
        if self.replications == 0 {
            return bad("replications", "must be positive".into());
        }
        if self.segments == 0 {
            return bad("knots", "must be positive".into());
        }
        if self.penalty_order < 1 || self.penalty_order > self.degree {
            return bad(
                "penalty-order",
                format!("must lie in 1..={}", self.degree),
            );
        }
        if self.grid_points < 2 {
            return bad("grid_points", "need at least two grid points".into());
        }
        if !(self.xi > 0.0) {
            return bad("xi", "must be positive".into());
        }
        match self.lambda {
            LambdaChoice::Fixed(l) if !(l >= 0.0) || !l.is_finite() => {
                return bad("lambda", format!("{l} is not a valid smoothing parameter"));
            }
            LambdaChoice::Gacv { candidates: 0 } => {
                return bad("lambda", "GACV needs at least one candidate".into());
            }
            _ => {}
        }
        if let Some(k) = self.k {
            if k < 2 {
                return bad("k", "ladder length must be at least 2".into());
            }
        }
        self.solver.validate()
    }

    fn grid(&self) -> Vec<f64> {
        let m = self.grid_points - 1;
        (0..=m).map(|i| i as f64 / m as f64).collect()
    }

    fn needs_ladder(&self) -> bool {
        self.estimators
            .iter()
            .any(|e| matches!(e, Estimator::PseE | Estimator::PseEp))
    }

    fn ladder_for(&self, n: usize) -> Result<QuantileLadder> {
        let k = self.k.unwrap_or_else(|| default_k(n as u64));
        QuantileLadder::for_target_xi(n as u64, self.xi, k)
    }
}

/// Trapezoidal `∫ (estimate - truth)^2` over a sorted grid.
pub fn integrated_squared_error(estimate: &[f64], truth: &[f64], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyData);
    }
    if estimate.len() != grid.len() || truth.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "estimate/truth",
            expected: grid.len(),
            got: estimate.len().min(truth.len()),
        });
    }
    let sq: Vec<f64> = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).powi(2))
        .collect();
    Ok(grid
        .windows(2)
        .zip(sq.windows(2))
        .map(|(x, s)| 0.5 * (x[1] - x[0]) * (s[0] + s[1]))
        .sum())
}

/// Integrated squared error between two functions on `grid`.
pub fn mise(estimate: impl Fn(f64) -> f64, truth: impl Fn(f64) -> f64, grid: &[f64]) -> Result<f64> {
    let e: Vec<f64> = grid.iter().map(|&x| estimate(x)).collect();
    let t: Vec<f64> = grid.iter().map(|&x| truth(x)).collect();
    integrated_squared_error(&e, &t, grid)
}

/// One `(scenario, n, τ, estimator)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scenario: Scenario,
    pub n: usize,
    pub tau: f64,
    pub estimator: Estimator,
    pub replications: usize,
    /// Mean integrated squared error over the successful replications.
    pub mise: f64,
    pub mc_stderr: f64,
    pub failures: usize,
    /// Per-replication integrated squared errors (`None` on failure).
    pub ise: Vec<Option<f64>>,
    /// Grid points where extrapolation was refused, summed over
    /// replications.
    pub refused_points: usize,
}

/// Pooled tail index per replication for one `(scenario, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EviSummary {
    pub scenario: Scenario,
    pub n: usize,
    pub k: usize,
    pub ladder_offset: u64,
    pub pooled: Vec<Option<f64>>,
    /// Fraction of pooling points with a valid pointwise index.
    pub valid_fraction: Vec<Option<f64>>,
}

impl EviSummary {
    /// Sorted pooled estimates of the successful replications.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pooled.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub cells: Vec<CellResult>,
    pub evi: Vec<EviSummary>,
}

impl StudyReport {
    pub fn cell(&self, scenario: Scenario, n: usize, tau: f64, estimator: Estimator) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.scenario == scenario && c.n == n && c.tau == tau && c.estimator == estimator
        })
    }

    pub fn evi_for(&self, scenario: Scenario, n: usize) -> Option<&EviSummary> {
        self.evi.iter().find(|e| e.scenario == scenario && e.n == n)
    }

    /// `scenario,n,tau,estimator,replications,mise,mc_stderr,failures`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,n,tau,estimator,replications,mise,mc_stderr,failures\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.scenario, c.n, c.tau, c.estimator, c.replications, c.mise, c.mc_stderr, c.failures
            ));
        }
        out
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

struct Replication {
    /// Keyed by (level index, estimator).
    ise: BTreeMap<(usize, Estimator), Result<(f64, usize)>>,
    pooled: Option<f64>,
    valid_fraction: Option<f64>,
}

struct CellContext<'a> {
    cfg: &'a StudyConfig,
    spec: BasisSpec,
    grid: Vec<f64>,
    /// truth[level index] on the grid
    truth: Vec<Vec<f64>>,
    ladder: Option<QuantileLadder>,
}

impl CellContext<'_> {
    fn lambda_policy(&self, ys: &[f64]) -> LambdaPolicy {
        match self.cfg.lambda {
            LambdaChoice::Fixed(l) => LambdaPolicy::Fixed(l),
            LambdaChoice::Gacv { candidates } => {
                LambdaPolicy::GacvAtFirst(default_lambda_grid(ys, &self.spec, candidates))
            }
        }
    }

    fn fit_level(&self, data: &Dataset, tau: f64) -> Result<QuantileFitModel> {
        let cfg = self.cfg;
        match self.lambda_policy(&data.y) {
            LambdaPolicy::Fixed(l) => crate::fitter::fit_intermediate(
                &data.x,
                &data.y,
                tau,
                l,
                &self.spec,
                cfg.penalty_order,
                &cfg.solver,
            ),
            LambdaPolicy::GacvAtFirst(grid) | LambdaPolicy::GacvEachLevel(grid) => {
                select_lambda_gacv(
                    &data.x,
                    &data.y,
                    tau,
                    &self.spec,
                    cfg.penalty_order,
                    &grid,
                    &cfg.solver,
                )
                .map(|s| s.model)
            }
        }
    }

    fn run(&self, data: &Dataset) -> Replication {
        let cfg = self.cfg;
        let mut ise = BTreeMap::new();

        for (li, &tau) in cfg.levels.iter().enumerate() {
            if cfg.estimators.contains(&Estimator::PseI) {
                let outcome = self.fit_level(data, tau).and_then(|model| {
                    let est = model.predict(&self.grid)?;
                    Ok((integrated_squared_error(&est, &self.truth[li], &self.grid)?, 0))
                });
                ise.insert((li, Estimator::PseI), outcome);
            }
        }

        let mut pooled = None;
        let mut valid_fraction = None;
        if let Some(ladder) = &self.ladder {
            let options = LadderOptions {
                lambda: self.lambda_policy(&data.y),
                warm_start: true,
            };
            let tail = fit_ladder(
                &data.x,
                &data.y,
                ladder,
                &options,
                &self.spec,
                cfg.penalty_order,
                &cfg.solver,
            )
            .and_then(|fits| {
                let evi =
                    estimate_evi(&fits.models, &self.grid, &data.x, NonpositivePolicy::Mask)?;
                Ok((fits, evi))
            });
            if let Ok((_, evi)) = &tail {
                pooled = Some(evi.pooled);
                valid_fraction = Some(evi.pooled_points as f64 / evi.pooling_size as f64);
            }
            for (li, &tau) in cfg.levels.iter().enumerate() {
                for est in [Estimator::PseE, Estimator::PseEp] {
                    if !cfg.estimators.contains(&est) {
                        continue;
                    }
                    let outcome = match &tail {
                        Err(e) => Err(e.clone()),
                        Ok((fits, evi)) => {
                            let base = match intermediate_base(&fits.models, tau) {
                                Some(m) => m,
                                None => {
                                    let top = fits.models.last().map_or(tau, |m| m.tau());
                                    ise.insert((li, est), Err(Error::LevelOrder { base: top, target: tau }));
                                    continue;
                                }
                            };
                            let extrapolated = if est == Estimator::PseE {
                                extrapolate_pointwise(base, &evi.pointwise_or_pooled(), tau, &self.grid)
                            } else {
                                extrapolate_pooled(base, evi.pooled, tau, &self.grid)
                            };
                            extrapolated.and_then(|q| {
                                let e = integrated_squared_error(&q.values, &self.truth[li], &self.grid)?;
                                Ok((e, q.refused_count()))
                            })
                        }
                    };
                    ise.insert((li, est), outcome);
                }
            }
        }
        Replication {
            ise,
            pooled,
            valid_fraction,
        }
    }
}

/// The highest ladder fit strictly below `target`: `τ_1` whenever
/// `target > τ_1`.
fn intermediate_base(models: &[QuantileFitModel], target: f64) -> Option<&QuantileFitModel> {
    models.iter().find(|m| m.tau() < target)
}

/// Runs the full factorial study.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    let mut evi = Vec::new();
    let grid = cfg.grid();

    for &scenario in &cfg.scenarios {
        let truth = cfg
            .levels
            .iter()
            .map(|&tau| {
                grid.iter()
                    .map(|&x| scenario.true_quantile(tau, x))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for &n in &cfg.sample_sizes {
            let ladder = if cfg.needs_ladder() {
                Some(cfg.ladder_for(n)?)
            } else {
                None
            };
            let ctx = CellContext {
                cfg,
                spec: BasisSpec::uniform(0.0, 1.0, cfg.segments, cfg.degree)?,
                grid: grid.clone(),
                truth: truth.clone(),
                ladder,
            };
            let one = |r: usize| {
                let data = generate(scenario, n, replication_seed(cfg.root_seed, r as u64));
                ctx.run(&data)
            };
            let reps: Vec<Replication> = if cfg.parallel {
                (0..cfg.replications).into_par_iter().map(one).collect()
            } else {
                (0..cfg.replications).map(one).collect()
            };

            for (li, &tau) in cfg.levels.iter().enumerate() {
                for &est in &cfg.estimators {
                    let per_rep: Vec<Option<(f64, usize)>> = reps
                        .iter()
                        .map(|rep| rep.ise.get(&(li, est)).and_then(|o| o.as_ref().ok()).copied())
                        .collect();
                    let ok: Vec<f64> = per_rep.iter().flatten().map(|(e, _)| *e).collect();
                    let refused_points = per_rep.iter().flatten().map(|(_, r)| *r).sum();
                    let failures = cfg.replications - ok.len();
                    let (mean, stderr) = mean_and_stderr(&ok);
                    cells.push(CellResult {
                        scenario,
                        n,
                        tau,
                        estimator: est,
                        replications: cfg.replications,
                        mise: mean,
                        mc_stderr: stderr,
                        failures,
                        ise: per_rep.iter().map(|o| o.map(|(e, _)| e)).collect(),
                        refused_points,
                    });
                }
            }
            if let Some(ladder) = &ctx.ladder {
                evi.push(EviSummary {
                    scenario,
                    n,
                    k: ladder.k(),
                    ladder_offset: ladder.offset(),
                    pooled: reps.iter().map(|r| r.pooled).collect(),
                    valid_fraction: reps.iter().map(|r| r.valid_fraction).collect(),
                });
            }
        }
    }
    Ok(StudyReport { cells, evi })
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / m as f64;
    if m == 1 {
        return (mean, f64::NAN);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

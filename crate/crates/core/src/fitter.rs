//! Penalized B-spline quantile regression.
//!
//! The check-loss problem
//!
//! ```text
//! minimize  Σ_i ρ_τ(y_i - B(x_i)ᵀb) + λ bᵀ D_mᵀ R D_m b
//! ```
//!
//! is solved by a proximal iteratively reweighted least-squares scheme: at
//! outer step `t` the check loss is replaced by its quadratically smoothed
//! version of width `α_t` and a proximal term `‖b - b_t‖² / η_t` is added.
//! Each outer step is itself solved by a handful of weighted ridge solves.
//! The widths shrink (`α_t = α_0 · decay^t`) while the step sizes grow
//! (`η_{t+1} = growth · η_t`). Early on the proximal term damps the
//! oscillation plain IRLS shows at extreme levels; later it fades so the
//! iterates settle on the minimizer of the exact objective.

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::SymBand;
use crate::bspline::{BasisSpec, SparseDesign};
use crate::checkloss::{check_level, pinball_unchecked, LossParams};
use crate::error::{Error, Result};
use crate::evt::QuantileLadder;

/// Step-size schedules and stopping rules of the proximal IRLS solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Initial smoothing width `α_0`. Widths, step sizes and tolerances are
    /// all in units of the sample standard deviation of the response, which
    /// keeps the schedule independent of how `y` is measured.
    pub alpha0: f64,
    /// Geometric decay of the width, `α_{t+1} = decay · α_t`.
    pub alpha_decay: f64,
    /// Widths never drop below this floor.
    pub alpha_floor: f64,
    /// Initial step size `η_0`; the proximal weight is `1 / η_t`.
    pub eta0: f64,
    /// `η_{t+1} = growth · η_t`.
    pub eta_growth: f64,
    pub max_iter: usize,
    /// Weighted ridge solves per outer step.
    pub max_inner: usize,
    /// Outer stopping rule on `‖b_{t+1} - b_t‖_∞`.
    pub coef_tol: f64,
    /// Relative change of the exact objective below which the iteration
    /// stops once the width has hit its floor.
    pub objective_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha0: 0.1,
            alpha_decay: 0.5,
            alpha_floor: 1e-8,
            eta0: 1.0,
            eta_growth: 1.2,
            max_iter: 60,
            max_inner: 20,
            coef_tol: 1e-7,
            objective_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: &str| {
            Err(Error::Config {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha0 > 0.0) {
            return bad("alpha0", "must be positive");
        }
        if !(self.alpha_decay > 0.0 && self.alpha_decay < 1.0) {
            return bad("alpha_decay", "must lie in (0, 1)");
        }
        if !(self.alpha_floor > 0.0) {
            return bad("alpha_floor", "must be positive");
        }
        if !(self.eta0 > 0.0) {
            return bad("eta0", "must be positive");
        }
        if !(self.eta_growth > 1.0) {
            return bad("eta_growth", "must exceed 1");
        }
        if self.max_iter == 0 || self.max_inner == 0 {
            return bad("max_iter", "iteration limits must be positive");
        }
        if !(self.coef_tol > 0.0) || !(self.objective_tol > 0.0) {
            return bad("coef_tol", "tolerances must be positive");
        }
        Ok(())
    }

    /// The schedule in absolute units for a response of scale `s`.
    fn rescaled(&self, s: f64) -> Self {
        Self {
            alpha0: self.alpha0 * s,
            alpha_floor: self.alpha_floor * s,
            eta0: self.eta0 * s,
            coef_tol: self.coef_tol * s,
            ..self.clone()
        }
    }

    fn alpha(&self, t: usize) -> f64 {
        (self.alpha0 * self.alpha_decay.powi(t as i32)).max(self.alpha_floor)
    }

    fn eta(&self, t: usize) -> f64 {
        self.eta0 * self.eta_growth.powi(t as i32)
    }
}

/// What the solver did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub final_alpha: f64,
    pub final_eta: f64,
    /// Exact pinball loss plus penalty at the returned coefficients.
    pub objective: f64,
}

/// A fitted quantile curve `q̃(τ|x) = B(x)ᵀ b̃(τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFitModel {
    spec: BasisSpec,
    tau: f64,
    coefficients: Vec<f64>,
    lambda: f64,
    order: usize,
    diagnostics: Option<SolverDiagnostics>,
}

impl QuantileFitModel {
    /// Assembles a model from known coefficients.
    pub fn from_parts(
        spec: BasisSpec,
        tau: f64,
        coefficients: Vec<f64>,
        lambda: f64,
        order: usize,
    ) -> Result<Self> {
        check_level(tau)?;
        if coefficients.len() != spec.dim() {
            return Err(Error::LengthMismatch {
                what: "coefficients",
                expected: spec.dim(),
                got: coefficients.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidLambda(lambda));
        }
        Ok(Self {
            spec,
            tau,
            coefficients,
            lambda,
            order,
            diagnostics: None,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn diagnostics(&self) -> Option<&SolverDiagnostics> {
        self.diagnostics.as_ref()
    }

    /// `q̃(τ|x)` at one point.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        self.spec.evaluate(&self.coefficients, x)
    }

    /// `q̃(τ|x)` on a grid.
    pub fn predict(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let design = SparseDesign::new(&self.spec, xs)?;
        Ok((0..design.rows())
            .map(|i| design.row_dot(i, &self.coefficients))
            .collect())
    }
}

/// Result of one penalized solve on a prepared problem.
#[derive(Debug, Clone)]
pub struct Solution {
    pub coefficients: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
    /// IRLS weights at the returned coefficients and final width.
    pub weights: Vec<f64>,
}

/// Design, response and penalty prepared once and solved for any number of
/// `(τ, λ)` pairs.
#[derive(Debug, Clone)]
pub struct QuantileProblem {
    design: SparseDesign,
    ys: Vec<f64>,
    penalty: DMatrix<f64>,
    /// Penalty in band storage wide enough for the normal equations.
    penalty_band: SymBand,
    scale: f64,
}

impl QuantileProblem {
    /// B-spline problem with the order-`order` integrated derivative penalty.
    pub fn new(xs: &[f64], ys: &[f64], spec: &BasisSpec, order: usize) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                what: "y",
                expected: xs.len(),
                got: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(Error::EmptyData);
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        let penalty = spec.penalty(order)?.matrix().clone();
        let design = SparseDesign::new(spec, xs)?;
        if xs.len() < spec.dim() {
            warn!(
                "{} observations for {} basis functions; the fit relies on the penalty",
                xs.len(),
                spec.dim()
            );
        }
        Ok(Self::assemble(design, ys.to_vec(), penalty))
    }

    /// Arbitrary dense design with an explicit penalty matrix, e.g. a single
    /// column of ones with a zero penalty.
    pub fn from_design(design: &DMatrix<f64>, ys: &[f64], penalty: DMatrix<f64>) -> Result<Self> {
        if design.nrows() != ys.len() {
            return Err(Error::LengthMismatch {
                what: "y",
                expected: design.nrows(),
                got: ys.len(),
            });
        }
        if ys.is_empty() {
            return Err(Error::EmptyData);
        }
        if penalty.shape() != (design.ncols(), design.ncols()) {
            return Err(Error::LengthMismatch {
                what: "penalty matrix rows",
                expected: design.ncols(),
                got: penalty.nrows(),
            });
        }
        Ok(Self::assemble(SparseDesign::from_dense(design), ys.to_vec(), penalty))
    }

    fn assemble(design: SparseDesign, ys: Vec<f64>, penalty: DMatrix<f64>) -> Self {
        let bw = SymBand::bandwidth_of(&penalty).max(design.row_width() - 1);
        let penalty_band = SymBand::from_dense(&penalty, bw);
        let scale = response_scale(&ys);
        Self {
            design,
            ys,
            penalty,
            penalty_band,
            scale,
        }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    fn fitted(&self, coef: &[f64]) -> Vec<f64> {
        (0..self.design.rows())
            .map(|i| self.design.row_dot(i, coef))
            .collect()
    }

    fn penalty_value(&self, coef: &[f64]) -> f64 {
        let b = DVector::from_column_slice(coef);
        (b.transpose() * &self.penalty * &b)[(0, 0)]
    }

    /// Exact `Σ ρ_τ(residual) + λ bᵀPb`.
    pub fn exact_objective(&self, tau: f64, lambda: f64, coef: &[f64]) -> f64 {
        let loss: f64 = self
            .ys
            .iter()
            .zip(self.fitted(coef))
            .map(|(y, f)| pinball_unchecked(tau, y - f))
            .sum();
        loss + lambda * self.penalty_value(coef)
    }

    /// Sum of exact pinball losses of the fit, without the penalty.
    pub fn pinball_loss(&self, tau: f64, coef: &[f64]) -> f64 {
        self.ys
            .iter()
            .zip(self.fitted(coef))
            .map(|(y, f)| pinball_unchecked(tau, y - f))
            .sum()
    }

    fn weights_into(&self, params: &LossParams, coef: &[f64], out: &mut [f64]) {
        for (i, (o, y)) in out.iter_mut().zip(&self.ys).enumerate() {
            *o = params.weight(y - self.design.row_dot(i, coef));
        }
    }

    fn weights(&self, params: &LossParams, coef: &[f64]) -> Vec<f64> {
        self.ys
            .iter()
            .zip(self.fitted(coef))
            .map(|(y, f)| params.weight(y - f))
            .collect()
    }

    /// Penalized least-squares start `(ZᵀZ + λP) b = Zᵀy`.
    fn least_squares_start(&self, lambda: f64) -> Result<Vec<f64>> {
        let ones = vec![1.0; self.len()];
        let (gram, rhs) = self.design.weighted_normal(&ones, &self.ys);
        let mut system = gram + &self.penalty * lambda;
        if let Ok(b) = solve_spd(&system, &rhs) {
            return Ok(b);
        }
        // rank-deficient designs (n < K + p, or empty knot spans) get a
        // vanishing ridge
        let jitter = 1e-10 * (system.trace() / system.nrows() as f64).max(1e-300);
        for i in 0..system.nrows() {
            system[(i, i)] += jitter;
        }
        solve_spd(&system, &rhs)
    }

    /// Runs the proximal IRLS iteration for level `tau` and penalty weight
    /// `lambda`, starting from `start` or from the penalized least-squares
    /// fit.
    pub fn solve(
        &self,
        tau: f64,
        lambda: f64,
        cfg: &SolverConfig,
        start: Option<&[f64]>,
    ) -> Result<Solution> {
        check_level(tau)?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidLambda(lambda));
        }
        cfg.validate()?;
        let cfg = &cfg.rescaled(self.scale);
        let dim = self.dim();
        let mut current = match start {
            Some(b) if b.len() == dim => b.to_vec(),
            Some(b) => {
                return Err(Error::LengthMismatch {
                    what: "warm start",
                    expected: dim,
                    got: b.len(),
                })
            }
            None => self.least_squares_start(lambda)?,
        };
        let mut penalty = self.penalty_band.clone();
        penalty.scale(lambda);
        let mut system = penalty.clone();
        let mut rhs = vec![0.0; dim];
        let mut w = vec![0.0; self.len()];

        let mut best_objective = self.exact_objective(tau, lambda, &current);
        let mut best = current.clone();
        let mut converged = false;
        let mut iterations = 0;
        let mut alpha = cfg.alpha(0);
        let mut eta = cfg.eta(0);
        let mut last_objective = best_objective;

        for t in 0..cfg.max_iter {
            alpha = cfg.alpha(t);
            eta = cfg.eta(t);
            let params = LossParams::new(tau, alpha)?;
            let mut inner = current.clone();
            for _ in 0..cfg.max_inner {
                self.weights_into(&params, &inner, &mut w);
                system.copy_from(&penalty);
                self.design.accumulate_normal(&w, &self.ys, &mut system, &mut rhs);
                system.add_diagonal(1.0 / eta);
                for (r, b) in rhs.iter_mut().zip(&current) {
                    *r += b / eta;
                }
                system.clone().factor()?.solve_in_place(&mut rhs);
                if rhs.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SingularSystem);
                }
                let change = max_abs_diff(&rhs, &inner);
                inner.copy_from_slice(&rhs);
                if change < cfg.coef_tol {
                    break;
                }
            }
            let step = max_abs_diff(&inner, &current);
            current = inner;
            iterations = t + 1;

            let objective = self.exact_objective(tau, lambda, &current);
            if objective <= best_objective {
                best_objective = objective;
                best.clone_from(&current);
            }
            let at_floor = alpha <= cfg.alpha_floor;
            let stalled = (objective - last_objective).abs()
                <= cfg.objective_tol * last_objective.abs().max(1.0);
            if at_floor && (step < cfg.coef_tol || stalled) {
                converged = true;
                break;
            }
            last_objective = objective;
        }

        let params = LossParams::new(tau, alpha)?;
        let weights = self.weights(&params, &best);
        Ok(Solution {
            coefficients: best,
            diagnostics: SolverDiagnostics {
                iterations,
                converged,
                final_alpha: alpha,
                final_eta: eta,
                objective: best_objective,
            },
            weights,
        })
    }

    /// Effective degrees of freedom `tr{Z (ZᵀWZ + λP + I/η)⁻¹ ZᵀW}` of the
    /// linearized smoother at a solution, with the final step size `η`.
    pub fn degrees_of_freedom(&self, solution: &Solution, lambda: f64) -> Result<f64> {
        let (gram, _) = self.design.weighted_normal(&solution.weights, &self.ys);
        let mut system = &gram + &self.penalty * lambda;
        let prox = 1.0 / solution.diagnostics.final_eta;
        for i in 0..self.dim() {
            system[(i, i)] += prox;
        }
        let chol = cholesky(&system)?;
        // tr(A⁻¹ ZᵀWZ)
        let solved = chol.solve(&gram);
        Ok(solved.trace())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn cholesky(system: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(system.clone()).ok_or(Error::SingularSystem)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    // squared ratio of pivots bounds the condition number from below
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-15 {
        return Err(Error::SingularSystem);
    }
    Ok(chol)
}

fn solve_spd(system: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<Vec<f64>> {
    let x = cholesky(system)?.solve(rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x.as_slice().to_vec())
}

/// Fits `q̃(τ|x)` with the order-`order` penalty.
pub fn fit_intermediate(
    xs: &[f64],
    ys: &[f64],
    tau: f64,
    lambda: f64,
    spec: &BasisSpec,
    order: usize,
    cfg: &SolverConfig,
) -> Result<QuantileFitModel> {
    let problem = QuantileProblem::new(xs, ys, spec, order)?;
    fit_on(&problem, spec, order, tau, lambda, cfg, None)
}

fn fit_on(
    problem: &QuantileProblem,
    spec: &BasisSpec,
    order: usize,
    tau: f64,
    lambda: f64,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<QuantileFitModel> {
    let solution = problem.solve(tau, lambda, cfg, start)?;
    if !solution.diagnostics.converged {
        debug!(
            "solver hit the iteration limit ({}) at tau = {tau}, lambda = {lambda}",
            cfg.max_iter
        );
    }
    let mut model =
        QuantileFitModel::from_parts(spec.clone(), tau, solution.coefficients, lambda, order)?;
    model.diagnostics = Some(solution.diagnostics);
    Ok(model)
}

/// `count` log-spaced smoothing parameters spanning `[1e-5, 1e4]`, expressed
/// in the units of the problem: `(b - a)^3 / scale(y)`.
pub fn default_lambda_grid(ys: &[f64], spec: &BasisSpec, count: usize) -> Vec<f64> {
    let (a, b) = spec.domain();
    let scale = response_scale(ys);
    let unit = (b - a).powi(3) / scale;
    let (lo, hi) = (-5.0f64, 4.0f64);
    (0..count)
        .map(|i| {
            let frac = if count > 1 {
                i as f64 / (count - 1) as f64
            } else {
                0.5
            };
            10f64.powf(lo + (hi - lo) * frac) * unit
        })
        .collect()
}

/// Sample standard deviation, or 1 for constant/degenerate responses.
fn response_scale(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 1.0;
    }
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd > 0.0 && sd.is_finite() {
        sd
    } else {
        1.0
    }
}

/// Per-candidate outcome of smoothing-parameter selection.
#[derive(Debug, Clone)]
pub struct GacvSelection {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// `+∞` for candidates that failed or whose `df >= n`.
    pub scores: Vec<f64>,
    pub dfs: Vec<f64>,
    /// Fit at the selected `λ`.
    pub model: QuantileFitModel,
}

/// Chooses `λ` by the generalized approximate cross-validation score
/// `Σ ρ_τ(r_i) / (n - df(λ))`. Ties go to the larger `λ`.
pub fn select_lambda_gacv(
    xs: &[f64],
    ys: &[f64],
    tau: f64,
    spec: &BasisSpec,
    order: usize,
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<GacvSelection> {
    let problem = QuantileProblem::new(xs, ys, spec, order)?;
    select_on(&problem, spec, order, tau, grid, cfg)
}

fn select_on(
    problem: &QuantileProblem,
    spec: &BasisSpec,
    order: usize,
    tau: f64,
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<GacvSelection> {
    if grid.is_empty() {
        return Err(Error::Config {
            field: "lambda_grid",
            reason: "must not be empty".into(),
        });
    }
    if let Some(bad) = grid.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidLambda(*bad));
    }
    check_level(tau)?;
    let n = problem.len() as f64;
    let outcomes: Vec<Option<(Solution, f64, f64)>> = grid
        .par_iter()
        .map(|&lambda| {
            let solution = problem.solve(tau, lambda, cfg, None).ok()?;
            let df = problem.degrees_of_freedom(&solution, lambda).ok()?;
            let loss = problem.pinball_loss(tau, &solution.coefficients);
            let score = if df < n { loss / (n - df) } else { f64::INFINITY };
            Some((solution, df, score))
        })
        .collect();

    let mut chosen: Option<usize> = None;
    for (i, outcome) in outcomes.iter().enumerate() {
        let Some((_, _, score)) = outcome else { continue };
        if !score.is_finite() {
            continue;
        }
        let better = match chosen {
            None => true,
            Some(j) => {
                let (_, _, best) = outcomes[j].as_ref().unwrap();
                *score < *best || (*score == *best && grid[i] > grid[j])
            }
        };
        if better {
            chosen = Some(i);
        }
    }
    let scores = outcomes
        .iter()
        .map(|o| o.as_ref().map_or(f64::INFINITY, |(_, _, s)| *s))
        .collect();
    let dfs = outcomes
        .iter()
        .map(|o| o.as_ref().map_or(f64::NAN, |(_, d, _)| *d))
        .collect();
    let index = chosen.ok_or(Error::AllFitsFailed)?;
    let (solution, _, _) = outcomes.into_iter().nth(index).flatten().unwrap();
    let lambda = grid[index];
    let mut model =
        QuantileFitModel::from_parts(spec.clone(), tau, solution.coefficients, lambda, order)?;
    model.diagnostics = Some(solution.diagnostics);
    Ok(GacvSelection {
        lambda,
        grid: grid.to_vec(),
        scores,
        dfs,
        model,
    })
}

/// How `λ` is chosen along a quantile ladder.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaPolicy {
    Fixed(f64),
    /// Select by GACV at the first (highest) level, reuse everywhere.
    GacvAtFirst(Vec<f64>),
    /// Select by GACV separately at every level.
    GacvEachLevel(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderOptions {
    pub lambda: LambdaPolicy,
    /// Start each level from the previous level's coefficients.
    pub warm_start: bool,
}

/// One fit per ladder level, highest level first.
#[derive(Debug, Clone)]
pub struct LadderFit {
    pub models: Vec<QuantileFitModel>,
    pub selection: Option<GacvSelection>,
}

impl LadderFit {
    pub fn taus(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.tau()).collect()
    }

    /// For each adjacent pair of levels, the fraction of `grid` where the
    /// higher level's curve is at least the lower one's.
    pub fn ordering_fractions(&self, grid: &[f64]) -> Result<Vec<f64>> {
        let curves = self
            .models
            .iter()
            .map(|m| m.predict(grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(curves
            .windows(2)
            .map(|pair| {
                let ok = pair[0]
                    .iter()
                    .zip(&pair[1])
                    .filter(|(hi, lo)| hi >= lo)
                    .count();
                ok as f64 / grid.len().max(1) as f64
            })
            .collect())
    }
}

/// Fits every level of `ladder`.
pub fn fit_ladder(
    xs: &[f64],
    ys: &[f64],
    ladder: &QuantileLadder,
    options: &LadderOptions,
    spec: &BasisSpec,
    order: usize,
    cfg: &SolverConfig,
) -> Result<LadderFit> {
    let problem = QuantileProblem::new(xs, ys, spec, order)?;
    let taus = ladder.levels();
    let tag = |tau: f64| move |e: Error| Error::LevelFit {
        tau,
        source: Box::new(e),
    };

    let mut models: Vec<QuantileFitModel> = Vec::with_capacity(taus.len());
    let mut selection = None;
    for (j, &tau) in taus.iter().enumerate() {
        let start = if options.warm_start {
            models.last().map(|m| m.coefficients().to_vec())
        } else {
            None
        };
        let model = match &options.lambda {
            LambdaPolicy::Fixed(lambda) => {
                fit_on(&problem, spec, order, tau, *lambda, cfg, start.as_deref())
                    .map_err(tag(tau))?
            }
            LambdaPolicy::GacvAtFirst(grid) if j == 0 => {
                let sel = select_on(&problem, spec, order, tau, grid, cfg).map_err(tag(tau))?;
                let model = sel.model.clone();
                selection = Some(sel);
                model
            }
            LambdaPolicy::GacvAtFirst(_) => {
                let lambda = selection.as_ref().map(|s| s.lambda).unwrap();
                fit_on(&problem, spec, order, tau, lambda, cfg, start.as_deref())
                    .map_err(tag(tau))?
            }
            LambdaPolicy::GacvEachLevel(grid) => {
                select_on(&problem, spec, order, tau, grid, cfg)
                    .map_err(tag(tau))?
                    .model
            }
        };
        models.push(model);
    }
    Ok(LadderFit { models, selection })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_problem(ys: &[f64]) -> QuantileProblem {
        let z = DMatrix::from_element(ys.len(), 1, 1.0);
        QuantileProblem::from_design(&z, ys, DMatrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn constant_median() {
        let ys = [1.0, 2.0, 3.0, 4.0, 5.0];
        let sol = constant_problem(&ys)
            .solve(0.5, 0.0, &SolverConfig::default(), None)
            .unwrap();
        assert!((sol.coefficients[0] - 3.0).abs() < 1e-4, "{:?}", sol);
    }

    #[test]
    fn constant_upper_quantile() {
        let ys = [1.0, 2.0, 3.0, 4.0, 5.0];
        let sol = constant_problem(&ys)
            .solve(0.8, 0.0, &SolverConfig::default(), None)
            .unwrap();
        let c = sol.coefficients[0];
        let slack = sol.diagnostics.final_alpha.max(1e-4);
        assert!((4.0 - slack..=5.0 + slack).contains(&c), "{c}");
    }

    #[test]
    fn degree_zero_basis_gives_constant() {
        let spec = BasisSpec::uniform(0.0, 1.0, 1, 0).unwrap();
        let xs = [0.1, 0.3, 0.5, 0.7, 0.9];
        let ys = [1.0, 2.0, 3.0, 4.0, 5.0];
        let problem = QuantileProblem::from_design(
            &spec.design_matrix(&xs).unwrap(),
            &ys,
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let sol = problem.solve(0.5, 0.0, &SolverConfig::default(), None).unwrap();
        assert!((sol.coefficients[0] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn linear_data_is_reproduced() {
        let spec = BasisSpec::uniform(0.0, 1.0, 8, 3).unwrap();
        let xs: Vec<f64> = (0..60).map(|i| i as f64 / 59.0).collect();
        let model = fit_intermediate(&xs, &xs, 0.5, 10.0, &spec, 2, &SolverConfig::default())
            .unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!((model.value_at(x).unwrap() - x).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_model_predicts_zero() {
        let spec = BasisSpec::uniform(0.0, 1.0, 4, 3).unwrap();
        let model = QuantileFitModel::from_parts(spec, 0.5, vec![0.0; 7], 1.0, 2).unwrap();
        assert_eq!(model.predict(&[0.0, 0.4, 1.0]).unwrap(), vec![0.0; 3]);
        assert!(matches!(model.predict(&[1.1]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn gacv_single_candidate() {
        let spec = BasisSpec::uniform(0.0, 1.0, 6, 3).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin()).collect();
        let sel = select_lambda_gacv(&xs, &ys, 0.5, &spec, 2, &[0.3], &SolverConfig::default())
            .unwrap();
        assert_eq!(sel.lambda, 0.3);
        assert_eq!(sel.scores.len(), 1);
    }

    #[test]
    fn gacv_rejects_degenerate_df() {
        // three observations against a seven-function basis with almost no
        // penalty: df reaches n and the candidate is never chosen
        let spec = BasisSpec::uniform(0.0, 1.0, 4, 3).unwrap();
        let xs = [0.1, 0.5, 0.9];
        let ys = [1.0, 3.0, 2.0];
        let result =
            select_lambda_gacv(&xs, &ys, 0.5, &spec, 2, &[1e-9], &SolverConfig::default());
        match result {
            Ok(sel) => assert!(sel.scores[0].is_finite()),
            Err(e) => assert_eq!(e, Error::AllFitsFailed),
        }
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            eta_growth: 1.0,
            ..SolverConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "eta_growth", .. })));
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn width_schedule() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.alpha(0), 0.1);
        assert!((cfg.alpha(3) - 0.0125).abs() < 1e-15);
        assert!((cfg.eta(2) - 1.44).abs() < 1e-12);
        assert_eq!(cfg.alpha(200), cfg.alpha_floor);
    }
}

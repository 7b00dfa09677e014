//! Nonparametric extremal quantile regression.
//!
//! Conditional quantiles `q(τ|x)` are fitted as penalized B-splines by
//! minimizing the check loss plus an integrated squared derivative penalty.
//! A ladder of such fits at high levels gives Hill-type estimates of the
//! conditional tail index, which in turn extrapolate an intermediate fit to
//! levels beyond the data.
//!
//! ```
//! use exquant::{fit_intermediate, BasisSpec, SolverConfig};
//!
//! let xs: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
//! let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x).collect();
//! let spec = BasisSpec::uniform(0.0, 1.0, 8, 3).unwrap();
//! let fit = fit_intermediate(&xs, &ys, 0.5, 1e-3, &spec, 2, &SolverConfig::default()).unwrap();
//! assert!((fit.value_at(0.5).unwrap() - 1.5).abs() < 1e-4);
//! ```
//!
//! Modules:
//!
//! * [`bspline`]: basis, derivative operators and the integrated penalty
//! * [`checkloss`]: pinball loss and its smoothed surrogate
//! * [`fitter`]: the proximal IRLS solver, GACV and ladder fits
//! * [`evt`]: quantile ladders, tail index estimates and regime checks
//! * [`extrapolate`]: extrapolation to extreme levels
//! * [`simlab`]: simulation scenarios and replicated studies

mod banded;
pub mod bspline;
pub mod checkloss;
pub mod error;
pub mod evt;
pub mod extrapolate;
pub mod fitter;
pub mod simlab;

pub use bspline::{BasisSpec, PenaltyOperator};
pub use checkloss::{pinball, smoothed_pinball, LossParams};
pub use error::{Error, Result};
pub use evt::{
    classify_regime, default_k, estimate_evi, evi_sample_path, hill_pointwise, hill_pooled,
    EviEstimate, NonpositivePolicy, QuantileLadder, Regime, RegimeVerdict,
};
pub use extrapolate::{extrapolate_pointwise, extrapolate_pooled, ExtremeQuantileEstimate};
pub use fitter::{
    default_lambda_grid, fit_intermediate, fit_ladder, select_lambda_gacv, GacvSelection,
    LadderFit, LadderOptions, LambdaPolicy, QuantileFitModel, QuantileProblem, SolverConfig,
};

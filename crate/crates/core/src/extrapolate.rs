//! Weissman-type extrapolation from an intermediate level `τ_I` to an
//! extreme level `τ_E`:
//!
//! ```text
//! q̂(τ_E|x) = ((1 - τ_I) / (1 - τ_E))^γ̂ · q̃(τ_I|x)
//! ```

use serde::{Deserialize, Serialize};

use crate::checkloss::check_level;
use crate::error::{Error, Result};
use crate::fitter::QuantileFitModel;

/// Which tail index fed the extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexSource {
    Pointwise,
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeQuantileEstimate {
    pub base_level: f64,
    pub target_level: f64,
    pub source: IndexSource,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub factors: Vec<f64>,
    /// Points where `q̃(τ_I|x) <= 0`: no extrapolation is attempted and the
    /// value is the intermediate estimate itself.
    pub refused: Vec<bool>,
    /// Points where a negative index was passed through (factor below 1).
    pub negative_index: Vec<bool>,
}

impl ExtremeQuantileEstimate {
    pub fn refused_count(&self) -> usize {
        self.refused.iter().filter(|r| **r).count()
    }
}

/// `((1 - τ_I) / (1 - τ_E))^γ`.
pub fn extrapolation_factor(base: f64, target: f64, gamma: f64) -> f64 {
    ((1.0 - base) / (1.0 - target)).powf(gamma)
}

fn check_levels(base: f64, target: f64) -> Result<()> {
    check_level(base)?;
    check_level(target)?;
    if target <= base {
        return Err(Error::LevelOrder { base, target });
    }
    Ok(())
}

fn extrapolate_values(
    base_values: &[f64],
    gammas: &[f64],
    base: f64,
    target: f64,
) -> (Vec<f64>, Vec<f64>, Vec<bool>, Vec<bool>) {
    let mut values = Vec::with_capacity(base_values.len());
    let mut factors = Vec::with_capacity(base_values.len());
    let mut refused = Vec::with_capacity(base_values.len());
    let mut negative = Vec::with_capacity(base_values.len());
    for (&q, &gamma) in base_values.iter().zip(gammas) {
        let factor = extrapolation_factor(base, target, gamma);
        negative.push(gamma < 0.0);
        factors.push(factor);
        if q > 0.0 {
            values.push(factor * q);
            refused.push(false);
        } else {
            values.push(q);
            refused.push(true);
        }
    }
    (values, factors, refused, negative)
}

/// Extrapolates with a per-point tail index `gammas[i]` at `grid[i]`.
pub fn extrapolate_pointwise(
    fit: &QuantileFitModel,
    gammas: &[f64],
    target: f64,
    grid: &[f64],
) -> Result<ExtremeQuantileEstimate> {
    check_levels(fit.tau(), target)?;
    if gammas.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "tail indices",
            expected: grid.len(),
            got: gammas.len(),
        });
    }
    if gammas.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("tail index"));
    }
    let base_values = fit.predict(grid)?;
    let (values, factors, refused, negative_index) =
        extrapolate_values(&base_values, gammas, fit.tau(), target);
    Ok(ExtremeQuantileEstimate {
        base_level: fit.tau(),
        target_level: target,
        source: IndexSource::Pointwise,
        grid: grid.to_vec(),
        values,
        factors,
        refused,
        negative_index,
    })
}

/// Extrapolates with one shared tail index.
pub fn extrapolate_pooled(
    fit: &QuantileFitModel,
    gamma: f64,
    target: f64,
    grid: &[f64],
) -> Result<ExtremeQuantileEstimate> {
    if !gamma.is_finite() {
        return Err(Error::NonFinite("tail index"));
    }
    let mut estimate = extrapolate_pointwise(fit, &vec![gamma; grid.len()], target, grid)?;
    estimate.source = IndexSource::Pooled;
    Ok(estimate)
}

//! Check (pinball) loss, its quadratically smoothed surrogate and the
//! penalized objective.

use crate::error::{Error, Result};
use crate::fitter::QuantileFitModel;

/// Validates a quantile level.
pub fn check_level(tau: f64) -> Result<f64> {
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(Error::InvalidLevel(tau))
    }
}

#[inline]
pub(crate) fn pinball_unchecked(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

/// `ρ_τ(u) = u (τ - 1{u < 0})`.
pub fn pinball(tau: f64, u: f64) -> Result<f64> {
    check_level(tau)?;
    Ok(pinball_unchecked(tau, u))
}

/// Level and smoothing width of the smoothed check loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    tau: f64,
    alpha: f64,
}

impl LossParams {
    /// `alpha = 0` selects the exact pinball loss.
    pub fn new(tau: f64, alpha: f64) -> Result<Self> {
        check_level(tau)?;
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidWidth(alpha));
        }
        Ok(Self { tau, alpha })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Loss value at residual `u`; exact pinball when `alpha == 0`.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        let (tau, alpha) = (self.tau, self.alpha);
        if u.abs() > alpha || alpha == 0.0 {
            pinball_unchecked(tau, u)
        } else if u >= 0.0 {
            tau * u * u / alpha
        } else {
            (1.0 - tau) * u * u / alpha
        }
    }

    /// IRLS weight `w` such that `d/du (w u^2) = ρ'_{τ,α}(u)`. Inside the
    /// quadratic zone this is exact; outside it the weight is capped by
    /// using `max(|u|, α)` in the denominator.
    #[inline]
    pub fn weight(&self, u: f64) -> f64 {
        let (tau, alpha) = (self.tau, self.alpha);
        let slope = if u >= 0.0 { tau } else { 1.0 - tau };
        if u.abs() <= alpha {
            slope / alpha
        } else {
            slope / (2.0 * u.abs().max(alpha))
        }
    }
}

/// Smoothed check loss `ρ_{τ,α}(u)` together with its IRLS weight.
///
/// ```
/// use exquant::checkloss::{smoothed_pinball, LossParams};
/// let params = LossParams::new(0.5, 0.2).unwrap();
/// let (value, _) = smoothed_pinball(params, -0.1).unwrap();
/// assert!((value - 0.025).abs() < 1e-15);
/// ```
pub fn smoothed_pinball(params: LossParams, u: f64) -> Result<(f64, f64)> {
    if params.alpha <= 0.0 {
        return Err(Error::InvalidWidth(params.alpha));
    }
    Ok((params.value(u), params.weight(u)))
}

/// `Σ_i ρ_{τ,α}(y_i - q̃(x_i)) + λ bᵀPb`, with the exact pinball loss
/// when `alpha == 0`. `penalty` must match the model's basis dimension.
pub fn objective(
    xs: &[f64],
    ys: &[f64],
    model: &QuantileFitModel,
    lambda: f64,
    penalty: &nalgebra::DMatrix<f64>,
    alpha: f64,
) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            what: "y",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let dim = model.spec().dim();
    if penalty.shape() != (dim, dim) {
        return Err(Error::LengthMismatch {
            what: "penalty matrix rows",
            expected: dim,
            got: penalty.nrows(),
        });
    }
    let params = LossParams::new(model.tau(), alpha)?;
    let fitted = model.predict(xs)?;
    let loss: f64 = ys
        .iter()
        .zip(&fitted)
        .map(|(y, q)| params.value(y - q))
        .sum();
    let b = nalgebra::DVector::from_column_slice(model.coefficients());
    let pen = (b.transpose() * penalty * &b)[(0, 0)];
    Ok(loss + lambda * pen)
}

//! Quantile ladders, Hill-type tail index estimates built from fitted
//! quantile curves, and the `ξ = (1 - τ) n` regime rule of thumb.

use serde::{Deserialize, Serialize};

use crate::checkloss::check_level;
use crate::error::{Error, Result};
use crate::fitter::QuantileFitModel;

/// Levels `τ_j = 1 - ([n^η] + j) / (n + 1)`, `j = 1..=k`, highest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileLadder {
    n: u64,
    eta: f64,
    offset: u64,
    levels: Vec<f64>,
}

/// `[n^η]`, with a guard so that powers landing a rounding error below an
/// integer (e.g. `1000^(1/3)`) are not floored one too low.
pub fn floor_power(n: u64, eta: f64) -> u64 {
    let v = (n as f64).powf(eta);
    let r = v.round();
    if (v - r).abs() <= 4.0 * f64::EPSILON * r.max(1.0) {
        r as u64
    } else {
        v.floor() as u64
    }
}

/// `⌊7.5 n^{1/3}⌋` in exact integer arithmetic: the largest `k` with
/// `8 k³ <= 3375 n`.
pub fn default_k(n: u64) -> usize {
    let bound = 3375u128 * n as u128;
    let mut k = (7.5 * (n as f64).cbrt()) as u128 + 2;
    while 8 * k * k * k > bound {
        k -= 1;
    }
    k as usize
}

impl QuantileLadder {
    /// Ladder for sample size `n`, exponent `eta ∈ (0, 1)` and `k >= 2`
    /// levels.
    ///
    /// ```
    /// use exquant::QuantileLadder;
    /// let ladder = QuantileLadder::new(100, 0.5, 3).unwrap();
    /// assert_eq!(ladder.levels()[0], 90.0 / 101.0);
    /// ```
    pub fn new(n: u64, eta: f64, k: usize) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Config {
                field: "eta",
                reason: format!("{eta} is not in (0, 1)"),
            });
        }
        Self::with_offset(n, eta, floor_power(n, eta), k)
    }

    /// Ladder whose first level sits at `(1 - τ_1) n ≈ xi`. The exponent is
    /// chosen so that `[n^η]` equals the required integer offset.
    pub fn for_target_xi(n: u64, xi: f64, k: usize) -> Result<Self> {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::Config {
                field: "xi",
                reason: format!("{xi} must be positive"),
            });
        }
        if n < 2 {
            return Err(Error::InvalidSize {
                what: "sample size n",
                min: 2,
                got: n as usize,
            });
        }
        // (1 - τ_1) n = (offset + 1) n / (n + 1)
        let target = xi * (n as f64 + 1.0) / n as f64 - 1.0;
        let offset = (target.round().max(1.0)) as u64;
        // any η with offset <= n^η < offset + 1 works; take the log-midpoint
        let eta = ((offset as f64).ln() + (offset as f64 + 1.0).ln()) / (2.0 * (n as f64).ln());
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Config {
                field: "xi",
                reason: format!("no exponent in (0, 1) reaches xi = {xi} for n = {n}"),
            });
        }
        debug_assert_eq!(floor_power(n, eta), offset);
        Self::with_offset(n, eta, offset, k)
    }

    fn with_offset(n: u64, eta: f64, offset: u64, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidSize {
                what: "ladder length k",
                min: 2,
                got: k,
            });
        }
        let limit = n + 1;
        if offset + k as u64 >= limit {
            return Err(Error::LadderOverflow {
                offset: offset + k as u64,
                limit,
            });
        }
        let levels = (1..=k as u64)
            .map(|j| (limit - offset - j) as f64 / limit as f64)
            .collect();
        Ok(Self {
            n,
            eta,
            offset,
            levels,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    /// `[n^η]`.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `(1 - τ_j)(n + 1) = [n^η] + j` for 1-based `j`.
    pub fn tail_count(&self, j: usize) -> u64 {
        self.offset + j as u64
    }

    /// The first `k` levels as a ladder of their own.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        Self::with_offset(self.n, self.eta, self.offset, k)
    }
}

/// Mean log-ratio `1/(k-1) Σ_{j<k} log(q_j / q_k)` of a ladder of quantile
/// values ordered from the highest level down. `None` if any value is
/// nonpositive or fewer than two are given.
pub fn hill_from_values(values: &[f64]) -> Option<f64> {
    let k = values.len();
    if k < 2 || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let reference = values[k - 1];
    let sum: f64 = values[..k - 1].iter().map(|q| (q / reference).ln()).sum();
    Some(sum / (k - 1) as f64)
}

fn ladder_values(models: &[QuantileFitModel], x: f64) -> Result<Vec<f64>> {
    models.iter().map(|m| m.value_at(x)).collect()
}

fn check_ladder(models: &[QuantileFitModel]) -> Result<()> {
    if models.len() < 2 {
        return Err(Error::InvalidSize {
            what: "ladder length k",
            min: 2,
            got: models.len(),
        });
    }
    Ok(())
}

/// `γ̂(x)` from ladder fits ordered from the highest level down. Fails,
/// naming the level, if any fitted quantile at `x` is nonpositive.
pub fn hill_pointwise(models: &[QuantileFitModel], x: f64) -> Result<f64> {
    check_ladder(models)?;
    let values = ladder_values(models, x)?;
    if let Some((model, value)) = models.iter().zip(&values).find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonpositiveQuantile {
            x,
            tau: model.tau(),
            value: *value,
        });
    }
    Ok(hill_from_values(&values).expect("positive ladder values"))
}

/// `γ̂^C`, the mean of `γ̂(x_i)` over the pooling points. Fails with the
/// full list of points where the pointwise estimate is undefined.
pub fn hill_pooled(models: &[QuantileFitModel], pooling: &[f64]) -> Result<f64> {
    let estimate = estimate_evi(models, pooling, pooling, NonpositivePolicy::Abort)?;
    Ok(estimate.pooled)
}

/// What to do when a ladder quantile estimate is nonpositive at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonpositivePolicy {
    /// Refuse the whole estimate and report the offending points.
    Abort,
    /// Mark the point invalid and pool over the remaining points.
    Mask,
}

/// Pointwise and pooled tail index estimates with the ladder they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EviEstimate {
    pub grid: Vec<f64>,
    /// `γ̂(x)` on the grid; `None` where a ladder estimate was nonpositive.
    pub pointwise: Vec<Option<f64>>,
    /// `γ̂^C` over the valid pooling points.
    pub pooled: f64,
    pub pooled_points: usize,
    pub pooling_size: usize,
    pub taus: Vec<f64>,
}

impl EviEstimate {
    pub fn valid_mask(&self) -> Vec<bool> {
        self.pointwise.iter().map(Option::is_some).collect()
    }

    /// Pointwise values with invalid points replaced by the pooled index.
    pub fn pointwise_or_pooled(&self) -> Vec<f64> {
        self.pointwise
            .iter()
            .map(|g| g.unwrap_or(self.pooled))
            .collect()
    }
}

/// Pointwise `γ̂` on `grid` and pooled `γ̂^C` over `pooling`.
pub fn estimate_evi(
    models: &[QuantileFitModel],
    grid: &[f64],
    pooling: &[f64],
    policy: NonpositivePolicy,
) -> Result<EviEstimate> {
    check_ladder(models)?;
    if pooling.is_empty() {
        return Err(Error::EmptyData);
    }
    let pointwise_at = |x: f64| -> Result<Option<f64>> {
        Ok(hill_from_values(&ladder_values(models, x)?))
    };

    let mut failing = Vec::new();
    let mut sum = 0.0;
    let mut count = 0usize;
    for &x in pooling {
        match pointwise_at(x)? {
            Some(g) => {
                sum += g;
                count += 1;
            }
            None => failing.push(x),
        }
    }
    let pointwise = grid
        .iter()
        .map(|&x| pointwise_at(x))
        .collect::<Result<Vec<_>>>()?;
    if policy == NonpositivePolicy::Abort {
        failing.extend(
            grid.iter()
                .zip(&pointwise)
                .filter(|(_, g)| g.is_none())
                .map(|(x, _)| *x),
        );
    }
    if count == 0 || (policy == NonpositivePolicy::Abort && !failing.is_empty()) {
        failing.sort_by(f64::total_cmp);
        failing.dedup();
        return Err(Error::NonpositiveQuantiles { points: failing });
    }
    Ok(EviEstimate {
        grid: grid.to_vec(),
        pointwise,
        pooled: sum / count as f64,
        pooled_points: count,
        pooling_size: pooling.len(),
        taus: models.iter().map(|m| m.tau()).collect(),
    })
}

/// One point of the pooled-index sample path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePathPoint {
    pub k: usize,
    pub pooled: f64,
    pub valid_points: usize,
}

/// `γ̂^C` computed from the first `k'` ladder levels for `k' = 2..=k`.
pub fn evi_sample_path(
    models: &[QuantileFitModel],
    pooling: &[f64],
    policy: NonpositivePolicy,
) -> Result<Vec<SamplePathPoint>> {
    check_ladder(models)?;
    let values = pooling
        .iter()
        .map(|&x| ladder_values(models, x))
        .collect::<Result<Vec<_>>>()?;
    let mut path = Vec::with_capacity(models.len() - 1);
    for k in 2..=models.len() {
        let mut sum = 0.0;
        let mut count = 0;
        let mut failing = Vec::new();
        for (x, row) in pooling.iter().zip(&values) {
            match hill_from_values(&row[..k]) {
                Some(g) => {
                    sum += g;
                    count += 1;
                }
                None => failing.push(*x),
            }
        }
        if count == 0 || (policy == NonpositivePolicy::Abort && !failing.is_empty()) {
            return Err(Error::NonpositiveQuantiles { points: failing });
        }
        path.push(SamplePathPoint {
            k,
            pooled: sum / count as f64,
            valid_points: count,
        });
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Intermediate,
    Extreme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub tau: f64,
    pub n: u64,
    pub xi: f64,
    pub threshold: f64,
    pub regime: Regime,
}

/// Conservative default threshold on `ξ`.
pub const DEFAULT_XI_THRESHOLD: f64 = 30.0;

/// `ξ = (1 - τ) n`, snapped to the nearest integer when within a relative
/// 1e-9 so that decimal levels such as 0.925 produce exact counts.
pub fn effective_tail_size(tau: f64, n: u64) -> f64 {
    let xi = (1.0 - tau) * n as f64;
    let r = xi.round();
    if (xi - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        xi
    }
}

/// Extreme iff `ξ < threshold`.
pub fn classify_regime(tau: f64, n: u64, threshold: f64) -> Result<RegimeVerdict> {
    check_level(tau)?;
    if n < 1 {
        return Err(Error::InvalidSize {
            what: "sample size n",
            min: 1,
            got: 0,
        });
    }
    let xi = effective_tail_size(tau, n);
    let regime = if xi < threshold {
        Regime::Extreme
    } else {
        Regime::Intermediate
    };
    Ok(RegimeVerdict {
        tau,
        n,
        xi,
        threshold,
        regime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::BasisSpec;
    use proptest::prelude::*;

    fn constant_models(values: &[f64], taus: &[f64]) -> Vec<QuantileFitModel> {
        let spec = BasisSpec::uniform(0.0, 1.0, 2, 1).unwrap();
        values
            .iter()
            .zip(taus)
            .map(|(v, t)| {
                QuantileFitModel::from_parts(spec.clone(), *t, vec![*v; 3], 0.0, 1).unwrap()
            })
            .collect()
    }

    #[test]
    fn default_k_values() {
        assert_eq!(default_k(1000), 75);
        assert_eq!(default_k(200), 43);
        assert_eq!(default_k(8), 15);
        assert_eq!(default_k(1), 7);
        for n in 1..3000u64 {
            let k = default_k(n) as f64;
            assert!(k <= 7.5 * (n as f64).cbrt() + 1e-9);
            assert!(k + 1.0 > 7.5 * (n as f64).cbrt() - 1e-9);
        }
    }

    #[test]
    fn ladder_levels() {
        let ladder = QuantileLadder::new(100, 0.5, 4).unwrap();
        assert_eq!(ladder.offset(), 10);
        assert_eq!(ladder.levels()[0], 90.0 / 101.0);
        for j in 1..=4 {
            let back = (1.0 - ladder.levels()[j - 1]) * 101.0;
            assert!((back - ladder.tail_count(j) as f64).abs() < 1e-9);
        }
        assert!(ladder.levels().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn ladder_overflow() {
        assert!(matches!(
            QuantileLadder::new(10, 0.5, 8),
            Err(Error::LadderOverflow { .. })
        ));
        assert!(QuantileLadder::new(10, 0.5, 7).is_ok());
        assert!(QuantileLadder::new(10, 0.5, 1).is_err());
        assert!(QuantileLadder::new(10, 1.0, 3).is_err());
    }

    #[test]
    fn ladder_from_xi() {
        let ladder = QuantileLadder::for_target_xi(1000, 3.0, 75).unwrap();
        assert_eq!(ladder.offset(), 2);
        assert_eq!(floor_power(1000, ladder.eta()), 2);
        let xi = (1.0 - ladder.levels()[0]) * 1000.0;
        assert!((xi - 3.0).abs() < 0.01);
        let ladder = QuantileLadder::for_target_xi(200, 3.0, 43).unwrap();
        assert_eq!(ladder.offset(), 2);
    }

    #[test]
    fn floor_power_guard() {
        assert_eq!(floor_power(1000, 1.0 / 3.0), 10);
        assert_eq!(floor_power(1000, 0.1), 1);
        assert_eq!(floor_power(100, 0.5), 10);
    }

    #[test]
    fn flat_ladder_has_zero_index() {
        let models = constant_models(&[2.0; 5], &[0.99, 0.98, 0.97, 0.96, 0.95]);
        assert_eq!(hill_pointwise(&models, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn pareto_ladder_closed_form() {
        // γ = 0.2, n = 1000, η = 0.1 => [n^η] = 1, k = 10
        let ladder = QuantileLadder::new(1000, 0.1, 10).unwrap();
        let values: Vec<f64> = ladder
            .levels()
            .iter()
            .map(|t| (1.0 - t).powf(-0.2))
            .collect();
        let got = hill_from_values(&values).unwrap();
        let factorial_10: f64 = (1..=10).map(|i| i as f64).product();
        let closed = 0.2 / 9.0 * (11f64.powi(9) / factorial_10).ln();
        assert!((got - closed).abs() < 1e-12);
        assert!((got - 0.14393).abs() < 5e-6);
    }

    #[test]
    fn nonpositive_values_are_reported() {
        let models = constant_models(&[3.0, 2.0, -1.0], &[0.99, 0.98, 0.97]);
        match hill_pointwise(&models, 0.5) {
            Err(Error::NonpositiveQuantile { tau, value, .. }) => {
                assert_eq!(tau, 0.97);
                assert_eq!(value, -1.0);
            }
            other => panic!("{other:?}"),
        }
        match hill_pooled(&models, &[0.1, 0.2]) {
            Err(Error::NonpositiveQuantiles { points }) => assert_eq!(points, vec![0.1, 0.2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pooled_mean_of_two_points() {
        // q(τ_1|x) = e^{0.1 + 0.4x} on a hat basis, q(τ_2|x) = 1:
        // γ̂(0) = 0.1, γ̂(0.5) = 0.3
        let spec = BasisSpec::uniform(0.0, 1.0, 2, 1).unwrap();
        let top = vec![0.1f64.exp(), 0.3f64.exp(), 0.5f64.exp()];
        let models = vec![
            QuantileFitModel::from_parts(spec.clone(), 0.99, top, 0.0, 1).unwrap(),
            QuantileFitModel::from_parts(spec, 0.98, vec![1.0; 3], 0.0, 1).unwrap(),
        ];
        let pooled = hill_pooled(&models, &[0.0, 0.5]).unwrap();
        assert!((pooled - 0.2).abs() < 1e-12);
    }

    #[test]
    fn masked_pooling_skips_invalid_points() {
        let spec = BasisSpec::uniform(0.0, 1.0, 1, 1).unwrap();
        // lower level crosses zero at x = 0.5
        let models = vec![
            QuantileFitModel::from_parts(spec.clone(), 0.99, vec![4.0, 4.0], 0.0, 1).unwrap(),
            QuantileFitModel::from_parts(spec, 0.98, vec![-1.0, 1.0], 0.0, 1).unwrap(),
        ];
        let grid = [0.0, 0.25, 0.75, 1.0];
        let est = estimate_evi(&models, &grid, &grid, NonpositivePolicy::Mask).unwrap();
        assert_eq!(est.valid_mask(), vec![false, false, true, true]);
        assert_eq!(est.pooled_points, 2);
        let expect = ((4.0f64 / 0.5).ln() + 4.0f64.ln()) / 2.0;
        assert!((est.pooled - expect).abs() < 1e-12);
        assert!(estimate_evi(&models, &grid, &grid, NonpositivePolicy::Abort).is_err());
    }

    #[test]
    fn sample_path_length() {
        let taus: Vec<f64> = (0..6).map(|j| 0.99 - 0.01 * j as f64).collect();
        let values: Vec<f64> = taus.iter().map(|t| (1.0 - t).powf(-0.3)).collect();
        let models = constant_models(&values, &taus);
        let path = evi_sample_path(&models, &[0.2, 0.8], NonpositivePolicy::Abort).unwrap();
        assert_eq!(path.len(), 5);
        assert_eq!(path[0].k, 2);
        assert_eq!(path.last().unwrap().k, 6);
    }

    #[test]
    fn regime_rule() {
        let v = classify_regime(0.999, 1000, 30.0).unwrap();
        assert_eq!((v.xi, v.regime), (1.0, Regime::Extreme));
        let v = classify_regime(0.925, 200, 30.0).unwrap();
        assert_eq!((v.xi, v.regime), (15.0, Regime::Extreme));
        let v = classify_regime(0.9, 1000, 30.0).unwrap();
        assert_eq!((v.xi, v.regime), (100.0, Regime::Intermediate));
        let v = classify_regime(0.925, 200, 15.0).unwrap();
        assert_eq!(v.regime, Regime::Intermediate);
        assert!(classify_regime(1.0, 10, 30.0).is_err());
    }

    proptest! {
        #[test]
        fn hill_is_scale_invariant(values in prop::collection::vec(0.1f64..100.0, 2..20), s in 1e-3f64..1e3) {
            let scaled: Vec<f64> = values.iter().map(|v| v * s).collect();
            let a = hill_from_values(&values).unwrap();
            let b = hill_from_values(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0) * 4.0);
        }

        #[test]
        fn ladder_counts_are_exact(n in 10u64..100_000, eta in 0.05f64..0.6, k in 2usize..40) {
            if let Ok(ladder) = QuantileLadder::new(n, eta, k) {
                for j in 1..=k {
                    let back = (1.0 - ladder.levels()[j - 1]) * (n + 1) as f64;
                    prop_assert!((back - ladder.tail_count(j) as f64).abs() < 1e-6);
                    prop_assert!(ladder.levels()[j - 1] > 0.0 && ladder.levels()[j - 1] < 1.0);
                }
            }
        }
    }
}

//! Student-t distribution and quantile functions.

use statrs::function::beta::beta_reg;

/// `P(T <= t)` for `T ~ t_ν`.
///
/// Near the center the incomplete beta function is taken in `t²/(ν + t²)`
/// so that small `|t|` keep full precision; in the tails it is taken in
/// `ν/(ν + t²)`.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    assert!(dof > 0.0, "degrees of freedom must be positive");
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let t2 = t * t;
    let tail = if t2 < dof {
        0.5 - 0.5 * beta_reg(0.5, 0.5 * dof, t2 / (dof + t2))
    } else {
        0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + t2))
    };
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of `t_ν` by bracketed bisection on the CDF, to an absolute
/// tolerance of 1e-12 in `t`.
pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while student_t_cdf(lo, dof) > p {
        lo *= 2.0;
    }
    while student_t_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

//! `Y = f(X) + σ(X) ε(X)` with `X ~ U(0, 1)`.
//!
//! Scenario A draws `ε ~ t_5` independently of `X` (tail index 0.2).
//! Scenario B draws `ε ~ t_{s(X)}` with an integer number of degrees of
//! freedom that drops to 2 in the middle of the interval (tail index
//! `1 / s(x)`, equal to 1/2 on `[0.12, 0.88]`).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::rng::NormalSource;
use super::studentt::student_t_quantile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            other => Err(Error::Config {
                field: "scenario",
                reason: format!("unknown scenario `{other}` (expected A or B)"),
            }),
        }
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutOfDomain { x, a: 0.0, b: 1.0 })
    }
}

/// `sqrt(x(1-x)) sin(2π(1 + 2^{-7/5}) / (x + 2^{-7/5}))`.
fn mean_fn(x: f64) -> f64 {
    let c = 2f64.powf(-1.4);
    (x * (1.0 - x)).sqrt() * (2.0 * PI * (1.0 + c) / (x + c)).sin()
}

fn scale_fn(x: f64) -> f64 {
    0.1 * (1.0 + x)
}

/// `s(x) = [ν(x)] + 1`, `ν(x) = 1 / ((1.1 - 0.5 e^{-64 (x - 0.5)^2})(0.1 + sin(πx)))`.
fn varying_dof(x: f64) -> u32 {
    let nu = 1.0 / ((1.1 - 0.5 * (-64.0 * (x - 0.5).powi(2)).exp()) * (0.1 + (PI * x).sin()));
    nu.floor() as u32 + 1
}

impl Scenario {
    pub fn f(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(mean_fn(x))
    }

    pub fn sigma(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(scale_fn(x))
    }

    /// Degrees of freedom of the error law at `x`.
    pub fn dof(&self, x: f64) -> Result<u32> {
        check_unit(x)?;
        Ok(match self {
            Scenario::A => 5,
            Scenario::B => varying_dof(x),
        })
    }

    /// True tail index `1 / dof(x)`.
    pub fn evi(&self, x: f64) -> Result<f64> {
        Ok(1.0 / self.dof(x)? as f64)
    }

    /// `q_Y(τ|x) = f(x) + σ(x) Q_t(τ; dof(x))`.
    pub fn true_quantile(&self, tau: f64, x: f64) -> Result<f64> {
        crate::checkloss::check_level(tau)?;
        let dof = self.dof(x)?;
        Ok(mean_fn(x) + scale_fn(x) * student_t_quantile(tau, dof as f64))
    }
}

/// One simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub scenario: Scenario,
    pub seed: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Draws `n` observations. Each observation consumes its uniform `X` and
/// then its error from the same stream, so the dataset is a pure function
/// of `(scenario, n, seed)`.
pub fn generate(scenario: Scenario, n: usize, seed: u64) -> Dataset {
    let mut src = NormalSource::new(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = src.uniform();
        let dof = match scenario {
            Scenario::A => 5,
            Scenario::B => varying_dof(xi),
        };
        let eps = src.student_t(dof);
        x.push(xi);
        y.push(mean_fn(xi) + scale_fn(xi) * eps);
    }
    Dataset {
        scenario,
        seed,
        x,
        y,
    }
}

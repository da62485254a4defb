//! Procedure configuration and the closed-form risk formulas.
//!
//! The procedure draws a pilot of `m = m0 * k + p` observations, then `k`
//! observations per sequential step until the sample size reaches a fraction
//! `rho` of the variance-based target, and finally tops up to the projected
//! total in one batch.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid config: {field} = {value} ({reason})")]
    InvalidConfig {
        field: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("invalid argument: {name} = {value} must be strictly positive and finite")]
    InvalidArgument { name: &'static str, value: f64 },
}

/// Raw tuning knobs as supplied by a caller, before validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigParams {
    pub rho: f64,
    pub k: usize,
    pub m0: usize,
    pub p: usize,
    pub b: f64,
}

/// A validated configuration. Construct through [`validate_config`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigParams", into = "ConfigParams")]
pub struct ProcedureConfig {
    rho: f64,
    k: usize,
    m0: usize,
    p: usize,
    b: f64,
    m: usize,
}

fn invalid(field: &'static str, value: impl fmt::Display, reason: &'static str) -> ConfigError {
    ConfigError::InvalidConfig {
        field,
        value: value.to_string(),
        reason,
    }
}

/// Checks every field and derives the pilot size `m = m0 * k + p`.
pub fn validate_config(params: ConfigParams) -> Result<ProcedureConfig, ConfigError> {
    let ConfigParams { rho, k, m0, p, b } = params;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(invalid("rho", rho, "must lie in (0, 1]"));
    }
    if k == 0 {
        return Err(invalid("k", k, "must be at least 1"));
    }
    if m0 == 0 {
        return Err(invalid("m0", m0, "must be at least 1"));
    }
    if p == 0 {
        return Err(invalid("p", p, "must be at least 1"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid("b", b, "must be strictly positive and finite"));
    }
    let m = m0
        .checked_mul(k)
        .and_then(|v| v.checked_add(p))
        .ok_or_else(|| invalid("m0", m0, "pilot size m0*k+p overflows"))?;
    Ok(ProcedureConfig {
        rho,
        k,
        m0,
        p,
        b,
        m,
    })
}

impl TryFrom<ConfigParams> for ProcedureConfig {
    type Error = ConfigError;

    fn try_from(params: ConfigParams) -> Result<Self, Self::Error> {
        validate_config(params)
    }
}

impl From<ProcedureConfig> for ConfigParams {
    fn from(cfg: ProcedureConfig) -> Self {
        cfg.params()
    }
}

/// Raised when the pilot alone already reaches the projected sequential
/// target, so the sequential stage cannot do any work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotAdvisory {
    pub m: usize,
    pub projected_target: f64,
}

impl fmt::Display for PilotAdvisory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pilot size m={} already reaches rho*n*={:.3} for the supplied variance hint; \
             the sequential stage will likely stop immediately",
            self.m, self.projected_target
        )
    }
}

impl ProcedureConfig {
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn m0(&self) -> usize {
        self.m0
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    /// Pilot sample size `m0 * k + p`.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> ConfigParams {
        ConfigParams {
            rho: self.rho,
            k: self.k,
            m0: self.m0,
            p: self.p,
            b: self.b,
        }
    }

    /// Re-validates; a validated config maps to itself.
    pub fn validate(&self) -> Result<Self, ConfigError> {
        validate_config(self.params())
    }

    /// Sample size reached after `steps` sequential steps.
    pub fn sequential_size(&self, steps: usize) -> usize {
        self.m + self.k * steps
    }

    /// The stopping threshold `rho * p * s2 / b`.
    pub fn threshold(&self, s2: f64) -> f64 {
        self.rho * self.p as f64 * s2 / self.b
    }

    /// Finite-sample check of `limsup m/n* < rho` against a variance hint.
    pub fn pilot_advisory(&self, sigma2_hint: f64) -> Option<PilotAdvisory> {
        let projected_target = self.threshold(sigma2_hint);
        (self.m as f64 >= projected_target).then_some(PilotAdvisory {
            m: self.m,
            projected_target,
        })
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::InvalidArgument { name, value })
    }
}

/// Sample size `p * sigma2 / b` that bounds the risk at `b` when the error
/// variance is known. Not rounded.
pub fn optimal_sample_size(b: f64, p: usize, sigma2: f64) -> Result<f64, ConfigError> {
    let b = positive("b", b)?;
    let p = positive("p", p as f64)?;
    let sigma2 = positive("sigma2", sigma2)?;
    Ok(p * sigma2 / b)
}

/// Risk `p * sigma2 / n` of the least-squares estimator at a fixed sample size.
pub fn theoretical_risk(n: usize, p: usize, sigma2: f64) -> Result<f64, ConfigError> {
    let n = positive("n", n as f64)?;
    let p = positive("p", p as f64)?;
    let sigma2 = positive("sigma2", sigma2)?;
    Ok(p * sigma2 / n)
}

/// Largest integer strictly smaller than `u`.
///
/// Values within a few ulps of an integer are treated as that integer, so
/// `40.0 / 0.8` and `14.0 / 0.7` both count as integral.
pub fn strict_floor(u: f64) -> i64 {
    let nearest = u.round();
    if (u - nearest).abs() <= 4.0 * f64::EPSILON * nearest.abs().max(1.0) {
        nearest as i64 - 1
    } else {
        u.floor() as i64
    }
}

/// Final sample size `strict_floor(n_projected) + 1`.
pub fn final_sample_size(n_projected: f64) -> usize {
    (strict_floor(n_projected) + 1).max(0) as usize
}

//! Market model: a hidden mean-reverting Gaussian drift observed through
//! noisy stock returns.
//!
//! The drift follows the Ornstein-Uhlenbeck dynamics
//!
//! ```text
//! d mu_t = alpha (delta - mu_t) dt + beta dB_t,    mu_0 ~ N(m0, nu0),
//! ```
//!
//! and the cumulative return satisfies `dR_t = mu_t dt + sigma dW_t` with
//! `B`, `W` independent Brownian motions. All first and second order
//! moments of the drift are available in closed form and exposed here.

use crate::error::{Error, Result};

/// Parameters of the drift process and the market, with times in years.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Mean-reversion speed of the drift (must be positive).
    pub alpha: f64,
    /// Volatility of the drift. Zero is admitted and degenerates the model
    /// to a constant drift once `nu0 = 0`.
    pub beta: f64,
    /// Mean-reversion level of the drift.
    pub delta: f64,
    /// Stock volatility (must be positive).
    pub sigma: f64,
    /// Mean of the initial drift value.
    pub m0: f64,
    /// Variance of the initial drift value; zero models a known initial value.
    pub nu0: f64,
    /// Investment horizon T.
    pub horizon: f64,
}

impl ModelParams {
    /// Builds a parameter set initialized at the stationary law of the
    /// drift, i.e. `m0 = delta` and `nu0 = beta^2 / (2 alpha)`.
    pub fn stationary(alpha: f64, beta: f64, delta: f64, sigma: f64, horizon: f64) -> Result<Self> {
        let params = ModelParams {
            alpha,
            beta,
            delta,
            sigma,
            m0: delta,
            nu0: beta * beta / (2.0 * alpha),
            horizon,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the admissibility constraints on the parameters.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.beta,
            self.delta,
            self.sigma,
            self.m0,
            self.nu0,
            self.horizon,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParams(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.beta < 0.0 {
            return Err(Error::InvalidParams(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParams(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.nu0 < 0.0 {
            return Err(Error::InvalidParams(format!("nu0 must be >= 0, got {}", self.nu0)));
        }
        if self.horizon <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Long-run variance of the drift, `beta^2 / (2 alpha)`.
    pub fn stationary_variance(&self) -> f64 {
        self.beta * self.beta / (2.0 * self.alpha)
    }

    /// `sigma^2`, used all over the valuation formulas.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Mean of the drift at time `t`: `delta + e^{-alpha t} (m0 - delta)`.
pub fn drift_mean(params: &ModelParams, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    params.delta + (-params.alpha * t).exp() * (params.m0 - params.delta)
}

/// Variance of the drift at time `t`.
///
/// Relaxes exponentially from `nu0` toward the stationary variance:
/// `beta^2/(2 alpha) + e^{-2 alpha t} (nu0 - beta^2/(2 alpha))`.
pub fn drift_variance(params: &ModelParams, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let stat = params.stationary_variance();
    let value = stat + (-2.0 * params.alpha * t).exp() * (params.nu0 - stat);
    value.max(0.0)
}

/// Covariance of the drift values at times `s` and `t`.
pub fn drift_covariance(params: &ModelParams, s: f64, t: f64) -> f64 {
    debug_assert!(s >= 0.0 && t >= 0.0);
    let stat = params.stationary_variance();
    stat * (-params.alpha * (t - s).abs()).exp()
        + (-params.alpha * (t + s)).exp() * (params.nu0 - stat)
}

/// Second moment `E[mu_t^2] = drift_variance(t) + drift_mean(t)^2`.
pub fn drift_second_moment(params: &ModelParams, t: f64) -> f64 {
    let m = drift_mean(params, t);
    drift_variance(params, t) + m * m
}

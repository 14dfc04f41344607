//! Estimation of a hidden mean-reverting drift from stock returns and
//! discrete expert opinions, and the log-utility portfolios built on the
//! estimates.
//!
//! An investor trades one stock whose drift follows an unobserved
//! Ornstein-Uhlenbeck process. Four information regimes are compared:
//! observing returns only (`R`), expert opinions only (`E`), both (`C`),
//! and the drift itself (`F`). The crate provides
//!
//! * the exact drift moments ([`market`]),
//! * the conditional mean/variance filters of all regimes, as closed-form
//!   variance curves and as pathwise runs ([`filtering`]),
//! * long-run envelopes and refinement limits of the conditional variance
//!   ([`asymptotics`]),
//! * closed-form optimal values, required capitals and efficiencies
//!   ([`valuation`]),
//! * a reproducible Monte Carlo harness that validates every closed form
//!   by independent sampling ([`montecarlo`]),
//! * config-driven report commands producing CSV (and optional SVG) files
//!   ([`report`]), and a validation suite ([`validate`]).
//!
//! Each major capability has a runnable example under `examples/`; the
//! thin `drift-experts` binary exposes the same commands on the command
//! line.
//!
//! ```
//! use drift_experts::{value, Efficiency, ExpertSchedule, ModelParams, Regime};
//!
//! let params = ModelParams::stationary(3.0, 1.0, 0.05, 0.25, 1.0).unwrap();
//! let schedule = ExpertSchedule::equidistant(10, 0.25);
//! let with_experts = value(Regime::Combined, 1.0, &params, &schedule).unwrap();
//! let returns_only = value(Regime::Returns, 1.0, &params, &schedule).unwrap();
//! assert!(with_experts > returns_only);
//! ```

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod filtering;
pub mod market;
pub mod montecarlo;
mod numfmt;

pub mod valuation;

pub use asymptotics::{
    convergence_study, envelope, envelope_fixed_point, limit_variance_returns,
    monotone_threshold, ConvergencePoint, Envelope,
};
pub use config::{ExperimentConfig, OutputConfig};
pub use error::{Error, Result};
pub use filtering::{
    bayes_update, kalman_mean_step, propagate_expert, relaxation_segment, riccati_segment,
    run_filter, variance_at, variance_at_dates, variance_returns, variance_trajectory,
    variance_update, DateVariances, ExpertSchedule, FilterState, FilterTrajectory,
    ObservationSeries, Regime,
};
pub use market::{
    drift_covariance, drift_mean, drift_second_moment, drift_variance, ModelParams,
};
pub use montecarlo::{
    filter_moment_check, mc_value, simulate_path, wealth_log_terminal, McEstimate, MomentCheck,
    PathBundle, SimConfig, Simulator,
};
pub use valuation::{
    efficiency, optimal_fraction, second_moment_integral, value, value_report, variance_integral,
    variance_integral_quadrature, Efficiency, ValueReport, ValueRow,
};

//! Monte Carlo validation harness.
//!
//! Simulates drift paths, returns and expert opinions, feeds them through
//! the pathwise filters and accumulates terminal log wealth, so that every
//! closed form in the crate can be checked against independent sampling.
//!
//! Reproducibility: all draws come from ChaCha8 streams keyed by
//! `(seed, path index, purpose)`, so a path's randomness never depends on
//! execution order, and estimates are aggregated with a fixed pairwise
//! summation tree. Two runs with the same seed and config produce
//! bit-identical results at any parallelism degree.
//!
//! The drift is stepped with its exact Gaussian transition (no
//! discretization bias); return increments, the filter mean and the wealth
//! integral use the Euler scheme on the simulation grid.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filtering::{nearest_index, run_filter, ExpertSchedule, ObservationSeries, Regime};
use crate::market::{drift_mean, drift_variance, ModelParams};

const STREAM_DRIFT: u64 = 0;
const STREAM_WIENER: u64 = 1;
const STREAM_EXPERT: u64 = 2;
const STREAM_COUNT: u64 = 3;

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Upper bound on the simulation step; the horizon is split into
    /// `ceil(horizon / dt)` equal steps.
    pub dt: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be >= 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }
}

/// One simulated path: drift, observation noise and expert views.
#[derive(Debug, Clone)]
pub struct PathBundle {
    /// Grid `0 = s_0 < ... < s_M = horizon`.
    pub times: Vec<f64>,
    /// Drift values at the grid points, length `M + 1`.
    pub drift: Vec<f64>,
    /// Return increments per step, `dR_i = mu_i dt + sigma dW_i`.
    pub return_increments: Vec<f64>,
    /// Brownian increments per step.
    pub wiener_increments: Vec<f64>,
    /// Expert views, one per (snapped) information date.
    pub expert_views: Vec<f64>,
}

impl PathBundle {
    /// The bundle viewed as filter input.
    pub fn observations(&self) -> ObservationSeries<'_> {
        ObservationSeries {
            times: &self.times,
            return_increments: &self.return_increments,
            drift: &self.drift,
            expert_views: &self.expert_views,
        }
    }
}

/// Path generator over a fixed simulation grid.
///
/// Information dates are snapped to the nearest grid point; the largest
/// snap distance is recorded and exposed as run metadata.
pub struct Simulator {
    params: ModelParams,
    seed: u64,
    times: Vec<f64>,
    step: f64,
    event_indices: Vec<usize>,
    event_variances: Vec<f64>,
    max_snap_error: f64,
    drift_decay: f64,
    innovation_sd: f64,
}

impl Simulator {
    pub fn new(params: &ModelParams, schedule: &ExpertSchedule, config: &SimConfig) -> Result<Self> {
        params.validate()?;
        schedule.validate(params.horizon)?;
        config.validate()?;

        let horizon = params.horizon;
        let steps = (horizon / config.dt).ceil().max(1.0) as usize;
        let times: Vec<f64> = (0..=steps)
            .map(|i| if i == steps { horizon } else { horizon * i as f64 / steps as f64 })
            .collect();
        let step = horizon / steps as f64;

        let mut event_indices = Vec::with_capacity(schedule.len());
        let mut event_variances = Vec::with_capacity(schedule.len());
        let mut max_snap_error: f64 = 0.0;
        for (date, view_variance) in schedule.events(horizon) {
            let idx = nearest_index(&times, date);
            max_snap_error = max_snap_error.max((times[idx] - date).abs());
            event_indices.push(idx);
            event_variances.push(view_variance);
        }

        Ok(Simulator {
            params: *params,
            seed: config.seed,
            times,
            step,
            event_indices,
            event_variances,
            max_snap_error,
            drift_decay: (-params.alpha * step).exp(),
            innovation_sd: (params.stationary_variance()
                * -(-2.0 * params.alpha * step).exp_m1())
            .sqrt(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Largest distance between an information date and its snapped grid
    /// point.
    pub fn max_snap_error(&self) -> f64 {
        self.max_snap_error
    }

    /// Grid indices the information dates were snapped to.
    pub fn event_indices(&self) -> &[usize] {
        &self.event_indices
    }

    fn stream(&self, path: u64, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path * STREAM_COUNT + purpose);
        rng
    }

    /// Generates path number `index`. Paths are independent and
    /// reproducible: the draws depend only on `(seed, index)`.
    pub fn path(&self, index: u64) -> PathBundle {
        let params = &self.params;
        let n_steps = self.n_steps();

        let mut drift_rng = self.stream(index, STREAM_DRIFT);
        let mut drift = Vec::with_capacity(n_steps + 1);
        let init: f64 = drift_rng.sample(StandardNormal);
        let mut mu = params.m0 + params.nu0.sqrt() * init;
        drift.push(mu);
        for _ in 0..n_steps {
            let z: f64 = drift_rng.sample(StandardNormal);
            mu = params.delta + self.drift_decay * (mu - params.delta) + self.innovation_sd * z;
            drift.push(mu);
        }

        let mut wiener_rng = self.stream(index, STREAM_WIENER);
        let sqrt_step = self.step.sqrt();
        let mut wiener_increments = Vec::with_capacity(n_steps);
        let mut return_increments = Vec::with_capacity(n_steps);
        for i in 0..n_steps {
            let dw = sqrt_step * wiener_rng.sample::<f64, _>(StandardNormal);
            wiener_increments.push(dw);
            return_increments.push(drift[i] * self.step + params.sigma * dw);
        }

        let mut expert_rng = self.stream(index, STREAM_EXPERT);
        let mut expert_views = Vec::with_capacity(self.event_indices.len());
        for (k, &idx) in self.event_indices.iter().enumerate() {
            let eps: f64 = expert_rng.sample(StandardNormal);
            let view_variance = self.event_variances[k];
            let view = if view_variance.is_infinite() {
                // never consumed by the filter; keep the stream aligned
                drift[idx]
            } else {
                drift[idx] + view_variance.sqrt() * eps
            };
            expert_views.push(view);
        }

        PathBundle { times: self.times.clone(), drift, return_increments, wiener_increments, expert_views }
    }
}

/// Generates one path without keeping the simulator around.
pub fn simulate_path(
    params: &ModelParams,
    schedule: &ExpertSchedule,
    config: &SimConfig,
    index: u64,
) -> Result<PathBundle> {
    Ok(Simulator::new(params, schedule, config)?.path(index))
}

/// Terminal log wealth of a self-financing strategy along one path,
/// accumulated through the log-wealth identity
/// `ln x0 + sum (pi mu - (sigma pi)^2 / 2) dt + sum pi sigma dW`
/// rather than by exponentiating the wealth process.
pub fn wealth_log_terminal(
    fractions: &[f64],
    bundle: &PathBundle,
    params: &ModelParams,
    x0: f64,
) -> Result<f64> {
    let steps = bundle.return_increments.len();
    if fractions.len() != steps {
        return Err(Error::LengthMismatch(format!(
            "expected {steps} strategy values, got {}",
            fractions.len()
        )));
    }
    if !(x0 > 0.0) {
        return Err(Error::InvalidArgument(format!("initial capital must be > 0, got {x0}")));
    }
    let sigma_sq = params.sigma_sq();
    let mut acc = 0.0;
    for i in 0..steps {
        let dt = bundle.times[i + 1] - bundle.times[i];
        let pi = fractions[i];
        acc += (pi * bundle.drift[i] - 0.5 * sigma_sq * pi * pi) * dt
            + pi * params.sigma * bundle.wiener_increments[i];
    }
    Ok(x0.ln() + acc)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl McEstimate {
    /// z-score of the estimate against a reference value.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.mean - reference) / self.std_error
    }
}

/// Estimates the optimal expected log terminal wealth of a regime by
/// running the filter pathwise and applying the certainty-equivalence
/// strategy `mu_hat / sigma^2`.
pub fn mc_value(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
    config: &SimConfig,
    x0: f64,
) -> Result<McEstimate> {
    let sim = Simulator::new(params, schedule, config)?;
    let sigma_sq = params.sigma_sq();
    let values: Vec<f64> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let bundle = sim.path(i);
            let traj = run_filter(regime, params, schedule, &bundle.observations())?;
            let steps = bundle.return_increments.len();
            let fractions: Vec<f64> =
                traj.mu_hat[..steps].iter().map(|&m| m / sigma_sq).collect();
            wealth_log_terminal(&fractions, &bundle, params, x0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(estimate(&values))
}

fn estimate(values: &[f64]) -> McEstimate {
    let n = values.len();
    let mean = tree_sum(values) / n as f64;
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = if n > 1 { tree_sum(&squares) / (n - 1) as f64 } else { 0.0 };
    McEstimate { mean, std_error: (variance / n as f64).sqrt(), n_paths: n }
}

/// Order-fixed pairwise summation, invariant under the parallelism degree
/// of the producer.
pub(crate) fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => tree_sum(&values[..n / 2]) + tree_sum(&values[n / 2..]),
    }
}

/// Outcome of one instance of the filter moment identity
/// `E[mu_hat_t^2] = nu_t + m_t^2 - gamma_t`.
#[derive(Debug, Clone, Copy)]
pub struct MomentCheck {
    /// Evaluation time, snapped onto the simulation grid.
    pub time: f64,
    pub sample_mean: f64,
    pub expected: f64,
    pub std_error: f64,
    pub z_score: f64,
}

/// Compares the sampled second moment of the filter against its
/// closed-form value at each requested time.
pub fn filter_moment_check(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
    config: &SimConfig,
    times: &[f64],
) -> Result<Vec<MomentCheck>> {
    let sim = Simulator::new(params, schedule, config)?;
    let indices: Vec<usize> = times
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t <= params.horizon) {
                return Err(Error::InvalidArgument(format!(
                    "moment check times must lie in (0, horizon], got {t}"
                )));
            }
            Ok(nearest_index(sim.times(), t))
        })
        .collect::<Result<Vec<_>>>()?;

    // squared filter values per path at the requested indices
    let samples: Vec<Vec<f64>> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let bundle = sim.path(i);
            let traj = run_filter(regime, params, schedule, &bundle.observations())?;
            Ok(indices.iter().map(|&idx| traj.mu_hat[idx] * traj.mu_hat[idx]).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    // deterministic gamma at the snapped times, from one filter pass
    let gamma_at: Vec<f64> = {
        let bundle = sim.path(0);
        let traj = run_filter(regime, params, schedule, &bundle.observations())?;
        indices.iter().map(|&idx| traj.gamma[idx]).collect()
    };

    let mut out = Vec::with_capacity(indices.len());
    for (j, &idx) in indices.iter().enumerate() {
        let column: Vec<f64> = samples.iter().map(|row| row[j]).collect();
        let est = estimate(&column);
        let t = sim.times()[idx];
        let m = drift_mean(params, t);
        let expected = drift_variance(params, t) + m * m - gamma_at[j];
        out.push(MomentCheck {
            time: t,
            sample_mean: est.mean,
            expected,
            std_error: est.std_error,
            z_score: (est.mean - expected) / est.std_error,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::{value, variance_integral};

    fn base() -> ModelParams {
        ModelParams::stationary(3.0, 1.0, 0.05, 0.25, 1.0).unwrap()
    }

    fn cfg(n_paths: usize, dt: f64) -> SimConfig {
        SimConfig { n_paths, dt, seed: 7 }
    }

    #[test]
    fn paths_are_reproducible_and_distinct() {
        let p = base();
        let schedule = ExpertSchedule::equidistant(4, 0.25);
        let config = cfg(4, 0.01);
        let a = Simulator::new(&p, &schedule, &config).unwrap();
        let b = Simulator::new(&p, &schedule, &config).unwrap();
        let pa = a.path(3);
        let pb = b.path(3);
        assert_eq!(pa.drift, pb.drift);
        assert_eq!(pa.return_increments, pb.return_increments);
        assert_eq!(pa.expert_views, pb.expert_views);
        assert_ne!(a.path(0).drift, a.path(1).drift);
        let other = Simulator::new(&p, &schedule, &SimConfig { seed: 1, ..config }).unwrap();
        assert_ne!(other.path(3).drift, pa.drift);
    }

    #[test]
    fn grid_rounds_step_count_up_and_snaps_dates() {
        let p = base();
        let schedule = ExpertSchedule::from_lists(vec![0.1234], vec![0.25]).unwrap();
        let sim = Simulator::new(&p, &schedule, &cfg(1, 0.003)).unwrap();
        assert_eq!(sim.n_steps(), 334); // ceil(1 / 0.003)
        assert_eq!(sim.times()[0], 0.0);
        assert_eq!(*sim.times().last().unwrap(), 1.0);
        assert!(sim.max_snap_error() <= sim.step() / 2.0 + 1e-15);
        // a date exactly on the grid has zero snap error
        let exact = Simulator::new(
            &p,
            &ExpertSchedule::equidistant(10, 0.25),
            &cfg(1, 1e-3),
        )
        .unwrap();
        assert_eq!(exact.max_snap_error(), 0.0);
    }

    #[test]
    fn degenerate_drift_is_constant() {
        let p = ModelParams { beta: 0.0, nu0: 0.0, ..base() };
        let sim = Simulator::new(&p, &ExpertSchedule::none(), &cfg(1, 0.01)).unwrap();
        let bundle = sim.path(0);
        assert!(bundle.drift.iter().all(|&m| m == 0.05));
    }

    #[test]
    fn noiseless_views_equal_the_drift() {
        let p = base();
        let schedule = ExpertSchedule::equidistant(5, 0.0);
        let sim = Simulator::new(&p, &schedule, &cfg(1, 0.01)).unwrap();
        let bundle = sim.path(7);
        for (k, &view) in bundle.expert_views.iter().enumerate() {
            let idx = nearest_index(&bundle.times, schedule.date(k, p.horizon));
            assert_eq!(view, bundle.drift[idx]);
        }
    }

    #[test]
    fn increments_satisfy_the_return_equation() {
        let p = base();
        let sim = Simulator::new(&p, &ExpertSchedule::none(), &cfg(1, 0.01)).unwrap();
        let bundle = sim.path(11);
        for i in 0..bundle.return_increments.len() {
            let expected = bundle.drift[i] * sim.step() + p.sigma * bundle.wiener_increments[i];
            assert_eq!(bundle.return_increments[i], expected);
        }
    }

    #[test]
    fn all_cash_strategy_keeps_the_capital() {
        let p = base();
        let bundle = simulate_path(&p, &ExpertSchedule::none(), &cfg(1, 0.01), 0).unwrap();
        let zeros = vec![0.0; bundle.return_increments.len()];
        let w = wealth_log_terminal(&zeros, &bundle, &p, 2.5).unwrap();
        assert_eq!(w, 2.5f64.ln());
    }

    #[test]
    fn constant_strategy_reduces_to_gbm_log() {
        // constant drift m, constant sigma * pi = c
        let m = 0.08;
        let p = ModelParams {
            alpha: 3.0,
            beta: 0.0,
            delta: m,
            sigma: 0.25,
            m0: m,
            nu0: 0.0,
            horizon: 1.0,
        };
        let bundle = simulate_path(&p, &ExpertSchedule::none(), &cfg(1, 1e-3), 5).unwrap();
        let c = 0.3;
        let pi = c / p.sigma;
        let fractions = vec![pi; bundle.return_increments.len()];
        let w = wealth_log_terminal(&fractions, &bundle, &p, 1.0).unwrap();
        let w_total: f64 = bundle.wiener_increments.iter().sum();
        let expected = (c * m / p.sigma - 0.5 * c * c) * p.horizon + c * w_total;
        assert!((w - expected).abs() < 1e-12);
    }

    #[test]
    fn wealth_rejects_bad_inputs() {
        let p = base();
        let bundle = simulate_path(&p, &ExpertSchedule::none(), &cfg(1, 0.1), 0).unwrap();
        assert!(wealth_log_terminal(&[0.0; 3], &bundle, &p, 1.0).is_err());
        let ok = vec![0.0; bundle.return_increments.len()];
        assert!(wealth_log_terminal(&ok, &bundle, &p, 0.0).is_err());
    }

    #[test]
    fn terminal_drift_moments_match_the_model() {
        let mut p = base();
        p.nu0 = 0.05;
        p.m0 = 0.12;
        let config = cfg(100_000, 0.05);
        let sim = Simulator::new(&p, &ExpertSchedule::none(), &config).unwrap();
        let endpoints: Vec<f64> =
            (0..config.n_paths as u64).into_par_iter().map(|i| *sim.path(i).drift.last().unwrap()).collect();
        let est = estimate(&endpoints);
        let n = endpoints.len() as f64;
        let mean_expected = drift_mean(&p, p.horizon);
        assert!(
            (est.mean - mean_expected).abs() <= 3.0 * est.std_error,
            "terminal mean {} vs {}",
            est.mean,
            mean_expected
        );
        let centered: Vec<f64> =
            endpoints.iter().map(|x| (x - est.mean) * (x - est.mean)).collect();
        let var = tree_sum(&centered) / (n - 1.0);
        let var_expected = drift_variance(&p, p.horizon);
        let var_se = var * (2.0 / (n - 1.0)).sqrt();
        assert!(
            (var - var_expected).abs() <= 3.0 * var_se,
            "terminal variance {var} vs {var_expected}"
        );
    }

    #[test]
    fn drift_sample_covariance_matches_the_model() {
        let mut p = base();
        p.nu0 = 0.02;
        let config = cfg(100_000, 0.05);
        let sim = Simulator::new(&p, &ExpertSchedule::none(), &config).unwrap();
        let s_idx = nearest_index(sim.times(), 0.25);
        let t_idx = nearest_index(sim.times(), 0.75);
        let pairs: Vec<(f64, f64)> = (0..config.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let b = sim.path(i);
                (b.drift[s_idx], b.drift[t_idx])
            })
            .collect();
        let n = pairs.len() as f64;
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mx = tree_sum(&xs) / n;
        let my = tree_sum(&ys) / n;
        let cross: Vec<f64> = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).collect();
        let cov = tree_sum(&cross) / (n - 1.0);
        let expected =
            crate::market::drift_covariance(&p, sim.times()[s_idx], sim.times()[t_idx]);
        let spread: Vec<f64> = cross.iter().map(|c| (c - cov) * (c - cov)).collect();
        let se = (tree_sum(&spread) / (n - 1.0) / n).sqrt();
        assert!(
            (cov - expected).abs() <= 3.0 * se,
            "covariance {cov} vs {expected} (se {se})"
        );
    }

    #[test]
    fn expert_views_are_unbiased_with_the_stated_variance() {
        let p = base();
        let view_variance = 0.09;
        let schedule = ExpertSchedule::from_lists(vec![0.5], vec![view_variance]).unwrap();
        let config = cfg(50_000, 0.05);
        let sim = Simulator::new(&p, &schedule, &config).unwrap();
        let idx = nearest_index(sim.times(), 0.5);
        let noise: Vec<f64> = (0..config.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let b = sim.path(i);
                b.expert_views[0] - b.drift[idx]
            })
            .collect();
        let est = estimate(&noise);
        assert!(est.mean.abs() <= 3.0 * est.std_error);
        let n = noise.len() as f64;
        let centered: Vec<f64> = noise.iter().map(|x| (x - est.mean) * (x - est.mean)).collect();
        let var = tree_sum(&centered) / (n - 1.0);
        let var_se = var * (2.0 / (n - 1.0)).sqrt();
        assert!((var - view_variance).abs() <= 3.0 * var_se);
    }

    #[test]
    fn mc_value_full_regime_smoke() {
        let p = base();
        let schedule = ExpertSchedule::none();
        let config = SimConfig { n_paths: 4000, dt: 2e-3, seed: 99 };
        let est = mc_value(Regime::Full, &p, &schedule, &config, 1.0).unwrap();
        let closed = value(Regime::Full, 1.0, &p, &schedule).unwrap();
        assert!(
            (est.mean - closed).abs() <= 3.0 * est.std_error + 2.0 * config.dt,
            "mc {} vs closed {closed} (se {})",
            est.mean,
            est.std_error
        );
        let _ = variance_integral(Regime::Full, &p, &schedule).unwrap();
    }

    #[test]
    fn moment_check_full_regime_smoke() {
        let p = base();
        let config = SimConfig { n_paths: 4000, dt: 5e-3, seed: 11 };
        let checks =
            filter_moment_check(Regime::Full, &p, &ExpertSchedule::none(), &config, &[0.3, 0.9])
                .unwrap();
        for check in checks {
            assert!(check.z_score.abs() <= 4.0, "z = {} at t = {}", check.z_score, check.time);
        }
    }
}

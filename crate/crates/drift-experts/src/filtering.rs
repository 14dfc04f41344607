//! Drift filters for the four information regimes.
//!
//! An investor estimates the hidden drift from some combination of the
//! return path and discrete expert opinions. The conditional mean `mu_hat`
//! and conditional variance `gamma` evolve as follows:
//!
//! * regime `R` (returns only): the Kalman filter. `mu_hat` solves a linear
//!   SDE driven by the observed returns and `gamma` solves the Riccati ODE
//!   `dg/dt = -g^2/sigma^2 - 2 alpha g + beta^2`, which has a closed-form
//!   solution.
//! * regime `E` (expert opinions only): between opinions `mu_hat` relaxes
//!   exponentially toward `delta` and `gamma` follows the linear ODE
//!   `dg/dt = -2 alpha g + beta^2`; at an opinion both jump by a Gaussian
//!   precision-weighted (Bayesian) update.
//! * regime `C` (both): Kalman dynamics between opinions, the same Bayesian
//!   jump at opinions.
//! * regime `F` (full information): `mu_hat` equals the drift itself and
//!   `gamma` is identically zero.
//!
//! In every regime `gamma` is deterministic. Trajectories record values at
//! an information date in two slots: the pre-update left limit (`*_minus`)
//! and the post-update value; all summation formulas downstream consume the
//! post-update values.

use std::fmt;
use std::io;

use crate::error::{Error, Result};
use crate::market::ModelParams;
use crate::numfmt::sig6;

/// Relative tolerance used when deciding that a grid point and an
/// information date are the same instant.
const TIME_MERGE_TOL: f64 = 1e-9;

/// Information regime: which observations the investor sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Returns only (classical Kalman filtering), letter `R`.
    Returns,
    /// Expert opinions only, letter `E`.
    Experts,
    /// Returns combined with expert opinions, letter `C`.
    Combined,
    /// Full information on the drift, letter `F`.
    Full,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Returns, Regime::Experts, Regime::Combined, Regime::Full];

    pub fn letter(self) -> char {
        match self {
            Regime::Returns => 'R',
            Regime::Experts => 'E',
            Regime::Combined => 'C',
            Regime::Full => 'F',
        }
    }

    pub fn from_letter(c: char) -> Option<Regime> {
        match c.to_ascii_uppercase() {
            'R' => Some(Regime::Returns),
            'E' => Some(Regime::Experts),
            'C' => Some(Regime::Combined),
            'F' => Some(Regime::Full),
            _ => None,
        }
    }

    /// True when the regime incorporates the expert opinions.
    pub fn uses_experts(self) -> bool {
        matches!(self, Regime::Experts | Regime::Combined)
    }

    /// True when the regime observes the return path.
    pub fn uses_returns(self) -> bool {
        matches!(self, Regime::Returns | Regime::Combined)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Arrival dates and reliabilities of the expert opinions.
///
/// The view variance `f64::INFINITY` is the distinguished sentinel for an
/// uninformative opinion; the corresponding update is an exact no-op.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpertSchedule {
    /// Explicit strictly increasing dates in `[0, horizon)` with one view
    /// variance per date.
    Dates { dates: Vec<f64>, variances: Vec<f64> },
    /// `count` equidistant dates `t_k = k * horizon / count`,
    /// `k = 0, ..., count - 1`, all with the same view variance.
    Equidistant { count: usize, view_variance: f64 },
}

impl ExpertSchedule {
    /// Schedule with no opinions at all.
    pub fn none() -> Self {
        ExpertSchedule::Equidistant { count: 0, view_variance: f64::INFINITY }
    }

    pub fn equidistant(count: usize, view_variance: f64) -> Self {
        ExpertSchedule::Equidistant { count, view_variance }
    }

    /// Builds an explicit schedule, checking shape constraints that do not
    /// depend on the horizon.
    pub fn from_lists(dates: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let sched = ExpertSchedule::Dates { dates, variances };
        sched.validate_shape()?;
        Ok(sched)
    }

    pub fn len(&self) -> usize {
        match self {
            ExpertSchedule::Dates { dates, .. } => dates.len(),
            ExpertSchedule::Equidistant { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Date of the `k`-th opinion.
    pub fn date(&self, k: usize, horizon: f64) -> f64 {
        match self {
            ExpertSchedule::Dates { dates, .. } => dates[k],
            ExpertSchedule::Equidistant { count, .. } => horizon * k as f64 / *count as f64,
        }
    }

    /// View variance of the `k`-th opinion.
    pub fn view_variance(&self, k: usize) -> f64 {
        match self {
            ExpertSchedule::Dates { variances, .. } => variances[k],
            ExpertSchedule::Equidistant { view_variance, .. } => *view_variance,
        }
    }

    fn validate_shape(&self) -> Result<()> {
        match self {
            ExpertSchedule::Dates { dates, variances } => {
                if dates.len() != variances.len() {
                    return Err(Error::InvalidSchedule(format!(
                        "{} dates but {} variances",
                        dates.len(),
                        variances.len()
                    )));
                }
                for w in dates.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::InvalidSchedule(format!(
                            "dates must be strictly increasing, got {} then {}",
                            w[0], w[1]
                        )));
                    }
                }
                if let Some(&first) = dates.first() {
                    if !(first >= 0.0) {
                        return Err(Error::InvalidSchedule(format!(
                            "first date must be >= 0, got {first}"
                        )));
                    }
                }
                for &v in variances {
                    if v.is_nan() || v < 0.0 {
                        return Err(Error::InvalidSchedule(format!(
                            "view variances must be >= 0 or infinite, got {v}"
                        )));
                    }
                }
            }
            ExpertSchedule::Equidistant { view_variance, .. } => {
                if view_variance.is_nan() || *view_variance < 0.0 {
                    return Err(Error::InvalidSchedule(format!(
                        "view variance must be >= 0 or infinite, got {view_variance}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Full validation against an investment horizon.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        self.validate_shape()?;
        if let ExpertSchedule::Dates { dates, .. } = self {
            if let Some(&last) = dates.last() {
                if !(last < horizon) {
                    return Err(Error::InvalidSchedule(format!(
                        "dates must lie inside [0, {horizon}), got {last}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Iterator over `(date, view_variance)` pairs in date order.
    pub fn events(&self, horizon: f64) -> ScheduleEvents<'_> {
        ScheduleEvents { schedule: self, horizon, next: 0 }
    }
}

/// Iterator over the `(date, view_variance)` events of a schedule.
pub struct ScheduleEvents<'a> {
    schedule: &'a ExpertSchedule,
    horizon: f64,
    next: usize,
}

impl Iterator for ScheduleEvents<'_> {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        if self.next >= self.schedule.len() {
            return None;
        }
        let k = self.next;
        self.next += 1;
        Some((self.schedule.date(k, self.horizon), self.schedule.view_variance(k)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.schedule.len() - self.next;
        (rest, Some(rest))
    }
}

impl ExactSizeIterator for ScheduleEvents<'_> {}

/// Conditional state of a drift filter at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    /// Conditional mean of the drift.
    pub mu_hat: f64,
    /// Conditional variance of the drift, always nonnegative.
    pub gamma: f64,
    /// Current time.
    pub time: f64,
}

/// Filter values along a time grid.
///
/// At an information date the `gamma`/`mu_hat` slots hold the post-update
/// (right-limit) values while the `*_minus` slots hold the pre-update left
/// limits; everywhere else the two slots coincide. Variance-only
/// trajectories leave the mean vectors empty.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrajectory {
    pub regime: Regime,
    pub times: Vec<f64>,
    pub gamma_minus: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu_hat_minus: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub is_information_date: Vec<bool>,
}

impl FilterTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn has_means(&self) -> bool {
        !self.mu_hat.is_empty()
    }

    /// Writes the trajectory as CSV with columns
    /// `time,regime,gamma_minus,gamma,mu_hat_minus,mu_hat,is_information_date`.
    pub fn write_csv<W: io::Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "time,regime,gamma_minus,gamma,mu_hat_minus,mu_hat,is_information_date")?;
        for i in 0..self.len() {
            let (mu_minus, mu) = if self.has_means() {
                (sig6(self.mu_hat_minus[i]), sig6(self.mu_hat[i]))
            } else {
                (String::new(), String::new())
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                sig6(self.times[i]),
                self.regime,
                sig6(self.gamma_minus[i]),
                sig6(self.gamma[i]),
                mu_minus,
                mu,
                u8::from(self.is_information_date[i]),
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Inter-date variance flows
// ---------------------------------------------------------------------------

/// Closed-form flow of the Riccati equation
/// `dg/dt = -g^2/sigma^2 - 2 alpha g + beta^2` governing the conditional
/// variance of the return-observing regimes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RiccatiFlow {
    pub(crate) alpha_sigma2: f64,
    pub(crate) c0: f64,
    /// Exponential rate `2 c0 / sigma^2` of the solution.
    pub(crate) rate: f64,
    sigma2: f64,
}

impl RiccatiFlow {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let sigma2 = params.sigma * params.sigma;
        let alpha_sigma2 = params.alpha * sigma2;
        let c0 = params.sigma
            * (sigma2 * params.alpha * params.alpha + params.beta * params.beta).sqrt();
        RiccatiFlow { alpha_sigma2, c0, rate: 2.0 * c0 / sigma2, sigma2 }
    }

    /// Variance after time `dt` starting from `gamma`.
    pub(crate) fn advance(&self, gamma: f64, dt: f64) -> f64 {
        if dt == 0.0 {
            return gamma;
        }
        let c1 = gamma + self.alpha_sigma2 + self.c0;
        let c2 = gamma + self.alpha_sigma2 - self.c0;
        let e = (-self.rate * dt).exp();
        let denom = c1 - c2 * e;
        // c1 > |c2| whenever gamma >= 0, so the denominator stays positive.
        assert!(denom > 0.0, "Riccati denominator must stay positive");
        (self.c0 * (c1 + c2 * e) / denom - self.alpha_sigma2).max(0.0)
    }

    /// Time integral of the variance over `[0, dt]` starting from `gamma`:
    /// `(c0 - alpha sigma^2) dt + sigma^2 ln((c1 - c2 e^{-rate dt}) / (2 c0))`,
    /// evaluated in `ln(1 + x)` form to stay accurate for tiny intervals.
    pub(crate) fn integral(&self, gamma: f64, dt: f64) -> f64 {
        if dt == 0.0 {
            return 0.0;
        }
        let c2 = gamma + self.alpha_sigma2 - self.c0;
        let u = -(-self.rate * dt).exp_m1();
        (self.c0 - self.alpha_sigma2) * dt + self.sigma2 * (c2 * u / (2.0 * self.c0)).ln_1p()
    }

    /// Attracting fixed point `c0 - alpha sigma^2` of the flow.
    pub(crate) fn equilibrium(&self) -> f64 {
        (self.c0 - self.alpha_sigma2).max(0.0)
    }
}

/// Flow of the linear ODE `dg/dt = -2 alpha g + beta^2` governing the
/// conditional variance of the expert-only regime between opinions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RelaxationFlow {
    two_alpha: f64,
    stationary: f64,
}

impl RelaxationFlow {
    pub(crate) fn new(params: &ModelParams) -> Self {
        RelaxationFlow { two_alpha: 2.0 * params.alpha, stationary: params.stationary_variance() }
    }

    pub(crate) fn advance(&self, gamma: f64, dt: f64) -> f64 {
        if dt == 0.0 {
            return gamma;
        }
        let u = -(-self.two_alpha * dt).exp_m1();
        (gamma + (self.stationary - gamma) * u).max(0.0)
    }

    pub(crate) fn integral(&self, gamma: f64, dt: f64) -> f64 {
        if dt == 0.0 {
            return 0.0;
        }
        let u = -(-self.two_alpha * dt).exp_m1();
        self.stationary * dt - u / self.two_alpha * (self.stationary - gamma)
    }

    pub(crate) fn equilibrium(&self) -> f64 {
        self.stationary
    }
}

/// Inter-date variance flow of a regime, when it has one.
pub(crate) enum InterFlow {
    Relaxation(RelaxationFlow),
    Riccati(RiccatiFlow),
}

impl InterFlow {
    pub(crate) fn for_regime(regime: Regime, params: &ModelParams) -> Option<InterFlow> {
        match regime {
            Regime::Experts => Some(InterFlow::Relaxation(RelaxationFlow::new(params))),
            Regime::Returns | Regime::Combined => Some(InterFlow::Riccati(RiccatiFlow::new(params))),
            Regime::Full => None,
        }
    }

    pub(crate) fn advance(&self, gamma: f64, dt: f64) -> f64 {
        match self {
            InterFlow::Relaxation(f) => f.advance(gamma, dt),
            InterFlow::Riccati(f) => f.advance(gamma, dt),
        }
    }

    pub(crate) fn integral(&self, gamma: f64, dt: f64) -> f64 {
        match self {
            InterFlow::Relaxation(f) => f.integral(gamma, dt),
            InterFlow::Riccati(f) => f.integral(gamma, dt),
        }
    }

    pub(crate) fn equilibrium(&self) -> f64 {
        match self {
            InterFlow::Relaxation(f) => f.equilibrium(),
            InterFlow::Riccati(f) => f.equilibrium(),
        }
    }
}

// ---------------------------------------------------------------------------
// Elementary operations
// ---------------------------------------------------------------------------

/// Conditional variance of the returns-only filter at time `t >= 0`,
/// started from `nu0`.
pub fn variance_returns(params: &ModelParams, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    RiccatiFlow::new(params).advance(params.nu0, t)
}

/// Advances the conditional variance of a return-observing regime by `dt`
/// along the Riccati flow, starting from `gamma_start`.
pub fn riccati_segment(gamma_start: f64, params: &ModelParams, dt: f64) -> f64 {
    debug_assert!(gamma_start >= 0.0 && dt >= 0.0);
    RiccatiFlow::new(params).advance(gamma_start, dt)
}

/// Advances the conditional variance of the expert-only regime by `dt`
/// along the linear relaxation flow, starting from `gamma_start`.
pub fn relaxation_segment(gamma_start: f64, params: &ModelParams, dt: f64) -> f64 {
    debug_assert!(gamma_start >= 0.0 && dt >= 0.0);
    RelaxationFlow::new(params).advance(gamma_start, dt)
}

/// Variance part of the Bayesian update at an information date:
/// `gamma_minus * v / (gamma_minus + v)`.
///
/// Conventions: an infinite view variance leaves the state unchanged
/// (uninformative opinion); when both inputs are zero the state is already
/// exact and zero is returned. The result never exceeds either input.
pub fn variance_update(gamma_minus: f64, view_variance: f64) -> f64 {
    if view_variance.is_infinite() {
        return gamma_minus;
    }
    let denom = gamma_minus + view_variance;
    if denom == 0.0 {
        return 0.0;
    }
    (gamma_minus * view_variance / denom).min(gamma_minus).min(view_variance)
}

/// Bayesian update of the filter at an information date given the opinion
/// value `view` with variance `view_variance`.
///
/// With `lambda = v / (gamma + v)` the mean becomes the precision-weighted
/// average `lambda * mu_hat + (1 - lambda) * view` and the variance becomes
/// `lambda * gamma`. A zero view variance adopts the view exactly; an
/// infinite one is a no-op; if filter and view are both exact (`gamma = v =
/// 0`) the state is kept.
pub fn bayes_update(state: FilterState, view: f64, view_variance: f64) -> FilterState {
    if view_variance.is_infinite() {
        return state;
    }
    let denom = state.gamma + view_variance;
    if denom == 0.0 {
        return state;
    }
    let lambda = view_variance / denom;
    FilterState {
        mu_hat: lambda * state.mu_hat + (1.0 - lambda) * view,
        gamma: variance_update(state.gamma, view_variance),
        time: state.time,
    }
}

/// Propagates the expert-only filter over a quiet interval of length `dt`:
/// the mean relaxes toward `delta` at rate `alpha`, the variance follows
/// the linear relaxation flow.
pub fn propagate_expert(state: FilterState, params: &ModelParams, dt: f64) -> FilterState {
    let decay = (-params.alpha * dt).exp();
    FilterState {
        mu_hat: decay * state.mu_hat + (1.0 - decay) * params.delta,
        gamma: RelaxationFlow::new(params).advance(state.gamma, dt),
        time: state.time + dt,
    }
}

/// One explicit Euler step of the Kalman conditional-mean SDE driven by an
/// observed return increment, with the variance advanced along its exact
/// Riccati flow.
pub fn kalman_mean_step(
    state: FilterState,
    params: &ModelParams,
    return_increment: f64,
    dt: f64,
) -> FilterState {
    let weight = state.gamma / params.sigma_sq();
    let mu_hat = state.mu_hat
        + (params.alpha * params.delta - (params.alpha + weight) * state.mu_hat) * dt
        + weight * return_increment;
    FilterState {
        mu_hat,
        gamma: RiccatiFlow::new(params).advance(state.gamma, dt),
        time: state.time + dt,
    }
}

// ---------------------------------------------------------------------------
// Deterministic variance walks
// ---------------------------------------------------------------------------

/// Calls `visit(gamma_start, length)` for every maximal interval on which
/// the conditional variance follows its inter-date flow; the intervals
/// cover `[0, horizon]`. Regime `F` has no such intervals, regime `R`
/// yields the single interval starting at `nu0`.
pub(crate) fn fold_variance_segments<F: FnMut(f64, f64)>(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
    mut visit: F,
) {
    let Some(flow) = InterFlow::for_regime(regime, params) else {
        return;
    };
    let horizon = params.horizon;
    if !regime.uses_experts() {
        visit(params.nu0, horizon);
        return;
    }
    let mut gamma = params.nu0;
    let mut prev = 0.0;
    for (date, view_variance) in schedule.events(horizon) {
        let len = date - prev;
        if len > 0.0 {
            visit(gamma, len);
        }
        let pre = flow.advance(gamma, len);
        gamma = variance_update(pre, view_variance);
        prev = date;
    }
    visit(gamma, horizon - prev);
}

/// Pre- and post-update conditional variances at every information date.
#[derive(Debug, Clone)]
pub struct DateVariances {
    pub dates: Vec<f64>,
    /// Left limits `gamma_{t_k-}`.
    pub pre: Vec<f64>,
    /// Post-update values `gamma_{t_k}`.
    pub post: Vec<f64>,
}

/// Walks the variance recursion of a regime through all information dates.
pub fn variance_at_dates(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
) -> Result<DateVariances> {
    params.validate()?;
    schedule.validate(params.horizon)?;
    let n = if regime.uses_experts() { schedule.len() } else { 0 };
    let mut out = DateVariances {
        dates: Vec::with_capacity(n),
        pre: Vec::with_capacity(n),
        post: Vec::with_capacity(n),
    };
    if !regime.uses_experts() {
        return Ok(out);
    }
    let flow = InterFlow::for_regime(regime, params).expect("experts regimes have a flow");
    let mut gamma = params.nu0;
    let mut prev = 0.0;
    for (date, view_variance) in schedule.events(params.horizon) {
        let pre = flow.advance(gamma, date - prev);
        gamma = variance_update(pre, view_variance);
        out.dates.push(date);
        out.pre.push(pre);
        out.post.push(gamma);
        prev = date;
    }
    Ok(out)
}

/// Conditional variance of a regime at time `t`, returned as
/// `(left limit, value)`. The two differ exactly when `t` coincides with an
/// information date of an expert-using regime.
pub fn variance_at(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
    t: f64,
) -> Result<(f64, f64)> {
    params.validate()?;
    schedule.validate(params.horizon)?;
    if !(0.0..=params.horizon).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "time {t} outside [0, {}]",
            params.horizon
        )));
    }
    if regime == Regime::Full {
        return Ok((0.0, 0.0));
    }
    let flow = InterFlow::for_regime(regime, params).expect("non-full regimes have a flow");
    if !regime.uses_experts() {
        let v = flow.advance(params.nu0, t);
        return Ok((v, v));
    }
    let mut gamma = params.nu0;
    let mut prev = 0.0;
    let mut update_at_t = None;
    for (date, view_variance) in schedule.events(params.horizon) {
        if date > t {
            break;
        }
        if date == t {
            update_at_t = Some(view_variance);
            break;
        }
        let pre = flow.advance(gamma, date - prev);
        gamma = variance_update(pre, view_variance);
        prev = date;
    }
    let minus = flow.advance(gamma, t - prev);
    let value = match update_at_t {
        Some(view_variance) => variance_update(minus, view_variance),
        None => minus,
    };
    Ok((minus, value))
}

/// Builds the deterministic conditional-variance curve of a regime on a
/// grid inside `[0, horizon]`.
///
/// Information dates of expert-using regimes are inserted into the grid
/// (tagging grid points that already coincide with a date) and the curve
/// endpoints `0` and `horizon` are added when missing. Grids reaching
/// outside `[0, horizon]` are rejected. The result carries no means.
pub fn variance_trajectory(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
    grid: &[f64],
) -> Result<FilterTrajectory> {
    params.validate()?;
    schedule.validate(params.horizon)?;
    validate_grid(grid, params.horizon)?;

    let merged = merge_grid(regime, params, schedule, grid);
    let n = merged.len();
    let mut traj = FilterTrajectory {
        regime,
        times: Vec::with_capacity(n),
        gamma_minus: Vec::with_capacity(n),
        gamma: Vec::with_capacity(n),
        mu_hat_minus: Vec::new(),
        mu_hat: Vec::new(),
        is_information_date: Vec::with_capacity(n),
    };

    let flow = InterFlow::for_regime(regime, params);
    let mut seg_start = 0.0;
    let mut seg_gamma = params.nu0;
    for (time, event) in merged {
        let (minus, value) = match (&flow, event) {
            (None, _) => (0.0, 0.0),
            (Some(flow), None) => {
                let v = flow.advance(seg_gamma, time - seg_start);
                (v, v)
            }
            (Some(flow), Some(k)) => {
                let pre = flow.advance(seg_gamma, time - seg_start);
                let post = variance_update(pre, schedule.view_variance(k));
                seg_start = time;
                seg_gamma = post;
                (pre, post)
            }
        };
        traj.times.push(time);
        traj.gamma_minus.push(minus);
        traj.gamma.push(value);
        traj.is_information_date.push(event.is_some());
    }
    Ok(traj)
}

fn validate_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid must be nonempty".into()));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidGrid(format!(
                "grid must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if grid[0] < 0.0 || *grid.last().unwrap() > horizon * (1.0 + 1e-12) {
        return Err(Error::InvalidGrid(format!(
            "grid must stay inside [0, {horizon}]"
        )));
    }
    Ok(())
}

/// Merges the user grid with the schedule dates (for expert-using regimes)
/// and the interval endpoints. Returns `(time, event index)` pairs.
fn merge_grid(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
    grid: &[f64],
) -> Vec<(f64, Option<usize>)> {
    let horizon = params.horizon;
    let tol = TIME_MERGE_TOL * horizon.max(1.0);

    let mut base: Vec<f64> = Vec::with_capacity(grid.len() + 2);
    if grid[0] > tol {
        base.push(0.0);
    }
    base.extend_from_slice(grid);
    if horizon - *base.last().unwrap() > tol {
        base.push(horizon);
    }

    if !regime.uses_experts() {
        return base.into_iter().map(|t| (t, None)).collect();
    }

    let mut merged = Vec::with_capacity(base.len() + schedule.len());
    let mut bi = 0;
    for (k, (date, _)) in schedule.events(horizon).enumerate() {
        while bi < base.len() && base[bi] < date - tol {
            merged.push((base[bi], None));
            bi += 1;
        }
        // grid points within tolerance collapse onto the date itself
        while bi < base.len() && (base[bi] - date).abs() <= tol {
            bi += 1;
        }
        merged.push((date, Some(k)));
    }
    while bi < base.len() {
        merged.push((base[bi], None));
        bi += 1;
    }
    merged
}

// ---------------------------------------------------------------------------
// Pathwise filter runs
// ---------------------------------------------------------------------------

/// Observed data driving a pathwise filter run on a simulation grid.
///
/// Regimes consume different slices and ignore the rest: `R` needs the
/// return increments, `E` the expert views, `C` both, and `F` reads the
/// true drift values directly. Unused slices may be empty.
#[derive(Debug, Clone, Copy)]
pub struct ObservationSeries<'a> {
    /// Strictly increasing grid `0 = s_0 < ... < s_M = horizon`.
    pub times: &'a [f64],
    /// Return increments over `[s_i, s_{i+1}]`, length `M`.
    pub return_increments: &'a [f64],
    /// True drift at the grid points, length `M + 1` (regime `F`).
    pub drift: &'a [f64],
    /// Expert views aligned with the schedule dates.
    pub expert_views: &'a [f64],
}

/// Runs the filter of a regime along one simulated path.
///
/// Between information dates regimes `R`/`C` take explicit Euler steps of
/// the conditional-mean SDE while the variance follows its exact flow;
/// regime `E` propagates exactly and ignores the returns; regime `F` copies
/// the supplied drift. Information dates are snapped to the nearest grid
/// point. The variance columns of the result are deterministic and shared
/// by every path.
pub fn run_filter(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
    obs: &ObservationSeries<'_>,
) -> Result<FilterTrajectory> {
    params.validate()?;
    schedule.validate(params.horizon)?;
    validate_grid(obs.times, params.horizon)?;
    let n = obs.times.len();
    let tol = TIME_MERGE_TOL * params.horizon.max(1.0);
    if obs.times[0] != 0.0 || (obs.times[n - 1] - params.horizon).abs() > tol {
        return Err(Error::InvalidGrid("observation grid must cover [0, horizon]".into()));
    }
    if regime.uses_returns() && obs.return_increments.len() != n - 1 {
        return Err(Error::LengthMismatch(format!(
            "expected {} return increments, got {}",
            n - 1,
            obs.return_increments.len()
        )));
    }
    if regime == Regime::Full && obs.drift.len() != n {
        return Err(Error::LengthMismatch(format!(
            "expected {} drift values, got {}",
            n,
            obs.drift.len()
        )));
    }
    if regime.uses_experts() && obs.expert_views.len() != schedule.len() {
        return Err(Error::LengthMismatch(format!(
            "expected {} expert views, got {}",
            schedule.len(),
            obs.expert_views.len()
        )));
    }

    // events snapped to grid indices, in date order
    let mut events: Vec<(usize, usize)> = Vec::new();
    if regime.uses_experts() {
        for (k, (date, _)) in schedule.events(params.horizon).enumerate() {
            events.push((nearest_index(obs.times, date), k));
        }
    }

    let mut traj = FilterTrajectory {
        regime,
        times: obs.times.to_vec(),
        gamma_minus: Vec::with_capacity(n),
        gamma: Vec::with_capacity(n),
        mu_hat_minus: Vec::with_capacity(n),
        mu_hat: Vec::with_capacity(n),
        is_information_date: vec![false; n],
    };

    let mut state = if regime == Regime::Full {
        FilterState { mu_hat: obs.drift[0], gamma: 0.0, time: 0.0 }
    } else {
        FilterState { mu_hat: params.m0, gamma: params.nu0, time: 0.0 }
    };
    let mut next_event = 0;

    for i in 0..n {
        let minus = state;
        while next_event < events.len() && events[next_event].0 == i {
            let k = events[next_event].1;
            state = bayes_update(state, obs.expert_views[k], schedule.view_variance(k));
            traj.is_information_date[i] = true;
            next_event += 1;
        }
        traj.gamma_minus.push(minus.gamma);
        traj.gamma.push(state.gamma);
        traj.mu_hat_minus.push(minus.mu_hat);
        traj.mu_hat.push(state.mu_hat);

        if i + 1 < n {
            let dt = obs.times[i + 1] - obs.times[i];
            state = match regime {
                Regime::Full => FilterState {
                    mu_hat: obs.drift[i + 1],
                    gamma: 0.0,
                    time: obs.times[i + 1],
                },
                Regime::Experts => propagate_expert(state, params, dt),
                Regime::Returns | Regime::Combined => {
                    kalman_mean_step(state, params, obs.return_increments[i], dt)
                }
            };
        }
    }
    Ok(traj)
}

/// Index of the grid point nearest to `t` (ties resolve to the left).
pub(crate) fn nearest_index(times: &[f64], t: f64) -> usize {
    let right = times.partition_point(|&x| x < t);
    if right == 0 {
        return 0;
    }
    if right == times.len() {
        return times.len() - 1;
    }
    let left = right - 1;
    if (t - times[left]) <= (times[right] - t) {
        left
    } else {
        right
    }
}

//! Closed-form optimal values of the log-utility problem.
//!
//! For every information regime the maximal expected log terminal wealth is
//!
//! ```text
//! value(x0) = ln x0 + (A - B) / (2 sigma^2),
//! ```
//!
//! where `A` integrates the second moment of the drift over the horizon and
//! `B` integrates the regime's conditional variance. `B` is assembled
//! segment by segment from the inter-date flows, which makes arbitrary
//! (also non-equidistant) schedules and a positive first date work with the
//! same code path; for equidistant dates it reduces to the familiar sums.
//! The efficiency of a regime is `exp(-B / (2 sigma^2))`: the reciprocal of
//! the initial capital needed to match the fully informed investor.

use std::io;

use crate::error::{Error, Result};
use crate::filtering::{fold_variance_segments, ExpertSchedule, InterFlow, Regime};
use crate::market::ModelParams;
use crate::numfmt::sig6;

/// Integral of `E[mu_t^2]` over `[0, horizon]`.
pub fn second_moment_integral(params: &ModelParams) -> f64 {
    let stationary = params.stationary_variance();
    let excess_mean = params.m0 - params.delta;
    let t = params.horizon;
    let relax1 = -(-params.alpha * t).exp_m1() / params.alpha;
    let relax2 = -(-2.0 * params.alpha * t).exp_m1() / (2.0 * params.alpha);
    (params.delta * params.delta + stationary) * t
        + 2.0 * params.delta * excess_mean * relax1
        + (excess_mean * excess_mean + params.nu0 - stationary) * relax2
}

/// Integral of the conditional variance of `regime` over `[0, horizon]`,
/// in closed form.
pub fn variance_integral(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
) -> Result<f64> {
    params.validate()?;
    schedule.validate(params.horizon)?;
    let Some(flow) = InterFlow::for_regime(regime, params) else {
        return Ok(0.0);
    };
    let mut total = 0.0;
    fold_variance_segments(regime, params, schedule, |gamma, len| {
        total += flow.integral(gamma, len);
    });
    Ok(total)
}

/// Quadrature oracle for [`variance_integral`]: integrates the variance
/// curve itself by adaptive Simpson quadrature, segment by segment, to the
/// absolute tolerance `abs_tol`.
pub fn variance_integral_quadrature(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
    abs_tol: f64,
) -> Result<f64> {
    params.validate()?;
    schedule.validate(params.horizon)?;
    let Some(flow) = InterFlow::for_regime(regime, params) else {
        return Ok(0.0);
    };
    let mut total = 0.0;
    fold_variance_segments(regime, params, schedule, |gamma, len| {
        let tol = (abs_tol * len / params.horizon).max(1e-300);
        total += adaptive_simpson(&|u| flow.advance(gamma, u), 0.0, len, tol);
    });
    Ok(total)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Optimal expected log terminal wealth of `regime` for initial capital
/// `x0 > 0`.
pub fn value(
    regime: Regime,
    x0: f64,
    params: &ModelParams,
    schedule: &ExpertSchedule,
) -> Result<f64> {
    if !(x0 > 0.0) || !x0.is_finite() {
        return Err(Error::InvalidArgument(format!("initial capital must be > 0, got {x0}")));
    }
    let a = second_moment_integral(params);
    let b = variance_integral(regime, params, schedule)?;
    Ok(x0.ln() + (a - b) / (2.0 * params.sigma_sq()))
}

/// Required capital and efficiency of a regime relative to full
/// information.
#[derive(Debug, Clone, Copy)]
pub struct Efficiency {
    /// Capital `exp(B / (2 sigma^2))` needed to match the fully informed
    /// investor starting from unit wealth.
    pub required_capital: f64,
    /// `exp(-B / (2 sigma^2))`, the reciprocal of the required capital;
    /// lies in `(0, 1]`.
    pub efficiency: f64,
}

/// Efficiency of a regime: solves `value(required_capital) = full value(1)`.
pub fn efficiency(
    regime: Regime,
    params: &ModelParams,
    schedule: &ExpertSchedule,
) -> Result<Efficiency> {
    let b = variance_integral(regime, params, schedule)?;
    let exponent = b / (2.0 * params.sigma_sq());
    Ok(Efficiency { required_capital: exponent.exp(), efficiency: (-exponent).exp() })
}

/// Log-optimal portfolio fraction given the current filter value:
/// `mu_hat / sigma^2` (certainty equivalence).
pub fn optimal_fraction(mu_hat: f64, params: &ModelParams) -> f64 {
    mu_hat / params.sigma_sq()
}

/// One regime row of a [`ValueReport`].
#[derive(Debug, Clone, Copy)]
pub struct ValueRow {
    pub regime: Regime,
    /// Integral of the conditional variance (the `B` term).
    pub variance_integral: f64,
    pub value: f64,
    pub required_capital: f64,
    pub efficiency: f64,
}

/// Values, required capitals and efficiencies of all four regimes.
#[derive(Debug, Clone)]
pub struct ValueReport {
    pub x0: f64,
    /// The common `A` term.
    pub second_moment_integral: f64,
    pub rows: Vec<ValueRow>,
}

/// Computes the full per-regime value report for initial capital `x0`.
pub fn value_report(
    params: &ModelParams,
    schedule: &ExpertSchedule,
    x0: f64,
) -> Result<ValueReport> {
    let a = second_moment_integral(params);
    let mut rows = Vec::with_capacity(Regime::ALL.len());
    for regime in Regime::ALL {
        let b = variance_integral(regime, params, schedule)?;
        let eff = efficiency(regime, params, schedule)?;
        rows.push(ValueRow {
            regime,
            variance_integral: b,
            value: value(regime, x0, params, schedule)?,
            required_capital: eff.required_capital,
            efficiency: eff.efficiency,
        });
    }
    Ok(ValueReport { x0, second_moment_integral: a, rows })
}

impl ValueReport {
    /// CSV with columns `regime,a,b,value,x0_required,efficiency_percent`.
    pub fn write_csv<W: io::Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "regime,a,b,value,x0_required,efficiency_percent")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:.2}",
                row.regime,
                sig6(self.second_moment_integral),
                sig6(row.variance_integral),
                sig6(row.value),
                sig6(row.required_capital),
                100.0 * row.efficiency,
            )?;
        }
        Ok(())
    }

    /// Plain-text table for terminal output.
    pub fn to_table_string(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("x0 = {}, A = {}\n", sig6(self.x0), sig6(self.second_moment_integral)));
        s.push_str("regime        B        value   x0_required   efficiency%\n");
        for row in &self.rows {
            s.push_str(&format!(
                "{:<6} {:>9} {:>11.4} {:>12} {:>12.2}\n",
                row.regime.letter(),
                sig6(row.variance_integral),
                row.value,
                sig6(row.required_capital),
                100.0 * row.efficiency,
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::relaxation_segment;

    fn base() -> ModelParams {
        ModelParams::stationary(3.0, 1.0, 0.05, 0.25, 1.0).unwrap()
    }

    fn merton() -> ModelParams {
        ModelParams { alpha: 3.0, beta: 0.0, delta: 0.05, sigma: 0.25, m0: 0.05, nu0: 0.0, horizon: 1.0 }
    }

    #[test]
    fn second_moment_integral_stationary() {
        let a = second_moment_integral(&base());
        assert!((a - (0.0025 + 1.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn second_moment_integral_constant_drift() {
        let a = second_moment_integral(&merton());
        assert_eq!(a, 0.05 * 0.05);
    }

    #[test]
    fn second_moment_integral_matches_quadrature() {
        let p = ModelParams {
            alpha: 1.7,
            beta: 0.8,
            delta: 0.03,
            sigma: 0.3,
            m0: 0.12,
            nu0: 0.09,
            horizon: 2.5,
        };
        let numeric = adaptive_simpson(
            &|t| crate::market::drift_second_moment(&p, t),
            0.0,
            p.horizon,
            1e-12,
        );
        assert!((second_moment_integral(&p) - numeric).abs() < 1e-10);
    }

    #[test]
    fn returns_variance_integral_frozen_value() {
        // independently computed from the closed form and confirmed by
        // Simpson quadrature of the variance curve
        let b = variance_integral(Regime::Returns, &base(), &ExpertSchedule::none()).unwrap();
        assert!((b - 0.12903348022737096).abs() < 1e-12);
        // constant known drift has no estimation error at all
        let b0 = variance_integral(Regime::Returns, &merton(), &ExpertSchedule::none()).unwrap();
        assert_eq!(b0, 0.0);
    }

    #[test]
    fn combined_without_dates_equals_returns() {
        let p = base();
        let br = variance_integral(Regime::Returns, &p, &ExpertSchedule::none()).unwrap();
        let bc = variance_integral(Regime::Combined, &p, &ExpertSchedule::none()).unwrap();
        assert_eq!(br, bc);
    }

    #[test]
    fn uninformative_views_match_no_views() {
        let p = base();
        let none = variance_integral(Regime::Experts, &p, &ExpertSchedule::none()).unwrap();
        let inf = variance_integral(
            Regime::Experts,
            &p,
            &ExpertSchedule::equidistant(7, f64::INFINITY),
        )
        .unwrap();
        assert!((none - inf).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let p = base();
        let schedule = ExpertSchedule::equidistant(10, 0.25);
        for regime in [Regime::Returns, Regime::Experts, Regime::Combined] {
            let closed = variance_integral(regime, &p, &schedule).unwrap();
            let quad = variance_integral_quadrature(regime, &p, &schedule, 1e-9).unwrap();
            assert!(
                (closed - quad).abs() < 1e-8,
                "regime {regime}: closed {closed} vs quadrature {quad}"
            );
        }
        // leading quiet interval and irregular dates
        let schedule =
            ExpertSchedule::from_lists(vec![0.21, 0.34, 0.8], vec![0.4, f64::INFINITY, 0.05])
                .unwrap();
        for regime in [Regime::Experts, Regime::Combined] {
            let closed = variance_integral(regime, &p, &schedule).unwrap();
            let quad = variance_integral_quadrature(regime, &p, &schedule, 1e-9).unwrap();
            assert!((closed - quad).abs() < 1e-8);
        }
        assert_eq!(
            variance_integral_quadrature(Regime::Full, &p, &schedule, 1e-9).unwrap(),
            0.0
        );
    }

    #[test]
    fn value_examples() {
        let p = base();
        let schedule = ExpertSchedule::none();
        let v_full = value(Regime::Full, 1.0, &p, &schedule).unwrap();
        assert!((v_full - (0.0025 + 1.0 / 6.0) / 0.125).abs() < 1e-14);
        assert!((v_full - 1.3533).abs() < 1e-4);
        let v_r = value(Regime::Returns, 1.0, &p, &schedule).unwrap();
        assert!((v_r - 0.3211).abs() < 1e-4);
        assert!(value(Regime::Full, 0.0, &p, &schedule).is_err());
        assert!(value(Regime::Full, -2.0, &p, &schedule).is_err());
    }

    #[test]
    fn merton_case_is_exact() {
        let p = merton();
        let expected = 2.0f64.ln() + 0.05 * 0.05 / (2.0 * 0.0625);
        for regime in Regime::ALL {
            let v = value(regime, 2.0, &p, &ExpertSchedule::equidistant(5, 0.3)).unwrap();
            assert_eq!(v, expected);
        }
        assert_eq!(optimal_fraction(0.05, &p), 0.8);
    }

    #[test]
    fn efficiency_identities() {
        let p = base();
        let schedule = ExpertSchedule::equidistant(10, 0.25);
        for regime in Regime::ALL {
            let eff = efficiency(regime, &p, &schedule).unwrap();
            assert!((eff.required_capital * eff.efficiency - 1.0).abs() < 1e-14);
            assert!(eff.efficiency > 0.0 && eff.efficiency <= 1.0);
            // the required capital matches the fully informed unit investor
            let matched = value(regime, eff.required_capital, &p, &schedule).unwrap();
            let full = value(Regime::Full, 1.0, &p, &schedule).unwrap();
            assert!((matched - full).abs() < 1e-12);
        }
        let eff_full = efficiency(Regime::Full, &p, &schedule).unwrap();
        assert_eq!(eff_full.required_capital, 1.0);
        assert_eq!(eff_full.efficiency, 1.0);
    }

    #[test]
    fn value_ordering_across_regimes() {
        let p = base();
        for schedule in [
            ExpertSchedule::equidistant(10, 0.25),
            ExpertSchedule::equidistant(3, 1.0),
            ExpertSchedule::from_lists(vec![0.1, 0.5, 0.55], vec![0.04, 0.5, 2.0]).unwrap(),
        ] {
            let report = value_report(&p, &schedule, 1.0).unwrap();
            let by_regime = |r: Regime| report.rows.iter().find(|row| row.regime == r).unwrap();
            let (vr, ve, vc, vf) = (
                by_regime(Regime::Returns).value,
                by_regime(Regime::Experts).value,
                by_regime(Regime::Combined).value,
                by_regime(Regime::Full).value,
            );
            assert!(vf >= vc - 1e-12);
            assert!(vc >= ve.max(vr) - 1e-12);
        }
    }

    #[test]
    fn efficiency_monotone_in_view_variance() {
        let p = base();
        let mut prev_e = f64::INFINITY;
        let mut prev_c = f64::INFINITY;
        let rho_r = efficiency(Regime::Returns, &p, &ExpertSchedule::none()).unwrap().efficiency;
        for v in [0.01, 0.04, 0.25, 1.0, 4.0, 100.0] {
            let schedule = ExpertSchedule::equidistant(20, v);
            let e = efficiency(Regime::Experts, &p, &schedule).unwrap().efficiency;
            let c = efficiency(Regime::Combined, &p, &schedule).unwrap().efficiency;
            assert!(e <= prev_e + 1e-12);
            assert!(c <= prev_c + 1e-12);
            assert!(c >= rho_r - 1e-12, "combining observations never hurts");
            prev_e = e;
            prev_c = c;
        }
        // very unreliable experts leave essentially only the returns
        assert!((prev_c - rho_r).abs() < 1e-3);
    }

    #[test]
    fn known_initial_value_never_hurts_the_efficiency() {
        // a known initial value starts the filter error at zero; the
        // variance curve, its integral B and hence the required capital
        // are dominated pointwise by the unknown-initial-value run
        let p = base();
        let known = ModelParams { nu0: 0.0, ..p };
        for (regime, schedule) in [
            (Regime::Returns, ExpertSchedule::none()),
            (Regime::Experts, ExpertSchedule::equidistant(10, 0.25)),
            (Regime::Combined, ExpertSchedule::equidistant(10, 0.25)),
        ] {
            let b_known = variance_integral(regime, &known, &schedule).unwrap();
            let b_unknown = variance_integral(regime, &p, &schedule).unwrap();
            assert!(b_known <= b_unknown + 1e-12);
            let rho_known = efficiency(regime, &known, &schedule).unwrap().efficiency;
            let rho_unknown = efficiency(regime, &p, &schedule).unwrap().efficiency;
            assert!(rho_known >= rho_unknown - 1e-12);
            for i in 1..=20 {
                let t = p.horizon * i as f64 / 20.0;
                let g_known = crate::filtering::variance_at(regime, &known, &schedule, t).unwrap().1;
                let g_unknown = crate::filtering::variance_at(regime, &p, &schedule, t).unwrap().1;
                assert!(g_known <= g_unknown + 1e-12);
            }
        }
    }

    #[test]
    fn relaxation_integral_with_no_experts_matches_direct_quadrature() {
        let mut p = base();
        p.nu0 = 0.02;
        let closed = variance_integral(Regime::Experts, &p, &ExpertSchedule::none()).unwrap();
        let numeric =
            adaptive_simpson(&|t| relaxation_segment(p.nu0, &p, t), 0.0, p.horizon, 1e-12);
        assert!((closed - numeric).abs() < 1e-10);
    }
}

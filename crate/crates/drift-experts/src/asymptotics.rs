//! Long-run behaviour of the conditional variance.
//!
//! Without expert opinions the Riccati flow settles at
//! `c0 - alpha sigma^2`. With opinions arriving every `spacing` years at a
//! constant view variance the conditional variance turns into a sawtooth
//! whose limsup `upper` and liminf `lower` solve a fixed-point system: the
//! upper value is the inter-date flow applied to the lower one, and the
//! lower value is the Bayesian update of the upper one. Eliminating one
//! unknown leaves a quadratic with exactly one positive root.

use crate::error::{Error, Result};
use crate::filtering::{variance_at, variance_update, ExpertSchedule, InterFlow, Regime, RiccatiFlow};
use crate::market::ModelParams;

/// Iteration cap for the envelope fixed-point oracle.
const FIXED_POINT_MAX_ITER: usize = 1_000_000;

/// Long-run conditional variance of the returns-only filter,
/// `sigma sqrt(sigma^2 alpha^2 + beta^2) - alpha sigma^2`.
pub fn limit_variance_returns(params: &ModelParams) -> f64 {
    RiccatiFlow::new(params).equilibrium()
}

/// Threshold separating inter-date growth from decay of the conditional
/// variance: segments started above it decrease, below it increase.
pub fn monotone_threshold(regime: Regime, params: &ModelParams) -> f64 {
    match InterFlow::for_regime(regime, params) {
        Some(flow) => flow.equilibrium(),
        None => 0.0,
    }
}

/// Asymptotic sawtooth envelope of the conditional variance under
/// equidistant expert opinions with constant view variance.
#[derive(Debug, Clone, Copy)]
pub struct Envelope {
    pub regime: Regime,
    /// Spacing of the information dates.
    pub spacing: f64,
    /// Common view variance of the opinions.
    pub view_variance: f64,
    /// Per-interval discount factor of the inter-date flow.
    pub discount: f64,
    /// Quadratic coefficients whose positive root is `upper`.
    pub coeff_a: f64,
    pub coeff_b: f64,
    pub coeff_c: f64,
    /// limsup of the conditional variance.
    pub upper: f64,
    /// liminf of the conditional variance; equals the Bayesian update of
    /// `upper`.
    pub lower: f64,
}

/// Closed-form envelope for regimes `E` and `C`.
pub fn envelope(
    regime: Regime,
    params: &ModelParams,
    spacing: f64,
    view_variance: f64,
) -> Result<Envelope> {
    params.validate()?;
    if !regime.uses_experts() {
        return Err(Error::InvalidArgument(format!(
            "envelope is defined for regimes E and C, got {regime}"
        )));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidArgument(format!("spacing must be positive, got {spacing}")));
    }
    if !(view_variance > 0.0) || !view_variance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "view variance must be positive and finite, got {view_variance}"
        )));
    }

    let stationary = params.stationary_variance();
    let (discount, one_minus_d, coeff_a) = match regime {
        Regime::Experts => {
            let one_minus_d = -(-2.0 * params.alpha * spacing).exp_m1();
            (1.0 - one_minus_d, one_minus_d, 1.0)
        }
        Regime::Combined => {
            let flow = RiccatiFlow::new(params);
            let one_minus_d = -(-flow.rate * spacing).exp_m1();
            let d = 1.0 - one_minus_d;
            let a = (one_minus_d * (view_variance + flow.alpha_sigma2) + (1.0 + d) * flow.c0)
                / (2.0 * flow.alpha_sigma2);
            (d, one_minus_d, a)
        }
        _ => unreachable!(),
    };
    let coeff_b = -one_minus_d * (stationary - view_variance);
    let coeff_c = -one_minus_d * stationary * view_variance;

    let disc = coeff_b * coeff_b - 4.0 * coeff_a * coeff_c;
    assert!(disc > 0.0, "envelope quadratic must have two real roots");
    let sqrt_disc = disc.sqrt();
    // positive root, via the cancellation-free branch
    let upper = if coeff_b >= 0.0 {
        -2.0 * coeff_c / (coeff_b + sqrt_disc)
    } else {
        (-coeff_b + sqrt_disc) / (2.0 * coeff_a)
    };
    let lower = variance_update(upper, view_variance);

    Ok(Envelope {
        regime,
        spacing,
        view_variance,
        discount,
        coeff_a,
        coeff_b,
        coeff_c,
        upper,
        lower,
    })
}

/// Independent envelope oracle: iterates the exact per-date recursion
/// (inter-date flow followed by the Bayesian update) to its fixed point and
/// returns `(upper, lower)`.
pub fn envelope_fixed_point(
    regime: Regime,
    params: &ModelParams,
    spacing: f64,
    view_variance: f64,
) -> Result<(f64, f64)> {
    params.validate()?;
    if !regime.uses_experts() {
        return Err(Error::InvalidArgument(format!(
            "envelope is defined for regimes E and C, got {regime}"
        )));
    }
    let flow = InterFlow::for_regime(regime, params).expect("expert regimes have a flow");
    let mut post = flow.equilibrium();
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let pre = flow.advance(post, spacing);
        post = variance_update(pre, view_variance);
        if let Some((pre_old, post_old)) = prev {
            if (pre - pre_old).abs() < 1e-14 && (post - post_old).abs() < 1e-14 {
                return Ok((pre, post));
            }
        }
        prev = Some((pre, post));
    }
    Err(Error::NoConvergence(FIXED_POINT_MAX_ITER))
}

/// One row of the refinement study: the deterministic conditional variance
/// at the evaluation time under `count` equidistant opinions.
#[derive(Debug, Clone, Copy)]
pub struct ConvergencePoint {
    pub count: usize,
    pub gamma_experts: f64,
    pub gamma_combined: f64,
}

/// Evaluates the conditional variances of regimes `E` and `C` at `t_eval`
/// for a growing number of equidistant opinions with the common view
/// variance bound. Values shrink to zero as the partitions refine.
pub fn convergence_study(
    params: &ModelParams,
    view_variance: f64,
    t_eval: f64,
    counts: &[usize],
) -> Result<Vec<ConvergencePoint>> {
    params.validate()?;
    if !(t_eval > 0.0 && t_eval <= params.horizon) {
        return Err(Error::InvalidArgument(format!(
            "t_eval must lie in (0, {}], got {t_eval}",
            params.horizon
        )));
    }
    counts
        .iter()
        .map(|&count| {
            let schedule = ExpertSchedule::equidistant(count, view_variance);
            let gamma_experts = variance_at(Regime::Experts, params, &schedule, t_eval)?.1;
            let gamma_combined = variance_at(Regime::Combined, params, &schedule, t_eval)?.1;
            Ok(ConvergencePoint { count, gamma_experts, gamma_combined })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::riccati_segment;

    fn base() -> ModelParams {
        ModelParams::stationary(3.0, 1.0, 0.05, 0.25, 1.0).unwrap()
    }

    fn narrow() -> ModelParams {
        // alpha 2, beta 1, sigma 0.15
        ModelParams::stationary(2.0, 1.0, 0.05, 0.15, 1.0).unwrap()
    }

    #[test]
    fn limit_variance_values() {
        assert!((limit_variance_returns(&base()) - 0.125).abs() < 1e-15);
        assert!((limit_variance_returns(&narrow()) - 0.111605).abs() < 1e-6);
        let merton = ModelParams { beta: 0.0, nu0: 0.0, ..base() };
        assert_eq!(limit_variance_returns(&merton), 0.0);
    }

    #[test]
    fn thresholds() {
        let p = base();
        assert!((monotone_threshold(Regime::Combined, &p) - 0.125).abs() < 1e-15);
        assert!((monotone_threshold(Regime::Returns, &p) - 0.125).abs() < 1e-15);
        assert!((monotone_threshold(Regime::Experts, &p) - 1.0 / 6.0).abs() < 1e-15);
        // a segment started at the threshold stays there
        let thr = monotone_threshold(Regime::Combined, &p);
        assert!((riccati_segment(thr, &p, 0.7) - thr).abs() < 1e-14);
    }

    #[test]
    fn interdate_monotonicity_around_threshold() {
        let p = base();
        let thr = monotone_threshold(Regime::Combined, &p);
        for dt in [0.01, 0.1, 0.5] {
            assert!(riccati_segment(thr + 0.05, &p, dt) < thr + 0.05);
            assert!(riccati_segment(thr - 0.05, &p, dt) > thr - 0.05);
        }
        let thr_e = monotone_threshold(Regime::Experts, &p);
        for dt in [0.01, 0.1, 0.5] {
            assert!(crate::filtering::relaxation_segment(thr_e + 0.05, &p, dt) < thr_e + 0.05);
            assert!(crate::filtering::relaxation_segment(thr_e - 0.05, &p, dt) > thr_e - 0.05);
        }
    }

    #[test]
    fn envelope_matches_fixed_point_oracle() {
        // frozen values computed independently by iterating the per-date
        // recursion to its fixed point
        let p = narrow();
        let env_e = envelope(Regime::Experts, &p, 0.05, 1.0).unwrap();
        assert!((env_e.discount - (-0.2f64).exp()).abs() < 1e-15);
        assert!((env_e.upper - 0.155492249162).abs() < 1e-10);
        assert!((env_e.lower - 0.134567972459).abs() < 1e-10);
        let env_c = envelope(Regime::Combined, &p, 0.05, 1.0).unwrap();
        assert!((env_c.upper - 0.101663307988).abs() < 1e-10);
        assert!((env_c.lower - 0.092281650165).abs() < 1e-10);

        for regime in [Regime::Experts, Regime::Combined] {
            let env = envelope(regime, &p, 0.05, 1.0).unwrap();
            let (upper, lower) = envelope_fixed_point(regime, &p, 0.05, 1.0).unwrap();
            assert!((env.upper - upper).abs() < 1e-12);
            assert!((env.lower - lower).abs() < 1e-12);
            // fixed-point identities
            let flow = InterFlow::for_regime(regime, &p).unwrap();
            assert!((flow.advance(lower, 0.05) - upper).abs() < 1e-12);
            assert!(
                (lower - upper * 1.0 / (upper + 1.0)).abs() < 1e-12,
                "lower must be the update of upper"
            );
        }
    }

    #[test]
    fn envelope_bounds_and_small_spacing_limit() {
        let p = base();
        for (spacing, v) in [(0.01, 0.05), (0.1, 0.25), (0.5, 1.0), (1.0, 4.0)] {
            let e = envelope(Regime::Experts, &p, spacing, v).unwrap();
            assert!(e.upper <= p.stationary_variance() + 1e-12);
            assert!(e.lower <= e.upper && e.lower >= 0.0);
            let c = envelope(Regime::Combined, &p, spacing, v).unwrap();
            assert!(c.upper <= limit_variance_returns(&p) + 1e-12);
        }
        // vanishing spacing drives both bounds to zero
        for regime in [Regime::Experts, Regime::Combined] {
            let e = envelope(regime, &p, 1e-12, 0.25).unwrap();
            assert!(e.upper <= 1e-6 && e.lower <= 1e-6);
        }
    }

    #[test]
    fn envelope_monotone_in_spacing() {
        let p = base();
        for regime in [Regime::Experts, Regime::Combined] {
            let mut prev: Option<Envelope> = None;
            for i in 0..14 {
                let spacing = 1.0 * 0.5f64.powi(i);
                let env = envelope(regime, &p, spacing, 0.25).unwrap();
                if let Some(prev) = prev {
                    assert!(env.upper <= prev.upper + 1e-15);
                    assert!(env.lower <= prev.lower + 1e-15);
                }
                prev = Some(env);
            }
        }
    }

    #[test]
    fn uninformative_fixed_point_approaches_relaxation_equilibrium() {
        let p = base();
        let (upper, lower) = envelope_fixed_point(Regime::Experts, &p, 0.1, 1e12).unwrap();
        assert!((upper - p.stationary_variance()).abs() < 1e-10);
        assert!((lower - p.stationary_variance()).abs() < 1e-3);
    }

    #[test]
    fn envelope_rejects_bad_inputs() {
        let p = base();
        assert!(envelope(Regime::Returns, &p, 0.1, 0.25).is_err());
        assert!(envelope(Regime::Experts, &p, 0.0, 0.25).is_err());
        assert!(envelope(Regime::Experts, &p, 0.1, 0.0).is_err());
        assert!(envelope(Regime::Experts, &p, 0.1, f64::INFINITY).is_err());
    }

    #[test]
    fn convergence_study_shrinks_to_zero() {
        let p = base();
        let counts: Vec<usize> = (0..11).map(|j| 10usize << j).collect();
        let rows = convergence_study(&p, 0.25, 1.0, &counts).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].gamma_experts < w[0].gamma_experts);
            assert!(w[1].gamma_combined < w[0].gamma_combined);
        }
        let last = rows.last().unwrap();
        assert!(last.gamma_experts < 0.01);
        assert!(last.gamma_combined < 0.01);
    }

    #[test]
    fn convergence_study_uninformative_views_are_flat() {
        let p = base();
        let rows = convergence_study(&p, f64::INFINITY, 1.0, &[1, 10, 100]).unwrap();
        let relax = crate::filtering::relaxation_segment(p.nu0, &p, 1.0);
        let riccati = crate::filtering::riccati_segment(p.nu0, &p, 1.0);
        for row in &rows {
            assert!((row.gamma_experts - relax).abs() < 1e-12);
            assert!((row.gamma_combined - riccati).abs() < 1e-12);
        }
    }

    #[test]
    fn single_update_at_origin_is_pure_relaxation() {
        let p = base();
        let schedule = ExpertSchedule::equidistant(1, 0.25);
        let updated = variance_update(p.nu0, 0.25);
        let (_, value) = variance_at(Regime::Experts, &p, &schedule, 1.0).unwrap();
        assert!((value - crate::filtering::relaxation_segment(updated, &p, 1.0)).abs() < 1e-14);
    }
}

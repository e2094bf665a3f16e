//! Analytic stability thresholds and drift formulas.
//!
//! Thresholds are reported as the bound that the load `lambda * E[sigma]`
//! is compared against, so every policy reduces to the same predicate:
//! stable when `lambda * E[sigma] < threshold`.
//!
//! * linear policy: threshold 1;
//! * constant policy: threshold `(1 - r*(lambda)) / (lambda E[r])`;
//! * control policy: threshold `r*(lambda)`.
//!
//! The per-step driver mean (drift) is `lambda * E[sigma]` minus the
//! indicator success probability, which for the linear-policy majorant
//! with cutoff `C` is `1 - int_0^inf lambda e^{-lambda t} (1-F_e(t))^C dt`.

use serde::{Deserialize, Serialize};

use crate::dist::{RetrialSpec, Route, LAPLACE_QUAD_TOL};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::quad;

/// Quadrature tail mass for exponentially weighted integrals.
const EXP_TAIL: f64 = 1e-13;
/// Absolute error target for the majorant drift integral.
const MAJORANT_TOL: f64 = 1e-9;
/// Absolute error target for the versatile-policy nested quadrature.
const VERSATILE_OUTER_TOL: f64 = 1e-7;
const VERSATILE_INNER_TOL: f64 = 1e-9;
/// Search cap for the majorant cutoff.
const MAX_CUTOFF: u32 = 1 << 24;

/// Analytic threshold for one policy/parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub policy: Policy,
    /// The bound compared against `lambda * E[sigma]`; in (0, 1].
    pub value: f64,
    pub route: Route,
    /// Absolute error bound on `value` (0 for closed forms).
    pub error_bound: f64,
}

impl ThresholdReport {
    /// The stability predicate of the theorems.
    pub fn predicts_stable(&self, lambda: f64, mean_service: f64) -> bool {
        lambda * mean_service < self.value
    }
}

/// Analytic threshold for the given policy.
///
/// The constant policy requires a nonlattice retrial distribution.
pub fn threshold(policy: Policy, lambda: f64, retrial: &RetrialSpec) -> Result<ThresholdReport> {
    retrial.validate()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::HypothesisViolation(format!(
            "threshold requires lambda > 0, got {lambda}"
        )));
    }
    let route = retrial.laplace_route();
    let error_bound = match route {
        Route::ClosedForm => 0.0,
        Route::Quadrature => LAPLACE_QUAD_TOL,
    };
    let report = match policy {
        Policy::Linear => ThresholdReport {
            policy,
            value: 1.0,
            route: Route::ClosedForm,
            error_bound: 0.0,
        },
        Policy::Control => ThresholdReport {
            policy,
            value: retrial.laplace(lambda)?,
            route,
            error_bound,
        },
        Policy::Constant => {
            if !retrial.is_nonlattice() {
                return Err(Error::HypothesisViolation(
                    "constant-policy threshold requires a nonlattice retrial distribution".into(),
                ));
            }
            let transform = retrial.laplace(lambda)?;
            ThresholdReport {
                policy,
                value: (1.0 - transform) / (lambda * retrial.mean()),
                route,
                error_bound,
            }
        }
    };
    Ok(report)
}

/// Per-step driver mean `E[xi]` for the given policy.
///
/// `cutoff` is required for (and only for) the linear-policy majorant.
pub fn drift(
    policy: Policy,
    lambda: f64,
    mean_service: f64,
    retrial: &RetrialSpec,
    cutoff: Option<u32>,
) -> Result<f64> {
    match policy {
        Policy::Linear => {
            let c = cutoff.ok_or_else(|| {
                Error::InvalidParameters("linear majorant drift requires a cutoff".into())
            })?;
            Ok(lambda * mean_service - majorant_success_probability(lambda, retrial, c)?)
        }
        Policy::Constant | Policy::Control => {
            let report = threshold(policy, lambda, retrial)?;
            Ok(lambda * mean_service - report.value)
        }
    }
}

/// `P(min(pi_1, ..., pi_C) < gamma)` with independent equilibrium residuals
/// and an exponential(lambda) residual arrival:
/// `1 - int_0^inf lambda e^{-lambda t} (1 - F_e(t))^C dt`.
pub fn majorant_success_probability(
    lambda: f64,
    retrial: &RetrialSpec,
    cutoff: u32,
) -> Result<f64> {
    retrial.validate()?;
    if cutoff < 1 {
        return Err(Error::InvalidParameters("cutoff must be >= 1".into()));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::HypothesisViolation(format!(
            "majorant drift requires lambda > 0, got {lambda}"
        )));
    }
    let upper = -EXP_TAIL.ln() / lambda;
    let c = cutoff as i32;
    let f = |t: f64| lambda * (-lambda * t).exp() * retrial.equilibrium_survival(t).powi(c);
    let (value, _) = quad::integrate(&f, 0.0, upper, MAJORANT_TOL)?;
    Ok((1.0 - value).clamp(0.0, 1.0))
}

/// Least cutoff `C >= 1` whose majorant drift is strictly negative.
///
/// Exists whenever `lambda * E[sigma] < 1`; the drift is nonincreasing in
/// `C`, so the answer is located by doubling plus binary search.
pub fn min_cutoff(lambda: f64, mean_service: f64, retrial: &RetrialSpec) -> Result<u32> {
    let load = lambda * mean_service;
    if !(load < 1.0) {
        return Err(Error::HypothesisViolation(format!(
            "no majorant cutoff exists: lambda * E[sigma] = {load} >= 1"
        )));
    }
    let negative = |c: u32| -> Result<bool> {
        Ok(drift(Policy::Linear, lambda, mean_service, retrial, Some(c))? < 0.0)
    };
    if negative(1)? {
        return Ok(1);
    }
    let mut hi = 2u32;
    while !negative(hi)? {
        if hi >= MAX_CUTOFF {
            return Err(Error::NumericFailure {
                what: "majorant cutoff search",
                achieved: f64::INFINITY,
                required: MAX_CUTOFF as f64,
            });
        }
        hi *= 2;
    }
    let mut lo = hi / 2; // drift(lo) >= 0
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if negative(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Versatile-policy driver mean: the success indicator compares
/// `min_i(pi + r_i)` over `C` fresh retrial draws against the residual
/// arrival, where `pi` follows the equilibrium law of `orbit_spec`.
///
/// Evaluates
/// `lambda E[sigma] - [1 - int lambda e^{-lambda t} P(pi + min r >= t) dt]`
/// with `P(pi + min r >= t) = (1-G(t)) + int_0^t (1-R(t-s))^C dG(s)`
/// by nested adaptive quadrature.
pub fn drift_versatile(
    lambda: f64,
    mean_service: f64,
    cutoff: u32,
    orbit_spec: &RetrialSpec,
    retrial_spec: &RetrialSpec,
) -> Result<f64> {
    let p = versatile_success_probability(lambda, cutoff, orbit_spec, retrial_spec)?;
    Ok(lambda * mean_service - p)
}

/// `P(min(pi + r_1, ..., pi + r_C) < gamma)` for the versatile policy.
pub fn versatile_success_probability(
    lambda: f64,
    cutoff: u32,
    orbit_spec: &RetrialSpec,
    retrial_spec: &RetrialSpec,
) -> Result<f64> {
    orbit_spec.validate()?;
    retrial_spec.validate()?;
    if !orbit_spec.is_nonlattice() {
        return Err(Error::HypothesisViolation(
            "versatile drift requires a nonlattice orbit-time distribution".into(),
        ));
    }
    if cutoff < 1 {
        return Err(Error::InvalidParameters("cutoff must be >= 1".into()));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::HypothesisViolation(format!(
            "versatile drift requires lambda > 0, got {lambda}"
        )));
    }
    let orbit_mean = orbit_spec.mean();
    let c = cutoff as i32;
    // Equilibrium density of the orbit retrial time.
    let g = |s: f64| orbit_spec.survival(s) / orbit_mean;
    let no_success_at = |t: f64| -> Result<f64> {
        let inner = |s: f64| retrial_spec.survival(t - s).powi(c) * g(s);
        let (conv, _) = quad::integrate(&inner, 0.0, t, VERSATILE_INNER_TOL)?;
        Ok(orbit_spec.equilibrium_survival(t) + conv)
    };
    let upper = -EXP_TAIL.ln() / lambda;
    // Outer integrand; inner quadrature errors are folded into the outer
    // tolerance budget.
    let f = |t: f64| {
        lambda
            * (-lambda * t).exp()
            * no_success_at(t).unwrap_or(f64::NAN)
    };
    let (no_success, _) = quad::integrate(&f, 0.0, upper, VERSATILE_OUTER_TOL)?;
    if !no_success.is_finite() {
        return Err(Error::NumericFailure {
            what: "versatile nested quadrature",
            achieved: f64::INFINITY,
            required: 1e-6,
        });
    }
    Ok((1.0 - no_success).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn exp(rate: f64) -> RetrialSpec {
        RetrialSpec::exponential(rate).unwrap()
    }

    #[test]
    fn control_threshold_exponential() {
        let report = threshold(Policy::Control, 1.0, &exp(1.0)).unwrap();
        assert!((report.value - 0.5).abs() < 1e-15);
        assert_eq!(report.route, Route::ClosedForm);
        assert!(report.predicts_stable(1.0, 0.4));
        assert!(!report.predicts_stable(1.0, 0.6));
    }

    #[test]
    fn control_threshold_erlang() {
        // (mu / (lambda + mu))^n = (1/2)^2.
        let report = threshold(Policy::Control, 1.0, &RetrialSpec::erlang(2, 1.0).unwrap()).unwrap();
        assert!((report.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_threshold_exponential() {
        let report = threshold(Policy::Constant, 1.0, &exp(1.0)).unwrap();
        assert!((report.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_threshold_is_one() {
        let report = threshold(Policy::Linear, 2.0, &RetrialSpec::lognormal(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(report.value, 1.0);
    }

    #[test]
    fn constant_policy_rejects_lattice_retrials() {
        let err = threshold(Policy::Constant, 1.0, &RetrialSpec::deterministic(1.0).unwrap());
        assert!(matches!(err, Err(Error::HypothesisViolation(_))));
    }

    #[test]
    fn exponential_retrials_make_constant_and_control_coincide() {
        // Memorylessness: both reduce to theta / (lambda + theta).
        for lambda in [0.5, 1.0, 2.0] {
            for theta in [0.5, 1.0, 2.0] {
                let r = exp(theta);
                let a = threshold(Policy::Constant, lambda, &r).unwrap().value;
                let b = threshold(Policy::Control, lambda, &r).unwrap().value;
                let expect = theta / (lambda + theta);
                assert!((a - expect).abs() < 1e-12, "constant {a} vs {expect}");
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_convention_consistency() {
        // With the standard transform r*(lambda) = theta/(lambda+theta),
        // the constant-policy bound (1 - r*)/(lambda E[r]) simplifies to
        // theta/(lambda+theta). The literal variant lambda/(lambda+theta)
        // breaks that simplification off the diagonal lambda = theta.
        for lambda in [0.5f64, 1.0, 2.0] {
            for theta in [0.5f64, 1.0, 2.0] {
                let standard = theta / (lambda + theta);
                let mean_r = 1.0 / theta;
                let bound = (1.0 - standard) / (lambda * mean_r);
                assert!(
                    (bound - standard).abs() < 1e-12,
                    "standard transform must reproduce theta/(lambda+theta)"
                );
                let literal = lambda / (lambda + theta);
                let literal_bound = (1.0 - literal) / (lambda * mean_r);
                if (lambda - theta).abs() > 1e-9 {
                    assert!(
                        (literal_bound - standard).abs() > 1e-6,
                        "literal variant should not reproduce the specialization"
                    );
                }
            }
        }
    }

    #[test]
    fn control_drift_values() {
        let d = drift(Policy::Control, 1.0, 0.6, &exp(1.0), None).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        let d = drift(Policy::Constant, 1.0, 0.4, &exp(1.0), None).unwrap();
        assert!((d + 0.1).abs() < 1e-12);
    }

    #[test]
    fn drift_sign_matches_threshold_predicate() {
        let specs = [
            exp(1.0),
            RetrialSpec::erlang(2, 1.0).unwrap(),
            RetrialSpec::hyperexponential(0.3, 2.0).unwrap(),
        ];
        for spec in &specs {
            for policy in [Policy::Constant, Policy::Control] {
                for lambda in [0.5, 1.0, 2.0] {
                    let t = threshold(policy, lambda, spec).unwrap().value;
                    for ms in [0.3, 0.9, 1.4] {
                        let mean_service = ms * t / lambda;
                        let d = drift(policy, lambda, mean_service, spec, None).unwrap();
                        assert_eq!(
                            d < 0.0,
                            lambda * mean_service < t,
                            "{spec:?} {policy:?} lambda={lambda} ms={ms}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn majorant_success_closed_form_exponential() {
        // Equilibrium of exp(theta) is exp(theta); the C-way minimum is
        // exp(C*theta), so the probability is C*theta / (lambda + C*theta).
        for c in [1u32, 2, 5, 20] {
            let p = majorant_success_probability(1.0, &exp(1.0), c).unwrap();
            let expect = c as f64 / (1.0 + c as f64);
            assert!((p - expect).abs() < 1e-8, "C={c}: {p} vs {expect}");
        }
    }

    #[test]
    fn majorant_bracket_increases_to_one() {
        let spec = RetrialSpec::erlang(2, 1.0).unwrap();
        let mut prev = 0.0;
        for c in 1..=64 {
            let p = majorant_success_probability(0.7, &spec, c).unwrap();
            assert!(p >= prev - 1e-10, "bracket must be nondecreasing in C");
            prev = p;
        }
        let far = majorant_success_probability(0.7, &spec, 4096).unwrap();
        assert!(far > 0.999, "bracket should approach 1, got {far}");
    }

    #[test]
    fn majorant_cutoff_one_matches_constant_policy() {
        // With one equilibrium residual the indicator law is the
        // constant-policy law.
        for spec in [exp(2.0), RetrialSpec::erlang(3, 2.0).unwrap()] {
            let p = majorant_success_probability(1.3, &spec, 1).unwrap();
            let t = threshold(Policy::Constant, 1.3, &spec).unwrap().value;
            assert!((p - t).abs() < 1e-8, "{spec:?}: {p} vs {t}");
        }
    }

    #[test]
    fn min_cutoff_boundary_case() {
        // Exponential(1) retrials at lambda = 1: bracket = C/(C+1), so the
        // least C with 0.99 < C/(C+1) is exactly 100.
        let c = min_cutoff(1.0, 0.99, &exp(1.0)).unwrap();
        assert_eq!(c, 100);
        let d_at = drift(Policy::Linear, 1.0, 0.99, &exp(1.0), Some(c)).unwrap();
        let d_before = drift(Policy::Linear, 1.0, 0.99, &exp(1.0), Some(c - 1)).unwrap();
        assert!(d_at < 0.0 && d_before >= 0.0, "{d_before} then {d_at}");
    }

    #[test]
    fn min_cutoff_definition_on_grid() {
        let specs = [
            exp(1.0),
            RetrialSpec::erlang(2, 1.0).unwrap(),
            RetrialSpec::hyperexponential(0.3, 2.0).unwrap(),
        ];
        for spec in &specs {
            for load in [0.3, 0.6, 0.9] {
                let c = min_cutoff(1.0, load, spec).unwrap();
                let d = drift(Policy::Linear, 1.0, load, spec, Some(c)).unwrap();
                assert!(d < 0.0);
                if c > 1 {
                    let before = drift(Policy::Linear, 1.0, load, spec, Some(c - 1)).unwrap();
                    assert!(before >= 0.0, "{spec:?} load {load}: C-1 drift {before}");
                }
            }
        }
    }

    #[test]
    fn min_cutoff_requires_subcritical_load() {
        assert!(matches!(
            min_cutoff(1.0, 1.0, &exp(1.0)),
            Err(Error::HypothesisViolation(_))
        ));
    }

    #[test]
    fn majorant_drift_nonincreasing_in_cutoff() {
        let spec = RetrialSpec::hyperexponential(0.4, 1.5).unwrap();
        let mut prev = f64::INFINITY;
        for c in 1..=64 {
            let d = drift(Policy::Linear, 0.8, 0.9, &spec, Some(c)).unwrap();
            assert!(d <= prev + 1e-10);
            prev = d;
        }
    }

    #[test]
    fn versatile_degenerate_orbit_reduces_to_fresh_race() {
        // A near-degenerate orbit residual (deterministic, tiny) collapses
        // the convolution to int lambda e^{-lambda t} (1-R(t))^C dt.
        let orbit = RetrialSpec::lognormal(-14.0, 0.05).unwrap(); // ~ 8e-7
        let retrial = exp(1.0);
        let lambda = 1.0;
        let c = 3;
        let p = versatile_success_probability(lambda, c, &orbit, &retrial).unwrap();
        // C fresh exponential retrials race gamma: min ~ exp(C), so the
        // success probability is C/(lambda + C).
        let expect = 3.0 / 4.0;
        assert!((p - expect).abs() < 1e-4, "{p} vs {expect}");
    }

    #[test]
    fn versatile_exponential_closed_form() {
        // pi ~ exp(theta), min r ~ exp(C theta) independent, so
        // P(pi + min r < gamma) = theta/(lambda+theta) * C theta/(lambda + C theta).
        for (lambda, theta, c) in [(1.0, 1.0, 1u32), (1.0, 2.0, 1), (0.7, 1.5, 4)] {
            let spec = exp(theta);
            let p = versatile_success_probability(lambda, c, &spec, &spec).unwrap();
            let expect =
                theta / (lambda + theta) * (c as f64 * theta) / (lambda + c as f64 * theta);
            assert!((p - expect).abs() < 1e-6, "{p} vs {expect}");
        }
    }

    #[test]
    fn versatile_monte_carlo_oracle() {
        // C = 1, orbit = retrial = exp(theta): success probability equals
        // P(pi + r < gamma) by direct simulation.
        let theta = 1.0;
        let lambda = 1.0;
        let spec = exp(theta);
        let analytic = versatile_success_probability(lambda, 1, &spec, &spec).unwrap();
        let mut rng = RngStream::new(2024, 0);
        let n = 1_000_000;
        let mut hits = 0u64;
        for _ in 0..n {
            let pi = spec.sample_equilibrium(&mut rng).unwrap();
            let r = spec.sample(&mut rng);
            let gamma = rng.exponential(lambda);
            if pi + r < gamma {
                hits += 1;
            }
        }
        let empirical = hits as f64 / n as f64;
        assert!(
            (empirical - analytic).abs() < 0.005,
            "MC {empirical} vs quadrature {analytic}"
        );
    }

    #[test]
    fn versatile_drift_small_lambda_limit() {
        // As lambda -> 0 the residual arrival diverges, the success
        // probability tends to 1, and the drift tends to -1.
        let spec = exp(1.0);
        let p = versatile_success_probability(1e-4, 2, &spec, &spec).unwrap();
        assert!(p > 0.999, "success probability {p}");
        let d = drift_versatile(1e-4, 1.0, 2, &spec, &spec).unwrap();
        assert!((d + 1.0).abs() < 2e-3, "drift {d}");
    }

    #[test]
    fn hyperexponential_threshold_closed_vs_quadrature_grid() {
        // The two-phase closed form against the general-mixture and
        // quadrature routes.
        for p in [0.0, 0.3, 0.7] {
            for theta in [0.5, 1.0, 2.0] {
                for lambda in [0.5, 1.0, 2.0] {
                    let spec = RetrialSpec::hyperexponential(p, theta).unwrap();
                    let closed = spec.laplace(lambda).unwrap();
                    let paper = theta * (lambda * (p + (1.0 - p) * theta) + theta * theta)
                        / ((lambda + theta) * (lambda + theta * theta));
                    assert!(
                        (closed - paper).abs() < 1e-12,
                        "p={p} theta={theta} lambda={lambda}: {closed} vs {paper}"
                    );
                    let quadrature = spec.laplace_by_quadrature(lambda).unwrap();
                    assert!((closed - quadrature).abs() < 1e-9);
                }
            }
        }
    }
}

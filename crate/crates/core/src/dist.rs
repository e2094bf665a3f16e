//! Parametric positive distributions for retrial and orbit times.
//!
//! Each kind provides sampling, exact moments, the Laplace transform
//! `E[exp(-s r)]` (closed form where available, adaptive quadrature
//! otherwise), and the equilibrium (forward-recurrence) distribution
//! `F_e(t) = (1/E[r]) int_0^t (1 - R(x)) dx` from renewal theory, together
//! with an equilibrium sampler.
//!
//! Draws consumed by [`RetrialSpec::sample`] per kind:
//! exponential 1, hyperexponential 2, general_hyperexp 2, erlang `shape`,
//! deterministic 0, lognormal 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::RngStream;

/// Tail mass below which integrands are truncated in quadrature.
const TAIL_EPS: f64 = 1e-12;
/// Absolute error target for Laplace-transform quadrature.
pub const LAPLACE_QUAD_TOL: f64 = 1e-10;
/// Absolute tolerance (in t) for inverse-cdf equilibrium sampling.
const INVERSE_CDF_TOL: f64 = 1e-10;

/// How a Laplace transform or threshold value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    ClosedForm,
    Quadrature,
}

/// Parametric description of a positive retrial/orbit-time distribution.
///
/// Serializes as `{"kind": "...", "params": {...}}`. Deserialized values
/// should be checked with [`RetrialSpec::validate`]; the constructors below
/// reject inadmissible parameters up front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum RetrialSpec {
    /// Exponential with the given rate; mean `1/rate`.
    Exponential { rate: f64 },
    /// Two-phase hyperexponential with density
    /// `p*theta*exp(-theta x) + (1-p)*theta^2*exp(-theta^2 x)`, `0 <= p < 1`.
    Hyperexponential { p: f64, theta: f64 },
    /// General finite mixture of exponentials.
    GeneralHyperexp { weights: Vec<f64>, rates: Vec<f64> },
    /// Sum of `shape` i.i.d. exponentials with the given rate.
    Erlang { shape: u32, rate: f64 },
    /// Point mass at `value` (the only lattice kind here).
    Deterministic { value: f64 },
    /// `exp(location + scale * Z)` for standard normal `Z`.
    ///
    /// No closed-form transform; exercises the quadrature path.
    Lognormal { location: f64, scale: f64 },
}

impl RetrialSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        let spec = RetrialSpec::Exponential { rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn hyperexponential(p: f64, theta: f64) -> Result<Self> {
        let spec = RetrialSpec::Hyperexponential { p, theta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn general_hyperexp(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let spec = RetrialSpec::GeneralHyperexp { weights, rates };
        spec.validate()?;
        Ok(spec)
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self> {
        let spec = RetrialSpec::Erlang { shape, rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        let spec = RetrialSpec::Deterministic { value };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lognormal(location: f64, scale: f64) -> Result<Self> {
        let spec = RetrialSpec::Lognormal { location, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameters(msg));
        match self {
            RetrialSpec::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("exponential rate must be > 0, got {rate}"));
                }
            }
            RetrialSpec::Hyperexponential { p, theta } => {
                if !(p.is_finite() && (0.0..1.0).contains(p)) {
                    return bad(format!("hyperexponential p must be in [0,1), got {p}"));
                }
                if !(theta.is_finite() && *theta > 0.0) {
                    return bad(format!("hyperexponential theta must be > 0, got {theta}"));
                }
            }
            RetrialSpec::GeneralHyperexp { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return bad("weights and rates must be nonempty and equal-length".into());
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return bad("mixture weights must be nonnegative".into());
                }
                if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
                    return bad("mixture rates must be > 0".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("mixture weights must sum to 1, got {total}"));
                }
            }
            RetrialSpec::Erlang { shape, rate } => {
                if *shape < 1 {
                    return bad("erlang shape must be >= 1".into());
                }
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("erlang rate must be > 0, got {rate}"));
                }
            }
            RetrialSpec::Deterministic { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return bad(format!("deterministic value must be > 0, got {value}"));
                }
            }
            RetrialSpec::Lognormal { location, scale } => {
                if !location.is_finite() {
                    return bad("lognormal location must be finite".into());
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return bad(format!("lognormal scale must be > 0, got {scale}"));
                }
            }
        }
        Ok(())
    }

    /// Deterministic is concentrated on a lattice; every other kind here
    /// has a density and is nonlattice.
    pub fn is_nonlattice(&self) -> bool {
        !matches!(self, RetrialSpec::Deterministic { .. })
    }

    /// Exact first moment.
    pub fn mean(&self) -> f64 {
        match self {
            RetrialSpec::Exponential { rate } => 1.0 / rate,
            RetrialSpec::Hyperexponential { p, theta } => {
                p / theta + (1.0 - p) / (theta * theta)
            }
            RetrialSpec::GeneralHyperexp { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w / r)
                .sum(),
            RetrialSpec::Erlang { shape, rate } => *shape as f64 / rate,
            RetrialSpec::Deterministic { value } => *value,
            RetrialSpec::Lognormal { location, scale } => {
                (location + 0.5 * scale * scale).exp()
            }
        }
    }

    /// Exact variance.
    pub fn variance(&self) -> f64 {
        match self {
            RetrialSpec::Exponential { rate } => 1.0 / (rate * rate),
            RetrialSpec::Hyperexponential { p, theta } => {
                let t2 = theta * theta;
                let second = 2.0 * p / t2 + 2.0 * (1.0 - p) / (t2 * t2);
                let m = self.mean();
                second - m * m
            }
            RetrialSpec::GeneralHyperexp { weights, rates } => {
                let second: f64 = weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| 2.0 * w / (r * r))
                    .sum();
                let m = self.mean();
                second - m * m
            }
            RetrialSpec::Erlang { shape, rate } => *shape as f64 / (rate * rate),
            RetrialSpec::Deterministic { .. } => 0.0,
            RetrialSpec::Lognormal { location, scale } => {
                let s2 = scale * scale;
                (s2.exp() - 1.0) * (2.0 * location + s2).exp()
            }
        }
    }

    /// Cumulative distribution function `R(t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            RetrialSpec::Deterministic { value } => {
                if t >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 1.0 - self.survival(t),
        }
    }

    /// Survival function `1 - R(t)`, computed directly to avoid cancellation.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self {
            RetrialSpec::Exponential { rate } => (-rate * t).exp(),
            RetrialSpec::Hyperexponential { p, theta } => {
                p * (-theta * t).exp() + (1.0 - p) * (-theta * theta * t).exp()
            }
            RetrialSpec::GeneralHyperexp { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * (-r * t).exp())
                .sum(),
            RetrialSpec::Erlang { shape, rate } => erlang_survival(*shape, *rate, t),
            RetrialSpec::Deterministic { value } => {
                if t >= *value {
                    0.0
                } else {
                    1.0
                }
            }
            RetrialSpec::Lognormal { location, scale } => {
                normal_survival((t.ln() - location) / scale)
            }
        }
    }

    /// Probability density `r(t)`; `None` for the deterministic kind.
    pub fn density(&self, t: f64) -> Option<f64> {
        if t <= 0.0 {
            return match self {
                RetrialSpec::Deterministic { .. } => None,
                _ => Some(0.0),
            };
        }
        match self {
            RetrialSpec::Exponential { rate } => Some(rate * (-rate * t).exp()),
            RetrialSpec::Hyperexponential { p, theta } => {
                let t2 = theta * theta;
                Some(p * theta * (-theta * t).exp() + (1.0 - p) * t2 * (-t2 * t).exp())
            }
            RetrialSpec::GeneralHyperexp { weights, rates } => Some(
                weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| w * r * (-r * t).exp())
                    .sum(),
            ),
            RetrialSpec::Erlang { shape, rate } => {
                let n = *shape as f64;
                let log_pdf = n * rate.ln() + (n - 1.0) * t.ln() - rate * t - libm::lgamma(n);
                Some(log_pdf.exp())
            }
            RetrialSpec::Deterministic { .. } => None,
            RetrialSpec::Lognormal { location, scale } => {
                let z = (t.ln() - location) / scale;
                Some((-0.5 * z * z).exp() / (t * scale * (2.0 * std::f64::consts::PI).sqrt()))
            }
        }
    }

    /// Whether [`RetrialSpec::laplace`] uses a closed form for this kind.
    pub fn laplace_route(&self) -> Route {
        match self {
            RetrialSpec::Lognormal { .. } => Route::Quadrature,
            _ => Route::ClosedForm,
        }
    }

    /// Laplace transform `r*(s) = E[exp(-s r)]` for `s >= 0`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        assert!(s >= 0.0 && s.is_finite(), "laplace requires s >= 0");
        if s == 0.0 {
            return Ok(1.0);
        }
        match self {
            RetrialSpec::Exponential { rate } => Ok(rate / (s + rate)),
            RetrialSpec::Hyperexponential { p, theta } => {
                let t2 = theta * theta;
                Ok(p * theta / (s + theta) + (1.0 - p) * t2 / (s + t2))
            }
            RetrialSpec::GeneralHyperexp { weights, rates } => Ok(weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (s + r))
                .sum()),
            RetrialSpec::Erlang { shape, rate } => {
                Ok((rate / (s + rate)).powi(*shape as i32))
            }
            RetrialSpec::Deterministic { value } => Ok((-s * value).exp()),
            RetrialSpec::Lognormal { .. } => self.laplace_by_quadrature(s),
        }
    }

    /// Laplace transform by adaptive quadrature: `int exp(-st) r(t) dt`
    /// for kinds with a density, and the integration-by-parts identity
    /// `1 - s int exp(-st) (1 - R(t)) dt` for the deterministic kind.
    ///
    /// The independent route when cross-checking the closed forms.
    pub fn laplace_by_quadrature(&self, s: f64) -> Result<f64> {
        assert!(s >= 0.0 && s.is_finite());
        if s == 0.0 {
            return Ok(1.0);
        }
        // Truncation: beyond T the integrand is bounded by both the
        // distribution tail and the exp(-s t) factor.
        let upper = self.tail_quantile(TAIL_EPS).min(-TAIL_EPS.ln() / s);
        let value = if self.density(0.1).is_some() {
            let f = |t: f64| (-s * t).exp() * self.density(t).unwrap_or(0.0);
            quad::integrate_decaying(&f, 0.0, upper, LAPLACE_QUAD_TOL)?.0
        } else {
            let f = |t: f64| (-s * t).exp() * self.survival(t);
            let tol = LAPLACE_QUAD_TOL / s.max(1.0);
            1.0 - s * quad::integrate_decaying(&f, 0.0, upper, tol)?.0
        };
        Ok(value.clamp(0.0, 1.0))
    }

    /// Smallest `t` (up to a factor of 2) with `1 - R(t) <= eps`.
    pub fn tail_quantile(&self, eps: f64) -> f64 {
        match self {
            RetrialSpec::Exponential { rate } => -eps.ln() / rate,
            RetrialSpec::Hyperexponential { p, theta } => {
                let slowest = theta.min(theta * theta);
                let _ = p;
                -eps.ln() / slowest
            }
            RetrialSpec::GeneralHyperexp { rates, .. } => {
                let slowest = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                -eps.ln() / slowest
            }
            RetrialSpec::Deterministic { value } => *value,
            _ => {
                let mut t = self.mean().max(1e-12);
                while self.survival(t) > eps && t < 1e300 {
                    t *= 2.0;
                }
                t
            }
        }
    }

    /// Equilibrium (forward-recurrence) cdf
    /// `F_e(t) = (1/E[r]) int_0^t (1 - R(x)) dx`.
    ///
    /// Intended for nonlattice kinds; the deterministic kind (the one
    /// lattice case here) is supported anyway — its equilibrium law is
    /// uniform on `[0, value]` — for callers who use it deliberately.
    pub fn equilibrium_cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            RetrialSpec::Exponential { rate } => -(-rate * t).exp_m1(),
            RetrialSpec::Hyperexponential { .. } | RetrialSpec::GeneralHyperexp { .. } => {
                let mut acc = 0.0;
                self.for_each_phase(|w, r| acc += w / r * (-(-r * t).exp_m1()));
                acc / self.mean()
            }
            RetrialSpec::Erlang { shape, rate } => {
                // Uniform mixture of Erlang(1..=shape, rate) cdfs.
                let n = *shape;
                let mut acc = 0.0;
                for k in 1..=n {
                    acc += 1.0 - erlang_survival(k, *rate, t);
                }
                acc / n as f64
            }
            RetrialSpec::Deterministic { value } => (t / value).min(1.0),
            RetrialSpec::Lognormal { location, scale } => {
                // (1/M)[t S(t) + M Phi((ln t - mu - s^2)/s)] via the partial
                // first moment of the lognormal.
                let m = self.mean();
                let z2 = (t.ln() - location - scale * scale) / scale;
                let v = (t * self.survival(t) + m * normal_cdf(z2)) / m;
                v.clamp(0.0, 1.0)
            }
        }
    }

    /// `1 - F_e(t)`, direct where a stable form exists.
    pub fn equilibrium_survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self {
            RetrialSpec::Exponential { rate } => (-rate * t).exp(),
            RetrialSpec::Hyperexponential { .. } | RetrialSpec::GeneralHyperexp { .. } => {
                let mut acc = 0.0;
                self.for_each_phase(|w, r| acc += w / r * (-r * t).exp());
                acc / self.mean()
            }
            RetrialSpec::Erlang { shape, rate } => {
                let n = *shape;
                let mut acc = 0.0;
                for k in 1..=n {
                    acc += erlang_survival(k, *rate, t);
                }
                acc / n as f64
            }
            RetrialSpec::Deterministic { value } => (1.0 - t / value).max(0.0),
            RetrialSpec::Lognormal { .. } => (1.0 - self.equilibrium_cdf(t)).max(0.0),
        }
    }

    /// Draw from the distribution itself.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            RetrialSpec::Exponential { rate } => rng.exponential(*rate),
            RetrialSpec::Hyperexponential { p, theta } => {
                let rate = if rng.uniform() < *p {
                    *theta
                } else {
                    theta * theta
                };
                rng.exponential(rate)
            }
            RetrialSpec::GeneralHyperexp { weights, rates } => {
                let rate = pick_phase(weights, rates, rng.uniform());
                rng.exponential(rate)
            }
            RetrialSpec::Erlang { shape, rate } => {
                (0..*shape).map(|_| rng.exponential(*rate)).sum()
            }
            RetrialSpec::Deterministic { value } => *value,
            RetrialSpec::Lognormal { location, scale } => {
                (location + scale * rng.standard_normal()).exp()
            }
        }
    }

    /// Draw from the equilibrium distribution of this renewal interval.
    ///
    /// Closed-form samplers where the equilibrium law is explicit; the
    /// lognormal falls back to inverse-cdf bisection at absolute
    /// tolerance 1e-10 in t. Same lattice caveat as [`Self::equilibrium_cdf`].
    pub fn sample_equilibrium(&self, rng: &mut RngStream) -> Result<f64> {
        match self {
            // The exponential is its own equilibrium distribution.
            RetrialSpec::Exponential { rate } => Ok(rng.exponential(*rate)),
            RetrialSpec::Hyperexponential { .. } | RetrialSpec::GeneralHyperexp { .. } => {
                // Equilibrium of a hyperexponential is the same mixture with
                // weights w_i/r_i (normalized).
                let mean = self.mean();
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut chosen = f64::NAN;
                self.for_each_phase(|w, r| {
                    if chosen.is_nan() {
                        acc += w / r / mean;
                        if u <= acc {
                            chosen = r;
                        }
                    }
                });
                if chosen.is_nan() {
                    chosen = self.slowest_rate();
                }
                Ok(rng.exponential(chosen))
            }
            RetrialSpec::Erlang { shape, rate } => {
                // Uniform mixture over Erlang(1..=shape).
                let k = 1 + (rng.uniform() * *shape as f64) as u32;
                let k = k.min(*shape);
                Ok((0..k).map(|_| rng.exponential(*rate)).sum())
            }
            RetrialSpec::Deterministic { value } => Ok(rng.uniform() * value),
            RetrialSpec::Lognormal { .. } => {
                let u = rng.uniform();
                self.invert_equilibrium_cdf(u)
            }
        }
    }

    fn invert_equilibrium_cdf(&self, u: f64) -> Result<f64> {
        let mut hi = self.mean().max(1e-12);
        let mut guard = 0;
        while self.equilibrium_cdf(hi) < u {
            hi *= 2.0;
            guard += 1;
            if guard > 1100 {
                return Err(Error::NumericFailure {
                    what: "equilibrium inverse-cdf bracketing",
                    achieved: f64::INFINITY,
                    required: INVERSE_CDF_TOL,
                });
            }
        }
        let mut lo = 0.0;
        while hi - lo > INVERSE_CDF_TOL {
            let mid = 0.5 * (lo + hi);
            if self.equilibrium_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Same distribution with all times multiplied by `factor`.
    ///
    /// The two-phase hyperexponential loses its `(theta, theta^2)`
    /// parametrization under scaling and becomes a general mixture.
    pub fn scaled(&self, factor: f64) -> Result<RetrialSpec> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "scale factor must be > 0, got {factor}"
            )));
        }
        let spec = match self {
            RetrialSpec::Exponential { rate } => RetrialSpec::Exponential {
                rate: rate / factor,
            },
            RetrialSpec::Hyperexponential { p, theta } => RetrialSpec::GeneralHyperexp {
                weights: vec![*p, 1.0 - p],
                rates: vec![theta / factor, theta * theta / factor],
            },
            RetrialSpec::GeneralHyperexp { weights, rates } => RetrialSpec::GeneralHyperexp {
                weights: weights.clone(),
                rates: rates.iter().map(|r| r / factor).collect(),
            },
            RetrialSpec::Erlang { shape, rate } => RetrialSpec::Erlang {
                shape: *shape,
                rate: rate / factor,
            },
            RetrialSpec::Deterministic { value } => RetrialSpec::Deterministic {
                value: value * factor,
            },
            RetrialSpec::Lognormal { location, scale } => RetrialSpec::Lognormal {
                location: location + factor.ln(),
                scale: *scale,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    fn for_each_phase(&self, mut f: impl FnMut(f64, f64)) {
        match self {
            RetrialSpec::Hyperexponential { p, theta } => {
                f(*p, *theta);
                f(1.0 - p, theta * theta);
            }
            RetrialSpec::GeneralHyperexp { weights, rates } => {
                for (w, r) in weights.iter().zip(rates) {
                    f(*w, *r);
                }
            }
            _ => unreachable!("for_each_phase only applies to mixture kinds"),
        }
    }

    fn slowest_rate(&self) -> f64 {
        match self {
            RetrialSpec::Hyperexponential { theta, .. } => theta.min(theta * theta),
            RetrialSpec::GeneralHyperexp { rates, .. } => {
                rates.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            _ => unreachable!(),
        }
    }
}

fn pick_phase(weights: &[f64], rates: &[f64], u: f64) -> f64 {
    let mut acc = 0.0;
    for (w, r) in weights.iter().zip(rates) {
        acc += w;
        if u <= acc {
            return *r;
        }
    }
    *rates.last().expect("nonempty mixture")
}

/// `P(Erlang(shape, rate) > t) = exp(-rate t) sum_{k<shape} (rate t)^k / k!`.
fn erlang_survival(shape: u32, rate: f64, t: f64) -> f64 {
    let x = rate * t;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..shape {
        term *= x / k as f64;
        sum += term;
    }
    ((-x).exp() * sum).min(1.0)
}

/// Standard normal cdf via erfc.
pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function.
pub(crate) fn normal_survival(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

//! Parametric laws for the nominal distribution `μ` and the sampling
//! distribution `ν`, reproducible random streams, and importance-sampling
//! schemes carrying the likelihood ratio `w = dμ/dν`.

use std::fmt;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature::{self, QuadError, Tolerance};

/// Parameters of a supported family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Exponential { rate: f64 },
    Pareto { alpha: f64, scale: f64 },
    Normal { mean: f64, stdev: f64 },
    Lognormal { logmean: f64, logsd: f64 },
}

/// A validated univariate law with closed-form tail, density and
/// right-continuous tail inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticDistribution {
    family: Family,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

impl AnalyticDistribution {
    pub fn new(family: Family) -> Result<Self> {
        match family {
            Family::Exponential { rate } => {
                positive("rate", rate)?;
            }
            Family::Pareto { alpha, scale } => {
                positive("alpha", alpha)?;
                positive("scale", scale)?;
            }
            Family::Normal { mean, stdev } => {
                finite("mean", mean)?;
                positive("stdev", stdev)?;
            }
            Family::Lognormal { logmean, logsd } => {
                finite("logmean", logmean)?;
                positive("logsd", logsd)?;
            }
        }
        Ok(Self { family })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Family::Exponential { rate })
    }

    pub fn pareto(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Pareto { alpha, scale })
    }

    pub fn normal(mean: f64, stdev: f64) -> Result<Self> {
        Self::new(Family::Normal { mean, stdev })
    }

    pub fn lognormal(logmean: f64, logsd: f64) -> Result<Self> {
        Self::new(Family::Lognormal { logmean, logsd })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Closed support `[lo, hi]` (endpoints may be infinite).
    pub fn support(&self) -> (f64, f64) {
        match self.family {
            Family::Exponential { .. } => (0.0, f64::INFINITY),
            Family::Pareto { scale, .. } => (scale, f64::INFINITY),
            Family::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Lognormal { .. } => (0.0, f64::INFINITY),
        }
    }

    /// `T(t) = 1 - F(t) = μ((t, ∞))`.
    pub fn tail(&self, t: f64) -> f64 {
        match self.family {
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-rate * t).exp()
                }
            }
            Family::Pareto { alpha, scale } => {
                if t <= scale {
                    1.0
                } else {
                    (scale / t).powf(alpha)
                }
            }
            Family::Normal { mean, stdev } => normal::tail((t - mean) / stdev),
            Family::Lognormal { logmean, logsd } => {
                if t <= 0.0 {
                    1.0
                } else {
                    normal::tail((t.ln() - logmean) / logsd)
                }
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self.family {
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-rate * t).exp_m1()
                }
            }
            Family::Pareto { alpha, scale } => {
                if t <= scale {
                    0.0
                } else {
                    -(alpha * (scale / t).ln()).exp_m1()
                }
            }
            Family::Normal { mean, stdev } => normal::tail(-(t - mean) / stdev),
            Family::Lognormal { logmean, logsd } => {
                if t <= 0.0 {
                    0.0
                } else {
                    normal::tail(-(t.ln() - logmean) / logsd)
                }
            }
        }
    }

    /// `ln T(t)`, accurate deep in the upper tail.
    pub fn log_tail(&self, t: f64) -> f64 {
        match self.family {
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -rate * t
                }
            }
            Family::Pareto { alpha, scale } => {
                if t <= scale {
                    0.0
                } else {
                    -alpha * (t / scale).ln()
                }
            }
            Family::Normal { mean, stdev } => normal::log_tail((t - mean) / stdev),
            Family::Lognormal { logmean, logsd } => {
                if t <= 0.0 {
                    0.0
                } else {
                    normal::log_tail((t.ln() - logmean) / logsd)
                }
            }
        }
    }

    /// `ln F(t)`, accurate deep in the lower tail.
    pub fn log_cdf(&self, t: f64) -> f64 {
        match self.family {
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (-(-rate * t).exp_m1()).ln()
                }
            }
            Family::Pareto { alpha, scale } => {
                if t <= scale {
                    f64::NEG_INFINITY
                } else {
                    (-(scale / t).powf(alpha)).ln_1p()
                }
            }
            Family::Normal { mean, stdev } => normal::log_tail(-(t - mean) / stdev),
            Family::Lognormal { logmean, logsd } => {
                if t <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    normal::log_tail(-(t.ln() - logmean) / logsd)
                }
            }
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        let l = self.ln_density(t);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            l.exp()
        }
    }

    /// Log-density; `-∞` off the support.
    pub fn ln_density(&self, t: f64) -> f64 {
        match self.family {
            Family::Exponential { rate } => {
                if t < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * t
                }
            }
            Family::Pareto { alpha, scale } => {
                if t < scale {
                    f64::NEG_INFINITY
                } else {
                    alpha.ln() + alpha * scale.ln() - (alpha + 1.0) * t.ln()
                }
            }
            Family::Normal { mean, stdev } => normal::ln_pdf((t - mean) / stdev) - stdev.ln(),
            Family::Lognormal { logmean, logsd } => {
                if t <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let y = t.ln();
                    normal::ln_pdf((y - logmean) / logsd) - logsd.ln() - y
                }
            }
        }
    }

    /// Right-continuous tail inverse `T⁻¹(p) = inf{u : T(u) <= p}`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain {
                what: "probability level",
                value: p,
            });
        }
        Ok(self.tail_inverse(p))
    }

    /// `T⁻¹(u)` for `u` in `(0, 1)` without domain checking.
    pub(crate) fn tail_inverse(&self, u: f64) -> f64 {
        match self.family {
            Family::Exponential { rate } => -u.ln() / rate,
            Family::Pareto { alpha, scale } => scale * (-u.ln() / alpha).exp(),
            Family::Normal { mean, stdev } => mean + stdev * normal::tail_inverse(u),
            Family::Lognormal { logmean, logsd } => (logmean + logsd * normal::tail_inverse(u)).exp(),
        }
    }

    /// `T⁻¹(e^{-s})`, the upper-tail substitution used by [`Self::expect`].
    fn upper_from_log(&self, s: f64) -> f64 {
        match self.family {
            Family::Exponential { rate } => s / rate,
            Family::Pareto { alpha, scale } => scale * (s / alpha).exp(),
            _ => {
                let u = (-s).exp();
                if u <= 0.0 {
                    f64::INFINITY
                } else if u >= 1.0 {
                    self.support().0
                } else {
                    self.tail_inverse(u)
                }
            }
        }
    }

    /// `F⁻¹(e^{-s})`, the lower-tail substitution used by [`Self::expect`].
    fn lower_from_log(&self, s: f64) -> f64 {
        let v = (-s).exp();
        match self.family {
            Family::Exponential { rate } => -(-v).ln_1p() / rate,
            Family::Pareto { alpha, scale } => scale * (-(-v).ln_1p() / alpha).exp(),
            Family::Normal { mean, stdev } => {
                if v <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    mean - stdev * normal::tail_inverse(v)
                }
            }
            Family::Lognormal { logmean, logsd } => {
                if v <= 0.0 {
                    0.0
                } else {
                    (logmean - logsd * normal::tail_inverse(v)).exp()
                }
            }
        }
    }

    pub fn median(&self) -> f64 {
        self.tail_inverse(0.5)
    }

    /// Whether `E|X|^k` is finite.
    pub fn moment_finite(&self, k: f64) -> bool {
        match self.family {
            Family::Pareto { alpha, .. } => alpha > k,
            _ => true,
        }
    }

    pub fn mean(&self) -> Result<f64> {
        match self.family {
            Family::Exponential { rate } => Ok(1.0 / rate),
            Family::Pareto { alpha, scale } => {
                if alpha > 1.0 {
                    Ok(alpha * scale / (alpha - 1.0))
                } else {
                    Err(Error::Divergent(format!("pareto mean with alpha = {alpha}")))
                }
            }
            Family::Normal { mean, .. } => Ok(mean),
            Family::Lognormal { logmean, logsd } => Ok((logmean + 0.5 * logsd * logsd).exp()),
        }
    }

    /// Analytic Expected Shortfall `(1/p) ∫_0^p T⁻¹(u) du`.
    pub fn expected_shortfall(&self, p: f64) -> Result<f64> {
        let t = self.quantile(p)?;
        match self.family {
            Family::Exponential { rate } => Ok(t + 1.0 / rate),
            Family::Pareto { alpha, .. } => {
                if alpha > 1.0 {
                    Ok(t * alpha / (alpha - 1.0))
                } else {
                    Err(Error::Divergent(format!("pareto shortfall with alpha = {alpha}")))
                }
            }
            Family::Normal { mean, stdev } => {
                let z = (t - mean) / stdev;
                Ok(mean + stdev * normal::pdf(z) / p)
            }
            Family::Lognormal { logmean, logsd } => {
                let z = (t.ln() - logmean) / logsd;
                Ok((logmean + 0.5 * logsd * logsd).exp() * normal::tail(z - logsd) / p)
            }
        }
    }

    /// Analytic truncated shortfall `(1/p) ∫_q^p T⁻¹(u) du`.
    pub fn truncated_expected_shortfall(&self, q: f64, p: f64) -> Result<f64> {
        if !(q > 0.0 && q < p) {
            return Err(Error::InvalidLevels { q, p });
        }
        Ok((p * self.expected_shortfall(p)? - q * self.expected_shortfall(q)?) / p)
    }

    /// `∫_{(lo, hi]} g dμ` by adaptive quadrature after the substitution
    /// `x = T⁻¹(e^{-s})` above the median and `x = F⁻¹(e^{-s})` below it.
    /// `breaks` lists points where `g` jumps or kinks.
    pub fn expect<G: Fn(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        breaks: &[f64],
        tol: Tolerance,
        g: G,
    ) -> std::result::Result<f64, QuadError> {
        let (slo, shi) = self.support();
        let a = lo.max(slo);
        let b = hi.min(shi);
        if !(a < b) {
            return Ok(0.0);
        }
        let median = self.median();
        let mut pts = vec![a, b];
        pts.extend(breaks.iter().copied().chain([median]).filter(|&x| x > a && x < b));
        pts.sort_by(f64::total_cmp);
        pts.dedup();

        let mut total = 0.0;
        for w in pts.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            if x0 >= median {
                let s0 = -self.log_tail(x0);
                let s1 = -self.log_tail(x1);
                if !(s0 < s1) {
                    continue;
                }
                let h = |s: f64| {
                    let e = (-s).exp();
                    if e == 0.0 {
                        return 0.0;
                    }
                    let x = self.upper_from_log(s);
                    if !x.is_finite() {
                        return 0.0;
                    }
                    g(x) * e
                };
                total += quadrature::integrate_range(h, s0, s1, tol)?.value;
            } else {
                let s0 = -self.log_cdf(x1);
                let s1 = -self.log_cdf(x0);
                if !(s0 < s1) {
                    continue;
                }
                let h = |s: f64| {
                    let e = (-s).exp();
                    if e == 0.0 {
                        return 0.0;
                    }
                    let x = self.lower_from_log(s);
                    if !x.is_finite() {
                        return 0.0;
                    }
                    g(x) * e
                };
                total += quadrature::integrate_range(h, s0, s1, tol)?.value;
            }
        }
        Ok(total)
    }

    /// `n` draws by inverse transform from the given stream.
    pub fn sample(&self, stream: RandomStream, n: usize) -> Vec<f64> {
        let mut rng = stream.rng();
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                self.tail_inverse(u)
            })
            .collect()
    }
}

impl fmt::Display for AnalyticDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Exponential { rate } => write!(f, "exponential({rate})"),
            Family::Pareto { alpha, scale } => write!(f, "pareto({alpha},{scale})"),
            Family::Normal { mean, stdev } => write!(f, "normal({mean},{stdev})"),
            Family::Lognormal { logmean, logsd } => write!(f, "lognormal({logmean},{logsd})"),
        }
    }
}

/// A reproducible ChaCha8 stream. Streams sharing a seed but differing in
/// `stream_index` are independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    Unit,
    /// Exponential nominal law sampled from an exponential law of rate `theta`.
    ExponentialTilt {
        theta: f64,
    },
    /// Same-family pair differing in scale and/or location.
    ScaleShift,
    /// Generic `exp(ln f_μ - ln f_ν)`.
    DensityRatio,
}

/// Log-weight in a form whose evaluation never exceeds the analytic maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
enum LogWeight {
    Zero,
    /// `c0 - slope * x`, on `x >= 0`.
    Linear {
        c0: f64,
        slope: f64,
    },
    /// `c0 - slope * (ln x - ln x0)`, zero weight below `x0`.
    Power {
        c0: f64,
        slope: f64,
        x0: f64,
    },
    /// `c0 + a * (y - y0)^2` with `y = x` or `y = ln x`.
    Quadratic {
        c0: f64,
        a: f64,
        y0: f64,
        log_scale: bool,
    },
    /// `c0 + b * y` (equal spreads, shifted centers).
    Affine {
        c0: f64,
        b: f64,
        log_scale: bool,
    },
    Ratio,
}

/// The pair `(μ, ν)` and the likelihood ratio `w = dμ/dν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingScheme {
    nominal: AnalyticDistribution,
    sampler: AnalyticDistribution,
    kind: WeightKind,
    log_weight: LogWeight,
    weight_bound: Option<f64>,
    exp_moments_finite: bool,
}

/// A weight value with the off-support diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEval {
    pub value: f64,
    pub off_support: bool,
}

fn gaussian_log_ratio(m1: f64, s1: f64, m2: f64, s2: f64, log_scale: bool) -> (LogWeight, Option<f64>) {
    // ln w(y) = ln(s2/s1) - (y-m1)²/(2 s1²) + (y-m2)²/(2 s2²) = A y² + B y + C
    let a = 0.5 / (s2 * s2) - 0.5 / (s1 * s1);
    let b = m1 / (s1 * s1) - m2 / (s2 * s2);
    let c = (s2 / s1).ln() + 0.5 * m2 * m2 / (s2 * s2) - 0.5 * m1 * m1 / (s1 * s1);
    if a == 0.0 {
        let lw = LogWeight::Affine { c0: c, b, log_scale };
        let bound = (b == 0.0).then(|| c.exp());
        return (lw, bound);
    }
    let y0 = -b / (2.0 * a);
    let c0 = c - b * b / (4.0 * a);
    let lw = LogWeight::Quadratic { c0, a, y0, log_scale };
    (lw, (a < 0.0).then(|| c0.exp()))
}

impl SamplingScheme {
    /// Standard Monte Carlo: `ν = μ`, `w ≡ 1`.
    pub fn unit(mu: AnalyticDistribution) -> Self {
        Self {
            nominal: mu,
            sampler: mu,
            kind: WeightKind::Unit,
            log_weight: LogWeight::Zero,
            weight_bound: Some(1.0),
            exp_moments_finite: true,
        }
    }

    /// Builds the scheme for `(μ, ν)`, deriving the weight bound analytically
    /// for same-family pairs.
    pub fn new(mu: AnalyticDistribution, nu: AnalyticDistribution) -> Result<Self> {
        let (mu_lo, _) = mu.support();
        let (nu_lo, _) = nu.support();
        if mu_lo < nu_lo {
            return Err(Error::SupportViolation(format!(
                "{mu} has mass below {nu_lo} where {nu} has none"
            )));
        }
        if mu == nu {
            return Ok(Self::unit(mu));
        }
        let (kind, log_weight, bound) = match (mu.family(), nu.family()) {
            (Family::Exponential { rate: a }, Family::Exponential { rate: b }) => {
                let c0 = (a / b).ln();
                let slope = a - b;
                let bound = (slope >= 0.0).then(|| c0.exp());
                (
                    WeightKind::ExponentialTilt { theta: b },
                    LogWeight::Linear { c0, slope },
                    bound,
                )
            }
            (Family::Pareto { alpha: a1, scale: m1 }, Family::Pareto { alpha: a2, scale: m2 }) => {
                let c0 = (a1 / a2).ln() + a2 * (m1.ln() - m2.ln());
                let slope = a1 - a2;
                let bound = (slope >= 0.0).then(|| c0.exp());
                (WeightKind::ScaleShift, LogWeight::Power { c0, slope, x0: m1 }, bound)
            }
            (Family::Normal { mean: m1, stdev: s1 }, Family::Normal { mean: m2, stdev: s2 }) => {
                let (lw, bound) = gaussian_log_ratio(m1, s1, m2, s2, false);
                (WeightKind::ScaleShift, lw, bound)
            }
            (Family::Lognormal { logmean: m1, logsd: s1 }, Family::Lognormal { logmean: m2, logsd: s2 }) => {
                let (lw, bound) = gaussian_log_ratio(m1, s1, m2, s2, true);
                (WeightKind::ScaleShift, lw, bound)
            }
            _ => (WeightKind::DensityRatio, LogWeight::Ratio, None),
        };
        Ok(Self {
            nominal: mu,
            sampler: nu,
            kind,
            log_weight,
            weight_bound: bound,
            exp_moments_finite: bound.is_some(),
        })
    }

    /// Same pair, but with the weight evaluated through the generic density
    /// quotient instead of the simplified closed form.
    pub fn as_density_ratio(&self) -> Self {
        Self {
            kind: WeightKind::DensityRatio,
            log_weight: LogWeight::Ratio,
            ..*self
        }
    }

    pub fn nominal(&self) -> &AnalyticDistribution {
        &self.nominal
    }

    pub fn sampler(&self) -> &AnalyticDistribution {
        &self.sampler
    }

    pub fn weight_kind(&self) -> WeightKind {
        self.kind
    }

    pub fn is_unit(&self) -> bool {
        self.kind == WeightKind::Unit
    }

    /// `sup w` over the support of `ν`, when finite.
    pub fn weight_bound(&self) -> Option<f64> {
        self.weight_bound
    }

    /// Whether `E_ν[exp(α w(X))] < ∞` for every `α > 0` is certified.
    pub fn exp_moments_finite(&self) -> bool {
        self.exp_moments_finite
    }

    fn log_weight(&self, x: f64) -> f64 {
        let y_of = |log_scale: bool| if log_scale { x.ln() } else { x };
        match self.log_weight {
            LogWeight::Zero => 0.0,
            LogWeight::Linear { c0, slope } => c0 - slope * x,
            LogWeight::Power { c0, slope, x0 } => {
                if x < x0 {
                    f64::NEG_INFINITY
                } else {
                    c0 - slope * (x.ln() - x0.ln())
                }
            }
            LogWeight::Quadratic { c0, a, y0, log_scale } => {
                let d = y_of(log_scale) - y0;
                c0 + a * (d * d)
            }
            LogWeight::Affine { c0, b, log_scale } => c0 + b * y_of(log_scale),
            LogWeight::Ratio => self.nominal.ln_density(x) - self.sampler.ln_density(x),
        }
    }

    /// `w(x)` with a flag set when `x` lies outside the support of `ν`.
    pub fn weight_checked(&self, x: f64) -> WeightEval {
        if x.is_nan() || self.sampler.ln_density(x) == f64::NEG_INFINITY {
            return WeightEval {
                value: 0.0,
                off_support: true,
            };
        }
        let (mlo, _) = self.nominal.support();
        if x < mlo {
            return WeightEval {
                value: 0.0,
                off_support: false,
            };
        }
        let lw = self.log_weight(x);
        let value = if lw == f64::NEG_INFINITY || lw.is_nan() {
            0.0
        } else {
            lw.exp()
        };
        WeightEval {
            value,
            off_support: false,
        }
    }

    pub fn weight(&self, x: f64) -> f64 {
        self.weight_checked(x).value
    }

    /// `∫_{(lo, hi]} g dν`.
    pub fn expect_nu<G: Fn(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        breaks: &[f64],
        tol: Tolerance,
        g: G,
    ) -> std::result::Result<f64, QuadError> {
        let mut all = breaks.to_vec();
        all.push(self.nominal.support().0);
        self.sampler.expect(lo, hi, &all, tol, g)
    }

    /// Analytic verdict on `E_ν[|X|^k w(X)²] < ∞`; `None` when undecided.
    pub fn weighted_moment_finite(&self, k: f64) -> Option<bool> {
        match (self.nominal.family(), self.sampler.family()) {
            _ if self.is_unit() => Some(self.nominal.moment_finite(k)),
            (Family::Exponential { rate: a }, Family::Exponential { rate: b }) => Some(2.0 * a - b > 0.0),
            (Family::Pareto { alpha: a1, .. }, Family::Pareto { alpha: a2, .. }) => Some(2.0 * a1 - a2 > k),
            (Family::Normal { stdev: s1, .. }, Family::Normal { stdev: s2, .. })
            | (Family::Lognormal { logsd: s1, .. }, Family::Lognormal { logsd: s2, .. }) => {
                let c = s1 * s1 - 2.0 * s2 * s2;
                if c < 0.0 {
                    Some(true)
                } else if c > 0.0 {
                    Some(false)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

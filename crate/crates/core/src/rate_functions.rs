//! Moderate-deviation rate quantities for importance-sampling estimators of
//! quantiles and Expected Shortfall.
//!
//! Every integral is a one-dimensional adaptive quadrature against either the
//! nominal law `μ` or the sampling law `ν`, split at the relevant quantiles.

use std::fmt;
use std::sync::Arc;

use crate::distributions::{AnalyticDistribution, SamplingScheme};
use crate::error::{Error, Result};
use crate::quadrature::{self, QuadError, Tolerance, STRICT};

/// Tolerance used for all rate integrals.
pub const RATE_TOL: Tolerance = STRICT;

fn lift(what: &str, e: QuadError) -> Error {
    match e {
        QuadError::NoConvergence { .. } | QuadError::NonFinite { .. } => Error::Divergent(format!("{what}: {e}")),
    }
}

fn over_nu<G: Fn(f64) -> f64>(
    scheme: &SamplingScheme,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    what: &str,
    g: G,
) -> Result<f64> {
    scheme.expect_nu(lo, hi, breaks, RATE_TOL, g).map_err(|e| lift(what, e))
}

fn over_mu<G: Fn(f64) -> f64>(
    scheme: &SamplingScheme,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    what: &str,
    g: G,
) -> Result<f64> {
    scheme
        .nominal()
        .expect(lo, hi, breaks, RATE_TOL, g)
        .map_err(|e| lift(what, e))
}

fn require_weighted_moment(scheme: &SamplingScheme, k: f64, what: &str) -> Result<()> {
    if scheme.weighted_moment_finite(k) == Some(false) {
        return Err(Error::Divergent(format!(
            "{what}: E_nu[|X|^{k} w(X)^2] is infinite for {} sampled from {}",
            scheme.nominal(),
            scheme.sampler()
        )));
    }
    Ok(())
}

fn check_level(p: f64, what: &'static str) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { what, value: p })
    }
}

/// `E_ν[w(X)² 1{X > t}]`; exactly `T(t)` for the unit scheme.
pub fn tail_second_moment(scheme: &SamplingScheme, t: f64) -> Result<f64> {
    if scheme.is_unit() {
        return Ok(scheme.nominal().tail(t));
    }
    require_weighted_moment(scheme, 0.0, "weighted tail second moment")?;
    over_nu(scheme, t, f64::INFINITY, &[], "weighted tail second moment", |x| {
        let w = scheme.weight(x);
        w * w
    })
}

/// The pieces of `p²·σ²_{q,p}(w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaQpTerms {
    pub q: f64,
    pub p: f64,
    /// `(T⁻¹(q) − T⁻¹(p))² ∫_{T⁻¹(q)}^∞ w dν`.
    pub first: f64,
    /// The same with `w²` in place of `w`.
    pub first_squared_weight: f64,
    /// `∫_{T⁻¹(p)}^{T⁻¹(q)} (x − T⁻¹(p))² w² dν`.
    pub second: f64,
    /// `∫_{T⁻¹(p)}^{T⁻¹(q)} (x − T⁻¹(p)) dμ + q (T⁻¹(q) − T⁻¹(p))`.
    pub cross: f64,
    /// `∫_{T⁻¹(q)}^∞ w dν`, which should equal `q`.
    pub upper_weight_mass: f64,
}

impl SigmaQpTerms {
    pub fn value(&self) -> f64 {
        ((self.first + self.second - self.cross * self.cross) / (self.p * self.p)).max(0.0)
    }

    /// Variant with `w²` in the first term.
    pub fn value_squared_weight(&self) -> f64 {
        ((self.first_squared_weight + self.second - self.cross * self.cross) / (self.p * self.p)).max(0.0)
    }

    /// The first term after substituting `∫_{T⁻¹(q)}^∞ w dν = q`.
    pub fn first_simplified(&self, t_gap: f64) -> f64 {
        self.q * t_gap * t_gap
    }
}

pub fn sigma_qp_terms(scheme: &SamplingScheme, q: f64, p: f64) -> Result<SigmaQpTerms> {
    check_level(p, "level p")?;
    if !(q > 0.0 && q < p) {
        return Err(Error::InvalidLevels { q, p });
    }
    let mu = scheme.nominal();
    let tq = mu.quantile(q)?;
    let tp = mu.quantile(p)?;
    for t in [tq, tp] {
        if !(mu.density(t) > 0.0) {
            return Err(Error::DensityZero { at: t });
        }
    }
    let gap = tq - tp;
    let w = |x: f64| scheme.weight(x);
    let upper_weight_mass = over_nu(scheme, tq, f64::INFINITY, &[], "upper weight mass", w)?;
    let upper_sq = tail_second_moment(scheme, tq)?;
    let second = over_nu(scheme, tp, tq, &[], "truncated second moment", |x| {
        let d = (x - tp) * w(x);
        d * d
    })?;
    let inner = over_mu(scheme, tp, tq, &[], "truncated first moment", |x| x - tp)?;
    Ok(SigmaQpTerms {
        q,
        p,
        first: gap * gap * upper_weight_mass,
        first_squared_weight: gap * gap * upper_sq,
        second,
        cross: inner + q * gap,
        upper_weight_mass,
    })
}

/// `σ²_{q,p}(w)` with the first-power weight in the first term.
pub fn sigma_qp_squared(scheme: &SamplingScheme, q: f64, p: f64) -> Result<f64> {
    Ok(sigma_qp_terms(scheme, q, p)?.value())
}

/// `σ²_p(w) = p⁻² [∫_{t}^∞ (x − t)² w² dν − (∫_{t}^∞ (x − t) dμ)²]`, `t = T⁻¹(p)`.
pub fn sigma_p_squared(scheme: &SamplingScheme, p: f64) -> Result<f64> {
    check_level(p, "level p")?;
    let mu = scheme.nominal();
    if !mu.moment_finite(1.0) {
        return Err(Error::Divergent(format!("{mu} has no finite mean")));
    }
    require_weighted_moment(scheme, 2.0, "shortfall variance")?;
    let t = mu.quantile(p)?;
    let second = over_nu(scheme, t, f64::INFINITY, &[], "shortfall second moment", |x| {
        let d = (x - t) * scheme.weight(x);
        d * d
    })?;
    let first = over_mu(scheme, t, f64::INFINITY, &[], "shortfall first moment", |x| x - t)?;
    Ok(((second - first * first) / (p * p)).max(0.0))
}

/// `I_p^w(z) = z² / (2 σ²_p(w))`.
pub fn es_rate(scheme: &SamplingScheme, p: f64, z: f64) -> Result<f64> {
    es_rate_from_variance(sigma_p_squared(scheme, p)?, z)
}

pub fn es_rate_from_variance(sigma_sq: f64, z: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(z * z / (2.0 * sigma_sq))
}

/// Which of the three tail-level variational problems is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaKind {
    /// Quantile deviation: functional `(q / f(T⁻¹(q))) ∫_{T⁻¹(q)}^∞ w h dν`.
    Quantile,
    /// Shortfall tail: functional `∫ (x − T⁻¹(q))⁺ w h dν`.
    Shortfall,
    /// Tail level: functional `∫_{T⁻¹(q)}^∞ w h dν`.
    Tail,
}

impl KappaKind {
    pub const ALL: [KappaKind; 3] = [KappaKind::Quantile, KappaKind::Shortfall, KappaKind::Tail];

    pub fn label(self) -> &'static str {
        match self {
            KappaKind::Quantile => "kappa1",
            KappaKind::Shortfall => "kappa2",
            KappaKind::Tail => "kappa3",
        }
    }
}

/// The optimizer `h = a + b·g` is affine in a single feature `g`. This holds
/// `g`'s mean and second moment under `ν` and the functional's scale.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    t: f64,
    scale: f64,
    mean: f64,
    second: f64,
}

impl Affine {
    fn variance(&self) -> f64 {
        self.second - self.mean * self.mean
    }
}

fn feature(kind: KappaKind, t: f64, x: f64, w: f64) -> f64 {
    match kind {
        KappaKind::Quantile | KappaKind::Tail => {
            if x > t {
                w
            } else {
                0.0
            }
        }
        KappaKind::Shortfall => (x - t).max(0.0) * w,
    }
}

fn affine(scheme: &SamplingScheme, kind: KappaKind, q: f64) -> Result<Affine> {
    check_level(q, "level q")?;
    let mu = scheme.nominal();
    let t = mu.quantile(q)?;
    match kind {
        KappaKind::Quantile | KappaKind::Tail => {
            let scale = if kind == KappaKind::Quantile {
                let f = mu.density(t);
                if !(f > 0.0) {
                    return Err(Error::DensityZero { at: t });
                }
                q / f
            } else {
                1.0
            };
            Ok(Affine {
                t,
                scale,
                mean: q,
                second: tail_second_moment(scheme, t)?,
            })
        }
        KappaKind::Shortfall => {
            if !mu.moment_finite(2.0) {
                return Err(Error::Divergent(format!("{mu} has no finite second moment")));
            }
            require_weighted_moment(scheme, 2.0, "kappa2 denominator")?;
            let mean = over_mu(scheme, t, f64::INFINITY, &[], "kappa2 first moment", |x| x - t)?;
            let second = over_nu(scheme, t, f64::INFINITY, &[], "kappa2 second moment", |x| {
                let d = (x - t) * scheme.weight(x);
                d * d
            })?;
            Ok(Affine {
                t,
                scale: 1.0,
                mean,
                second,
            })
        }
    }
}

/// `κ(q, δ) = δ² / (2 c² Var_ν(g))` where `c` is the functional's scale.
pub fn kappa(scheme: &SamplingScheme, kind: KappaKind, q: f64, delta: f64) -> Result<f64> {
    let a = affine(scheme, kind, q)?;
    let var = if scheme.is_unit() && kind != KappaKind::Shortfall {
        q - q * q
    } else {
        a.variance()
    };
    if !(var > 0.0) {
        return Err(Error::NonPositiveDenominator {
            what: kind.label(),
            value: var,
        });
    }
    Ok(delta * delta / (2.0 * a.scale * a.scale * var))
}

pub fn kappa1(scheme: &SamplingScheme, q: f64, delta: f64) -> Result<f64> {
    kappa(scheme, KappaKind::Quantile, q, delta)
}

pub fn kappa2(scheme: &SamplingScheme, q: f64, delta: f64) -> Result<f64> {
    kappa(scheme, KappaKind::Shortfall, q, delta)
}

pub fn kappa3(scheme: &SamplingScheme, q: f64, delta: f64) -> Result<f64> {
    kappa(scheme, KappaKind::Tail, q, delta)
}

/// The four moments in the expanded `κ₂` denominator, all over
/// `{X > T⁻¹(q)}`: `E_ν[w²]`, `E_ν[X w²]`, `E_ν[X² w²]`, `E_μ[X]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa2Moments {
    pub t: f64,
    pub q: f64,
    pub w2: f64,
    pub x_w2: f64,
    pub x2_w2: f64,
    pub x_mu: f64,
}

impl Kappa2Moments {
    pub fn denominator(&self) -> f64 {
        let m = self.x_mu - self.q * self.t;
        self.t * self.t * self.w2 - 2.0 * self.t * self.x_w2 + self.x2_w2 - m * m
    }
}

pub fn kappa2_moments(scheme: &SamplingScheme, q: f64) -> Result<Kappa2Moments> {
    check_level(q, "level q")?;
    require_weighted_moment(scheme, 2.0, "kappa2 moments")?;
    let t = scheme.nominal().quantile(q)?;
    let w2 = |x: f64| {
        let w = scheme.weight(x);
        w * w
    };
    let inf = f64::INFINITY;
    Ok(Kappa2Moments {
        t,
        q,
        w2: over_nu(scheme, t, inf, &[], "E[w^2 I]", w2)?,
        x_w2: over_nu(scheme, t, inf, &[], "E[X w^2 I]", |x| x * w2(x))?,
        x2_w2: over_nu(scheme, t, inf, &[], "E[X^2 w^2 I]", |x| x * x * w2(x))?,
        x_mu: over_mu(scheme, t, inf, &[], "E[X I]", |x| x)?,
    })
}

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A signed density `h = dη/dν` of a perturbation of the sampling law.
#[derive(Clone)]
pub struct PerturbationDensity {
    eval: Evaluator,
    tag: String,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for PerturbationDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationDensity")
            .field("tag", &self.tag)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl PerturbationDensity {
    /// `breakpoints` lists points where `h` jumps or kinks.
    pub fn new<F>(tag: impl Into<String>, breakpoints: Vec<f64>, h: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(h),
            tag: tag.into(),
            breakpoints,
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", Vec::new(), |_| 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn scaled(&self, c: f64) -> Self {
        let inner = Arc::clone(&self.eval);
        Self {
            eval: Arc::new(move |x| c * inner(x)),
            tag: format!("{c}*{}", self.tag),
            breakpoints: self.breakpoints.clone(),
        }
    }
}

/// `½ ∫ h² dν`.
pub fn perturbation_rate(scheme: &SamplingScheme, h: &PerturbationDensity) -> Result<f64> {
    let e = over_nu(
        scheme,
        f64::NEG_INFINITY,
        f64::INFINITY,
        h.breakpoints(),
        "perturbation energy",
        |x| {
            let v = h.eval(x);
            v * v
        },
    )?;
    Ok(0.5 * e)
}

/// `∫ h dν`.
pub fn centering(scheme: &SamplingScheme, h: &PerturbationDensity) -> Result<f64> {
    over_nu(
        scheme,
        f64::NEG_INFINITY,
        f64::INFINITY,
        h.breakpoints(),
        "perturbation mass",
        |x| h.eval(x),
    )
}

/// The constraint functional of the given problem at level `q`.
pub fn constraint_functional(scheme: &SamplingScheme, kind: KappaKind, q: f64, h: &PerturbationDensity) -> Result<f64> {
    check_level(q, "level q")?;
    let mu = scheme.nominal();
    let t = mu.quantile(q)?;
    let scale = match kind {
        KappaKind::Quantile => {
            let f = mu.density(t);
            if !(f > 0.0) {
                return Err(Error::DensityZero { at: t });
            }
            q / f
        }
        _ => 1.0,
    };
    let mut breaks = h.breakpoints().to_vec();
    breaks.push(t);
    let v = over_nu(scheme, t, f64::INFINITY, &breaks, "constraint functional", |x| {
        feature(kind, t, x, scheme.weight(x)) * h.eval(x)
    })?;
    Ok(scale * v)
}

/// Closed-form Lagrange multipliers of the quantile problem: the optimizer
/// is `−λ₁` below `T⁻¹(q)` and `−λ₁ − λ₂ (q / f) w(x)` above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multipliers {
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Minimizer of `½∫h²dν` subject to `∫h dν = 0` and functional `= −δ`.
pub fn optimal_perturbation_for(
    scheme: &SamplingScheme,
    kind: KappaKind,
    q: f64,
    delta: f64,
) -> Result<(PerturbationDensity, Multipliers)> {
    let a = affine(scheme, kind, q)?;
    let var = if scheme.is_unit() && kind != KappaKind::Shortfall {
        q - q * q
    } else {
        a.variance()
    };
    if !(var > 0.0) {
        return Err(Error::NonPositiveDenominator {
            what: kind.label(),
            value: var,
        });
    }
    let slope = -delta / (a.scale * var);
    let level = -slope * a.mean;
    let mult = Multipliers {
        lambda1: -level,
        lambda2: -slope / a.scale,
    };
    let t = a.t;
    let s = *scheme;
    let h = PerturbationDensity::new(
        format!("{}-optimal(q={q},delta={delta})", kind.label()),
        vec![t],
        move |x| level + slope * feature(kind, t, x, s.weight(x)),
    );
    Ok((h, mult))
}

/// Optimizer of the `κ₁` problem.
pub fn optimal_perturbation(scheme: &SamplingScheme, q: f64, delta: f64) -> Result<PerturbationDensity> {
    Ok(optimal_perturbation_for(scheme, KappaKind::Quantile, q, delta)?.0)
}

/// Second moment of `Z(α) = (1/p)(X − T⁻¹(p))⁺ − (1/p)∫_{T⁻¹(p)}^∞ T(x)dx`
/// with `p = 1 − α`.
pub fn gao_wang_variance(mu: &AnalyticDistribution, alpha: f64) -> Result<f64> {
    let (second, _) = gao_wang_moments(mu, alpha)?;
    Ok(second)
}

/// `(E[Z(α)²], E[Z(α)])`, integrating over the whole line.
pub fn gao_wang_moments(mu: &AnalyticDistribution, alpha: f64) -> Result<(f64, f64)> {
    check_level(alpha, "alpha")?;
    if !mu.moment_finite(2.0) {
        return Err(Error::Divergent(format!("{mu} has no finite second moment")));
    }
    let p = 1.0 - alpha;
    let t = mu.quantile(p)?;
    let tail_integral = quadrature::integrate_to_infinity(|x| mu.tail(x), t, RATE_TOL)
        .map_err(|e| lift("integrated tail", e))?
        .value;
    let c = tail_integral / p;
    let z = |x: f64| (x - t).max(0.0) / p - c;
    let whole = |g: &dyn Fn(f64) -> f64, what: &str| {
        mu.expect(f64::NEG_INFINITY, f64::INFINITY, &[t], RATE_TOL, g)
            .map_err(|e| lift(what, e))
    };
    let second = whole(&|x| z(x) * z(x), "E[Z^2]")?;
    let first = whole(&z, "E[Z]")?;
    Ok((second, first))
}

/// Half-width of the MDP-based interval for the shortfall estimate.
pub fn mdp_confidence_interval(scheme: &SamplingScheme, p: f64, n: usize, significance: f64) -> Result<f64> {
    let sigma_sq = sigma_p_squared(scheme, p)?;
    mdp_half_width(sigma_sq, n, significance)
}

/// `σ √(2 ln(1/significance)) / √n`.
pub fn mdp_half_width(sigma_sq: f64, n: usize, significance: f64) -> Result<f64> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::Domain {
            what: "significance",
            value: significance,
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(sigma_sq > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(sigma_sq.sqrt() * (2.0 * (1.0 / significance).ln()).sqrt() / (n as f64).sqrt())
}

/// The same half-width obtained by inverting `exp(−λ² z² / (2σ²))` on the
/// `b_n` scale and dividing by `b_n = √n / λ`.
pub fn mdp_half_width_via_speed(sigma_sq: f64, n: usize, lambda_n: f64, significance: f64) -> Result<f64> {
    if !(lambda_n > 0.0) {
        return Err(Error::Domain {
            what: "lambda_n",
            value: lambda_n,
        });
    }
    let _ = mdp_half_width(sigma_sq, n, significance)?;
    let z = (2.0 * sigma_sq * (1.0 / significance).ln()).sqrt() / lambda_n;
    let b_n = (n as f64).sqrt() / lambda_n;
    Ok(z / b_n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaEntry {
    pub q: f64,
    pub delta: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

/// Rate quantities for one scheme at one shortfall level.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub p: f64,
    pub sigma_p_sq: f64,
    pub sigma_qp_sq: Vec<(f64, f64)>,
    pub kappas: Vec<KappaEntry>,
    pub es_rate_at: Vec<(f64, f64)>,
}

impl RateReport {
    /// `σ²_{q,p}` is reported only for levels `q < p`; the kappas use every `q`.
    pub fn compute(scheme: &SamplingScheme, p: f64, qs: &[f64], deltas: &[f64], zs: &[f64]) -> Result<Self> {
        let sigma_p_sq = sigma_p_squared(scheme, p)?;
        let sigma_qp_sq = qs
            .iter()
            .filter(|&&q| q < p)
            .map(|&q| Ok((q, sigma_qp_squared(scheme, q, p)?)))
            .collect::<Result<_>>()?;
        let mut kappas = Vec::new();
        for &q in qs {
            for &delta in deltas {
                kappas.push(KappaEntry {
                    q,
                    delta,
                    kappa1: kappa1(scheme, q, delta)?,
                    kappa2: kappa2(scheme, q, delta)?,
                    kappa3: kappa3(scheme, q, delta)?,
                });
            }
        }
        let es_rate_at = zs
            .iter()
            .map(|&z| Ok((z, es_rate_from_variance(sigma_p_sq, z)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            p,
            sigma_p_sq,
            sigma_qp_sq,
            kappas,
            es_rate_at,
        })
    }

    /// Flat `(key, value)` view in a stable order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = vec![("p".to_string(), self.p), ("sigma_p_sq".to_string(), self.sigma_p_sq)];
        for &(q, v) in &self.sigma_qp_sq {
            out.push((format!("sigma_qp_sq[q={q}]"), v));
        }
        for k in &self.kappas {
            let (q, d) = (k.q, k.delta);
            out.push((format!("kappa1[q={q};delta={d}]"), k.kappa1));
            out.push((format!("kappa2[q={q};delta={d}]"), k.kappa2));
            out.push((format!("kappa3[q={q};delta={d}]"), k.kappa3));
        }
        for &(z, v) in &self.es_rate_at {
            out.push((format!("es_rate[z={z}]"), v));
        }
        out
    }
}

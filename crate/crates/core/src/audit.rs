//! Checks of the hypotheses behind the moderate-deviation results: the
//! growth condition on the speed sequence, feasibility of the sampling
//! scheme, the four tail assumptions along a level sequence `q_m → 0`, and
//! regular-variation diagnostics.

use std::fmt;

use crate::distributions::{AnalyticDistribution, SamplingScheme, WeightKind};
use crate::error::{Error, Result};
use crate::quadrature::{QuadError, Tolerance};
use crate::rate_functions::{tail_second_moment, RATE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// `λ_n = n^β` together with the constants `A ≥ 1`, `δ ∈ (0, 1)` of the
/// growth condition `λ_{nk} ≤ A k^{1/2 − δ} λ_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSpec {
    pub beta: f64,
    pub a: f64,
    pub delta: f64,
}

impl LambdaSpec {
    pub fn new(beta: f64, a: f64, delta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 0.5) {
            return Err(Error::Domain {
                what: "beta",
                value: beta,
            });
        }
        if !(a >= 1.0 && a.is_finite()) {
            return Err(Error::Domain { what: "A", value: a });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain {
                what: "delta",
                value: delta,
            });
        }
        Ok(Self { beta, a, delta })
    }

    pub fn lambda(&self, n: f64) -> f64 {
        n.powf(self.beta)
    }

    /// `b_n = √n / λ_n`.
    pub fn b(&self, n: f64) -> f64 {
        n.powf(0.5 - self.beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCheck {
    pub verdict: Verdict,
    /// Whether `β ≤ 1/2 − δ`.
    pub analytic: bool,
    /// Whether the inequality held at every `(n, k)` of the sweep.
    pub numeric: bool,
    pub k_max: u64,
}

/// Decides the growth condition for `λ_n = n^β` analytically and confirms it
/// on `n ∈ {2, …, 1024}`, `k ∈ {2, …, k_max}`.
pub fn check_lambda_condition(spec: &LambdaSpec, k_max: u64) -> LambdaCheck {
    // Exact ties such as β = 0.1, δ = 0.4 must not be lost to rounding.
    let analytic = spec.beta <= 0.5 - spec.delta + 1e-12;
    let mut numeric = true;
    'sweep: for n in 2..=1024u64 {
        let ln = spec.lambda(n as f64);
        for k in 2..=k_max.max(2) {
            let lhs = spec.lambda((n * k) as f64);
            let rhs = spec.a * (k as f64).powf(0.5 - spec.delta) * ln;
            if lhs > rhs * (1.0 + 1e-12) {
                numeric = false;
                break 'sweep;
            }
        }
    }
    LambdaCheck {
        verdict: if analytic { Verdict::Pass } else { Verdict::Fail },
        analytic,
        numeric,
        k_max,
    }
}

/// Which route, if any, establishes the exponential-moment hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityRoute {
    BoundedWeight {
        bound: f64,
    },
    ExponentialMoments,
    /// Weight grows without bound and `E_ν[e^{αw}]` diverges.
    Divergent,
    /// Partial integrals `∫_{x ≤ u} e^{w} dν` over growing `u`.
    Probe {
        partials: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCheck {
    pub verdict: Verdict,
    pub route: FeasibilityRoute,
    pub reason: String,
}

/// `∫_{(−∞, u]} e^{α w} dν` for `u` at the `ν`-tail levels `10^{-k}`,
/// `k = 1..=depth`. Overflowing partials are reported as `+∞`.
pub fn exp_moment_probe(scheme: &SamplingScheme, alpha: f64, depth: u32) -> Vec<(f64, f64)> {
    let nu = scheme.sampler();
    (1..=depth)
        .filter_map(|k| {
            let u = nu.quantile(10f64.powi(-(k as i32))).ok()?;
            let tol = Tolerance::new(1e-12, 1e-8);
            let v = nu
                .expect(f64::NEG_INFINITY, u, &[], tol, |x| (alpha * scheme.weight(x)).exp())
                .unwrap_or(f64::INFINITY);
            Some((u, v))
        })
        .collect()
}

pub fn check_scheme_feasibility(scheme: &SamplingScheme) -> FeasibilityCheck {
    if let Some(bound) = scheme.weight_bound() {
        return FeasibilityCheck {
            verdict: Verdict::Pass,
            route: FeasibilityRoute::BoundedWeight { bound },
            reason: format!("weight bounded by {bound}"),
        };
    }
    if scheme.exp_moments_finite() {
        return FeasibilityCheck {
            verdict: Verdict::Pass,
            route: FeasibilityRoute::ExponentialMoments,
            reason: "exponential moments of the weight are finite".into(),
        };
    }
    if scheme.weight_kind() != WeightKind::DensityRatio {
        return FeasibilityCheck {
            verdict: Verdict::Fail,
            route: FeasibilityRoute::Divergent,
            reason: format!(
                "weight for {} sampled from {} is unbounded and grows faster than log of the sampler tail",
                scheme.nominal(),
                scheme.sampler()
            ),
        };
    }
    let partials = exp_moment_probe(scheme, 1.0, 8);
    FeasibilityCheck {
        verdict: Verdict::Inconclusive,
        reason: format!(
            "no closed form for the weight; partial integrals of exp(w): {}",
            partials
                .iter()
                .map(|(u, v)| format!("{u:.4}:{v:.6e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
        route: FeasibilityRoute::Probe { partials },
    }
}

/// One audited condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub reason: String,
    /// `(q_m, ratio)` pairs for the `o(·)` conditions.
    pub diagnostic: Vec<(f64, f64)>,
    /// Fitted decay exponent of the ratio in `q`.
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub checks: Vec<Check>,
}

impl AuditReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn any_fail(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::Fail)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }
}

/// Settings for deciding `r_m → 0` from finitely many levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRule {
    /// Number of trailing grid points used for the fit and monotonicity.
    pub window: usize,
    /// Pass when the slope of `ln r` against `−ln q` is below this.
    pub max_slope: f64,
}

impl Default for DecayRule {
    fn default() -> Self {
        Self {
            window: 4,
            max_slope: -0.05,
        }
    }
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn decay_check(name: &str, ratios: Result<Vec<(f64, f64)>>, rule: DecayRule) -> Check {
    let ratios = match ratios {
        Ok(r) => r,
        Err(e) => {
            return Check {
                name: name.into(),
                verdict: Verdict::Inconclusive,
                reason: format!("evaluation failed: {e}"),
                diagnostic: Vec::new(),
                exponent: None,
            }
        }
    };
    let usable = ratios.iter().all(|&(_, r)| r > 0.0 && r.is_finite());
    if ratios.len() < rule.window.max(2) || !usable {
        return Check {
            name: name.into(),
            verdict: Verdict::Inconclusive,
            reason: "too few usable grid points for a decay fit".into(),
            diagnostic: ratios,
            exponent: None,
        };
    }
    let tail = &ratios[ratios.len() - rule.window..];
    let logs: Vec<(f64, f64)> = tail.iter().map(|&(q, r)| (-q.ln(), r.ln())).collect();
    let slope = fit_slope(&logs);
    let monotone = tail.windows(2).all(|w| w[1].1 < w[0].1);
    let verdict = if slope < rule.max_slope && monotone {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Check {
        name: name.into(),
        verdict,
        reason: format!(
            "log-log slope {slope:.4} over the last {} levels, monotone: {monotone}",
            rule.window
        ),
        diagnostic: ratios,
        exponent: Some(-slope),
    }
}

fn finiteness_check(
    name: &str,
    analytic: Option<bool>,
    numeric: impl FnOnce() -> std::result::Result<f64, QuadError>,
) -> Check {
    let (verdict, reason) = match analytic {
        Some(true) => (Verdict::Pass, "finite (closed form)".to_string()),
        Some(false) => (Verdict::Fail, "infinite (closed form)".to_string()),
        None => match numeric() {
            Ok(v) if v.is_finite() => (Verdict::Pass, format!("finite by quadrature: {v:.6e}")),
            Ok(v) => (Verdict::Inconclusive, format!("quadrature returned {v}")),
            Err(e) => (Verdict::Inconclusive, format!("quadrature failed: {e}")),
        },
    };
    Check {
        name: name.into(),
        verdict,
        reason,
        diagnostic: Vec::new(),
        exponent: None,
    }
}

/// Audits the four tail assumptions along a strictly decreasing grid of
/// levels, e.g. `10^{-1}, …, 10^{-6}`.
pub fn check_a1_a4(scheme: &SamplingScheme, q_grid: &[f64], rule: DecayRule) -> Result<AuditReport> {
    if q_grid.is_empty() || q_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("level grid must be strictly decreasing".into()));
    }
    if q_grid.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::InvalidParameter("levels must lie in (0, 1)".into()));
    }
    let mu = scheme.nominal();

    let a1 = finiteness_check("A1", Some(mu.moment_finite(2.0)), || unreachable!());
    let a3_analytic = if scheme.is_unit() {
        Some(mu.moment_finite(2.0))
    } else {
        scheme.weighted_moment_finite(2.0)
    };
    let a3 = finiteness_check("A3", a3_analytic, || {
        scheme.expect_nu(f64::NEG_INFINITY, f64::INFINITY, &[], RATE_TOL, |x| {
            let v = x * scheme.weight(x);
            v * v
        })
    });

    let mut continuity = Vec::new();
    let quantiles: Result<Vec<(f64, f64, f64)>> = q_grid
        .iter()
        .map(|&q| {
            let t = mu.quantile(q)?;
            continuity.push((q, mu.tail(t)));
            let f = mu.density(t);
            if !(f > 0.0) {
                return Err(Error::DensityZero { at: t });
            }
            Ok((q, t, f))
        })
        .collect();

    let a2 = decay_check(
        "A2",
        quantiles
            .clone()
            .map(|v| v.iter().map(|&(q, _, f)| (q, q * q / f)).collect()),
        rule,
    );
    let a4 = decay_check(
        "A4",
        quantiles.and_then(|v| {
            v.iter()
                .map(|&(q, t, f)| Ok((q, q * q * tail_second_moment(scheme, t)? / (f * f))))
                .collect()
        }),
        rule,
    );

    let worst = continuity
        .iter()
        .map(|&(q, tq)| ((tq - q) / q).abs())
        .fold(0.0, f64::max);
    let cont = Check {
        name: "level_continuity".into(),
        verdict: if worst <= 1e-12 { Verdict::Pass } else { Verdict::Fail },
        reason: format!("max relative |T(T^-1(q)) - q| / q = {worst:.3e}"),
        diagnostic: continuity,
        exponent: None,
    };
    Ok(AuditReport {
        checks: vec![a1, a2, a3, a4, cont],
    })
}

/// Everything the CLI `audit` command reports.
pub fn audit(
    scheme: &SamplingScheme,
    lambda: Option<(&LambdaSpec, u64)>,
    q_grid: &[f64],
    rule: DecayRule,
) -> Result<AuditReport> {
    let mut checks = Vec::new();
    if let Some((spec, k_max)) = lambda {
        let l = check_lambda_condition(spec, k_max);
        checks.push(Check {
            name: "lambda_condition".into(),
            verdict: l.verdict,
            reason: format!(
                "beta = {} vs 1/2 - delta = {}; sweep to k = {}: {}",
                spec.beta,
                0.5 - spec.delta,
                k_max,
                if l.numeric { "holds" } else { "violated" }
            ),
            diagnostic: Vec::new(),
            exponent: None,
        });
    }
    let feas = check_scheme_feasibility(scheme);
    checks.push(Check {
        name: "scheme_feasibility".into(),
        verdict: feas.verdict,
        reason: feas.reason,
        diagnostic: Vec::new(),
        exponent: None,
    });
    checks.extend(check_a1_a4(scheme, q_grid, rule)?.checks);
    Ok(AuditReport { checks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KaramataDiagnostic {
    /// `(x, x f(x) / T(x))`.
    pub ratios: Vec<(f64, f64)>,
    /// Estimated tail index when the ratio settles.
    pub index: Option<f64>,
    pub verdict: Verdict,
}

/// Evaluates `x f(x)/T(x)`, which tends to the tail index for regularly
/// varying tails. The index is the mean of the last three ratios when they
/// agree to within `1e-3` relative.
pub fn karamata_diagnostic(mu: &AnalyticDistribution, x_grid: &[f64]) -> KaramataDiagnostic {
    let ratios: Vec<(f64, f64)> = x_grid
        .iter()
        .map(|&x| (x, x * (mu.ln_density(x) - mu.log_tail(x)).exp()))
        .collect();
    if ratios.len() < 3
        || ratios
            .iter()
            .any(|&(x, r)| !r.is_finite() || mu.log_tail(x) == f64::NEG_INFINITY)
    {
        return KaramataDiagnostic {
            ratios,
            index: None,
            verdict: Verdict::Inconclusive,
        };
    }
    let last = &ratios[ratios.len() - 3..];
    let mean = last.iter().map(|r| r.1).sum::<f64>() / 3.0;
    let settled = last.iter().all(|r| ((r.1 - mean) / mean).abs() < 1e-3);
    KaramataDiagnostic {
        index: settled.then_some(mean),
        verdict: if settled { Verdict::Pass } else { Verdict::Fail },
        ratios,
    }
}

/// `T(t x) / T(x)`, which tends to `t^{-α}` for regular variation with
/// index `−α`.
pub fn regular_variation_ratio(mu: &AnalyticDistribution, t: f64, x: f64) -> f64 {
    (mu.log_tail(t * x) - mu.log_tail(x)).exp()
}

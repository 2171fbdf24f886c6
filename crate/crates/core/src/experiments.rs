//! Replication harness: bias and variance of the estimators, empirical
//! deviation probabilities on the moderate-deviation scale, the truncation
//! decomposition of the shortfall error, and scheme comparison.
//!
//! Replication `r` always draws from stream `(seed, r)`, whatever the sample
//! size and however the work is scheduled, so results are reproducible at
//! any parallelism.

use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use crate::audit::{check_scheme_feasibility, LambdaSpec, Verdict};
use crate::distributions::{AnalyticDistribution, RandomStream, SamplingScheme};
use crate::error::{Error, Result};
use crate::parallel::{map_replications, Execution};
use crate::rate_functions::{sigma_p_squared, sigma_qp_squared, tail_second_moment};
use crate::weighted_empirical::WeightedSample;

/// Rounds to 9 significant digits and prints the shortest form that parses
/// back to the rounded value.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if rounded == 0.0 {
        "0".into()
    } else if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Tail { t: f64 },
    Quantile { p: f64 },
    ExpectedShortfall { p: f64 },
    TruncatedEs { q: f64, p: f64 },
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Target::Tail { t } => write!(f, "tail(t={})", format_number(t)),
            Target::Quantile { p } => write!(f, "quantile(p={})", format_number(p)),
            Target::ExpectedShortfall { p } => write!(f, "expected_shortfall(p={})", format_number(p)),
            Target::TruncatedEs { q, p } => {
                write!(f, "truncated_es(q={},p={})", format_number(q), format_number(p))
            }
        }
    }
}

/// A point estimate; `mass_deficient` marks replications whose weighted
/// mass does not exceed the level, which are left out of the statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub mass_deficient: bool,
}

impl Target {
    pub fn validate(&self) -> Result<()> {
        let level = |p: f64, what| {
            if p > 0.0 && p < 1.0 {
                Ok(())
            } else {
                Err(Error::Domain { what, value: p })
            }
        };
        match *self {
            Target::Tail { t } if !t.is_finite() => Err(Error::Domain {
                what: "tail threshold",
                value: t,
            }),
            Target::Tail { .. } => Ok(()),
            Target::Quantile { p } | Target::ExpectedShortfall { p } => level(p, "level p"),
            Target::TruncatedEs { q, p } => {
                level(p, "level p")?;
                if q > 0.0 && q < p {
                    Ok(())
                } else {
                    Err(Error::InvalidLevels { q, p })
                }
            }
        }
    }

    pub fn truth(&self, mu: &AnalyticDistribution) -> Result<f64> {
        let unavailable = |e: Error| Error::TruthUnavailable(format!("{self} under {mu}: {e}"));
        match *self {
            Target::Tail { t } => Ok(mu.tail(t)),
            Target::Quantile { p } => mu.quantile(p).map_err(unavailable),
            Target::ExpectedShortfall { p } => mu.expected_shortfall(p).map_err(unavailable),
            Target::TruncatedEs { q, p } => mu.truncated_expected_shortfall(q, p).map_err(unavailable),
        }
    }

    pub fn estimate(&self, ws: &WeightedSample) -> Estimate {
        let total = ws.total_mass();
        match *self {
            Target::Tail { t } => Estimate {
                value: ws.tail(t),
                mass_deficient: false,
            },
            Target::Quantile { p } => {
                let q = ws.quantile(p);
                Estimate {
                    value: q.value,
                    mass_deficient: q.mass_deficient,
                }
            }
            Target::ExpectedShortfall { p } => match ws.expected_shortfall(p) {
                Ok(v) => Estimate {
                    value: v,
                    mass_deficient: false,
                },
                Err(_) => Estimate {
                    value: f64::NAN,
                    mass_deficient: true,
                },
            },
            Target::TruncatedEs { q, p } => {
                if p > total {
                    Estimate {
                        value: f64::NAN,
                        mass_deficient: true,
                    }
                } else {
                    Estimate {
                        value: ws.truncated_expected_shortfall(q, p).unwrap_or(f64::NAN),
                        mass_deficient: false,
                    }
                }
            }
        }
    }

    /// Limiting variance of `√n · error`.
    pub fn asymptotic_variance(&self, scheme: &SamplingScheme) -> Result<f64> {
        let mu = scheme.nominal();
        match *self {
            Target::Tail { t } => {
                let tt = mu.tail(t);
                Ok(tail_second_moment(scheme, t)? - tt * tt)
            }
            Target::Quantile { p } => {
                let t = mu.quantile(p)?;
                let f = mu.density(t);
                if !(f > 0.0) {
                    return Err(Error::DensityZero { at: t });
                }
                Ok((tail_second_moment(scheme, t)? - p * p) / (f * f))
            }
            Target::ExpectedShortfall { p } => sigma_p_squared(scheme, p),
            Target::TruncatedEs { q, p } => sigma_qp_squared(scheme, q, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub scheme: SamplingScheme,
    pub target: Target,
    pub n_grid: Vec<usize>,
    pub lambda: LambdaSpec,
    pub replications: usize,
    pub deltas: Vec<f64>,
    pub seed: u64,
    /// Run even when the scheme does not pass the feasibility check.
    pub allow_infeasible: bool,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPlan(
                "n grid must be nonempty, positive and strictly increasing".into(),
            ));
        }
        if self.replications == 0 {
            return Err(Error::InvalidPlan("at least one replication is required".into()));
        }
        if self.deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidPlan("deltas must be positive and finite".into()));
        }
        if !self.allow_infeasible {
            let feas = check_scheme_feasibility(&self.scheme);
            if feas.verdict != Verdict::Pass {
                return Err(Error::Infeasible(feas.reason));
            }
        }
        Ok(())
    }
}

/// Statistics at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n: usize,
    pub lambda_n: f64,
    pub b_n: f64,
    /// Per-replication errors; `None` for mass-deficient replications.
    pub errors: Vec<Option<f64>>,
    pub mean_error: f64,
    /// Sample variance of `√n · error` over the usable replications.
    pub var_sqrt_n_error: f64,
    /// Exceedance counts of `b_n |error| ≥ δ`, one per δ.
    pub exceedances: Vec<usize>,
    /// `count / R`, or `None` when the count is zero.
    pub p_hat: Vec<Option<f64>>,
    /// `log(p_hat) / λ_n²`, or `None` when censored.
    pub scaled_log: Vec<Option<f64>>,
    pub mass_deficient: usize,
    pub wall_clock: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub target: Target,
    pub truth: f64,
    pub replications: usize,
    pub deltas: Vec<f64>,
    pub cells: Vec<CellResult>,
}

fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn replicate(scheme: &SamplingScheme, seed: u64, r: usize, n: usize) -> Result<WeightedSample> {
    let draws = scheme.sampler().sample(RandomStream::new(seed, r as u64), n);
    WeightedSample::build(&draws, scheme)
}

/// Aggregates errors into a cell. Deviation probabilities use `R` as the
/// denominator; mass-deficient replications never count as exceedances.
pub fn summarize_cell(
    n: usize,
    lambda: &LambdaSpec,
    deltas: &[f64],
    errors: Vec<Option<f64>>,
    wall_clock: Duration,
) -> CellResult {
    let r = errors.len();
    let usable: Vec<f64> = errors.iter().flatten().copied().collect();
    let lambda_n = lambda.lambda(n as f64);
    let b_n = lambda.b(n as f64);
    let root_n = (n as f64).sqrt();
    let mean_error = if usable.is_empty() {
        f64::NAN
    } else {
        usable.iter().sum::<f64>() / usable.len() as f64
    };
    let scaled: Vec<f64> = usable.iter().map(|e| root_n * e).collect();
    let exceedances: Vec<usize> = deltas
        .iter()
        .map(|&d| usable.iter().filter(|e| b_n * e.abs() >= d).count())
        .collect();
    let p_hat: Vec<Option<f64>> = exceedances
        .iter()
        .map(|&c| (c > 0).then(|| c as f64 / r as f64))
        .collect();
    let scaled_log = p_hat
        .iter()
        .map(|p| p.map(|p| p.ln() / (lambda_n * lambda_n)))
        .collect();
    CellResult {
        n,
        lambda_n,
        b_n,
        mass_deficient: r - usable.len(),
        mean_error,
        var_sqrt_n_error: sample_variance(&scaled),
        exceedances,
        p_hat,
        scaled_log,
        errors,
        wall_clock,
    }
}

pub fn run_experiment(plan: &ExperimentPlan, exec: Execution) -> Result<ExperimentResult> {
    plan.validate()?;
    let truth = plan.target.truth(plan.scheme.nominal())?;
    let mut cells = Vec::with_capacity(plan.n_grid.len());
    for &n in &plan.n_grid {
        let start = Instant::now();
        let errors = map_replications(exec, plan.replications, |r| {
            let ws = replicate(&plan.scheme, plan.seed, r, n)?;
            let est = plan.target.estimate(&ws);
            Ok((!est.mass_deficient).then_some(est.value - truth))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        cells.push(summarize_cell(n, &plan.lambda, &plan.deltas, errors, start.elapsed()));
    }
    Ok(ExperimentResult {
        target: plan.target,
        truth,
        replications: plan.replications,
        deltas: plan.deltas.clone(),
        cells,
    })
}

/// Writes the fixed-column table; censored cells are left empty.
pub fn write_table<W: Write>(result: &ExperimentResult, mut out: W) -> io::Result<()> {
    let mut header = vec![
        "n".to_string(),
        "lambda_n".into(),
        "b_n".into(),
        "target".into(),
        "mean_error".into(),
        "var_sqrt_n_error".into(),
    ];
    for d in &result.deltas {
        let d = format_number(*d);
        header.push(format!("p_hat[delta={d}]"));
        header.push(format!("scaled_log[delta={d}]"));
    }
    for d in &result.deltas {
        header.push(format!("censored[delta={}]", format_number(*d)));
    }
    header.push("mass_deficient".into());
    writeln!(out, "{}", header.join(","))?;
    let opt = |v: Option<f64>| v.map(format_number).unwrap_or_default();
    for c in &result.cells {
        let mut row = vec![
            c.n.to_string(),
            format_number(c.lambda_n),
            format_number(c.b_n),
            result.target.to_string(),
            format_number(c.mean_error),
            format_number(c.var_sqrt_n_error),
        ];
        for k in 0..result.deltas.len() {
            row.push(opt(c.p_hat[k]));
            row.push(opt(c.scaled_log[k]));
        }
        for k in 0..result.deltas.len() {
            row.push(if c.p_hat[k].is_none() { "1" } else { "0" }.into());
        }
        row.push(c.mass_deficient.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Trend of `(1/λ_n²) log P̂` for one δ column.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrend {
    pub delta: f64,
    /// `(n, scaled log-probability)`; `None` where censored.
    pub scaled: Vec<(usize, Option<f64>)>,
    /// Pass when the uncensored values are non-increasing in `n`.
    pub verdict: Verdict,
    /// Scaled value at the largest uncensored `n` plus `rate_value`.
    pub gap: Option<f64>,
    /// Smallest probability the replication count can resolve.
    pub resolution: f64,
}

pub fn mdp_decay_check(result: &ExperimentResult, rate_value: f64, delta: f64) -> Result<DecayTrend> {
    let k = result
        .deltas
        .iter()
        .position(|&d| d == delta)
        .ok_or_else(|| Error::InvalidParameter(format!("no column for delta = {delta}")))?;
    let scaled: Vec<(usize, Option<f64>)> = result.cells.iter().map(|c| (c.n, c.scaled_log[k])).collect();
    let seen: Vec<f64> = scaled.iter().filter_map(|s| s.1).collect();
    let resolution = 1.0 / result.replications as f64;
    let (verdict, gap) = if seen.len() < 3 {
        (Verdict::Inconclusive, None)
    } else {
        let monotone = seen.windows(2).all(|w| w[1] <= w[0]);
        (
            if monotone { Verdict::Pass } else { Verdict::Fail },
            seen.last().map(|v| v + rate_value),
        )
    };
    Ok(DecayTrend {
        delta,
        scaled,
        verdict,
        gap,
        resolution,
    })
}

/// Empirical probabilities of the truncation gap and of the three events
/// that bound it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpApproxResult {
    pub q: f64,
    pub p: f64,
    pub delta: f64,
    pub n: usize,
    pub replications: usize,
    /// `b_n (q/p) |Q_n(q) − T⁻¹(q)| ≥ δ/4`.
    pub p_mid: f64,
    /// Same event at `δ/8`.
    pub p_mid_eighth: f64,
    /// `b_n (1/p) |∫_{T⁻¹(q)}^∞ (T_n − T) dx| ≥ δ/4`.
    pub p_first: f64,
    /// `b_n (1/p) T_n(T⁻¹(q)) |Q_n(q) − T⁻¹(q)| ≥ δ/4`.
    pub p_last: f64,
    /// `b_n (1/p) |∫_0^q (Q_n − T⁻¹) du| ≥ δ`.
    pub p_gap: f64,
    pub mass_deficient: usize,
}

impl ExpApproxResult {
    /// `2 p_mid + p_first + p_last`.
    pub fn bound(&self) -> f64 {
        2.0 * self.p_mid + self.p_first + self.p_last
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpApproxPlan {
    pub q: f64,
    pub p: f64,
    pub delta: f64,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub lambda: LambdaSpec,
}

pub fn exp_approx_diagnostics(
    scheme: &SamplingScheme,
    plan: &ExpApproxPlan,
    exec: Execution,
) -> Result<ExpApproxResult> {
    let &ExpApproxPlan {
        q,
        p,
        delta,
        n,
        replications,
        seed,
        lambda,
    } = plan;
    Target::TruncatedEs { q, p }.validate()?;
    if n == 0 || replications == 0 || !(delta > 0.0) {
        return Err(Error::InvalidPlan("n, replications and delta must be positive".into()));
    }
    let mu = scheme.nominal();
    let t = mu.quantile(q)?;
    let head_truth = q * Target::ExpectedShortfall { p: q }.truth(mu)?;
    let beyond_truth = head_truth - q * t;
    let b = lambda.b(n as f64);
    let flags = map_replications(exec, replications, |r| -> Result<Option<[bool; 5]>> {
        let ws = replicate(scheme, seed, r, n)?;
        if ws.total_mass() <= q {
            return Ok(None);
        }
        let tq = ws.quantile(q).value;
        let dq = (tq - t).abs();
        let mid = b * q / p * dq;
        let first = b / p * (ws.integrated_tail(t) - beyond_truth).abs();
        let last = b / p * ws.tail(t) * dq;
        let gap = b / p * (ws.quantile_integral(0.0, q)? - head_truth).abs();
        let quarter = delta / 4.0;
        Ok(Some([
            mid >= quarter,
            mid >= delta / 8.0,
            first >= quarter,
            last >= quarter,
            gap >= delta,
        ]))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let count = |k: usize| flags.iter().flatten().filter(|f| f[k]).count() as f64 / replications as f64;
    Ok(ExpApproxResult {
        q,
        p,
        delta,
        n,
        replications,
        p_mid: count(0),
        p_mid_eighth: count(1),
        p_first: count(2),
        p_last: count(3),
        p_gap: count(4),
        mass_deficient: flags.iter().filter(|f| f.is_none()).count(),
    })
}

/// One row of a scheme comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRow {
    pub label: String,
    /// Limiting variance of `√n · error`.
    pub theoretical_variance: Option<f64>,
    /// `1 / (2 · variance)`, the quadratic rate constant.
    pub rate_constant: Option<f64>,
    pub empirical_variance: Option<f64>,
    /// 1-based rank by theoretical variance; ties share a rank.
    pub rank: Option<usize>,
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparePlan {
    pub target: Target,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub allow_infeasible: bool,
}

/// Ranks schemes by theoretical variance (smaller is better) and reports
/// the empirical `√n`-scaled variance next to it.
pub fn compare_schemes(
    schemes: &[(String, SamplingScheme)],
    plan: &ComparePlan,
    exec: Execution,
) -> Result<Vec<SchemeRow>> {
    if schemes.len() < 2 {
        return Err(Error::InvalidPlan("comparison needs at least two schemes".into()));
    }
    plan.target.validate()?;
    let mut rows = Vec::with_capacity(schemes.len());
    for (label, scheme) in schemes {
        let feas = check_scheme_feasibility(scheme);
        let excluded = |reason: String| SchemeRow {
            label: label.clone(),
            theoretical_variance: None,
            rate_constant: None,
            empirical_variance: None,
            rank: None,
            excluded: Some(reason),
        };
        if feas.verdict != Verdict::Pass && !plan.allow_infeasible {
            rows.push(excluded(format!("feasibility {}: {}", feas.verdict, feas.reason)));
            continue;
        }
        let var = match plan.target.asymptotic_variance(scheme) {
            Ok(v) => v,
            Err(e) => {
                rows.push(excluded(e.to_string()));
                continue;
            }
        };
        let result = run_experiment(
            &ExperimentPlan {
                scheme: *scheme,
                target: plan.target,
                n_grid: vec![plan.n],
                lambda: LambdaSpec::new(0.25, 1.0, 0.25)?,
                replications: plan.replications,
                deltas: Vec::new(),
                seed: plan.seed,
                allow_infeasible: true,
            },
            exec,
        )?;
        let emp = result.cells[0].var_sqrt_n_error;
        rows.push(SchemeRow {
            label: label.clone(),
            theoretical_variance: Some(var),
            rate_constant: (var > 0.0).then(|| 1.0 / (2.0 * var)),
            empirical_variance: emp.is_finite().then_some(emp),
            rank: None,
            excluded: None,
        });
    }
    let mut order: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.theoretical_variance.map(|v| (i, v)))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (pos, &(i, v)) in order.iter().enumerate() {
        let rank = match pos {
            0 => 1,
            _ if v == order[pos - 1].1 => rows[order[pos - 1].0].rank.unwrap(),
            _ => pos + 1,
        };
        rows[i].rank = Some(rank);
    }
    Ok(rows)
}

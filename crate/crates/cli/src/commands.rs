use isrisk_core::audit::{audit, check_scheme_feasibility, DecayRule, Verdict};
use isrisk_core::experiments::{compare_schemes, run_experiment, ComparePlan, ExperimentPlan};
use isrisk_core::parallel::Execution;
use isrisk_core::rate_functions::{mdp_half_width, RateReport};
use isrisk_core::{RandomStream, WeightedSample};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{Cell, Table};

/// A rendered result plus a failure to report after the output is written.
pub struct Outcome {
    pub table: Table,
    pub failure: Option<CliError>,
}

impl From<Table> for Outcome {
    fn from(table: Table) -> Self {
        Self { table, failure: None }
    }
}

fn require_feasible(cfg: &RunConfig, scheme: &isrisk_core::SamplingScheme) -> Result<(), CliError> {
    if cfg.allow_infeasible {
        return Ok(());
    }
    let feas = check_scheme_feasibility(scheme);
    if feas.verdict == Verdict::Pass {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!(
            "scheme feasibility {}: {}",
            feas.verdict, feas.reason
        )))
    }
}

pub fn estimate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sec = cfg.section(&cfg.estimate, "estimate")?;
    let scheme = cfg.scheme()?;
    let target = sec.target.build()?;
    if sec.n == 0 {
        return Err(CliError::Config("estimate.n must be positive".into()));
    }
    if !(sec.significance > 0.0 && sec.significance < 1.0) {
        return Err(CliError::Config("estimate.significance must lie in (0, 1)".into()));
    }
    require_feasible(cfg, &scheme)?;

    let draws = scheme.sampler().sample(RandomStream::new(cfg.seed, 0), sec.n);
    let ws = WeightedSample::build(&draws, &scheme)?;
    let est = target.estimate(&ws);
    let truth = target.truth(scheme.nominal()).ok();
    // An infinite limiting variance leaves the half-width undefined, not the estimate.
    let variance = match target.asymptotic_variance(&scheme) {
        Ok(v) => Some(v),
        Err(isrisk_core::Error::Divergent(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let half = variance
        .map(|v| mdp_half_width(v, sec.n, sec.significance))
        .transpose()?;

    let mut t = Table::new(
        "estimate",
        &[
            "target",
            "n",
            "estimate",
            "truth",
            "error",
            "mdp_half_width",
            "significance",
            "asymptotic_variance",
            "mass_deficient",
            "total_mass",
            "effective_sample_size",
            "max_weight",
            "off_support",
        ],
    );
    t.push(vec![
        Cell::Text(target.to_string()),
        Cell::Int(sec.n as u64),
        Cell::Num(est.value),
        Cell::opt(truth),
        Cell::opt(truth.map(|v| est.value - v)),
        Cell::opt(half),
        Cell::Num(sec.significance),
        Cell::opt(variance),
        Cell::Int(u64::from(est.mass_deficient)),
        Cell::Num(ws.total_mass()),
        Cell::Num(ws.effective_sample_size()),
        Cell::Num(ws.max_weight()),
        Cell::Int(ws.off_support_count() as u64),
    ]);
    Ok(t.into())
}

pub fn rate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sec = cfg.section(&cfg.rate, "rate")?;
    let scheme = cfg.scheme()?;
    let report = RateReport::compute(&scheme, sec.p, &sec.q, &sec.delta, &sec.z)?;
    let mut t = Table::new("rate", &["key", "value"]);
    for (k, v) in report.entries() {
        t.push(vec![Cell::Text(k), Cell::Num(v)]);
    }
    Ok(t.into())
}

pub fn audit_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sec = cfg.audit.clone().unwrap_or_default();
    let scheme = cfg.scheme()?;
    let lambda = sec.lambda.build()?;
    if sec.window < 2 {
        return Err(CliError::Config("audit.window must be at least 2".into()));
    }
    let rule = DecayRule {
        window: sec.window,
        max_slope: sec.max_slope,
    };
    let report = audit(&scheme, Some((&lambda, sec.k_max)), &sec.levels, rule)?;
    let mut t = Table::new("audit", &["check", "verdict", "exponent", "reason"]);
    for c in &report.checks {
        t.push(vec![
            Cell::Text(c.name.clone()),
            Cell::Text(c.verdict.to_string()),
            Cell::opt(c.exponent),
            Cell::Text(c.reason.clone()),
        ]);
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| c.verdict == Verdict::Fail)
        .map(|c| c.name.as_str())
        .collect();
    Ok(Outcome {
        table: t,
        failure: (!failed.is_empty()).then(|| CliError::AuditFailed(failed.join(", "))),
    })
}

pub fn experiment(cfg: &RunConfig, exec: Execution) -> Result<Outcome, CliError> {
    let sec = cfg.section(&cfg.experiment, "experiment")?;
    let plan = ExperimentPlan {
        scheme: cfg.scheme()?,
        target: sec.target.build()?,
        n_grid: sec.n_grid.clone(),
        lambda: sec.lambda.build()?,
        replications: sec.replications,
        deltas: sec.delta.clone(),
        seed: cfg.seed,
        allow_infeasible: cfg.allow_infeasible,
    };
    let result = run_experiment(&plan, exec)?;

    let mut columns: Vec<String> = ["n", "lambda_n", "b_n", "target", "mean_error", "var_sqrt_n_error"]
        .map(String::from)
        .to_vec();
    let labels: Vec<String> = result
        .deltas
        .iter()
        .map(|d| isrisk_core::experiments::format_number(*d))
        .collect();
    for d in &labels {
        columns.push(format!("p_hat[delta={d}]"));
        columns.push(format!("scaled_log[delta={d}]"));
    }
    for d in &labels {
        columns.push(format!("censored[delta={d}]"));
    }
    columns.push("mass_deficient".into());
    let mut t = Table {
        command: "experiment".into(),
        columns,
        rows: Vec::new(),
    };
    for c in &result.cells {
        let mut row = vec![
            Cell::Int(c.n as u64),
            Cell::Num(c.lambda_n),
            Cell::Num(c.b_n),
            Cell::Text(result.target.to_string()),
            Cell::Num(c.mean_error),
            Cell::Num(c.var_sqrt_n_error),
        ];
        for k in 0..result.deltas.len() {
            row.push(Cell::opt(c.p_hat[k]));
            row.push(Cell::opt(c.scaled_log[k]));
        }
        for k in 0..result.deltas.len() {
            row.push(Cell::Int(u64::from(c.p_hat[k].is_none())));
        }
        row.push(Cell::Int(c.mass_deficient as u64));
        t.push(row);
    }
    Ok(t.into())
}

pub fn compare(cfg: &RunConfig, exec: Execution) -> Result<Outcome, CliError> {
    let sec = cfg.section(&cfg.compare, "compare")?;
    let schemes = sec
        .schemes
        .iter()
        .map(|s| Ok((s.label.clone(), cfg.scheme_with(s.sampler.as_ref())?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let plan = ComparePlan {
        target: sec.target.build()?,
        n: sec.n,
        replications: sec.replications,
        seed: cfg.seed,
        allow_infeasible: cfg.allow_infeasible,
    };
    if plan.n == 0 || plan.replications == 0 {
        return Err(CliError::Config(
            "compare.n and compare.replications must be positive".into(),
        ));
    }
    let mut rows = compare_schemes(&schemes, &plan, exec)?;
    rows.sort_by_key(|r| r.rank.unwrap_or(usize::MAX));
    let mut t = Table::new(
        "compare",
        &[
            "rank",
            "label",
            "theoretical_variance",
            "rate_constant",
            "empirical_variance",
            "excluded",
        ],
    );
    for r in rows {
        t.push(vec![
            r.rank.map_or(Cell::Empty, |k| Cell::Int(k as u64)),
            Cell::Text(r.label),
            Cell::opt(r.theoretical_variance),
            Cell::opt(r.rate_constant),
            Cell::opt(r.empirical_variance),
            r.excluded.map_or(Cell::Empty, Cell::Text),
        ]);
    }
    Ok(t.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Format;
    use isrisk_core::experiments::write_table;

    #[test]
    fn experiment_table_matches_library_layout() {
        let cfg = RunConfig::parse(
            "seed = 4
[nominal]
family = \"pareto\"
alpha = 3.0
scale = 1.0
[experiment]
target = { kind = \"quantile\", p = 0.1 }
n_grid = [20, 80]
replications = 50
delta = [0.25, 2.0]
",
        )
        .unwrap();
        let mut ours = Vec::new();
        experiment(&cfg, Execution::Sequential)
            .unwrap()
            .table
            .write(Format::Delimited, &mut ours)
            .unwrap();

        let sec = cfg.experiment.as_ref().unwrap();
        let plan = ExperimentPlan {
            scheme: cfg.scheme().unwrap(),
            target: sec.target.build().unwrap(),
            n_grid: sec.n_grid.clone(),
            lambda: sec.lambda.build().unwrap(),
            replications: sec.replications,
            deltas: sec.delta.clone(),
            seed: cfg.seed,
            allow_infeasible: false,
        };
        let mut theirs = Vec::new();
        write_table(&run_experiment(&plan, Execution::Parallel).unwrap(), &mut theirs).unwrap();
        assert_eq!(String::from_utf8(ours).unwrap(), String::from_utf8(theirs).unwrap());
    }
}

//! TOML run configuration. Every table rejects unknown keys.

use std::path::Path;

use isrisk_core::audit::{DecayRule, LambdaSpec};
use isrisk_core::experiments::Target;
use isrisk_core::{AnalyticDistribution, Family, SamplingScheme};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Delimited,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilySpec {
    Exponential { rate: f64 },
    Pareto { alpha: f64, scale: f64 },
    Normal { mean: f64, stdev: f64 },
    Lognormal { logmean: f64, logsd: f64 },
}

impl FamilySpec {
    pub fn build(&self) -> Result<AnalyticDistribution, CliError> {
        let family = match *self {
            FamilySpec::Exponential { rate } => Family::Exponential { rate },
            FamilySpec::Pareto { alpha, scale } => Family::Pareto { alpha, scale },
            FamilySpec::Normal { mean, stdev } => Family::Normal { mean, stdev },
            FamilySpec::Lognormal { logmean, logsd } => Family::Lognormal { logmean, logsd },
        };
        AnalyticDistribution::new(family).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Tail { t: f64 },
    Quantile { p: f64 },
    ExpectedShortfall { p: f64 },
    TruncatedEs { q: f64, p: f64 },
}

impl TargetSpec {
    pub fn build(&self) -> Result<Target, CliError> {
        let target = match *self {
            TargetSpec::Tail { t } => Target::Tail { t },
            TargetSpec::Quantile { p } => Target::Quantile { p },
            TargetSpec::ExpectedShortfall { p } => Target::ExpectedShortfall { p },
            TargetSpec::TruncatedEs { q, p } => Target::TruncatedEs { q, p },
        };
        target.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "default_beta")]
    pub delta: f64,
}

fn default_beta() -> f64 {
    0.25
}

fn one() -> f64 {
    1.0
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self {
            beta: 0.25,
            a: 1.0,
            delta: 0.25,
        }
    }
}

impl LambdaConfig {
    pub fn build(&self) -> Result<LambdaSpec, CliError> {
        LambdaSpec::new(self.beta, self.a, self.delta).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub target: TargetSpec,
    pub n: usize,
    #[serde(default = "default_significance")]
    pub significance: f64,
}

fn default_significance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub p: f64,
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_max_slope")]
    pub max_slope: f64,
    #[serde(default)]
    pub lambda: LambdaConfig,
    #[serde(default = "default_k_max")]
    pub k_max: u64,
}

fn default_levels() -> Vec<f64> {
    (1..=6).map(|k| 10f64.powi(-k)).collect()
}

fn default_window() -> usize {
    DecayRule::default().window
}

fn default_max_slope() -> f64 {
    DecayRule::default().max_slope
}

fn default_k_max() -> u64 {
    64
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            window: default_window(),
            max_slope: default_max_slope(),
            lambda: LambdaConfig::default(),
            k_max: default_k_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub delta: Vec<f64>,
    #[serde(default)]
    pub lambda: LambdaConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntry {
    pub label: String,
    /// Absent means unit weights.
    pub sampler: Option<FamilySpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub target: TargetSpec,
    pub n: usize,
    pub replications: usize,
    pub schemes: Vec<SchemeEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_infeasible: bool,
    pub out: Option<String>,
    pub format: Option<Format>,
    pub nominal: FamilySpec,
    /// Absent means unit weights.
    pub sampler: Option<FamilySpec>,
    pub estimate: Option<EstimateConfig>,
    pub rate: Option<RateConfig>,
    pub audit: Option<AuditConfig>,
    pub experiment: Option<ExperimentConfig>,
    pub compare: Option<CompareConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn scheme_with(&self, sampler: Option<&FamilySpec>) -> Result<SamplingScheme, CliError> {
        let mu = self.nominal.build()?;
        match sampler {
            None => Ok(SamplingScheme::unit(mu)),
            Some(s) => SamplingScheme::new(mu, s.build()?).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn scheme(&self) -> Result<SamplingScheme, CliError> {
        self.scheme_with(self.sampler.as_ref())
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        value
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
    }
}

/// Recognized keys, shown by `--help`.
pub const COMMON_KEYS: &str = "\
Common configuration keys (TOML):
  seed = <u64>                    default 0; --seed overrides
  allow_infeasible = <bool>       run schemes that fail the feasibility check
  out = <path>                    output file; --out overrides, stdout if unset
  format = \"delimited\"|\"structured\"
  [nominal]  family = \"exponential\" rate | \"pareto\" alpha scale
             | \"normal\" mean stdev | \"lognormal\" logmean logsd
  [sampler]  same keys as [nominal]; omit for unit weights
Targets are inline tables with a `kind` key:
  { kind = \"tail\", t } | { kind = \"quantile\", p }
  | { kind = \"expected_shortfall\", p } | { kind = \"truncated_es\", q, p }";

pub const ESTIMATE_KEYS: &str = "\
[estimate]
  target = <target>
  n = <count>                     sample size drawn from the sampler
  significance = <prob>           default 0.05, for the half-width";

pub const RATE_KEYS: &str = "\
[rate]
  p = <prob>                      shortfall level
  q = [<prob>, ...]               truncation levels for sigma_qp_sq and kappas
  delta = [<real>, ...]           deviation sizes for the kappas
  z = [<real>, ...]               points for the shortfall rate";

pub const AUDIT_KEYS: &str = "\
[audit]                           optional; every key has a default
  levels = [<prob>, ...]          strictly decreasing, default 1e-1 .. 1e-6
  window = <count>                trailing points in the decay fit, default 4
  max_slope = <real>              decay pass threshold, default -0.05
  lambda = { beta, a, delta }     default { 0.25, 1, 0.25 }
  k_max = <count>                 numeric sweep bound, default 64";

pub const EXPERIMENT_KEYS: &str = "\
[experiment]
  target = <target>
  n_grid = [<count>, ...]         strictly increasing
  replications = <count>
  delta = [<real>, ...]           deviation thresholds
  lambda = { beta, a, delta }     default { 0.25, 1, 0.25 }";

pub const COMPARE_KEYS: &str = "\
[compare]
  target = <target>
  n = <count>
  replications = <count>
  [[compare.schemes]]
    label = <string>
    sampler = { family = ..., ... }   omit for unit weights";

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "
seed = 3
[nominal]
family = \"exponential\"
rate = 1.0
[sampler]
family = \"exponential\"
rate = 0.5
[experiment]
target = { kind = \"expected_shortfall\", p = 0.05 }
n_grid = [10, 20]
replications = 2
delta = [0.5]
";

    #[test]
    fn parses_full_config() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.nominal, FamilySpec::Exponential { rate: 1.0 });
        let e = c.experiment.unwrap();
        assert_eq!(e.target, TargetSpec::ExpectedShortfall { p: 0.05 });
        assert_eq!(e.lambda, LambdaConfig::default());
        assert!(c.rate.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            format!("{BASE}\nbogus = 1\n"),
            BASE.replace("rate = 0.5", "rate = 0.5\nshape = 2"),
            BASE.replace("p = 0.05 }", "p = 0.05, q = 0.01 }"),
            BASE.replace("delta = [0.5]", "delta = [0.5]\nlambda = { beta = 0.2, gamma = 1 }"),
            BASE.replace("\"exponential\"\nrate = 1.0", "\"gamma\"\nrate = 1.0"),
        ] {
            assert!(matches!(RunConfig::parse(&bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn parameters_are_validated() {
        let c = RunConfig::parse(&BASE.replace("rate = 0.5", "rate = -0.5")).unwrap();
        assert!(matches!(c.scheme(), Err(CliError::Config(_))));
        assert!(matches!(
            TargetSpec::TruncatedEs { q: 0.2, p: 0.1 }.build(),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            (LambdaConfig {
                beta: 0.7,
                a: 1.0,
                delta: 0.1
            })
            .build(),
            Err(CliError::Config(_))
        ));
    }
}

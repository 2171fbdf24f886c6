//! The weighted empirical measure `(1/n) Σ w(Xᵢ) δ_{Xᵢ}` and the estimators
//! built on it.
//!
//! All functionals are evaluated exactly on the step function: the tail is
//! a suffix sum, the quantile a binary search, and the shortfall integrals
//! a sweep over the sorted atoms.

use std::io::{BufRead, Write};

use crate::distributions::{AnalyticDistribution, SamplingScheme};
use crate::error::{Error, Result};

/// Sorted, tie-merged atoms `(value, weight)` of a weighted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    values: Vec<f64>,
    weights: Vec<f64>,
    // suffix[k] = Σ_{j >= k} weights[j]; suffix[len] = 0.
    suffix: Vec<f64>,
    n: usize,
    off_support: usize,
}

/// Result of the empirical quantile; `mass_deficient` is set when the
/// total weighted mass does not exceed the requested level, in which case
/// `value` is the smallest atom rather than the (infinite) infimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    pub value: f64,
    pub mass_deficient: bool,
}

/// The right-continuous step tail `T_n^w`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTail {
    pub breakpoints: Vec<f64>,
    /// `levels[k] = T_n^w(breakpoints[k])`.
    pub levels: Vec<f64>,
    pub total_mass: f64,
}

impl StepTail {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&x| x <= t);
        if k == 0 {
            self.total_mass
        } else {
            self.levels[k - 1]
        }
    }
}

impl WeightedSample {
    /// Builds from raw atoms; sorts by value and merges equal values by
    /// summing their weights. `n` is the number of original draws.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>, n: usize) -> Result<Self> {
        if atoms.is_empty() || n == 0 {
            return Err(Error::EmptySample);
        }
        for &(x, w) in &atoms {
            if !x.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite sample value {x}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "weight {w} at {x} is not a finite nonnegative number"
                )));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            // -0.0 and 0.0 are the same point.
            if values.last().is_some_and(|&last: &f64| last == x) {
                *weights.last_mut().unwrap() += w;
            } else {
                values.push(x);
                weights.push(w);
            }
        }
        let mut suffix = vec![0.0; values.len() + 1];
        for k in (0..values.len()).rev() {
            suffix[k] = suffix[k + 1] + weights[k];
        }
        Ok(Self {
            values,
            weights,
            suffix,
            n,
            off_support: 0,
        })
    }

    /// Weights every draw with the scheme's likelihood ratio.
    pub fn build(draws: &[f64], scheme: &SamplingScheme) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut off_support = 0;
        let atoms = draws
            .iter()
            .map(|&x| {
                let w = scheme.weight_checked(x);
                off_support += usize::from(w.off_support);
                (x, w.value)
            })
            .collect();
        let mut ws = Self::from_atoms(atoms, draws.len())?;
        ws.off_support = off_support;
        Ok(ws)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinct atoms.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    /// Draws that fell outside the sampler's support (weighted zero).
    pub fn off_support_count(&self) -> usize {
        self.off_support
    }

    pub fn total_mass(&self) -> f64 {
        self.suffix[0] / self.n as f64
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Kish effective sample size `(Σw)² / Σw²`.
    pub fn effective_sample_size(&self) -> f64 {
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        if s2 == 0.0 {
            0.0
        } else {
            self.suffix[0] * self.suffix[0] / s2
        }
    }

    fn level(&self, k: usize) -> f64 {
        self.suffix[k] / self.n as f64
    }

    /// `T_n^w(t) = (1/n) Σ wᵢ 1{xᵢ > t}`.
    pub fn tail(&self, t: f64) -> f64 {
        let k = self.values.partition_point(|&x| x <= t);
        self.level(k)
    }

    pub fn step_tail(&self) -> StepTail {
        StepTail {
            breakpoints: self.values.clone(),
            levels: (1..=self.values.len()).map(|k| self.level(k)).collect(),
            total_mass: self.total_mass(),
        }
    }

    /// `inf{t : T_n^w(t) <= p}`, exact on the step function.
    pub fn quantile(&self, p: f64) -> QuantileEstimate {
        // Smallest k with T_n^w(x_k) = level(k + 1) <= p.
        let (mut lo, mut hi) = (0, self.values.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.level(mid + 1) > p {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let idx = lo;
        QuantileEstimate {
            value: self.values[idx],
            mass_deficient: self.total_mass() <= p,
        }
    }

    /// `∫_a^b (T_n^w)⁻¹(u) du` for `0 <= a <= b <= total_mass`.
    pub fn quantile_integral(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0 && a <= b) {
            return Err(Error::InvalidLevels { q: a, p: b });
        }
        let total = self.total_mass();
        if b > total {
            return Err(Error::MassDeficient {
                p: b,
                total_mass: total,
            });
        }
        // The quantile equals x_k on [level(k+1), level(k)).
        let mut acc = 0.0;
        for k in (0..self.values.len()).rev() {
            let lo = self.level(k + 1);
            if lo >= b {
                break;
            }
            let hi = self.level(k);
            let overlap = hi.min(b) - lo.max(a);
            if overlap > 0.0 {
                acc += self.values[k] * overlap;
            }
        }
        Ok(acc)
    }

    /// `γ_p = (1/p) ∫_0^p (T_n^w)⁻¹(u) du`.
    pub fn expected_shortfall(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(Error::Domain {
                what: "shortfall level",
                value: p,
            });
        }
        let total = self.total_mass();
        if p >= total {
            return Err(Error::MassDeficient { p, total_mass: total });
        }
        Ok(self.quantile_integral(0.0, p)? / p)
    }

    /// `γ_{q,p} = (1/p) ∫_q^p (T_n^w)⁻¹(u) du`.
    pub fn truncated_expected_shortfall(&self, q: f64, p: f64) -> Result<f64> {
        if !(q > 0.0 && q < p) {
            return Err(Error::InvalidLevels { q, p });
        }
        Ok(self.quantile_integral(q, p)? / p)
    }

    /// `∫_t^∞ T_n^w(x) dx = (1/n) Σ wᵢ (xᵢ - t)⁺`.
    pub fn integrated_tail(&self, t: f64) -> f64 {
        let k = self.values.partition_point(|&x| x <= t);
        let s: f64 = self.values[k..]
            .iter()
            .zip(&self.weights[k..])
            .map(|(x, w)| w * (x - t))
            .sum();
        s / self.n as f64
    }

    /// `b_n (T_n^w(t) - T(t))` on each grid point.
    pub fn deviation_process(&self, model: &AnalyticDistribution, grid: &[f64], b_n: f64) -> Vec<f64> {
        grid.iter().map(|&t| b_n * (self.tail(t) - model.tail(t))).collect()
    }

    /// Writes `value,weight` rows under a `value,weight,n=<n>` header.
    /// Numbers use the shortest representation that parses back to the
    /// same double.
    pub fn write_delimited<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "value,weight,n={}", self.n)?;
        for (x, w) in self.atoms() {
            writeln!(out, "{x},{w}")?;
        }
        Ok(())
    }

    pub fn read_delimited<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing header".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let n = header
            .trim()
            .strip_prefix("value,weight,n=")
            .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("bad n in header: {e}")))?;
        let mut atoms = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (x, w) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", i + 2)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))
            };
            atoms.push((parse(x)?, parse(w)?));
        }
        Self::from_atoms(atoms, n)
    }
}

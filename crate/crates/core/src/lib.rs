//! Importance-sampling estimation of tail probabilities, quantiles and
//! Expected Shortfall, with moderate-deviation rate calculators for
//! comparing sampling distributions and a replication harness.

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod parallel;
pub mod quadrature;
pub mod rate_functions;
pub mod weighted_empirical;

mod normal;

pub use distributions::{AnalyticDistribution, Family, RandomStream, SamplingScheme, WeightKind};
pub use error::{Error, Result};
pub use weighted_empirical::{StepTail, WeightedSample};

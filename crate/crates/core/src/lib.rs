// negated comparisons such as `!(x > 0.0)` are used on purpose: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basins;
pub mod error;
pub mod field;
pub mod gef;
pub mod matching;
pub mod metric;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod toys;
pub mod whitney;
pub mod zeros;

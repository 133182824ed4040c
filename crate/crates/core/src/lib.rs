#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fit;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod series;
pub mod search;
pub mod refine;
pub mod stats;
pub mod bootstrap;
pub mod simulate;
pub mod dft;
pub mod analysis;
pub mod select;

pub use error::{Error, Result};

/// Double-precision aliases for the common types.
pub type Series = series::TimeSeries<f64>;
pub type Spec = model::ModelSpec<f64>;
pub type Beta = model::BetaVector<f64>;
pub type AnalysisF64 = analysis::Analysis<f64>;

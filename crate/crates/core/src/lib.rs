//! Monte Carlo confidence sets for identified sets in partially identified
//! likelihood and GMM models.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criterion;
pub mod error;
pub mod models;
pub mod optim;
pub mod param;
pub mod procedures;
pub mod smc;
pub mod stats;
pub mod study;

pub use criterion::{qlr, Criterion, CriterionKind, QlrContext};
pub use error::{Error, Result};
pub use param::{ParamSpace, ParamVector, Prior, SubvectorMap};
pub use smc::{ParticleCloud, SmcConfig};

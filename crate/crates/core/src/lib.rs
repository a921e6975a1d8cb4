//! Age-weighted FedSGD under random device selection, with KKT energy-minimizing
//! resource allocation and swap-matching sub-channel assignment.
//!
//! Module map:
//!
//! - [`learning`]: softmax MLP with exact gradients, synthetic/IDX data, non-IID partitioning
//! - [`federation`]: selection, age-of-information weights, aggregation and the divergence /
//!   variance analytics
//! - [`wireless`]: device placement, channel gains and the time/energy model
//! - [`alloc`]: closed-form per-device computing/power allocation plus a 1-D oracle
//! - [`matching`]: swap matching of devices to sub-channels with exhaustive baseline
//! - [`sim`]: configuration, round orchestration, metric export and figure presets

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod error;
pub mod federation;
pub mod learning;
pub mod matching;
pub mod rng;
pub mod sim;
pub mod wireless;

pub use error::{Error, Result};

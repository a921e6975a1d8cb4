//! Server-side federation logic: who participates, how their gradients are weighted and
//! combined, and the analytics that quantify the error random selection introduces.

mod aggregate;
mod analytics;
mod selection;

use std::collections::BTreeMap;

pub use aggregate::{aggregate, apply_update, selection_error, weight_divergence};
pub use analytics::{
    class_distribution, divergence_bound, error_decomposition_check, estimate_lipschitz, lipschitz_ratio,
    variance_enumeration_oracle, variance_formula, ENUMERATION_LIMIT,
};
pub use selection::{age_weights, age_weights_with_exponent, select_random, AoiVector};

/// Per-device values keyed by device id, iterated in ascending id order.
pub type DeviceMap<T> = BTreeMap<usize, T>;

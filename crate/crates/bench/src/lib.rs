//! Shared fixtures for the criterion benchmarks.

use teleportsim_core::{SystemParams, UnknownQubit};

/// Parameter set used by every benchmark.
pub fn default_params() -> SystemParams {
    SystemParams::default()
}

/// Small-cavity variant for the master-equation benchmark.
pub fn small_cavity_params() -> SystemParams {
    SystemParams::default().with_n_max(3)
}

pub fn payload() -> UnknownQubit {
    teleportsim_core::protocol::sample_unknown_qubit(7)
}

//! Cavity-QED teleportation without a Bell-state measurement.
//!
//! Two atoms crossing a strongly driven, large-detuned cavity pick up an
//! effective `λ(I + σx⊗σx)` interaction. One crossing entangles a pair into
//! the shared channel; a second crossing with the payload atom, followed by
//! separate `{|e>, |g>}` detections, teleports the payload up to a Pauli
//! correction.
//!
//! - [`linalg`]: dense complex matrices, Kronecker products, Hermitian
//!   exponentials, partial traces, fidelities.
//! - [`model`]: effective and full Hamiltonians and their propagators.
//! - [`protocol`]: channel generation, teleport leg, measurement, corrections.
//! - [`decoherence`]: master-equation runs with cavity loss and thermal noise.

pub mod decoherence;
pub mod linalg;
pub mod model;
pub mod protocol;

pub use decoherence::{
    protocol_fidelity_open_system, teleport_channel_open_system, thermal_state, DecoherenceError, LindbladSpec,
    MasterEquationRun, TeleportChannel,
};
pub use linalg::{fidelity_up_to_phase, kron, partial_trace, ComplexMatrix, DensityMatrix, LinalgError, PureState};
pub use model::{DerivedParams, ModelError, SystemParams};
pub use protocol::{
    AtomLevel, Correction, MeasurementOutcome, Outcome, ProtocolError, TeleportResult, UnknownQubit,
};
pub use num_complex::Complex64 as C64;

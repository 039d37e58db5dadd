//! Teleportation of an unknown atomic state without a Bell-state measurement,
//! under the effective dispersive dynamics.
//!
//! 1. Atoms 2 and 3 cross the cavity together: `|gg> → (|ee> + i|gg>)/√2`
//!    up to a global phase when `λt = π/4` and `Ωt = Nπ`.
//! 2. Atoms 1 (payload) and 2 cross a cavity for the same time.
//! 3. Atoms 1 and 2 are detected in the `{|e>, |g>}` product basis; each of
//!    the four outcomes has probability ¼ and leaves atom 3 one Pauli
//!    correction away from the payload.

use std::fmt;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{fidelity_up_to_phase, ops, ComplexMatrix, LinalgError, PureState};
use crate::model::{effective_propagator, DerivedParams, ModelError, SystemParams};

/// Relative slack on `λt = π/4` and `Ωt = Nπ` accepted by [`generate_channel_at`].
pub const TIMING_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("input amplitudes are not normalized (|α|²+|β|² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("timing condition violated: {0}")]
    TimingNotSatisfied(String),
    #[error("measurement branch {0} has zero probability")]
    ZeroProbabilityBranch(Outcome),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Payload `α|e> + β|g>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnknownQubit {
    pub alpha: C64,
    pub beta: C64,
}

impl UnknownQubit {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let norm_sqr = alpha.norm_sqr() + beta.norm_sqr();
        if (norm_sqr - 1.0).abs() > Self::NORM_TOL {
            return Err(ProtocolError::NotNormalized { norm_sqr });
        }
        Ok(Self { alpha, beta })
    }

    pub fn excited() -> Self {
        Self { alpha: C64::new(1.0, 0.0), beta: C64::new(0.0, 0.0) }
    }

    pub fn ground() -> Self {
        Self { alpha: C64::new(0.0, 0.0), beta: C64::new(1.0, 0.0) }
    }

    pub fn to_state(&self) -> PureState {
        PureState::new(vec![2], vec![self.alpha, self.beta]).expect("normalized qubit")
    }

    /// The six Pauli eigenstates. Averaging a fidelity over them gives the
    /// exact Haar average (they form a 2-design).
    pub fn axis_states() -> [Self; 6] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = |a: (f64, f64), b: (f64, f64)| Self { alpha: C64::new(a.0, a.1), beta: C64::new(b.0, b.1) };
        [
            c((1.0, 0.0), (0.0, 0.0)),
            c((0.0, 0.0), (1.0, 0.0)),
            c((s, 0.0), (s, 0.0)),
            c((s, 0.0), (-s, 0.0)),
            c((s, 0.0), (0.0, s)),
            c((s, 0.0), (0.0, -s)),
        ]
    }
}

/// Haar-uniform payload drawn from a seeded generator.
pub fn sample_unknown_qubit(rng_seed: u64) -> UnknownQubit {
    sample_unknown_qubit_from(&mut ChaCha8Rng::seed_from_u64(rng_seed))
}

/// Haar-uniform payload: a normalized complex Gaussian vector.
pub fn sample_unknown_qubit_from<R: Rng + ?Sized>(rng: &mut R) -> UnknownQubit {
    loop {
        let x: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return UnknownQubit { alpha: C64::new(x[0], x[1]) / norm, beta: C64::new(x[2], x[3]) / norm };
        }
    }
}

/// Detected level of one atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomLevel {
    Excited,
    Ground,
}

impl AtomLevel {
    pub fn index(self) -> usize {
        match self {
            Self::Excited => 0,
            Self::Ground => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Self::Excited => 'e',
            Self::Ground => 'g',
        }
    }
}

/// Joint detection result on atoms 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Outcome {
    pub atom1: AtomLevel,
    pub atom2: AtomLevel,
}

impl Outcome {
    /// Basis order `ee, eg, ge, gg`.
    pub const ALL: [Outcome; 4] = [
        Outcome { atom1: AtomLevel::Excited, atom2: AtomLevel::Excited },
        Outcome { atom1: AtomLevel::Excited, atom2: AtomLevel::Ground },
        Outcome { atom1: AtomLevel::Ground, atom2: AtomLevel::Excited },
        Outcome { atom1: AtomLevel::Ground, atom2: AtomLevel::Ground },
    ];

    pub fn index(self) -> usize {
        2 * self.atom1.index() + self.atom2.index()
    }

    pub fn correction(self) -> Correction {
        correction_for_outcome(self.atom1, self.atom2)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.atom1.symbol(), self.atom2.symbol())
    }
}

/// Local operation the receiver applies to atom 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Correction {
    Identity,
    PauliZ,
    PauliY,
    PauliX,
}

impl Correction {
    pub fn matrix(self) -> ComplexMatrix {
        match self {
            Self::Identity => ComplexMatrix::identity(2),
            Self::PauliZ => ops::sigma_z(),
            Self::PauliY => ops::sigma_y(),
            Self::PauliX => ops::sigma_x(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Identity => "I",
            Self::PauliZ => "sigma_z",
            Self::PauliY => "sigma_y",
            Self::PauliX => "sigma_x",
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Receiver's lookup table from detection result to correction.
pub fn correction_for_outcome(atom1: AtomLevel, atom2: AtomLevel) -> Correction {
    use AtomLevel::{Excited as E, Ground as G};
    match (atom1, atom2) {
        (E, E) => Correction::Identity,
        (G, G) => Correction::PauliZ,
        (E, G) => Correction::PauliY,
        (G, E) => Correction::PauliX,
    }
}

/// One projection branch of the joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub atom1: AtomLevel,
    pub atom2: AtomLevel,
    pub probability: f64,
    /// Atom-3 branch before renormalization; `norm_sqr() == probability`.
    pub collapsed_state: PureState,
}

impl MeasurementOutcome {
    pub fn outcome(&self) -> Outcome {
        Outcome { atom1: self.atom1, atom2: self.atom2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeleportResult {
    pub outcome: MeasurementOutcome,
    pub correction_applied: Correction,
    /// Corrected, normalized atom-3 state.
    pub final_state: PureState,
    pub fidelity: f64,
}

fn check_timing(p: &SystemParams, t: f64) -> Result<()> {
    let d = DerivedParams::from(p);
    let rel = (t - d.t_channel).abs() / d.t_channel;
    if rel > TIMING_TOL {
        return Err(ProtocolError::TimingNotSatisfied(format!(
            "λt = {:.12} differs from π/4 (relative error {rel:.3e})",
            d.lambda * t
        )));
    }
    let turns = p.omega_drive * t / std::f64::consts::PI;
    let slack = (turns - turns.round()).abs();
    if turns.round() < 1.0 || slack > TIMING_TOL * turns.max(1.0) {
        return Err(ProtocolError::TimingNotSatisfied(format!(
            "Ωt/π = {turns:.12} is not a positive integer"
        )));
    }
    Ok(())
}

/// Effective evolution of `|g>₂|g>₃` for an arbitrary time. No timing checks.
pub fn channel_state_at(p: &SystemParams, t: f64) -> PureState {
    let gg = PureState::basis(vec![2, 2], 3).expect("two-atom basis state");
    gg.apply(&effective_propagator(p, t), &[0, 1]).expect("4x4 propagator")
}

/// Channel generation at an explicit time, rejecting times that miss the
/// `λt = π/4`, `Ωt = Nπ` conditions.
pub fn generate_channel_at(p: &SystemParams, t: f64) -> Result<PureState> {
    check_timing(p, t)?;
    Ok(channel_state_at(p, t))
}

/// Channel `(|ee> + i|gg>)/√2` (up to global phase) on atoms 2, 3.
pub fn generate_channel(p: &SystemParams) -> Result<PureState> {
    generate_channel_at(p, p.derived().t_channel)
}

/// The target channel state `(|ee> + i|gg>)/√2`.
pub fn ideal_channel() -> PureState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    PureState::new(vec![2, 2], vec![C64::new(s, 0.0), z, z, C64::new(0.0, s)]).expect("normalized")
}

/// Joint state of atoms 1, 2, 3 after atoms 1 and 2 interact for time `t`.
pub fn teleport_evolution_at(q: &UnknownQubit, channel: &PureState, p: &SystemParams, t: f64) -> Result<PureState> {
    if channel.dims() != [2, 2] {
        return Err(LinalgError::DimensionMismatch { expected: vec![2, 2], found: channel.dims().to_vec() }.into());
    }
    let joint = q.to_state().tensor(channel);
    Ok(joint.apply(&effective_propagator(p, t), &[0, 1])?)
}

/// Joint evolution at the protocol timing `λt′ = π/4`.
pub fn teleport_evolution(q: &UnknownQubit, channel: &PureState, p: &SystemParams) -> Result<PureState> {
    teleport_evolution_at(q, channel, p, p.derived().t_channel)
}

/// All four product-basis branches of a three-atom state, in `Outcome::ALL` order.
pub fn measure_and_collapse(joint: &PureState) -> Result<[MeasurementOutcome; 4]> {
    if joint.dims() != [2, 2, 2] {
        return Err(LinalgError::DimensionMismatch { expected: vec![2, 2, 2], found: joint.dims().to_vec() }.into());
    }
    let amps = joint.amplitudes();
    Ok(Outcome::ALL.map(|o| {
        let base = 2 * o.index();
        let branch = vec![amps[base], amps[base + 1]];
        let probability = branch.iter().map(C64::norm_sqr).sum();
        MeasurementOutcome {
            atom1: o.atom1,
            atom2: o.atom2,
            probability,
            collapsed_state: PureState::new(vec![2], branch).expect("branch of a normalized state"),
        }
    }))
}

/// Normalizes a branch, applies the receiver's correction and scores it.
pub fn apply_correction(q: &UnknownQubit, outcome: MeasurementOutcome) -> Result<TeleportResult> {
    let correction = outcome.outcome().correction();
    let normalized = outcome
        .collapsed_state
        .normalized()
        .ok_or(ProtocolError::ZeroProbabilityBranch(outcome.outcome()))?;
    let final_state = normalized.apply(&correction.matrix(), &[0])?;
    let fidelity = fidelity_up_to_phase(&final_state, &q.to_state())?;
    Ok(TeleportResult { outcome, correction_applied: correction, final_state, fidelity })
}

/// Every branch of the protocol at its nominal timing, corrected and scored.
pub fn enumerate_outcomes(q: &UnknownQubit, p: &SystemParams) -> Result<[TeleportResult; 4]> {
    let channel = generate_channel(p)?;
    let joint = teleport_evolution(q, &channel, p)?;
    let [a, b, c, d] = measure_and_collapse(&joint)?;
    Ok([apply_correction(q, a)?, apply_correction(q, b)?, apply_correction(q, c)?, apply_correction(q, d)?])
}

/// One seeded run: sample a detection outcome with its Born probability,
/// then correct.
pub fn run_protocol(q: &UnknownQubit, p: &SystemParams, rng_seed: u64) -> Result<TeleportResult> {
    let channel = generate_channel(p)?;
    let joint = teleport_evolution(q, &channel, p)?;
    let outcomes = measure_and_collapse(&joint)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let chosen = sample_outcome(&outcomes, rng.random::<f64>());
    apply_correction(q, outcomes[chosen].clone())
}

/// Index of the branch selected by a uniform draw `u ∈ [0, 1)`.
fn sample_outcome(outcomes: &[MeasurementOutcome; 4], u: f64) -> usize {
    let total: f64 = outcomes.iter().map(|o| o.probability).sum();
    let mut acc = 0.0;
    let target = u * total;
    for (i, o) in outcomes.iter().enumerate() {
        acc += o.probability;
        if target < acc {
            return i;
        }
    }
    // rounding at u → 1: last branch with nonzero weight
    outcomes.iter().rposition(|o| o.probability > 0.0).unwrap_or(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn channel_matches_target() {
        let p = SystemParams::default();
        let ch = generate_channel(&p).unwrap();
        assert!(fidelity_up_to_phase(&ch, &ideal_channel()).unwrap() >= 1.0 - 1e-10);
    }

    #[test]
    fn channel_at_zero_time_is_ground_pair() {
        let p = SystemParams::default();
        let s = channel_state_at(&p, 0.0);
        let gg = PureState::basis(vec![2, 2], 3).unwrap();
        assert!(fidelity_up_to_phase(&s, &gg).unwrap() > 1.0 - 1e-14);
    }

    #[test]
    fn channel_at_half_turn_is_excited_pair() {
        // λt = π/2 with Ωt = 2Nπ
        let base = SystemParams::default();
        let t = 2.0 * base.derived().t_channel;
        let p = SystemParams { omega_drive: 500.0 * PI / t, ..base };
        let s = channel_state_at(&p, t);
        let ee = PureState::basis(vec![2, 2], 0).unwrap();
        assert!(fidelity_up_to_phase(&s, &ee).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn off_timing_rejected() {
        let p = SystemParams::default();
        let t = p.derived().t_channel * (1.0 + 1e-6);
        assert!(matches!(generate_channel_at(&p, t), Err(ProtocolError::TimingNotSatisfied(_))));
        let p = SystemParams { omega_drive: 50.05, ..p };
        assert!(matches!(generate_channel(&p), Err(ProtocolError::TimingNotSatisfied(_))));
    }

    #[test]
    fn correction_table() {
        use AtomLevel::{Excited as E, Ground as G};
        assert_eq!(correction_for_outcome(E, E), Correction::Identity);
        assert_eq!(correction_for_outcome(G, G), Correction::PauliZ);
        assert_eq!(correction_for_outcome(E, G), Correction::PauliY);
        assert_eq!(correction_for_outcome(G, E), Correction::PauliX);
    }

    #[test]
    fn excited_payload_leaves_excited_atom3_on_ee() {
        let p = SystemParams::default();
        let joint = teleport_evolution(&UnknownQubit::excited(), &generate_channel(&p).unwrap(), &p).unwrap();
        let outs = measure_and_collapse(&joint).unwrap();
        let ee = &outs[0];
        assert_eq!(ee.outcome(), Outcome::ALL[0]);
        assert!(ee.collapsed_state.amplitudes()[1].norm() < 1e-12);
        assert!((ee.probability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn branches_match_receiver_table() {
        let p = SystemParams::default();
        let q = UnknownQubit::new(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let joint = teleport_evolution(&q, &generate_channel(&p).unwrap(), &p).unwrap();
        let outs = measure_and_collapse(&joint).unwrap();
        // expected unnormalized branches, up to a common phase per branch
        let (a, b) = (q.alpha * 0.5, q.beta * 0.5);
        let expected = [
            [a, b],  // ee: ½(α|e> + β|g>)
            [-b, a], // eg: ½(α|g> − β|e>)
            [b, a],  // ge: ½(α|g> + β|e>)
            [a, -b], // gg: ½(α|e> − β|g>)
        ];
        for (o, want) in outs.iter().zip(expected) {
            let got = o.collapsed_state.amplitudes();
            let overlap: C64 = got.iter().zip(&want).map(|(x, y)| y.conj() * x).sum();
            assert!((overlap.norm() - 0.25).abs() < 1e-12, "{o:?}");
            assert!((o.probability - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn every_branch_corrects_to_payload() {
        let p = SystemParams::default();
        let q = UnknownQubit::new(c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)).unwrap();
        for r in enumerate_outcomes(&q, &p).unwrap() {
            assert!((r.fidelity - 1.0).abs() < 1e-9, "{:?}", r.outcome.outcome());
        }
    }

    #[test]
    fn run_protocol_basis_payload() {
        let p = SystemParams::default();
        for seed in 0..8 {
            let r = run_protocol(&UnknownQubit::excited(), &p, seed).unwrap();
            assert!((r.fidelity - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn run_protocol_is_reproducible() {
        let p = SystemParams::default();
        let q = sample_unknown_qubit(9);
        assert_eq!(run_protocol(&q, &p, 5).unwrap(), run_protocol(&q, &p, 5).unwrap());
    }

    #[test]
    fn payload_validation() {
        assert!(matches!(
            UnknownQubit::new(c(1.0, 0.0), c(0.1, 0.0)),
            Err(ProtocolError::NotNormalized { .. })
        ));
    }

    #[test]
    fn sampler_is_deterministic_and_normalized() {
        let a = sample_unknown_qubit(42);
        assert_eq!(a, sample_unknown_qubit(42));
        assert_ne!(a, sample_unknown_qubit(43));
        for seed in 0..200 {
            let q = sample_unknown_qubit(seed);
            assert!((q.alpha.norm_sqr() + q.beta.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_branch_cannot_be_corrected() {
        let q = UnknownQubit::excited();
        let branch = MeasurementOutcome {
            atom1: AtomLevel::Excited,
            atom2: AtomLevel::Ground,
            probability: 0.0,
            collapsed_state: PureState::new(vec![2], vec![c(0.0, 0.0); 2]).unwrap(),
        };
        assert!(matches!(apply_correction(&q, branch), Err(ProtocolError::ZeroProbabilityBranch(_))));
    }

    #[test]
    fn sampling_skips_empty_branches() {
        let mk = |p: f64| MeasurementOutcome {
            atom1: AtomLevel::Excited,
            atom2: AtomLevel::Excited,
            probability: p,
            collapsed_state: PureState::new(vec![2], vec![c(p.sqrt(), 0.0), c(0.0, 0.0)]).unwrap(),
        };
        let outs = [mk(0.5), mk(0.5), mk(0.0), mk(0.0)];
        assert_eq!(sample_outcome(&outs, 0.0), 0);
        assert_eq!(sample_outcome(&outs, 0.75), 1);
        assert_eq!(sample_outcome(&outs, 1.0 - 1e-17), 1);
    }

    #[test]
    fn measure_rejects_wrong_register() {
        let s = PureState::basis(vec![2, 2], 0).unwrap();
        assert!(measure_and_collapse(&s).is_err());
    }
}

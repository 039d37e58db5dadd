//! Hamiltonians, propagators and parameter bookkeeping for two driven atoms
//! crossing a detuned single-mode cavity.
//!
//! All frequencies are angular and share one unit scale (conventionally
//! `g = 1`); times are in the inverse unit. The detuning is taken as
//! `δ = ω₀ − ω_a > 0`.
//!
//! Two levels of description live here:
//!
//! * the effective atom-only generator `H_eff = λ[½Σⱼ(|e><e| + |g><g|)ⱼ +
//!   (S₁⁺S₂⁺ + S₁⁺S₂⁻ + H.c.)]` with `λ = g²/(2δ)`, whose propagator is
//!   `U(t) = e^{−iH₀t} e^{−iH_eff t}` with `H₀ = Ω Σⱼ (Sⱼ⁺ + Sⱼ⁻)`;
//! * the full driven Jaynes–Cummings interaction in the frame rotating at
//!   the atomic frequency, `H_I(t) = Σⱼ [g(a⁺Sⱼ⁻e^{−iδt} + aSⱼ⁺e^{iδt}) +
//!   Ω(Sⱼ⁺ + Sⱼ⁻)]`, integrated by a time-ordered midpoint product.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{self, embed_operator, ops, ComplexMatrix, HermitianEigen, LinalgError};

/// Radiative lifetime of the circular Rydberg levels (n = 50, 51), seconds.
pub const RYDBERG_RADIATIVE_TIME_S: f64 = 3e-2;

/// Largest `Ω·dt` accepted by [`full_propagator`].
pub const MAX_DRIVE_PHASE_PER_STEP: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("only two atoms can share the cavity, got {0}")]
    UnsupportedAtomCount(usize),
    #[error("time step {dt} too large: Ω·dt = {drive_phase:.3} exceeds {limit}")]
    StepTooLarge { dt: f64, drive_phase: f64, limit: f64 },
    #[error("invalid time grid: dt = {dt}, t_final = {t_final}")]
    InvalidTimeGrid { dt: f64, t_final: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Physical parameters of one cavity crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Atom–cavity coupling `g`.
    pub g: f64,
    /// Detuning `δ = ω₀ − ω_a`.
    pub delta: f64,
    /// Classical Rabi frequency `Ω`.
    pub omega_drive: f64,
    /// Highest retained cavity Fock level.
    pub n_max: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self { g: 1.0, delta: 10.0, omega_drive: 50.0, n_max: 10 }
    }
}

impl SystemParams {
    pub fn new(g: f64, delta: f64, omega_drive: f64, n_max: usize) -> Result<Self> {
        let p = Self { g, delta, omega_drive, n_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.g.is_finite() && self.g > 0.0) {
            problems.push(format!("g must be > 0 (got {})", self.g));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            problems.push(format!("delta must be > 0 (got {})", self.delta));
        }
        if !(self.omega_drive.is_finite() && self.omega_drive >= 0.0) {
            problems.push(format!("omega_drive must be >= 0 (got {})", self.omega_drive));
        }
        if self.n_max < 1 {
            problems.push("n_max must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(problems.join("; ")))
        }
    }

    pub fn with_n_max(self, n_max: usize) -> Self {
        Self { n_max, ..self }
    }

    /// Regime ratios `(δ/(g/2), 2Ω/δ)`; the effective description needs both
    /// to be large. Recorded, never enforced.
    pub fn regime_ratios(&self) -> (f64, f64) {
        (self.delta / (self.g / 2.0), 2.0 * self.omega_drive / self.delta)
    }

    /// Snaps `Ω` to the nearest value with `Ω·t_channel = Nπ`, N ≥ 1.
    pub fn with_commensurate_drive(self) -> Self {
        let t = interaction_time(&self);
        let n = (self.omega_drive * t / PI).round().max(1.0);
        Self { omega_drive: n * PI / t, ..self }
    }

    pub fn derived(&self) -> DerivedParams {
        DerivedParams::from(self)
    }

    pub fn cavity_levels(&self) -> usize {
        self.n_max + 1
    }
}

/// Quantities fixed by [`SystemParams`] at the protocol timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub lambda: f64,
    /// Interaction time with `λt = π/4`.
    pub t_channel: f64,
    /// Nearest integer `N` to `Ω·t_channel/π`.
    pub drive_multiple: u64,
    /// `Ω·t_channel/π − N`; zero when the drive is commensurate.
    pub drive_phase_error: f64,
}

impl From<&SystemParams> for DerivedParams {
    fn from(p: &SystemParams) -> Self {
        let lambda = coupling_lambda(p);
        let t_channel = PI / (4.0 * lambda);
        let turns = p.omega_drive * t_channel / PI;
        let n = turns.round();
        Self { lambda, t_channel, drive_multiple: n as u64, drive_phase_error: turns - n }
    }
}

/// `λ = g²/(2δ)`.
pub fn coupling_lambda(p: &SystemParams) -> f64 {
    p.g * p.g / (2.0 * p.delta)
}

/// Interaction time `t = π/(4λ) = πδ/(2g²)` used for both cavity crossings.
pub fn interaction_time(p: &SystemParams) -> f64 {
    PI * p.delta / (2.0 * p.g * p.g)
}

/// Interaction time against the atomic radiative lifetime, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub interaction_time_s: f64,
    pub radiative_time_s: f64,
    pub ratio: f64,
}

/// Evaluates [`interaction_time`] for `g`, `δ` given in rad/s.
pub fn feasibility(g_rad_per_s: f64, delta_rad_per_s: f64, radiative_time_s: f64) -> Result<FeasibilityReport> {
    let p = SystemParams::new(g_rad_per_s, delta_rad_per_s, 0.0, 1)?;
    let t = interaction_time(&p);
    Ok(FeasibilityReport { interaction_time_s: t, radiative_time_s, ratio: t / radiative_time_s })
}

fn require_pair(n_atoms: usize) -> Result<()> {
    if n_atoms == 2 {
        Ok(())
    } else {
        Err(ModelError::UnsupportedAtomCount(n_atoms))
    }
}

/// Effective two-atom generator on the basis `|ee>, |eg>, |ge>, |gg>`.
///
/// The pair sum runs once over the unordered pair, giving `λ(I + σₓ⊗σₓ)`.
pub fn build_effective_hamiltonian(p: &SystemParams, n_atoms: usize) -> Result<ComplexMatrix> {
    require_pair(n_atoms)?;
    let lambda = coupling_lambda(p);
    let dims = [2, 2];
    let sp = ops::sigma_plus();
    let sm = ops::sigma_minus();
    let level_sum = &ops::excited_projector() + &ops::ground_projector();

    let mut h = ComplexMatrix::zeros(4, 4);
    for j in 0..2 {
        h = &h + &embed_operator(&level_sum.scale(C64::new(0.5, 0.0)), &[j], &dims)?;
    }
    let flip_flop = &linalg::kron(&sp, &sp) + &linalg::kron(&sp, &sm);
    h = &(&h + &flip_flop) + &flip_flop.dagger();
    Ok(h.scale(C64::new(lambda, 0.0)))
}

/// Drive generator `H₀ = Ω Σⱼ (Sⱼ⁺ + Sⱼ⁻)`.
pub fn build_h0(p: &SystemParams, n_atoms: usize) -> Result<ComplexMatrix> {
    require_pair(n_atoms)?;
    let x = ops::sigma_x();
    let one = ComplexMatrix::identity(2);
    let h = &linalg::kron(&x, &one) + &linalg::kron(&one, &x);
    Ok(h.scale(C64::new(p.omega_drive, 0.0)))
}

/// `U(t) = e^{−iH₀t} e^{−iH_eff t}` on two atoms. Never looks at `n_max`.
pub fn effective_propagator(p: &SystemParams, t: f64) -> ComplexMatrix {
    let drive = linalg::expm_unitary(&build_h0(p, 2).expect("pair"), t).expect("H₀ is Hermitian");
    let inner = linalg::expm_unitary(&build_effective_hamiltonian(p, 2).expect("pair"), t)
        .expect("H_eff is Hermitian");
    drive.matmul(&inner)
}

/// The two static pieces of the driven cavity Hamiltonian over a register
/// of atoms plus one cavity mode (cavity last).
///
/// `H_I(t) = e^{−iδt}·coupling + e^{iδt}·coupling† + drive`.
#[derive(Debug, Clone)]
pub struct DrivenCavityTerms {
    pub dims: Vec<usize>,
    /// `g Σⱼ a⁺Sⱼ⁻` over the atoms inside the cavity.
    pub coupling: ComplexMatrix,
    /// `Ω Σⱼ (Sⱼ⁺ + Sⱼ⁻)` over the atoms inside the cavity.
    pub drive: ComplexMatrix,
    pub delta: f64,
}

impl DrivenCavityTerms {
    /// `n_atoms` two-level atoms followed by the cavity; `coupled` lists the
    /// atoms that sit in the cavity and feel the drive.
    pub fn new(p: &SystemParams, n_atoms: usize, coupled: &[usize]) -> Result<Self> {
        if coupled.len() > 2 {
            return Err(ModelError::UnsupportedAtomCount(coupled.len()));
        }
        let mut dims = vec![2; n_atoms];
        dims.push(p.cavity_levels());
        let total: usize = dims.iter().product();
        let cavity = n_atoms;

        let mut coupling = ComplexMatrix::zeros(total, total);
        let mut drive = ComplexMatrix::zeros(total, total);
        let a_dag_s_minus = linalg::kron(&ops::sigma_minus(), &ops::creation(p.cavity_levels()));
        for &j in coupled {
            if j >= n_atoms {
                return Err(LinalgError::BadSubsystemIndex { index: j, n_subsystems: n_atoms }.into());
            }
            coupling = &coupling + &embed_operator(&a_dag_s_minus, &[j, cavity], &dims)?;
            drive = &drive + &embed_operator(&ops::sigma_x(), &[j], &dims)?;
        }
        Ok(Self {
            dims,
            coupling: coupling.scale(C64::new(p.g, 0.0)),
            drive: drive.scale(C64::new(p.omega_drive, 0.0)),
            delta: p.delta,
        })
    }

    pub fn at(&self, t: f64) -> ComplexMatrix {
        let phase = C64::from_polar(1.0, -self.delta * t);
        let c = self.coupling.scale(phase);
        &(&c + &c.dagger()) + &self.drive
    }

    /// Time-independent generator `H_I(0)`; `H_I(t) = P(t) H_I(0) P(t)†`
    /// with `P(t) = e^{−iδ a⁺a t}`.
    pub fn static_generator(&self) -> ComplexMatrix {
        self.at(0.0)
    }

    /// Diagonal of `P(t) = e^{−iδ a⁺a t}` over the full register.
    pub fn frame_phases(&self, t: f64) -> Vec<C64> {
        let levels = *self.dims.last().expect("cavity present");
        let total: usize = self.dims.iter().product();
        (0..total)
            .map(|i| C64::from_polar(1.0, -self.delta * (i % levels) as f64 * t))
            .collect()
    }
}

/// `H_I(t)` for the two cavity atoms: dimension `4·(n_max+1)`.
pub fn build_full_interaction_hamiltonian(p: &SystemParams, t: f64) -> ComplexMatrix {
    DrivenCavityTerms::new(p, 2, &[0, 1]).expect("two coupled atoms").at(t)
}

/// Default step `min(0.01/Ω, 0.01/δ)`.
pub fn default_full_dt(p: &SystemParams) -> f64 {
    let mut dt = 0.01 / p.delta;
    if p.omega_drive > 0.0 {
        dt = dt.min(0.01 / p.omega_drive);
    }
    dt
}

/// Time-ordered midpoint product `Π_k e^{−iH_I(t_k + dt/2)dt}` over
/// `[0, t_final]`, for the two cavity atoms plus the cavity.
///
/// The step count is `ceil(t_final/dt)` and the step is then shrunk so the
/// grid ends exactly at `t_final`.
pub fn full_propagator(p: &SystemParams, t_final: f64, dt: f64) -> Result<ComplexMatrix> {
    let terms = DrivenCavityTerms::new(p, 2, &[0, 1])?;
    time_ordered_midpoint(&terms, p.omega_drive, t_final, dt)
}

/// Midpoint product for arbitrary [`DrivenCavityTerms`].
///
/// Every step exponential is a phase conjugation of one static exponential,
/// `e^{−iH_I(m)dt} = P(m) E P(m)†` with `E = e^{−iH_I(0)dt}`, and
/// consecutive conjugations collapse to `P(m_{k+1})†P(m_k) = P(−dt)`:
///
/// `U = P(m_{N−1}) · (E·P(−dt))^{N−1} · E · P(m_0)†`.
pub fn time_ordered_midpoint(terms: &DrivenCavityTerms, omega_drive: f64, t_final: f64, dt: f64) -> Result<ComplexMatrix> {
    if !(dt > 0.0 && dt.is_finite() && t_final.is_finite() && dt <= t_final) {
        return Err(ModelError::InvalidTimeGrid { dt, t_final });
    }
    let drive_phase = omega_drive * dt;
    if drive_phase >= MAX_DRIVE_PHASE_PER_STEP {
        return Err(ModelError::StepTooLarge { dt, drive_phase, limit: MAX_DRIVE_PHASE_PER_STEP });
    }
    let steps = (t_final / dt - 1e-9).ceil().max(1.0) as u64;
    let h = t_final / steps as f64;

    let step = HermitianEigen::new(&terms.static_generator())?.propagator(h);
    let back = terms.frame_phases(-h);
    let mut repeated = step.clone();
    scale_columns(&mut repeated, &back);
    let repeated = polish_unitary(&repeated);
    let first_mid = 0.5 * h;
    let last_mid = (steps as f64 - 0.5) * h;

    let mut u = repeated.pow(steps - 1).matmul(&step);
    scale_columns(&mut u, &conj_all(&terms.frame_phases(first_mid)));
    scale_rows(&mut u, &terms.frame_phases(last_mid));
    Ok(u)
}

/// One Newton–Schulz step `X(3I − X†X)/2` towards the nearest unitary.
/// Removes rounding drift before a step is raised to a large power.
fn polish_unitary(x: &ComplexMatrix) -> ComplexMatrix {
    let n = x.rows();
    let gram = x.dagger().matmul(x);
    let mut corr = gram.scale(C64::new(-0.5, 0.0));
    for i in 0..n {
        corr[(i, i)] += C64::new(1.5, 0.0);
    }
    x.matmul(&corr)
}

/// Reference implementation: one eigendecomposition of `H_I(m_k)` per step.
pub fn time_ordered_midpoint_naive(terms: &DrivenCavityTerms, t_final: f64, steps: u64) -> Result<ComplexMatrix> {
    let h = t_final / steps as f64;
    let dim = terms.coupling.rows();
    let mut u = ComplexMatrix::identity(dim);
    for k in 0..steps {
        let mid = (k as f64 + 0.5) * h;
        u = linalg::expm_unitary(&terms.at(mid), h)?.matmul(&u);
    }
    Ok(u)
}

fn conj_all(v: &[C64]) -> Vec<C64> {
    v.iter().map(C64::conj).collect()
}

fn scale_columns(m: &mut ComplexMatrix, s: &[C64]) {
    let cols = m.cols();
    for (idx, z) in m.as_mut_slice().iter_mut().enumerate() {
        *z *= s[idx % cols];
    }
}

fn scale_rows(m: &mut ComplexMatrix, s: &[C64]) {
    let cols = m.cols();
    for (idx, z) in m.as_mut_slice().iter_mut().enumerate() {
        *z *= s[idx / cols];
    }
}

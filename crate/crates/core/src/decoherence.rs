//! Open-system check of the protocol: the full driven atoms + cavity model
//! with cavity damping, thermal photons and (optionally) atomic decay.
//!
//! Registers are laid out as two-level atoms followed by the cavity mode,
//! `[2, 2, ..., n_max + 1]`. The first two atoms sit in the cavity and feel
//! the drive; any further atom is a spectator. The master equation is
//!
//! `dρ/dt = −i[H_I(t), ρ] + κ(n̄+1)D[a]ρ + κn̄D[a⁺]ρ + γΣⱼD[Sⱼ⁻]ρ`,
//!
//! with `D[c]ρ = cρc† − ½{c†c, ρ}`, written in the same rotating frame as
//! `H_I(t)`.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{
    self, embed_operator, ops, partial_trace_matrix, ComplexMatrix, DensityMatrix, HermitianEigen, LinalgError,
    PureState,
};
use crate::model::{self, DrivenCavityTerms, ModelError, SystemParams};
use crate::protocol::{self, Outcome, ProtocolError, UnknownQubit};

/// Largest `Ω·dt` accepted by the master-equation integrator.
pub const MAX_DRIVE_PHASE_PER_STEP: f64 = 0.05;
/// Largest tail mass a truncated thermal distribution may discard.
pub const MAX_THERMAL_TAIL: f64 = 1e-4;
/// Negative eigenvalues below this abort integration.
pub const POSITIVITY_FATAL: f64 = -1e-4;
/// Negative eigenvalues below this are reported.
pub const POSITIVITY_WARN: f64 = -1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecoherenceError {
    #[error("invalid Lindblad rates: {0}")]
    InvalidRates(String),
    #[error("thermal state with n̄ = {n_bar} truncated at n_max = {n_max} discards {tail:.3e} > {MAX_THERMAL_TAIL:e}")]
    TruncationTooSevere { n_bar: f64, n_max: usize, tail: f64 },
    #[error("time step {dt} too large: Ω·dt = {drive_phase:.4} must stay below {MAX_DRIVE_PHASE_PER_STEP}")]
    StepTooLarge { dt: f64, drive_phase: f64 },
    #[error("invalid time grid: dt = {dt}, t_final = {t_final}")]
    InvalidTimeGrid { dt: f64, t_final: f64 },
    #[error("density matrix lost positivity at t = {t:.4} (min eigenvalue {min_eigenvalue:.3e})")]
    PositivityLost { t: f64, min_eigenvalue: f64 },
    #[error("register {0:?} is not atoms followed by a cavity mode")]
    BadLayout(Vec<usize>),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

pub type Result<T> = std::result::Result<T, DecoherenceError>;

/// Dissipation rates, in the same frequency units as `g`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LindbladSpec {
    /// Cavity field decay rate `κ`.
    pub kappa: f64,
    /// Thermal mean photon number `n̄` of the cavity bath.
    pub n_bar: f64,
    /// Atomic spontaneous emission rate `γ`.
    pub gamma_atom: f64,
}

impl LindbladSpec {
    pub fn new(kappa: f64, n_bar: f64, gamma_atom: f64) -> Result<Self> {
        let spec = Self { kappa, n_bar, gamma_atom };
        spec.validate()?;
        Ok(spec)
    }

    pub fn closed() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let bad: Vec<String> = [("kappa", self.kappa), ("n_bar", self.n_bar), ("gamma_atom", self.gamma_atom)]
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(k, v)| format!("{k} must be finite and >= 0 (got {v})"))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(DecoherenceError::InvalidRates(bad.join("; ")))
        }
    }
}

/// Truncation `4n̄ + 10` recommended for thermal runs.
pub fn thermal_n_max(n_bar: f64) -> usize {
    (4.0 * n_bar + 10.0).ceil() as usize
}

/// Geometric photon distribution `ρₙ ∝ n̄ⁿ/(1+n̄)ⁿ⁺¹`, renormalized after
/// truncation at `n_max`.
pub fn thermal_state(n_bar: f64, n_max: usize) -> Result<DensityMatrix> {
    if !(n_bar.is_finite() && n_bar >= 0.0) {
        return Err(DecoherenceError::InvalidRates(format!("n_bar = {n_bar}")));
    }
    if n_max < 1 {
        return Err(LinalgError::InvalidShape("n_max must be >= 1".into()).into());
    }
    let ratio = n_bar / (1.0 + n_bar);
    let weights: Vec<f64> = (0..=n_max).map(|n| ratio.powi(n as i32) / (1.0 + n_bar)).collect();
    let kept: f64 = weights.iter().sum();
    let tail = 1.0 - kept;
    if tail > MAX_THERMAL_TAIL {
        return Err(DecoherenceError::TruncationTooSevere { n_bar, n_max, tail });
    }
    let diag: Vec<C64> = weights.iter().map(|w| C64::new(w / kept, 0.0)).collect();
    Ok(DensityMatrix::from_parts(vec![n_max + 1], ComplexMatrix::from_diagonal(&diag))?)
}

/// `|n><n|` on a cavity truncated at `n_max`.
pub fn fock_state(n: usize, n_max: usize) -> Result<DensityMatrix> {
    Ok(PureState::basis(vec![n_max + 1], n)?.to_density())
}

/// Entries below this fraction of an operator's largest entry are dropped
/// when building sparse patterns.
const SPARSITY_CUT: f64 = 1e-14;
/// Largest number of distinct static eigenvalues handled by the drive frame.
const MAX_FRAME_LEVELS: usize = 8;

/// Sparse operator whose entries are a short Fourier series in time,
/// `X(t) = Σ_m e^{iν_m t} X_m`, stored on one compressed-row pattern.
#[derive(Debug, Clone)]
struct FourierOp {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    terms: Vec<(f64, Vec<C64>)>,
}

impl FourierOp {
    fn new(dim: usize, components: &[(f64, ComplexMatrix)]) -> Self {
        let scale = components.iter().map(|(_, m)| m.max_abs()).fold(0.0, f64::max);
        let cut = SPARSITY_CUT * scale;
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        row_start.push(0);
        for i in 0..dim {
            for j in 0..dim {
                if components.iter().any(|(_, m)| m[(i, j)].norm() > cut) {
                    cols.push(j);
                }
            }
            row_start.push(cols.len());
        }
        let mut terms: Vec<(f64, Vec<C64>)> = Vec::new();
        for (nu, m) in components {
            let vals: Vec<C64> = (0..dim)
                .flat_map(|i| (row_start[i]..row_start[i + 1]).map(move |idx| (i, idx)))
                .map(|(i, idx)| m[(i, cols[idx])])
                .collect();
            if vals.iter().all(|v| v.norm() <= cut) {
                continue;
            }
            match terms.iter_mut().find(|(f, _)| (f - nu).abs() <= 1e-9 * nu.abs().max(1.0)) {
                Some((_, acc)) => acc.iter_mut().zip(&vals).for_each(|(a, v)| *a += v),
                None => terms.push((*nu, vals)),
            }
        }
        Self { dim, row_start, cols, terms }
    }

    fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Entry values of `X(t)` in pattern order.
    fn assemble(&self, t: f64, vals: &mut [C64]) {
        vals.fill(C64::default());
        for (nu, term) in &self.terms {
            let phase = C64::from_polar(1.0, nu * t);
            for (v, x) in vals.iter_mut().zip(term) {
                *v += phase * x;
            }
        }
    }

    /// `out += coeff · X · x` for a dense row-major block, `X` given by `vals`.
    fn mul_add(&self, vals: &[C64], coeff: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for i in 0..d {
            let out_row = &mut out[i * d..(i + 1) * d];
            for idx in self.row_start[i]..self.row_start[i + 1] {
                let v = coeff * vals[idx];
                let k = self.cols[idx];
                for (o, &xv) in out_row.iter_mut().zip(&x[k * d..(k + 1) * d]) {
                    *o += v * xv;
                }
            }
        }
    }

    /// `out += coeff · x · X†`.
    fn mul_add_dagger_right(&self, vals: &[C64], coeff: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for j in 0..d {
            for idx in self.row_start[j]..self.row_start[j + 1] {
                let v = coeff * vals[idx].conj();
                let k = self.cols[idx];
                for i in 0..d {
                    out[i * d + j] += v * x[i * d + k];
                }
            }
        }
    }
}

/// `H(t) = static + e^{−iδt}·rotating + e^{iδt}·rotating†`.
#[derive(Debug, Clone)]
pub struct TimeDependentHamiltonian {
    static_part: ComplexMatrix,
    rotating: Option<(ComplexMatrix, f64)>,
}

impl TimeDependentHamiltonian {
    pub fn constant(h: ComplexMatrix) -> Result<Self> {
        let deviation = h.hermitian_deviation();
        if deviation > linalg::HERMITIAN_TOL {
            return Err(LinalgError::NonHermitianInput { deviation }.into());
        }
        Ok(Self { static_part: h, rotating: None })
    }

    pub fn driven_cavity(terms: &DrivenCavityTerms) -> Self {
        Self { static_part: terms.drive.clone(), rotating: Some((terms.coupling.clone(), terms.delta)) }
    }

    pub fn dim(&self) -> usize {
        self.static_part.rows()
    }

    pub fn at(&self, t: f64) -> ComplexMatrix {
        match &self.rotating {
            None => self.static_part.clone(),
            Some((c, delta)) => {
                let rc = c.scale(C64::from_polar(1.0, -delta * t));
                &(&self.static_part + &rc) + &rc.dagger()
            }
        }
    }
}

/// Interaction picture with respect to the static part `S`:
/// `X̃(t) = e^{iSt} X e^{−iSt}`.
#[derive(Debug, Clone)]
struct StaticFrame {
    eig: HermitianEigen,
    /// Cluster index of each eigenvalue and the cluster's eigenvalue.
    cluster_of: Vec<usize>,
    levels: Vec<f64>,
}

impl StaticFrame {
    /// `None` when `S` has too many distinct eigenvalues for a short
    /// Fourier expansion.
    fn new(s: &ComplexMatrix) -> Result<Option<Self>> {
        let eig = HermitianEigen::new(s)?;
        let tol = 1e-9 * eig.values.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let mut levels: Vec<f64> = Vec::new();
        let mut cluster_of = Vec::with_capacity(eig.values.len());
        for &v in &eig.values {
            match levels.iter().position(|l| (l - v).abs() <= tol) {
                Some(k) => cluster_of.push(k),
                None => {
                    if levels.len() == MAX_FRAME_LEVELS {
                        return Ok(None);
                    }
                    cluster_of.push(levels.len());
                    levels.push(v);
                }
            }
        }
        Ok(Some(Self { eig, cluster_of, levels }))
    }

    /// Splits `X` into `Σ_ν e^{iνt} X_ν` with `ν = s_a − s_b`.
    fn components(&self, x: &ComplexMatrix) -> Vec<(f64, ComplexMatrix)> {
        let v = &self.eig.vectors;
        let xp = v.dagger().matmul(x).matmul(v);
        let n = self.levels.len();
        let mut blocks: Vec<(f64, ComplexMatrix)> = Vec::new();
        let dim = x.rows();
        for a in 0..n {
            for b in 0..n {
                let nu = self.levels[a] - self.levels[b];
                let masked = ComplexMatrix::from_fn(dim, dim, |i, j| {
                    if self.cluster_of[i] == a && self.cluster_of[j] == b {
                        xp[(i, j)]
                    } else {
                        C64::default()
                    }
                });
                if masked.max_abs() == 0.0 {
                    continue;
                }
                let tol = 1e-9 * nu.abs().max(1.0);
                match blocks.iter_mut().find(|(f, _)| (f - nu).abs() <= tol) {
                    Some((_, acc)) => *acc = &*acc + &masked,
                    None => blocks.push((nu, masked)),
                }
            }
        }
        blocks.into_iter().map(|(nu, m)| (nu, v.matmul(&m).matmul(&v.dagger()))).collect()
    }

    /// `e^{−iSt} X e^{iSt}`.
    fn to_lab(&self, t: f64, x: &ComplexMatrix) -> ComplexMatrix {
        let u = self.eig.propagator(t);
        u.matmul(x).matmul(&u.dagger())
    }

    /// `e^{iSt} X e^{−iSt}`.
    fn to_frame(&self, t: f64, x: &ComplexMatrix) -> ComplexMatrix {
        self.to_lab(-t, x)
    }
}

/// Splits register dims into (number of atoms, cavity levels).
fn layout(dims: &[usize]) -> Result<(usize, usize)> {
    match dims.split_last() {
        Some((&cavity, atoms)) if cavity >= 2 && atoms.iter().all(|&d| d == 2) => Ok((atoms.len(), cavity)),
        _ => Err(DecoherenceError::BadLayout(dims.to_vec())),
    }
}

/// Precomputed generator of the master equation for one register.
///
/// Integration runs in the interaction picture of the static Hamiltonian
/// (the classical drive), where only the weak cavity coupling remains and
/// RK4 resolves the dynamics with a large margin.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    dims: Vec<usize>,
    dim: usize,
    static_part: ComplexMatrix,
    frame: Option<StaticFrame>,
    /// `H̃(t) − (i/2) Σ r c̃†c̃`.
    nonhermitian: FourierOp,
    jumps: Vec<(f64, FourierOp)>,
}

/// Reusable buffers for one right-hand-side evaluation.
struct Workspace {
    scratch: Vec<C64>,
    adjoint: Vec<C64>,
    h_vals: Vec<C64>,
    jump_vals: Vec<Vec<C64>>,
}

impl MasterEquation {
    pub fn new(dims: &[usize], h: &TimeDependentHamiltonian, spec: &LindbladSpec) -> Result<Self> {
        spec.validate()?;
        let (n_atoms, levels) = layout(dims)?;
        let dim: usize = dims.iter().product();
        if h.dim() != dim {
            return Err(LinalgError::DimensionMismatch { expected: vec![dim, dim], found: vec![h.dim(); 2] }.into());
        }
        let cavity = n_atoms;
        let mut collapse: Vec<(f64, ComplexMatrix)> = Vec::new();
        if spec.kappa > 0.0 {
            let a = embed_operator(&ops::annihilation(levels), &[cavity], dims)?;
            collapse.push((spec.kappa * (spec.n_bar + 1.0), a.clone()));
            if spec.n_bar > 0.0 {
                collapse.push((spec.kappa * spec.n_bar, a.dagger()));
            }
        }
        if spec.gamma_atom > 0.0 {
            for j in 0..n_atoms {
                collapse.push((spec.gamma_atom, embed_operator(&ops::sigma_minus(), &[j], dims)?));
            }
        }

        let frame = StaticFrame::new(&h.static_part)?;
        let split = |x: &ComplexMatrix| match &frame {
            Some(f) => f.components(x),
            None => vec![(0.0, x.clone())],
        };
        let mut h_terms: Vec<(f64, ComplexMatrix)> = Vec::new();
        if frame.is_none() {
            h_terms.push((0.0, h.static_part.clone()));
        }
        if let Some((c, delta)) = &h.rotating {
            h_terms.extend(split(c).into_iter().map(|(nu, m)| (nu - delta, m)));
            h_terms.extend(split(&c.dagger()).into_iter().map(|(nu, m)| (nu + delta, m)));
        }
        let mut k = ComplexMatrix::zeros(dim, dim);
        for (rate, c) in &collapse {
            k = &k + &c.dagger().matmul(c).scale(C64::new(*rate, 0.0));
        }
        h_terms.extend(split(&k).into_iter().map(|(nu, m)| (nu, m.scale(C64::new(0.0, -0.5)))));
        let jumps = collapse.iter().map(|(rate, c)| (*rate, FourierOp::new(dim, &split(c)))).collect();

        Ok(Self {
            dims: dims.to_vec(),
            dim,
            static_part: h.static_part.clone(),
            nonhermitian: FourierOp::new(dim, &h_terms),
            frame,
            jumps,
        })
    }

    /// Driven two-atom cavity Hamiltonian over `dims`; the first two atoms
    /// couple, the rest are spectators.
    pub fn driven(dims: &[usize], p: &SystemParams, spec: &LindbladSpec) -> Result<Self> {
        let (n_atoms, levels) = layout(dims)?;
        if levels != p.cavity_levels() {
            return Err(LinalgError::DimensionMismatch {
                expected: vec![p.cavity_levels()],
                found: vec![levels],
            }
            .into());
        }
        let coupled: Vec<usize> = (0..n_atoms.min(2)).collect();
        let terms = DrivenCavityTerms::new(p, n_atoms, &coupled)?;
        Self::new(dims, &TimeDependentHamiltonian::driven_cavity(&terms), spec)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn dim(&self) -> usize {
        self.dim
    }

    /// Stored nonzeros of the effective Hamiltonian pattern and of every jump.
    pub fn nonzeros(&self) -> (usize, Vec<usize>) {
        (self.nonhermitian.nnz(), self.jumps.iter().map(|(_, j)| j.nnz()).collect())
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            scratch: vec![C64::default(); self.dim * self.dim],
            adjoint: vec![C64::default(); self.dim * self.dim],
            h_vals: vec![C64::default(); self.nonhermitian.nnz()],
            jump_vals: self.jumps.iter().map(|(_, j)| vec![C64::default(); j.nnz()]).collect(),
        }
    }

    /// Writes `dρ̃/dt` in the interaction picture into `out`. With
    /// `hermitian` set, `ρ` is taken to be Hermitian and only `Hρ` is formed.
    fn rhs_frame_into(&self, t: f64, rho: &[C64], out: &mut [C64], ws: &mut Workspace, hermitian: bool) {
        let d = self.dim;
        let scratch = &mut ws.scratch;
        let minus_i = C64::new(0.0, -1.0);
        // G = −i H_nh(t) ρ, right-hand term (−i H_nh ρ†)†
        scratch.fill(C64::default());
        self.nonhermitian.assemble(t, &mut ws.h_vals);
        self.nonhermitian.mul_add(&ws.h_vals, minus_i, rho, scratch);
        if hermitian {
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = scratch[i * d + j] + scratch[j * d + i].conj();
                }
            }
        } else {
            out.copy_from_slice(scratch);
            let adj = &mut ws.adjoint;
            for i in 0..d {
                for j in 0..d {
                    adj[i * d + j] = rho[j * d + i].conj();
                }
            }
            scratch.fill(C64::default());
            self.nonhermitian.mul_add(&ws.h_vals, minus_i, adj, scratch);
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += scratch[j * d + i].conj();
                }
            }
        }
        for ((rate, c), vals) in self.jumps.iter().zip(ws.jump_vals.iter_mut()) {
            if c.is_empty() {
                continue;
            }
            c.assemble(t, vals);
            scratch.fill(C64::default());
            c.mul_add(vals, C64::new(1.0, 0.0), rho, scratch);
            c.mul_add_dagger_right(vals, C64::new(*rate, 0.0), scratch, out);
        }
    }

    /// `dρ/dt` at time `t` in the rotating frame of `H_I(t)`.
    pub fn rhs(&self, t: f64, rho: &ComplexMatrix) -> ComplexMatrix {
        let d = self.dim;
        assert_eq!((rho.rows(), rho.cols()), (d, d), "rho shape");
        let mut ws = self.workspace();
        let mut out = ComplexMatrix::zeros(d, d);
        match &self.frame {
            None => {
                self.rhs_frame_into(t, rho.as_slice(), out.as_mut_slice(), &mut ws, false);
                out
            }
            Some(frame) => {
                let tilde = frame.to_frame(t, rho);
                self.rhs_frame_into(t, tilde.as_slice(), out.as_mut_slice(), &mut ws, false);
                let s = &self.static_part;
                let comm = (&s.matmul(rho) - &rho.matmul(s)).scale(C64::new(0.0, -1.0));
                &comm + &frame.to_lab(t, &out)
            }
        }
    }
}

/// `dρ/dt` for one density matrix.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    h: &TimeDependentHamiltonian,
    spec: &LindbladSpec,
    t: f64,
) -> Result<ComplexMatrix> {
    Ok(MasterEquation::new(rho.dims(), h, spec)?.rhs(t, rho.matrix()))
}

/// Default RK4 step `0.04/max(Ω, δ)`.
pub fn default_master_dt(p: &SystemParams) -> f64 {
    0.04 / p.omega_drive.max(p.delta)
}

/// Final state plus integrator diagnostics.
#[derive(Debug, Clone)]
pub struct MasterEquationRun {
    pub state: DensityMatrix,
    pub steps: u64,
    /// `max_t |tr ρ(t) − tr ρ(0)|` over the step grid.
    pub max_trace_deviation: f64,
    /// Smallest eigenvalue seen at the positivity checkpoints.
    pub min_eigenvalue: f64,
    /// Set when `min_eigenvalue < POSITIVITY_WARN`.
    pub positivity_warning: bool,
}

/// Options for [`evolve_operator`].
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Drive frequency used for the step-size guard.
    pub omega_drive: f64,
    /// Eigenvalue checkpoints (0 disables); only meaningful for states.
    pub positivity_checks: u32,
}

/// Diagnostics of an operator propagation.
#[derive(Debug, Clone)]
pub struct OperatorRun {
    pub operator: ComplexMatrix,
    pub steps: u64,
    pub max_trace_deviation: f64,
    pub min_eigenvalue: f64,
}

/// Fixed-step classic RK4 for an arbitrary operator under the master
/// equation. Linear, so it also propagates non-Hermitian operators.
pub fn evolve_operator(eq: &MasterEquation, op0: &ComplexMatrix, opts: EvolveOptions) -> Result<OperatorRun> {
    let EvolveOptions { t_final, dt, omega_drive, positivity_checks } = opts;
    if !(dt > 0.0 && dt.is_finite() && t_final >= 0.0 && t_final.is_finite()) {
        return Err(DecoherenceError::InvalidTimeGrid { dt, t_final });
    }
    let drive_phase = omega_drive * dt;
    if drive_phase >= MAX_DRIVE_PHASE_PER_STEP {
        return Err(DecoherenceError::StepTooLarge { dt, drive_phase });
    }
    let d = eq.dim();
    if op0.rows() != d || op0.cols() != d {
        return Err(LinalgError::DimensionMismatch { expected: vec![d, d], found: vec![op0.rows(), op0.cols()] }.into());
    }
    let steps = if t_final == 0.0 { 0 } else { (t_final / dt - 1e-9).ceil().max(1.0) as u64 };
    let h = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    let check_every = match positivity_checks {
        0 => u64::MAX,
        n => (steps / u64::from(n)).max(1),
    };

    let n = d * d;
    let hermitian = op0.hermitian_deviation() <= 1e-14 * op0.max_abs();
    let mut rho = op0.as_slice().to_vec();
    let mut k = [vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n]];
    let mut stage = vec![C64::default(); n];
    let mut ws = eq.workspace();
    let trace = |m: &[C64]| (0..d).map(|i| m[i * d + i]).sum::<C64>();
    let trace0 = trace(&rho);
    let mut max_trace_deviation = 0.0_f64;
    let mut min_eigenvalue = f64::INFINITY;

    for step in 0..steps {
        let t = step as f64 * h;
        eq.rhs_frame_into(t, &rho, &mut k[0], &mut ws, hermitian);
        for (s, (r, k0)) in stage.iter_mut().zip(rho.iter().zip(&k[0])) {
            *s = r + k0 * (0.5 * h);
        }
        eq.rhs_frame_into(t + 0.5 * h, &stage, &mut k[1], &mut ws, hermitian);
        for (s, (r, k1)) in stage.iter_mut().zip(rho.iter().zip(&k[1])) {
            *s = r + k1 * (0.5 * h);
        }
        eq.rhs_frame_into(t + 0.5 * h, &stage, &mut k[2], &mut ws, hermitian);
        for (s, (r, k2)) in stage.iter_mut().zip(rho.iter().zip(&k[2])) {
            *s = r + k2 * h;
        }
        eq.rhs_frame_into(t + h, &stage, &mut k[3], &mut ws, hermitian);
        let w = h / 6.0;
        for (idx, r) in rho.iter_mut().enumerate() {
            *r += (k[0][idx] + 2.0 * (k[1][idx] + k[2][idx]) + k[3][idx]) * w;
        }
        if hermitian {
            // the Hermitian-only right-hand side amplifies anti-Hermitian rounding
            for i in 0..d {
                for j in i..d {
                    let avg = 0.5 * (rho[i * d + j] + rho[j * d + i].conj());
                    rho[i * d + j] = avg;
                    rho[j * d + i] = avg.conj();
                }
            }
        }

        max_trace_deviation = max_trace_deviation.max((trace(&rho) - trace0).norm());
        if (step + 1) % check_every == 0 || (positivity_checks > 0 && step + 1 == steps) {
            let m = ComplexMatrix::new(d, d, rho.clone())?;
            let min = HermitianEigen::new(&m.hermitian_part())?.min_value();
            min_eigenvalue = min_eigenvalue.min(min);
            if min < POSITIVITY_FATAL {
                return Err(DecoherenceError::PositivityLost { t: t + h, min_eigenvalue: min });
            }
        }
    }
    let tilde = ComplexMatrix::new(d, d, rho)?;
    let operator = match &eq.frame {
        Some(frame) => frame.to_lab(t_final, &tilde),
        None => tilde,
    };
    Ok(OperatorRun { operator, steps, max_trace_deviation, min_eigenvalue })
}

/// Integrates `rho0` under the driven cavity master equation.
///
/// The register must be atoms followed by the cavity, with the cavity
/// truncated at `p.n_max`.
pub fn integrate_master_equation(
    rho0: &DensityMatrix,
    p: &SystemParams,
    spec: &LindbladSpec,
    t_final: f64,
    dt: f64,
) -> Result<MasterEquationRun> {
    let eq = MasterEquation::driven(rho0.dims(), p, spec)?;
    let run = evolve_operator(
        &eq,
        rho0.matrix(),
        EvolveOptions { t_final, dt, omega_drive: p.omega_drive, positivity_checks: 10 },
    )?;
    let state = DensityMatrix::from_parts(rho0.dims().to_vec(), run.operator)?;
    Ok(MasterEquationRun {
        state,
        steps: run.steps,
        max_trace_deviation: run.max_trace_deviation,
        min_eigenvalue: run.min_eigenvalue,
        positivity_warning: run.min_eigenvalue < POSITIVITY_WARN,
    })
}

/// Linear map from the payload (atom 1) to the corrected receiver atom,
/// outcome-summed: `E(X) = Σ_k C_k Tr_{1,2,cav}[Π_k Λ(X ⊗ ρ_23 ⊗ ρ_cav) Π_k] C_k†`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleportChannel {
    /// `images[i][j] = E(|i><j|)` in the `|e>, |g>` basis.
    pub images: [[ComplexMatrix; 2]; 2],
    /// Probability of each outcome for a maximally mixed payload.
    pub outcome_weights: [[ComplexMatrix; 2]; 2],
}

impl TeleportChannel {
    /// Corrected atom-3 state for payload `q`.
    pub fn output(&self, q: &UnknownQubit) -> ComplexMatrix {
        let amp = [q.alpha, q.beta];
        let mut out = ComplexMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                out = &out + &self.images[i][j].scale(amp[i] * amp[j].conj());
            }
        }
        out
    }

    /// `<q|E(|q><q|)|q>`.
    pub fn fidelity(&self, q: &UnknownQubit) -> f64 {
        let out = self.output(q);
        let amp = [q.alpha, q.beta];
        let v = out.mul_vec(&amp);
        amp.iter().zip(&v).map(|(a, b)| a.conj() * b).sum::<C64>().re
    }

    /// Haar average of [`Self::fidelity`], exact through the six axis states.
    pub fn average_fidelity(&self) -> f64 {
        UnknownQubit::axis_states().iter().map(|q| self.fidelity(q)).sum::<f64>() / 6.0
    }

    /// Outcome probabilities for payload `q`, in `Outcome::ALL` order.
    pub fn outcome_probabilities(&self, q: &UnknownQubit) -> [f64; 4] {
        let amp = [q.alpha, q.beta];
        let mut probs = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                let w = amp[i] * amp[j].conj();
                let m = &self.outcome_weights[i][j];
                for (k, p) in probs.iter_mut().enumerate() {
                    *p += (m[(k, 0)] * w).re;
                }
            }
        }
        probs
    }
}

/// Projects atoms 1, 2 of an operator on `[2, 2, 2, cav]` onto each outcome,
/// traces out the cavity and applies the receiver's correction.
///
/// Returns (Σ corrected atom-3 blocks, per-outcome traces).
fn corrected_receiver_block(op: &ComplexMatrix, dims: &[usize]) -> Result<(ComplexMatrix, [C64; 4])> {
    let atom3 = partial_trace_matrix(op, dims, &[0, 1, 2])?;
    let mut total = ComplexMatrix::zeros(2, 2);
    let mut traces = [C64::default(); 4];
    for o in Outcome::ALL {
        let base = 2 * o.index();
        let block = ComplexMatrix::from_fn(2, 2, |a, b| atom3[(base + a, base + b)]);
        traces[o.index()] = block.trace();
        let c = o.correction().matrix();
        total = &total + &c.matmul(&block).matmul(&c.dagger());
    }
    Ok((total, traces))
}

fn assemble_channel(images: [[(ComplexMatrix, [C64; 4]); 2]; 2]) -> TeleportChannel {
    let [[(e00, t00), (e01, t01)], [(e10, t10), (e11, t11)]] = images;
    let weights = |t: [C64; 4]| ComplexMatrix::from_fn(4, 1, |k, _| t[k]);
    TeleportChannel {
        images: [[e00, e01], [e10, e11]],
        outcome_weights: [[weights(t00), weights(t01)], [weights(t10), weights(t11)]],
    }
}

/// How the shared pair (atoms 2, 3) is prepared before the teleport leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSource {
    /// Effective-model channel at exact timing.
    Effective,
    /// Atoms 2, 3 cross a cavity under the full model, cavity then discarded.
    FullModel,
}

/// Closed-system full-model teleportation map.
///
/// `u_full` is the atoms-(1,2)+cavity propagator for one crossing, e.g. from
/// [`model::full_propagator`]. Both crossings start with `cavity_init`.
pub fn full_model_teleport_channel(
    p: &SystemParams,
    u_full: &ComplexMatrix,
    cavity_init: &DensityMatrix,
    source: ChannelSource,
) -> Result<TeleportChannel> {
    let levels = p.cavity_levels();
    if cavity_init.dims() != [levels] {
        return Err(LinalgError::DimensionMismatch { expected: vec![levels], found: cavity_init.dims().to_vec() }.into());
    }
    let pair_dims = [2, 2, levels];
    let pair: ComplexMatrix = match source {
        ChannelSource::Effective => protocol::generate_channel(p)?.to_density().into_matrix(),
        ChannelSource::FullModel => {
            let gg = PureState::basis(vec![2, 2], 3)?.to_density();
            let start = gg.tensor(cavity_init).into_matrix();
            let after = u_full.matmul(&start).matmul(&u_full.dagger());
            partial_trace_matrix(&after, &pair_dims, &[0, 1])?
        }
    };

    let dims = [2, 2, 2, levels];
    let u = embed_operator(u_full, &[0, 1, 3], &dims)?;
    let u_dag = u.dagger();
    let rest = linalg::kron(&pair, cavity_init.matrix());
    let image = |i: usize, j: usize| -> Result<(ComplexMatrix, [C64; 4])> {
        let mut unit = ComplexMatrix::zeros(2, 2);
        unit[(i, j)] = C64::new(1.0, 0.0);
        let start = linalg::kron(&unit, &rest);
        corrected_receiver_block(&u.matmul(&start).matmul(&u_dag), &dims)
    };
    let m00 = image(0, 0)?;
    let m01 = image(0, 1)?;
    let m11 = image(1, 1)?;
    let m10 = (m01.0.dagger(), m01.1.map(|z| z.conj()));
    Ok(assemble_channel([[m00, m01], [m10, m11]]))
}

/// Full-model teleportation map with dissipation, by RK4 on the joint
/// register `[2, 2, 2, n_max + 1]`.
///
/// Three propagations (`|e><e|`, `|g><g|`, `|e><g|` payloads) fix the
/// linear map; the fourth image is the adjoint of the third.
pub fn teleport_channel_open_system(
    p: &SystemParams,
    spec: &LindbladSpec,
    cavity_init: &DensityMatrix,
    dt: f64,
) -> Result<(TeleportChannel, f64)> {
    let (eq, rest) = teleport_leg_setup(p, spec, cavity_init)?;
    let t = p.derived().t_channel;
    let mut max_trace_dev = 0.0_f64;
    let mut image = |i: usize, j: usize| -> Result<(ComplexMatrix, [C64; 4])> {
        let mut unit = ComplexMatrix::zeros(2, 2);
        unit[(i, j)] = C64::new(1.0, 0.0);
        let start = linalg::kron(&unit, &rest);
        let checks = if i == j { 10 } else { 0 };
        let run = evolve_operator(
            &eq,
            &start,
            EvolveOptions { t_final: t, dt, omega_drive: p.omega_drive, positivity_checks: checks },
        )?;
        max_trace_dev = max_trace_dev.max(run.max_trace_deviation);
        corrected_receiver_block(&run.operator, eq.dims())
    };
    let m00 = image(0, 0)?;
    let m01 = image(0, 1)?;
    let m11 = image(1, 1)?;
    let m10 = (m01.0.dagger(), m01.1.map(|z| z.conj()));
    Ok((assemble_channel([[m00, m01], [m10, m11]]), max_trace_dev))
}

fn teleport_leg_setup(
    p: &SystemParams,
    spec: &LindbladSpec,
    cavity_init: &DensityMatrix,
) -> Result<(MasterEquation, ComplexMatrix)> {
    let levels = p.cavity_levels();
    if cavity_init.dims() != [levels] {
        return Err(LinalgError::DimensionMismatch { expected: vec![levels], found: cavity_init.dims().to_vec() }.into());
    }
    let channel = protocol::generate_channel(p)?.to_density();
    let eq = MasterEquation::driven(&[2, 2, 2, levels], p, spec)?;
    Ok((eq, linalg::kron(channel.matrix(), cavity_init.matrix())))
}

/// Result of one open-system teleportation run.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystemFidelity {
    /// Outcome-probability-weighted fidelity of the corrected atom 3.
    pub fidelity: f64,
    pub outcome_probabilities: [f64; 4],
    pub max_trace_deviation: f64,
    pub positivity_warning: bool,
}

/// Runs the teleport leg (atoms 1, 2 in the cavity, atom 3 spectator) under
/// the master equation, projects the four outcomes, applies the receiver's
/// corrections and scores atom 3 against the payload.
pub fn protocol_fidelity_open_system(
    q: &UnknownQubit,
    p: &SystemParams,
    spec: &LindbladSpec,
    cavity_init: &DensityMatrix,
) -> Result<OpenSystemFidelity> {
    protocol_fidelity_open_system_with_dt(q, p, spec, cavity_init, default_master_dt(p))
}

pub fn protocol_fidelity_open_system_with_dt(
    q: &UnknownQubit,
    p: &SystemParams,
    spec: &LindbladSpec,
    cavity_init: &DensityMatrix,
    dt: f64,
) -> Result<OpenSystemFidelity> {
    let (eq, rest) = teleport_leg_setup(p, spec, cavity_init)?;
    let payload = q.to_state().to_density();
    let rho0 = DensityMatrix::from_parts(eq.dims().to_vec(), linalg::kron(payload.matrix(), &rest))?;
    let run = evolve_operator(
        &eq,
        rho0.matrix(),
        EvolveOptions { t_final: p.derived().t_channel, dt, omega_drive: p.omega_drive, positivity_checks: 10 },
    )?;
    let (corrected, traces) = corrected_receiver_block(&run.operator, eq.dims())?;
    let target = q.to_state();
    let v = corrected.mul_vec(target.amplitudes());
    let fidelity = target.amplitudes().iter().zip(&v).map(|(a, b)| a.conj() * b).sum::<C64>().re;
    Ok(OpenSystemFidelity {
        fidelity,
        outcome_probabilities: traces.map(|z| z.re),
        max_trace_deviation: run.max_trace_deviation,
        positivity_warning: run.min_eigenvalue < POSITIVITY_WARN,
    })
}

/// `<ψ_eff|ρ_pair|ψ_eff>`: the two-atom state left by one full-model
/// crossing of duration `t` (propagator `u_full`, cavity discarded), scored
/// against the effective-model prediction for the same input pair.
pub fn pair_fidelity_vs_effective(
    p: &SystemParams,
    u_full: &ComplexMatrix,
    t: f64,
    pair: &PureState,
    cavity_init: &DensityMatrix,
) -> Result<f64> {
    let levels = p.cavity_levels();
    if pair.dims() != [2, 2] {
        return Err(LinalgError::DimensionMismatch { expected: vec![2, 2], found: pair.dims().to_vec() }.into());
    }
    if cavity_init.dims() != [levels] {
        return Err(LinalgError::DimensionMismatch { expected: vec![levels], found: cavity_init.dims().to_vec() }.into());
    }
    let start = pair.to_density().tensor(cavity_init).into_matrix();
    let after = u_full.matmul(&start).matmul(&u_full.dagger());
    let reduced = DensityMatrix::from_parts(vec![2, 2], partial_trace_matrix(&after, &[2, 2, levels], &[0, 1])?)?;
    let predicted = pair.apply(&model::effective_propagator(p, t), &[0, 1])?;
    Ok(reduced.expectation_in(&predicted)?)
}

/// Default closed-system full propagator for one crossing at the protocol
/// timing, using [`model::default_full_dt`].
pub fn default_full_crossing(p: &SystemParams) -> Result<ComplexMatrix> {
    let t = p.derived().t_channel;
    Ok(model::full_propagator(p, t, model::default_full_dt(p))?)
}

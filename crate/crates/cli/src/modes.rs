//! One function per mode. Each returns its result table plus the checks
//! that decide the exit status.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use teleportsim_core::decoherence::{
    default_full_crossing, default_master_dt, fock_state, full_model_teleport_channel, pair_fidelity_vs_effective,
    teleport_channel_open_system, thermal_n_max, thermal_state, ChannelSource, DecoherenceError, TeleportChannel,
};
use teleportsim_core::linalg::{fidelity_up_to_phase, LinalgError, PureState};
use teleportsim_core::model::{full_propagator, default_full_dt, ModelError, SystemParams};
use teleportsim_core::protocol::{
    apply_correction, channel_state_at, enumerate_outcomes, generate_channel, ideal_channel, measure_and_collapse,
    run_protocol, sample_unknown_qubit_from, teleport_evolution_at, AtomLevel, Outcome, ProtocolError, UnknownQubit,
};
use teleportsim_core::{LindbladSpec, C64};
use thiserror::Error;

use crate::config::{Mode, RunConfig};
use crate::output::{format_real, Table};

/// Channel fidelity gate.
pub const CHANNEL_TOL: f64 = 1e-10;
/// Probability, fidelity and branch-state gate for the ideal protocol.
pub const PROTOCOL_TOL: f64 = 1e-9;
/// End-to-end fidelity the full model must reach at the base point.
pub const FULL_MODEL_GATE: f64 = 0.95;
/// Allowed spread of closed-system fidelities over cavity Fock states 0..=2.
pub const PHOTON_NUMBER_SPREAD: f64 = 0.02;
/// Allowed fidelity loss from cavity decay at fixed thermal occupation.
pub const DECAY_DROP: f64 = 0.05;
pub const TRACE_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Decoherence(#[from] DecoherenceError),
}

type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Table,
    pub checks: Vec<Check>,
    /// Human-readable summary (table1 only).
    pub display: Option<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn run(cfg: &RunConfig) -> Result<Report> {
    let p = cfg.params.with_commensurate_drive();
    match cfg.mode {
        Mode::Channel => channel(&p),
        Mode::Teleport => teleport(&p, cfg.n_samples, cfg.seed),
        Mode::Table1 => table1(&p, cfg.n_samples, cfg.seed),
        Mode::FullVsEff => full_vs_eff(&p),
        Mode::DecoherenceSweep => decoherence_sweep(&p, &cfg.lindblad),
        Mode::TimingSweep => timing_sweep(&p, cfg.n_samples),
    }
}

fn channel(p: &SystemParams) -> Result<Report> {
    let d = p.derived();
    let state = generate_channel(p)?;
    let fidelity = fidelity_up_to_phase(&state, &ideal_channel())?;
    let a = state.amplitudes();
    let mut table = Table::new(&[
        "g", "delta", "omega", "lambda", "t", "lambda_t", "drive_multiple", "amp_ee_re", "amp_ee_im", "amp_gg_re",
        "amp_gg_im", "fidelity",
    ]);
    table.push(vec![
        p.g.into(),
        p.delta.into(),
        p.omega_drive.into(),
        d.lambda.into(),
        d.t_channel.into(),
        (d.lambda * d.t_channel).into(),
        d.drive_multiple.into(),
        a[0].re.into(),
        a[0].im.into(),
        a[3].re.into(),
        a[3].im.into(),
        fidelity.into(),
    ]);
    let checks = vec![check(
        "channel fidelity",
        fidelity >= 1.0 - CHANNEL_TOL,
        format!("F = {} (gate 1 - {CHANNEL_TOL:e})", format_real(fidelity)),
    )];
    Ok(Report { table, checks, display: None })
}

/// Payloads and per-run seeds, all drawn from one seeded stream.
fn draws(n: usize, seed: u64) -> Vec<(UnknownQubit, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (sample_unknown_qubit_from(&mut rng), rng.random::<u64>())).collect()
}

fn teleport(p: &SystemParams, n: usize, seed: u64) -> Result<Report> {
    let runs: Vec<_> = draws(n, seed).into_par_iter().map(|(q, s)| Ok((q, run_protocol(&q, p, s)?))).collect::<Result<_>>()?;
    let mut table = Table::new(&[
        "sample", "alpha_re", "alpha_im", "beta_re", "beta_im", "outcome", "correction", "probability", "fidelity",
    ]);
    let mut worst_fid = 0.0_f64;
    let mut worst_prob = 0.0_f64;
    for (i, (q, r)) in runs.iter().enumerate() {
        worst_fid = worst_fid.max(1.0 - r.fidelity);
        worst_prob = worst_prob.max((r.outcome.probability - 0.25).abs());
        table.push(vec![
            i.into(),
            q.alpha.re.into(),
            q.alpha.im.into(),
            q.beta.re.into(),
            q.beta.im.into(),
            r.outcome.outcome().to_string().into(),
            r.correction_applied.label().into(),
            r.outcome.probability.into(),
            r.fidelity.into(),
        ]);
    }
    let checks = vec![
        check("corrected fidelity", worst_fid <= PROTOCOL_TOL, format!("max 1 - F = {worst_fid:.3e} over {n} runs")),
        check("outcome probability", worst_prob <= PROTOCOL_TOL, format!("max |p - 1/4| = {worst_prob:.3e}")),
    ];
    Ok(Report { table, checks, display: None })
}

/// Atom-3 branch listed for each outcome, before the factor 1/2, with its label.
fn listed_branch(o: Outcome, q: &UnknownQubit) -> ([C64; 2], &'static str) {
    let (a, b) = (q.alpha, q.beta);
    use AtomLevel::{Excited as E, Ground as G};
    match (o.atom1, o.atom2) {
        (E, E) => ([a, b], "α|e> + β|g>"),
        (G, G) => ([a, -b], "α|e> - β|g>"),
        (E, G) => ([-b, a], "α|g> - β|e>"),
        (G, E) => ([b, a], "α|g> + β|e>"),
    }
}

/// Display order of the four outcomes.
const TABLE_ORDER: [usize; 4] = [0, 3, 1, 2];

fn table1(p: &SystemParams, n: usize, seed: u64) -> Result<Report> {
    let per_payload: Vec<_> = draws(n, seed)
        .into_par_iter()
        .map(|(q, s)| {
            let all = enumerate_outcomes(&q, p)?;
            let sampled = run_protocol(&q, p, s)?.outcome.outcome();
            let mut state_err = [0.0; 4];
            for r in &all {
                let o = r.outcome.outcome();
                let listed = PureState::new(vec![2], listed_branch(o, &q).0.to_vec())?;
                let got = r.outcome.collapsed_state.normalized().ok_or(ProtocolError::ZeroProbabilityBranch(o))?;
                state_err[o.index()] = 1.0 - fidelity_up_to_phase(&got, &listed)?;
            }
            let success: f64 =
                all.iter().filter(|r| r.fidelity >= 1.0 - PROTOCOL_TOL).map(|r| r.outcome.probability).sum();
            Ok((all.map(|r| (r.outcome.probability, r.fidelity)), sampled, state_err, success))
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "outcome", "atom3_state", "correction", "count", "frequency", "probability", "min_fidelity", "mean_fidelity",
        "max_state_error",
    ]);
    let mut display = String::from("outcome  atom 3 state (x 1/2)  correction  frequency  probability     fidelity\n");
    let (mut worst_prob, mut worst_fid, mut worst_state) = (0.0_f64, 0.0_f64, 0.0_f64);
    let probe = UnknownQubit::excited();
    for k in TABLE_ORDER {
        let o = Outcome::ALL[k];
        let count = per_payload.iter().filter(|x| x.1 == o).count();
        let frequency = count as f64 / n as f64;
        let probability = per_payload.iter().map(|x| x.0[k].0).sum::<f64>() / n as f64;
        let min_fidelity = per_payload.iter().map(|x| x.0[k].1).fold(f64::INFINITY, f64::min);
        let mean_fidelity = per_payload.iter().map(|x| x.0[k].1).sum::<f64>() / n as f64;
        let state_error = per_payload.iter().map(|x| x.2[k]).fold(0.0, f64::max);
        worst_prob = per_payload.iter().map(|x| (x.0[k].0 - 0.25).abs()).fold(worst_prob, f64::max);
        worst_fid = worst_fid.max(1.0 - min_fidelity);
        worst_state = worst_state.max(state_error);
        let label = listed_branch(o, &probe).1;
        let correction = o.correction().label();
        display.push_str(&format!(
            "{:<8} {label:<21} {correction:<11} {:<10} {:<15} {}\n",
            o.to_string(),
            format_real(frequency),
            format_real(probability),
            format_real(mean_fidelity)
        ));
        table.push(vec![
            o.to_string().into(),
            label.into(),
            correction.into(),
            count.into(),
            frequency.into(),
            probability.into(),
            min_fidelity.into(),
            mean_fidelity.into(),
            state_error.into(),
        ]);
    }
    let min_success = per_payload.iter().map(|x| x.3).fold(f64::INFINITY, f64::min);
    display.push_str(&format!("total success probability: {}\n", format_real(min_success)));
    let checks = vec![
        check("outcome probability", worst_prob <= PROTOCOL_TOL, format!("max |p - 1/4| = {worst_prob:.3e}")),
        check("corrected fidelity", worst_fid <= PROTOCOL_TOL, format!("max 1 - F = {worst_fid:.3e}")),
        check("branch states", worst_state <= PROTOCOL_TOL, format!("max 1 - F(branch, listed) = {worst_state:.3e}")),
        check(
            "success probability",
            1.0 - min_success <= PROTOCOL_TOL,
            format!("min over {n} payloads = {}", format_real(min_success)),
        ),
    ];
    Ok(Report { table, checks, display: Some(display) })
}

fn full_vs_eff(base: &SystemParams) -> Result<Report> {
    let detuning_ratio = base.delta / base.g;
    let drive_ratio = 2.0 * base.omega_drive / base.delta;
    // double the detuning ratio, then the drive ratio
    let points = [(detuning_ratio, drive_ratio), (2.0 * detuning_ratio, drive_ratio), (2.0 * detuning_ratio, 2.0 * drive_ratio)];
    let rows: Vec<(SystemParams, f64, f64)> = points
        .par_iter()
        .map(|&(r_det, r_drive)| {
            let delta = r_det * base.g;
            let p = SystemParams { delta, omega_drive: r_drive * delta / 2.0, ..*base }.with_commensurate_drive();
            let t = p.derived().t_channel;
            let u = full_propagator(&p, t, default_full_dt(&p))?;
            let vacuum = fock_state(0, p.n_max)?;
            let mut pair = 0.0;
            for k in 0..4 {
                pair += pair_fidelity_vs_effective(&p, &u, t, &PureState::basis(vec![2, 2], k)?, &vacuum)? / 4.0;
            }
            let e2e = full_model_teleport_channel(&p, &u, &vacuum, ChannelSource::FullModel)?.average_fidelity();
            Ok((p, pair, e2e))
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "point", "g", "delta", "omega", "detuning_ratio", "drive_ratio", "pair_fidelity", "end_to_end_fidelity",
    ]);
    for (i, (p, pair, e2e)) in rows.iter().enumerate() {
        table.push(vec![
            i.into(),
            p.g.into(),
            p.delta.into(),
            p.omega_drive.into(),
            (p.delta / p.g).into(),
            (2.0 * p.omega_drive / p.delta).into(),
            (*pair).into(),
            (*e2e).into(),
        ]);
    }
    let e2e: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let trail = e2e.iter().map(|f| format_real(*f)).collect::<Vec<_>>().join(" -> ");
    let checks = vec![
        check(
            "full-model gate",
            e2e[0] >= FULL_MODEL_GATE,
            format!("end-to-end F = {} at the base point (gate {FULL_MODEL_GATE})", format_real(e2e[0])),
        ),
        check("monotone in regime ratios", e2e.windows(2).all(|w| w[1] > w[0]), trail),
    ];
    Ok(Report { table, checks, display: None })
}

/// Largest |Σ_k p_k − 1| over the six axis payloads.
fn channel_trace_deviation(ch: &TeleportChannel) -> f64 {
    UnknownQubit::axis_states()
        .iter()
        .map(|q| (ch.outcome_probabilities(q).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
enum SweepPoint {
    Fock(usize),
    ClosedThermal,
    Decay(f64),
}

struct SweepRow {
    point: SweepPoint,
    n_max: usize,
    fidelity: f64,
    trace_deviation: f64,
    positivity_warning: bool,
}

fn decoherence_sweep(base: &SystemParams, spec: &LindbladSpec) -> Result<Report> {
    let thermal_p = base.with_n_max(base.n_max.max(thermal_n_max(spec.n_bar)));
    let mut points = vec![SweepPoint::Fock(0), SweepPoint::Fock(1), SweepPoint::Fock(2), SweepPoint::ClosedThermal];
    if spec.kappa > 0.0 {
        points.push(SweepPoint::Decay(spec.kappa / 2.0));
    }
    points.push(SweepPoint::Decay(spec.kappa));

    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&point| {
            let row = match point {
                SweepPoint::Fock(n) => {
                    let u = default_full_crossing(base)?;
                    let ch = full_model_teleport_channel(base, &u, &fock_state(n, base.n_max)?, ChannelSource::Effective)?;
                    SweepRow {
                        point,
                        n_max: base.n_max,
                        fidelity: ch.average_fidelity(),
                        trace_deviation: channel_trace_deviation(&ch),
                        positivity_warning: false,
                    }
                }
                SweepPoint::ClosedThermal => {
                    let p = &thermal_p;
                    let u = default_full_crossing(p)?;
                    let cav = thermal_state(spec.n_bar, p.n_max)?;
                    let ch = full_model_teleport_channel(p, &u, &cav, ChannelSource::Effective)?;
                    SweepRow {
                        point,
                        n_max: p.n_max,
                        fidelity: ch.average_fidelity(),
                        trace_deviation: channel_trace_deviation(&ch),
                        positivity_warning: false,
                    }
                }
                SweepPoint::Decay(kappa) => {
                    let p = &thermal_p;
                    let cav = thermal_state(spec.n_bar, p.n_max)?;
                    let lossy = LindbladSpec { kappa, ..*spec };
                    let (ch, dev) = teleport_channel_open_system(p, &lossy, &cav, default_master_dt(p))?;
                    let trace_deviation = dev.max(channel_trace_deviation(&ch));
                    // a corrected output outside the Bloch ball signals lost positivity
                    let positivity_warning = UnknownQubit::axis_states().iter().any(|q| {
                        let out = ch.output(q);
                        let (a, d, b) = (out[(0, 0)].re, out[(1, 1)].re, out[(0, 1)]);
                        a * d - b.norm_sqr() < -1e-6
                    });
                    SweepRow { point, n_max: p.n_max, fidelity: ch.average_fidelity(), trace_deviation, positivity_warning }
                }
            };
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let fock_ref = rows[0].fidelity;
    let thermal_ref = rows[3].fidelity;
    let mut table = Table::new(&[
        "point", "cavity", "photons", "kappa", "nbar", "gamma", "n_max", "method", "average_fidelity",
        "reference_fidelity", "drop", "trace_deviation", "positivity_warning",
    ]);
    for (i, r) in rows.iter().enumerate() {
        let (cavity, photons, kappa, nbar, gamma, method, reference) = match r.point {
            SweepPoint::Fock(n) => ("fock", n as f64, 0.0, 0.0, 0.0, "unitary", fock_ref),
            SweepPoint::ClosedThermal => ("thermal", spec.n_bar, 0.0, spec.n_bar, 0.0, "unitary", thermal_ref),
            SweepPoint::Decay(k) => ("thermal", spec.n_bar, k, spec.n_bar, spec.gamma_atom, "master", thermal_ref),
        };
        table.push(vec![
            i.into(),
            cavity.into(),
            photons.into(),
            kappa.into(),
            nbar.into(),
            gamma.into(),
            r.n_max.into(),
            method.into(),
            r.fidelity.into(),
            reference.into(),
            (reference - r.fidelity).into(),
            r.trace_deviation.into(),
            r.positivity_warning.into(),
        ]);
    }

    let fock: Vec<f64> = rows[..3].iter().map(|r| r.fidelity).collect();
    let spread = fock.iter().copied().fold(f64::NEG_INFINITY, f64::max) - fock.iter().copied().fold(f64::INFINITY, f64::min);
    let worst_drop = rows[4..].iter().map(|r| thermal_ref - r.fidelity).fold(f64::NEG_INFINITY, f64::max);
    let worst_trace = rows.iter().map(|r| r.trace_deviation).fold(0.0, f64::max);
    let checks = vec![
        check(
            "photon-number independence",
            spread <= PHOTON_NUMBER_SPREAD,
            format!(
                "|0>, |1>, |2> -> {}; spread {} (gate {PHOTON_NUMBER_SPREAD})",
                fock.iter().map(|f| format_real(*f)).collect::<Vec<_>>().join(", "),
                format_real(spread)
            ),
        ),
        check(
            "decay insensitivity",
            worst_drop < DECAY_DROP,
            format!(
                "nbar = {}: closed {}, largest drop {} at kappa <= {} (gate {DECAY_DROP})",
                format_real(spec.n_bar),
                format_real(thermal_ref),
                format_real(worst_drop),
                format_real(spec.kappa)
            ),
        ),
        check("trace preservation", worst_trace < TRACE_TOL, format!("max deviation {worst_trace:.3e}")),
    ];
    Ok(Report { table, checks, display: None })
}

/// Outcome-weighted corrected fidelity for one payload when both cavity
/// crossings last `t`.
fn mistimed_fidelity(q: &UnknownQubit, p: &SystemParams, t: f64) -> Result<f64> {
    let channel = channel_state_at(p, t);
    let joint = teleport_evolution_at(q, &channel, p, t)?;
    let mut total = 0.0;
    for branch in measure_and_collapse(&joint)? {
        let weight = branch.probability;
        if weight > 1e-300 {
            total += weight * apply_correction(q, branch)?.fidelity;
        }
    }
    Ok(total)
}

fn timing_sweep(base: &SystemParams, n: usize) -> Result<Report> {
    let d = base.derived();
    let (lo, hi) = (PI / 8.0, 3.0 * PI / 8.0);
    let step = (hi - lo) / (n - 1) as f64;
    let rows: Vec<(f64, SystemParams, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let lambda_t = lo + step * k as f64;
            let t = lambda_t / d.lambda;
            // the drive stays commensurate with the shifted time
            let p = SystemParams { omega_drive: d.drive_multiple as f64 * PI / t, ..*base };
            let f: Vec<f64> =
                UnknownQubit::axis_states().iter().map(|q| mistimed_fidelity(q, &p, t)).collect::<Result<_>>()?;
            Ok((lambda_t, p, f.iter().sum::<f64>() / 6.0, f.iter().copied().fold(f64::INFINITY, f64::min)))
        })
        .collect::<Result<_>>()?;

    let mut table =
        Table::new(&["point", "lambda_t", "lambda_t_over_pi", "t", "omega", "average_fidelity", "min_fidelity"]);
    for (i, (lambda_t, p, avg, min)) in rows.iter().enumerate() {
        table.push(vec![
            i.into(),
            (*lambda_t).into(),
            (lambda_t / PI).into(),
            (lambda_t / d.lambda).into(),
            p.omega_drive.into(),
            (*avg).into(),
            (*min).into(),
        ]);
    }
    let (peak_at, peak) = rows.iter().fold((0.0, f64::NEG_INFINITY), |acc, r| if r.2 > acc.1 { (r.0, r.2) } else { acc });
    let offset = (peak_at - PI / 4.0).abs();
    let checks = vec![check(
        "peak at quarter turn",
        offset <= step + 1e-12,
        format!(
            "max average F = {} at lambda_t/pi = {} ({} grid steps from 1/4)",
            format_real(peak),
            format_real(peak_at / PI),
            format_real(offset / step)
        ),
    )];
    Ok(Report { table, checks, display: None })
}

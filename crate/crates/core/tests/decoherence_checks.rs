mod common;

use common::{c, exact_driven_cavity_propagator, thread_cpu_seconds};
use teleportsim_core::decoherence::{
    default_full_crossing, default_master_dt, evolve_operator, fock_state, full_model_teleport_channel,
    integrate_master_equation, pair_fidelity_vs_effective, protocol_fidelity_open_system,
    protocol_fidelity_open_system_with_dt, teleport_channel_open_system, thermal_state, ChannelSource,
    EvolveOptions, LindbladSpec, MasterEquation,
};
use teleportsim_core::linalg::{trace_distance, ComplexMatrix, DensityMatrix, PureState};
use teleportsim_core::model::{default_full_dt, full_propagator, SystemParams};
use teleportsim_core::protocol::UnknownQubit;

fn payload() -> UnknownQubit {
    UnknownQubit::new(c(0.6, 0.), c(0.8, 0.)).unwrap()
}

#[test]
fn closed_master_equation_matches_unitary_evolution() {
    let p = SystemParams { n_max: 3, ..SystemParams::default() };
    let psi = PureState::new(
        vec![2, 2, 4],
        (0..16).map(|k| if k == 12 || k == 5 { c(0.6, 0.) } else if k == 9 { c(0., 0.52915026221) } else { c(0., 0.) }).collect(),
    )
    .unwrap();
    let rho0 = psi.to_density();
    let t = 1.0;
    let run = integrate_master_equation(&rho0, &p, &LindbladSpec::closed(), t, default_master_dt(&p)).unwrap();
    let u = full_propagator(&p, t, 1e-5).unwrap();
    let evolved = psi.apply(&u, &[0, 1, 2]).unwrap().to_density();
    let d = trace_distance(&run.state, &evolved).unwrap();
    assert!(d < 1e-6, "{d}");
    assert!(run.max_trace_deviation < 1e-7);
    assert!(!run.positivity_warning);
}

#[test]
fn rk4_error_shrinks_sixteenfold_per_halving() {
    let p = SystemParams { n_max: 3, ..SystemParams::default() };
    let spec = LindbladSpec::new(0.3, 0.5, 0.05).unwrap();
    let rho0 = PureState::basis(vec![2, 2, 4], 5).unwrap().to_density();
    let t = 0.5;
    let run = |dt: f64| integrate_master_equation(&rho0, &p, &spec, t, dt).unwrap().state;
    let reference = run(0.002 / p.omega_drive);
    let coarse = run(0.04 / p.omega_drive).matrix().max_abs_diff(reference.matrix());
    let fine = run(0.02 / p.omega_drive).matrix().max_abs_diff(reference.matrix());
    let ratio = coarse / fine;
    assert!((13.0..19.0).contains(&ratio), "ratio {ratio} ({coarse:e} / {fine:e})");
}

#[test]
fn closed_system_vacuum_teleportation_meets_frozen_gate() {
    let p = SystemParams::default();
    let cav = fock_state(0, p.n_max).unwrap();
    let r = protocol_fidelity_open_system(&payload(), &p, &LindbladSpec::closed(), &cav).unwrap();
    assert!(r.fidelity >= 0.95, "{}", r.fidelity);
    assert!(r.max_trace_deviation < 1e-7);
    let total: f64 = r.outcome_probabilities.iter().sum();
    assert!((total - 1.0).abs() < 1e-7);

    // unitary cross-check of the same leg
    let u = default_full_crossing(&p).unwrap();
    let ch = full_model_teleport_channel(&p, &u, &cav, ChannelSource::Effective).unwrap();
    assert!((ch.fidelity(&payload()) - r.fidelity).abs() < 1e-4, "{} vs {}", ch.fidelity(&payload()), r.fidelity);
}

#[test]
fn tomography_reproduces_direct_runs() {
    let p = SystemParams { n_max: 6, ..SystemParams::default() };
    let spec = LindbladSpec::new(0.1, 0.3, 0.0).unwrap();
    let cav = thermal_state(0.3, 6).unwrap();
    let dt = default_master_dt(&p);
    let (ch, trace_dev) = teleport_channel_open_system(&p, &spec, &cav, dt).unwrap();
    assert!(trace_dev < 1e-7);
    for q in [payload(), UnknownQubit::new(c(0.0, 0.6), c(0.8, 0.)).unwrap()] {
        let direct = protocol_fidelity_open_system_with_dt(&q, &p, &spec, &cav, dt).unwrap();
        assert!((ch.fidelity(&q) - direct.fidelity).abs() < 1e-10);
        for (a, b) in ch.outcome_probabilities(&q).iter().zip(&direct.outcome_probabilities) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn thermal_trace_preserved_under_decay() {
    let p = SystemParams { n_max: thermal_n_max_for(1.0), ..SystemParams::default() };
    let spec = LindbladSpec::new(0.1, 1.0, 0.0).unwrap();
    let rho0 = PureState::basis(vec![2, 2], 3).unwrap().to_density().tensor(&thermal_state(1.0, p.n_max).unwrap());
    let run = integrate_master_equation(&rho0, &p, &spec, 1.0, default_master_dt(&p)).unwrap();
    assert!(run.max_trace_deviation < 1e-7);
    assert!(run.min_eigenvalue > -1e-6);
}

fn thermal_n_max_for(n_bar: f64) -> usize {
    teleportsim_core::decoherence::thermal_n_max(n_bar)
}

#[test]
fn evolve_operator_is_linear() {
    let p = SystemParams { n_max: 2, ..SystemParams::default() };
    let spec = LindbladSpec::new(0.2, 0.4, 0.1).unwrap();
    let eq = MasterEquation::driven(&[2, 2, 3], &p, &spec).unwrap();
    let mut rng = common::Lcg::new(8);
    let a = rng.matrix(12, 12);
    let b = rng.matrix(12, 12);
    let opts = EvolveOptions { t_final: 0.3, dt: 5e-4, omega_drive: p.omega_drive, positivity_checks: 0 };
    let run = |m: &ComplexMatrix| evolve_operator(&eq, m, opts).unwrap().operator;
    let combo = &a.scale(c(0.3, 0.2)) + &b.scale(c(-1.1, 0.0));
    let want = &run(&a).scale(c(0.3, 0.2)) + &run(&b).scale(c(-1.1, 0.0));
    let err = run(&combo).max_abs_diff(&want);
    assert!(err < 1e-11, "{err}");
}

#[test]
fn master_equation_agrees_with_co_rotating_oracle() {
    let p = SystemParams { n_max: 2, ..SystemParams::default() };
    let t = 0.8;
    let psi = PureState::basis(vec![2, 2, 3], 4).unwrap();
    let u = exact_driven_cavity_propagator(&p, t);
    let want = DensityMatrix::new(vec![2, 2, 3], psi.apply(&u, &[0, 1, 2]).unwrap().to_density().into_matrix()).unwrap();
    let got = integrate_master_equation(&psi.to_density(), &p, &LindbladSpec::closed(), t, default_master_dt(&p)).unwrap();
    let d = trace_distance(&got.state, &want).unwrap();
    assert!(d < 1e-6, "{d}");
}

/// Atom-pair dynamics for cavity Fock states `|n>`, `n ≤ 3`, closed system,
/// default regime, against the effective model: worst case over the four
/// product inputs must reach 0.95.
#[test]
fn fock_cavity_pair_dynamics_follow_effective_model() {
    let p = SystemParams::default();
    let t = p.derived().t_channel;
    let u = full_propagator(&p, t, default_full_dt(&p)).unwrap();
    let mut worst = Vec::new();
    for n in 0..=3 {
        let cav = fock_state(n, p.n_max).unwrap();
        let min = (0..4)
            .map(|k| pair_fidelity_vs_effective(&p, &u, t, &PureState::basis(vec![2, 2], k).unwrap(), &cav).unwrap())
            .fold(f64::INFINITY, f64::min);
        worst.push(min);
    }
    println!("worst pair fidelity per Fock state n = 0..3: {worst:?}");
    for (n, f) in worst.iter().enumerate() {
        assert!(*f >= 0.95, "n = {n}: {f}");
    }
}

#[test]
fn doubling_regime_ratios_improves_agreement() {
    let mut scores = Vec::new();
    // (δ/g, 2Ω/δ): double the detuning ratio, then the drive ratio
    for (detuning_ratio, drive_ratio) in [(10.0, 10.0), (20.0, 10.0), (20.0, 20.0)] {
        let delta: f64 = detuning_ratio;
        let p = SystemParams { g: 1.0, delta, omega_drive: drive_ratio * delta / 2.0, n_max: 10 }
            .with_commensurate_drive();
        let t = p.derived().t_channel;
        let u = full_propagator(&p, t, default_full_dt(&p)).unwrap();
        let cav = fock_state(0, p.n_max).unwrap();
        let f: f64 = (0..4)
            .map(|k| pair_fidelity_vs_effective(&p, &u, t, &PureState::basis(vec![2, 2], k).unwrap(), &cav).unwrap())
            .sum::<f64>()
            / 4.0;
        scores.push(f);
    }
    assert!(scores.windows(2).all(|w| w[1] > w[0]), "{scores:?}");
}

#[test]
fn full_crossing_is_cheap() {
    let p = SystemParams::default();
    let start = thread_cpu_seconds();
    let u = default_full_crossing(&p).unwrap();
    assert!(u.unitarity_deviation() < 1e-10, "{}", u.unitarity_deviation());
    assert!(thread_cpu_seconds() - start < 5.0);
}

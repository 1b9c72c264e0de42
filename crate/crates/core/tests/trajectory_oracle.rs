//! Ensemble-level validation of the stochastic integrator against
//! deterministic master-equation integration, and a physical-frame check of
//! the strong-driving machinery end to end.

use rayon::prelude::*;

use cavity_homodyne::dynamics::{
    field_observables, simulate_trajectory, simulate_trajectory_with, unconditional_evolve_rk4,
    Frame, SimOptions, SystemParams,
};
use cavity_homodyne::hilbert::{C64, FockSpec};
use cavity_homodyne::stats::OnlineStats;
use cavity_homodyne::steady_state::{analytic_alpha, rho_ss_analytic};

/// The ensemble mean over measurement records converges to the unconditional
/// master-equation solution: ⟨a⟩, ⟨a†a⟩, ⟨σ_z⟩ of the averaged final state
/// agree with a deterministic RK4 reference within 3 Monte Carlo standard
/// errors.
#[test]
fn ensemble_mean_matches_deterministic_evolution() {
    let spec = FockSpec::new(12).unwrap();
    let p = SystemParams::new(1.0, 0.5, 1.0, 0.8, 0.7, spec).unwrap();
    let rho0 = cavity_homodyne::hilbert::dressed_state(
        cavity_homodyne::hilbert::DressedSign::Plus,
        C64::new(0.6, 0.0),
        spec,
    )
    .unwrap()
    .projector();

    let t_final = 0.5;
    let reference = unconditional_evolve_rk4(&rho0, &p, Frame::physical(), t_final, 1e-4).unwrap();
    let (a_ref, n_ref, sz_ref) = field_observables(&reference);

    let n_traj = 1000usize;
    let observed: Vec<(C64, f64, f64)> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let rec = simulate_trajectory(&rho0, &p, t_final, 1e-3, 42_000 + k as u64).unwrap();
            field_observables(&rec.final_state)
        })
        .collect();

    let mut a_re = OnlineStats::default();
    let mut a_im = OnlineStats::default();
    let mut n_mean = OnlineStats::default();
    let mut sz = OnlineStats::default();
    for (a, n, s) in &observed {
        a_re.push(a.re);
        a_im.push(a.im);
        n_mean.push(*n);
        sz.push(*s);
    }

    for (label, stats, target) in [
        ("Re⟨a⟩", &a_re, a_ref.re),
        ("Im⟨a⟩", &a_im, a_ref.im),
        ("⟨a†a⟩", &n_mean, n_ref),
        ("⟨σz⟩", &sz, sz_ref),
    ] {
        let err = (stats.mean() - target).abs();
        // 3 MC standard errors plus the O(dt) weak bias of the Euler step
        let bound = 3.0 * stats.std_error() + 3e-3;
        assert!(
            err <= bound,
            "{label}: ensemble {} vs deterministic {target}, err {err:.2e} > {bound:.2e}",
            stats.mean()
        );
    }
}

/// Full physical-frame run at strong driving: the truncation rule puts the
/// joint dimension above 400; a short trajectory must hold the analytic state
/// and reproduce the photocurrent mean.
#[test]
fn physical_frame_strong_driving_short_trajectory() {
    let tmp = SystemParams::new(10.0, 1.0, 1.0, 1.0, 0.0, FockSpec::new(1).unwrap()).unwrap();
    let alpha = analytic_alpha(&tmp).unwrap();
    let spec = FockSpec::for_amplitude(alpha);
    assert!(spec.dim() > 400, "dim {}", spec.dim());
    let p = tmp.with_spec(spec);
    let rho0 = rho_ss_analytic(&p).unwrap();

    let dt = 5e-4;
    let t_final = 0.5;
    // the exact positivity check is O(d³); sample it sparsely at this size
    let opts = SimOptions {
        positivity_check_interval: 250,
        ..SimOptions::default()
    };
    let rec = simulate_trajectory_with(&rho0, &p, t_final, dt, 7, &opts).unwrap();
    let drift = rec.final_state.trace_distance(&rho0);
    assert!(drift < 0.08, "short-time drift {drift}");

    let mean_dqdt: f64 =
        rec.charge.iter().sum::<f64>() / (rec.charge.len() as f64 * dt);
    let expected = 4.0 * alpha.re; // 4κη Re(α) cos φ at κ = η = 1, φ = 0
    let noise_se = (2.0 / (dt * rec.charge.len() as f64)).sqrt();
    assert!(
        (mean_dqdt - expected).abs() <= 4.0 * noise_se,
        "mean dq/dt {mean_dqdt} vs {expected} (se {noise_se})"
    );

    // determinism at full scale
    let again = simulate_trajectory_with(&rho0, &p, 0.05, dt, 7, &opts).unwrap();
    assert_eq!(&rec.charge[..again.charge.len()], &again.charge[..]);
}

//! Gaussian inference of the atom-cavity coupling from integrated photocharge:
//! likelihood of q given g, Bayes posterior, entropy change, the closed-form
//! information rate
//!
//! ```text
//! R_g = (2v₀²η/κ)(1 − (g/2E)²) cos²φ
//! ```
//!
//! and Monte Carlo validation against both direct likelihood sampling and
//! photocharges integrated from full SME trajectories.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{Frame, Stepper, SystemParams};
use crate::error::{Error, Result};
use crate::hilbert::{C64, FockSpec};
use crate::steady_state::{analytic_alpha, rho_ss_analytic_in_frame};

/// Gaussian state of knowledge about the coupling g.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    mean: f64,
    variance: f64,
}

impl GaussianBelief {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::Domain(format!(
                "belief requires finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Differential entropy ½ ln(2πe v²) in nats; independent of the mean.
    pub fn entropy(&self) -> f64 {
        0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * self.variance).ln()
    }
}

/// Gaussian likelihood of the photocharge q integrated over Δt, given
/// coupling value `g` (the hypothesis, independent of `p.coupling`):
/// ⟨q⟩ = 4Eη(1 − (g/2E)²) cos φ Δt and v² = 2κη Δt.
pub fn likelihood_mean_variance(g: f64, p: &SystemParams, delta_t: f64) -> Result<(f64, f64)> {
    if !(p.drive > 0.0) || g >= 2.0 * p.drive {
        return Err(Error::Domain(format!(
            "likelihood requires g < 2E (g = {g}, E = {})",
            p.drive
        )));
    }
    if !(delta_t > 0.0) {
        return Err(Error::Domain("delta_t must be positive".into()));
    }
    let r = g / (2.0 * p.drive);
    let mean = 4.0 * p.drive * p.eta * (1.0 - r * r) * p.phi.cos() * delta_t;
    let variance = 2.0 * p.kappa * p.eta * delta_t;
    Ok((mean, variance))
}

/// Bayes update of a Gaussian prior on g after observing photocharge q.
///
/// The posterior variance is the small-q expansion result
/// v₁² = v₀² κE / (κE + q v₀² cos φ), which discards O(qε²) and O(ε³) terms;
/// [`Error::InvalidUpdate`] surfaces when the denominator is not positive and
/// the formula leaves the Gaussian family. The posterior mean follows the
/// standard Gaussian-linear rule for the likelihood linearized around the
/// prior mean (the closed-form rate does not depend on it).
pub fn posterior_update(
    prior: &GaussianBelief,
    q: f64,
    p: &SystemParams,
    delta_t: f64,
) -> Result<GaussianBelief> {
    let kappa_e = p.kappa * p.drive;
    let denominator = kappa_e + q * prior.variance * p.phi.cos();
    if denominator <= 0.0 {
        return Err(Error::InvalidUpdate { denominator });
    }
    let v1_sq = prior.variance * kappa_e / denominator;

    let (mu0, v_sq) = likelihood_mean_variance(prior.mean, p, delta_t)?;
    // dμ/dg at the prior mean
    let slope = -2.0 * prior.mean * p.eta * p.phi.cos() * delta_t / p.drive;
    let gain = prior.variance * slope / (slope * slope * prior.variance + v_sq);
    let mean = prior.mean + gain * (q - mu0);
    GaussianBelief::new(mean, v1_sq)
}

/// Entropy change of the belief: exact −½ ln(v₀²/v₁²) and its small-q
/// linearization −½(v₀²/v₁² − 1), both in nats.
pub fn delta_s(prior: &GaussianBelief, posterior: &GaussianBelief) -> (f64, f64) {
    let ratio = prior.variance / posterior.variance;
    (-0.5 * ratio.ln(), -0.5 * (ratio - 1.0))
}

/// Closed-form average rate of information gain about the coupling.
pub fn rate_rg(p: &SystemParams, v0_sq: f64) -> Result<f64> {
    p.require_strong_driving_domain()?;
    if !(v0_sq > 0.0) {
        return Err(Error::Domain("prior variance must be positive".into()));
    }
    let r = p.coupling_ratio();
    let c = p.phi.cos();
    Ok(2.0 * v0_sq * p.eta / p.kappa * (1.0 - r * r) * c * c)
}

/// Where the Monte Carlo charges come from.
#[derive(Debug, Clone, Copy)]
pub enum QSource {
    /// Sample q directly from the Gaussian likelihood at the true coupling.
    Likelihood,
    /// Integrate dq over each Δt window from an SME trajectory at the true
    /// coupling, stepped at the given dt (the end-to-end path).
    SmeTrajectory { dt: f64 },
}

/// One belief update in a recorded chain.
#[derive(Debug, Clone, Copy)]
pub struct InferenceStep {
    pub step: usize,
    pub q: f64,
    pub belief_mean: f64,
    pub belief_variance: f64,
    pub delta_s_exact: f64,
    pub delta_s_linear: f64,
}

/// A recorded inference chain.
#[derive(Debug, Clone, Default)]
pub struct InferenceTrace {
    pub steps: Vec<InferenceStep>,
}

/// Monte Carlo estimate of R_g.
#[derive(Debug)]
pub struct RgMonteCarlo {
    /// Sample mean of −ΔS/Δt.
    pub estimate: f64,
    pub std_error: f64,
    /// Updates rejected because the posterior variance left the Gaussian
    /// family (must stay below 0.1% of steps).
    pub invalid_updates: usize,
    pub trace: InferenceTrace,
}

/// Samples the definitional rate R_g = ⟨−ΔS/Δt⟩: the prior is reset to
/// variance v₀² before every step so each sample measures the instantaneous
/// rate at fixed prior width.
///
/// Aborts if more than 0.1% of the updates are invalid.
pub fn rate_rg_monte_carlo(
    p: &SystemParams,
    g_true: f64,
    v0_sq: f64,
    n_steps: usize,
    delta_t: f64,
    seed: u64,
    source: QSource,
) -> Result<RgMonteCarlo> {
    if n_steps < 2 {
        return Err(Error::Domain("n_steps must be at least 2".into()));
    }
    let prior = GaussianBelief::new(g_true, v0_sq)?;
    let mut charges = ChargeStream::new(p, g_true, delta_t, seed, source)?;

    let mut stats = crate::stats::OnlineStats::default();
    let mut invalid = 0usize;
    let mut trace = InferenceTrace::default();
    for step in 0..n_steps {
        let q = charges.next_charge()?;
        match posterior_update(&prior, q, p, delta_t) {
            Ok(post) => {
                let (ds_exact, ds_linear) = delta_s(&prior, &post);
                stats.push(-ds_exact / delta_t);
                if trace.steps.len() < 100_000 {
                    trace.steps.push(InferenceStep {
                        step,
                        q,
                        belief_mean: post.mean(),
                        belief_variance: post.variance(),
                        delta_s_exact: ds_exact,
                        delta_s_linear: ds_linear,
                    });
                }
            }
            Err(Error::InvalidUpdate { .. }) => invalid += 1,
            Err(other) => return Err(other),
        }
        if invalid * 1000 > n_steps.max(1000) {
            return Err(Error::Domain(format!(
                "invalid updates exceeded 0.1% of steps ({invalid} of {step})"
            )));
        }
    }
    Ok(RgMonteCarlo {
        estimate: stats.mean(),
        std_error: stats.std_error(),
        invalid_updates: invalid,
        trace,
    })
}

/// Sequential (non-reset) inference: each posterior feeds the next prior.
/// Returns the recorded chain; `prior` seeds the first step.
pub fn sequential_inference(
    p: &SystemParams,
    g_true: f64,
    prior: GaussianBelief,
    n_steps: usize,
    delta_t: f64,
    seed: u64,
    source: QSource,
) -> Result<InferenceTrace> {
    let mut belief = prior;
    let mut charges = ChargeStream::new(p, g_true, delta_t, seed, source)?;
    let mut trace = InferenceTrace::default();
    for step in 0..n_steps {
        let q = charges.next_charge()?;
        match posterior_update(&belief, q, p, delta_t) {
            Ok(post) => {
                let (ds_exact, ds_linear) = delta_s(&belief, &post);
                belief = post;
                trace.steps.push(InferenceStep {
                    step,
                    q,
                    belief_mean: belief.mean(),
                    belief_variance: belief.variance(),
                    delta_s_exact: ds_exact,
                    delta_s_linear: ds_linear,
                });
            }
            Err(Error::InvalidUpdate { .. }) => continue,
            Err(other) => return Err(other),
        }
    }
    Ok(trace)
}

/// Photocharge generator for the two validation paths.
enum ChargeStream {
    Likelihood {
        rng: rand_chacha::ChaCha12Rng,
        mean: f64,
        std: f64,
    },
    Sme {
        rng: rand_chacha::ChaCha12Rng,
        stepper: Stepper,
        state: Vec<C64>,
        substeps: usize,
        dt: f64,
        step_index: usize,
    },
}

impl ChargeStream {
    fn new(
        p: &SystemParams,
        g_true: f64,
        delta_t: f64,
        seed: u64,
        source: QSource,
    ) -> Result<Self> {
        match source {
            QSource::Likelihood => {
                let (mean, var) = likelihood_mean_variance(g_true, p, delta_t)?;
                Ok(ChargeStream::Likelihood {
                    rng: rand_chacha::ChaCha12Rng::seed_from_u64(seed),
                    mean,
                    std: var.sqrt(),
                })
            }
            QSource::SmeTrajectory { dt } => {
                if !(dt > 0.0) || dt > delta_t {
                    return Err(Error::Domain(
                        "SME dt must be positive and at most delta_t".into(),
                    ));
                }
                // run at the true coupling in the drive-displaced frame
                let p_true = SystemParams::new(p.drive, g_true, p.kappa, p.eta, p.phi, p.spec)?;
                let frame = Frame::displaced_by_drive(&p_true);
                let alpha = analytic_alpha(&p_true)?;
                let spec = FockSpec::for_amplitude(alpha - C64::new(frame.beta, 0.0));
                let p_sim = p_true.with_spec(spec);
                let rho0 = rho_ss_analytic_in_frame(&p_true, frame, spec)?;
                let substeps = (delta_t / dt).round().max(1.0) as usize;
                Ok(ChargeStream::Sme {
                    rng: rand_chacha::ChaCha12Rng::seed_from_u64(seed),
                    stepper: Stepper::new(&p_sim, frame, 10),
                    state: rho0.matrix().as_slice().to_vec(),
                    substeps,
                    dt: delta_t / substeps as f64,
                    step_index: 0,
                })
            }
        }
    }

    fn next_charge(&mut self) -> Result<f64> {
        match self {
            ChargeStream::Likelihood { rng, mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                Ok(*mean + *std * z)
            }
            ChargeStream::Sme {
                rng,
                stepper,
                state,
                substeps,
                dt,
                step_index,
            } => {
                let mut q = 0.0;
                let sqrt_dt = dt.sqrt();
                for _ in 0..*substeps {
                    let z: f64 = StandardNormal.sample(rng);
                    let (dq, _) = stepper.step(state, *dt, z * sqrt_dt, *step_index)?;
                    q += dq;
                    *step_index += 1;
                }
                Ok(q)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn params(e: f64, g: f64, kappa: f64, eta: f64, phi: f64) -> SystemParams {
        SystemParams::new(e, g, kappa, eta, phi, FockSpec::new(4).unwrap()).unwrap()
    }

    #[test]
    fn likelihood_reference_values() {
        let p = params(10.0, 1.0, 1.0, 1.0, 0.0);
        let (mean, var) = likelihood_mean_variance(1.0, &p, 1e-3).unwrap();
        assert!((mean - 0.0399).abs() < 1e-12, "mean {mean}");
        assert!((var - 2e-3).abs() < 1e-15);

        // variance independent of g and φ; mean vanishes at φ = π/2
        let p90 = params(10.0, 1.0, 1.0, 1.0, FRAC_PI_2);
        for g in [0.0, 0.5, 1.7] {
            let (m, v) = likelihood_mean_variance(g, &p90, 1e-3).unwrap();
            assert!(m.abs() < 1e-17, "mean {m} at g={g}");
            assert!((v - 2e-3).abs() < 1e-15);
        }
        assert!(likelihood_mean_variance(25.0, &p, 1e-3).is_err());
    }

    #[test]
    fn posterior_variance_reference_values() {
        // v₀² = 0.09, κE = 10, q = 0.01, φ = 0
        let p = params(10.0, 1.0, 1.0, 1.0, 0.0);
        let prior = GaussianBelief::new(1.0, 0.09).unwrap();
        let post = posterior_update(&prior, 0.01, &p, 1e-3).unwrap();
        assert!(
            (post.variance() - 0.9 / 10.0009).abs() < 1e-12,
            "v1² = {}",
            post.variance()
        );

        // q = 0 and φ = π/2 leave the variance unchanged
        let post0 = posterior_update(&prior, 0.0, &p, 1e-3).unwrap();
        assert_eq!(post0.variance(), prior.variance());
        let p90 = params(10.0, 1.0, 1.0, 1.0, FRAC_PI_2);
        let post90 = posterior_update(&prior, 3.0, &p90, 1e-3).unwrap();
        assert!((post90.variance() - prior.variance()).abs() < 1e-15);

        // a large negative q cos φ leaves the Gaussian family
        let err = posterior_update(&prior, -120.0, &p, 1e-3).unwrap_err();
        assert!(matches!(err, Error::InvalidUpdate { .. }));
    }

    #[test]
    fn entropy_change_reference_values() {
        let p = params(10.0, 1.0, 1.0, 1.0, 0.0);
        let prior = GaussianBelief::new(1.0, 0.09).unwrap();
        let post = posterior_update(&prior, 0.01, &p, 1e-3).unwrap();
        let (exact, linear) = delta_s(&prior, &post);
        let expected_linear = -0.01 * 0.09 / (2.0 * 10.0);
        assert!((linear - expected_linear).abs() < 1e-15, "linear {linear}");
        assert!((exact - expected_linear).abs() < 1e-8, "exact {exact}");
        assert!((exact - linear).abs() <= 1e-2 * exact.abs());

        let same = delta_s(&prior, &prior);
        assert_eq!(same.0, 0.0);

        // Gaussian entropy identity, independent of the mean
        let b1 = GaussianBelief::new(0.0, 0.25).unwrap();
        let b2 = GaussianBelief::new(7.0, 0.25).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 0.25).ln();
        assert!((b1.entropy() - expected).abs() < 1e-14);
        assert_eq!(b1.entropy(), b2.entropy());
    }

    #[test]
    fn linearization_accurate_over_three_sigma() {
        let p = params(10.0, 1.0, 2.0, 1.0, 0.0);
        let prior = GaussianBelief::new(1.0, 0.09).unwrap();
        let (mu, v) = likelihood_mean_variance(1.0, &p, 1e-3).unwrap();
        for k in [-3.0, -1.5, 0.0, 1.5, 3.0] {
            let q = mu + k * v.sqrt();
            let post = posterior_update(&prior, q, &p, 1e-3).unwrap();
            let (exact, linear) = delta_s(&prior, &post);
            if exact != 0.0 {
                assert!(
                    (exact - linear).abs() <= 1e-2 * exact.abs(),
                    "q={q}: exact {exact} vs linear {linear}"
                );
            }
        }
    }

    #[test]
    fn rate_rg_reference_values() {
        let p = params(10.0, 1.0, 2.0, 1.0, 0.0);
        assert!((rate_rg(&p, 0.09).unwrap() - 0.089775).abs() < 1e-12);

        let p90 = params(10.0, 1.0, 2.0, 1.0, FRAC_PI_2);
        let tiny = rate_rg(&p90, 0.09).unwrap();
        assert!(tiny < 1e-32, "cos²(π/2) → {tiny}");

        // g/2E → 0 with η = κ = 1, φ = 0: R_g → 2v₀²
        let p_limit = params(1000.0, 1e-6, 1.0, 1.0, 0.0);
        assert!((rate_rg(&p_limit, 0.09).unwrap() - 0.18).abs() < 1e-12);
    }

    #[test]
    fn cos_squared_law_is_exact() {
        let v0 = 0.09;
        let peak = rate_rg(&params(10.0, 1.0, 2.0, 1.0, 0.0), v0).unwrap();
        for k in 0..=6 {
            let phi = k as f64 * FRAC_PI_2 / 6.0;
            let p = params(10.0, 1.0, 2.0, 1.0, phi);
            let ratio = rate_rg(&p, v0).unwrap() / peak;
            assert!((ratio - phi.cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn tradeoff_identity_and_substitution_structure() {
        let v0_sq = 0.07;
        for k in 0..=8 {
            let phi = k as f64 * FRAC_PI_2 / 8.0;
            let p = params(7.0, 1.3, 1.7, 0.85, phi);
            let shared = (1.0 - p.coupling_ratio().powi(2)) * p.eta / p.kappa;
            let rq_norm = crate::info_rates::rate_rq(&p).unwrap()
                / (p.coupling * p.coupling * shared);
            let rg_norm = rate_rg(&p, v0_sq).unwrap() / (2.0 * v0_sq * shared);
            assert!(
                (rq_norm + rg_norm - 1.0).abs() < 1e-12,
                "tradeoff identity at φ={phi}"
            );

            // R_g(φ) = R_Q(π/2 − φ) with g² ↦ 2v₀²
            let p_swapped =
                params(7.0, 1.3, 1.7, 0.85, std::f64::consts::FRAC_PI_2 - phi);
            let rq_swapped = crate::info_rates::rate_rq(&p_swapped).unwrap();
            let substituted = rq_swapped * (2.0 * v0_sq) / (p.coupling * p.coupling);
            let rg = rate_rg(&p, v0_sq).unwrap();
            assert!(
                (rg - substituted).abs() <= 1e-12 * rg.max(1.0),
                "substitution structure at φ={phi}: {rg} vs {substituted}"
            );
        }
    }

    #[test]
    fn monte_carlo_fast_path_matches_closed_form() {
        let p = params(10.0, 1.0, 2.0, 1.0, 0.0);
        let rg = rate_rg(&p, 0.09).unwrap();
        let mc = rate_rg_monte_carlo(&p, 1.0, 0.09, 50_000, 1e-3, 21, QSource::Likelihood)
            .unwrap();
        assert_eq!(mc.invalid_updates, 0);
        assert!(
            (mc.estimate - rg).abs() < (3.0 * mc.std_error).max(0.05 * rg),
            "mc {} vs closed {}, se {}",
            mc.estimate,
            rg,
            mc.std_error
        );
    }

    #[test]
    fn monte_carlo_aborts_when_updates_leave_the_gaussian_family() {
        // a weak drive with a huge prior variance puts the invalid-update
        // threshold well inside the likelihood, so the 0.1% abort must fire
        let p = SystemParams::new(0.5, 0.1, 0.01, 1.0, 0.0, FockSpec::new(4).unwrap()).unwrap();
        let err = rate_rg_monte_carlo(&p, 0.1, 25.0, 20_000, 1e-3, 17, QSource::Likelihood)
            .unwrap_err();
        assert!(
            err.to_string().contains("invalid updates"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn monte_carlo_vanishes_at_phi_ninety() {
        let p = params(10.0, 1.0, 2.0, 1.0, FRAC_PI_2);
        let mc = rate_rg_monte_carlo(&p, 1.0, 0.09, 20_000, 1e-3, 5, QSource::Likelihood)
            .unwrap();
        assert!(
            mc.estimate.abs() <= (3.0 * mc.std_error).max(1e-9),
            "estimate {}",
            mc.estimate
        );
    }

    #[test]
    fn monte_carlo_cos_squared_scaling() {
        let v0_sq = 0.09;
        let p0 = params(10.0, 1.0, 2.0, 1.0, 0.0);
        let p60 = params(10.0, 1.0, 2.0, 1.0, std::f64::consts::FRAC_PI_3);
        let mc0 =
            rate_rg_monte_carlo(&p0, 1.0, v0_sq, 50_000, 1e-3, 31, QSource::Likelihood).unwrap();
        let mc60 =
            rate_rg_monte_carlo(&p60, 1.0, v0_sq, 50_000, 1e-3, 32, QSource::Likelihood).unwrap();
        let ratio = mc60.estimate / mc0.estimate;
        let se_ratio = (mc60.std_error / mc0.estimate).abs()
            + (mc0.std_error * ratio / mc0.estimate).abs();
        assert!(
            (ratio - 0.25).abs() < 3.0 * se_ratio + 0.01,
            "ratio {ratio} ± {se_ratio}"
        );
    }

    #[test]
    fn sequential_chain_sharpens_and_drifts_toward_truth() {
        // variance after 10⁴ non-reset updates falls below v₀²/2, and the
        // mean (averaged over chains to beat the random walk) moves toward
        // the true coupling
        let p = params(10.0, 1.0, 2.0, 1.0, 0.0);
        let g_true = 1.0;
        let v0_sq = 0.09;
        let prior_mean = 0.5;

        let single = sequential_inference(
            &p,
            g_true,
            GaussianBelief::new(prior_mean, v0_sq).unwrap(),
            10_000,
            1e-3,
            77,
            QSource::Likelihood,
        )
        .unwrap();
        let last = single.steps.last().unwrap();
        assert!(
            last.belief_variance < v0_sq / 2.0,
            "v² after 10⁴ steps: {}",
            last.belief_variance
        );

        use rayon::prelude::*;
        let n_chains = 200;
        let finals: Vec<f64> = (0..n_chains)
            .into_par_iter()
            .map(|k| {
                sequential_inference(
                    &p,
                    g_true,
                    GaussianBelief::new(prior_mean, v0_sq).unwrap(),
                    100_000,
                    1e-3,
                    500 + k as u64,
                    QSource::Likelihood,
                )
                .unwrap()
                .steps
                .last()
                .unwrap()
                .belief_mean
            })
            .collect();
        let mean_final: f64 = finals.iter().sum::<f64>() / n_chains as f64;
        assert!(
            mean_final > prior_mean,
            "averaged final mean {mean_final} did not move toward g_true"
        );
        assert!(
            (mean_final - g_true).abs() < (prior_mean - g_true).abs(),
            "averaged final mean {mean_final}"
        );
    }
}

//! Liouvillian, homodyne measurement superoperator, Itô integration of the
//! stochastic master equation, and synthetic photocurrent records.
//!
//! The unconditional generator is
//!
//! ```text
//! L(ρ) = [E(a† − a) + g(a†σ − σ†a), ρ] + 2κ (aρa† − ½{a†a, ρ})
//! ```
//!
//! with the 2κ dissipator normalization fixed by requiring the analytic
//! strong-driving amplitude (drive E, coupling g): an empty cavity (g = 0)
//! must settle at ⟨a⟩ = E/κ, which the κ-normalized dissipator fails. The
//! conditioned state obeys dρ = L(ρ)dt + M(ρ)dW in the Itô sense, with
//!
//! ```text
//! M(ρ) = √(2κη) (e^{−iφ} aρ + e^{iφ} ρa† − tr[ρ(e^{−iφ}a + e^{iφ}a†)] ρ)
//! dq   = 2κη tr[ρ(e^{iφ}a† + e^{−iφ}a)] dt + √(2κη) dW
//! ```
//!
//! All state-space kernels are written against the fixed field ⊗ atom index
//! layout of [`FockSpec`] and touch each matrix element a constant number of
//! times per step.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hilbert::{
    trace, C64, DensityMatrix, FockSpec, POSITIVITY_TOL,
};

/// Pre-renormalization trace deviation beyond which a step is rejected.
pub const STABILITY_TRACE_TOL: f64 = 1e-3;
/// Name of the noise generator, recorded in output metadata.
pub const RNG_ALGORITHM: &str = "ChaCha12";

/// Physical parameters of the driven, monitored atom-cavity system.
///
/// All rates are in units of κ and time in units of 1/κ; κ is kept explicit
/// so the formulas read like their closed forms.
#[derive(Debug, Clone, Copy)]
pub struct SystemParams {
    /// Drive strength E.
    pub drive: f64,
    /// Atom-cavity coupling g.
    pub coupling: f64,
    /// Cavity field (amplitude) decay rate κ.
    pub kappa: f64,
    /// Photodetection efficiency η ∈ (0, 1].
    pub eta: f64,
    /// Local-oscillator phase φ in radians.
    pub phi: f64,
    /// Fock truncation for the joint space.
    pub spec: FockSpec,
}

impl SystemParams {
    pub fn new(
        drive: f64,
        coupling: f64,
        kappa: f64,
        eta: f64,
        phi: f64,
        spec: FockSpec,
    ) -> Result<Self> {
        if !(drive >= 0.0) || !drive.is_finite() {
            return Err(Error::Domain(format!("drive E must be >= 0, got {drive}")));
        }
        if !(coupling >= 0.0) || !coupling.is_finite() {
            return Err(Error::Domain(format!(
                "coupling g must be >= 0, got {coupling}"
            )));
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Domain(format!("eta must lie in (0, 1], got {eta}")));
        }
        if !phi.is_finite() {
            return Err(Error::Domain(format!("phi must be finite, got {phi}")));
        }
        Ok(Self {
            drive,
            coupling,
            kappa,
            eta,
            phi,
            spec,
        })
    }

    /// The strong-driving expressions require g/(2E) < 1.
    pub fn require_strong_driving_domain(&self) -> Result<()> {
        if !(self.drive > 0.0) || self.coupling >= 2.0 * self.drive {
            return Err(Error::Domain(format!(
                "strong-driving formulas require g < 2E (g = {}, E = {})",
                self.coupling, self.drive
            )));
        }
        Ok(())
    }

    /// g/(2E).
    pub fn coupling_ratio(&self) -> f64 {
        self.coupling / (2.0 * self.drive)
    }

    /// Same parameters on a different truncation.
    pub fn with_spec(&self, spec: FockSpec) -> Self {
        Self { spec, ..*self }
    }
}

/// A real displacement of the field mode, a + β, folded into the generator.
///
/// Simulating in the frame displaced by β ≈ E/κ keeps the occupied Fock
/// levels near the vacuum even under strong driving; all reported observables
/// and photocurrents refer to the undisplaced (physical) frame. The displaced
/// generator keeps the Lindblad form with drive E − κβ plus an atomic drive
/// gβ(σ − σ†), and M(ρ) is form-invariant for real β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub beta: f64,
}

impl Frame {
    pub fn physical() -> Self {
        Self { beta: 0.0 }
    }

    /// Frame centered on the empty-cavity amplitude E/κ.
    pub fn displaced_by_drive(p: &SystemParams) -> Self {
        Self {
            beta: p.drive / p.kappa,
        }
    }

    pub fn is_physical(&self) -> bool {
        self.beta == 0.0
    }
}

/// Precomputed coefficients of the generator in a given frame.
struct Generator {
    dim: usize,
    n_max: usize,
    /// sqrt_n[n] = √n.
    sqrt_n: Vec<f64>,
    /// Field drive coefficient E − κβ on (a† − a).
    e_drive: f64,
    /// Coupling g on (a†σ − σ†a).
    g: f64,
    /// Atomic drive gβ on (σ − σ†).
    u_drive: f64,
    two_kappa: f64,
    /// √(2κη).
    meas_amp: f64,
    /// e^{−iφ}.
    phase: C64,
    /// Photocurrent offset 2β cos φ contributed by the frame displacement.
    record_offset: f64,
    kappa_eta: f64,
}

impl Generator {
    fn new(p: &SystemParams, frame: Frame) -> Self {
        let n_max = p.spec.n_max();
        Self {
            dim: p.spec.dim(),
            n_max,
            sqrt_n: (0..=n_max + 1).map(|n| (n as f64).sqrt()).collect(),
            e_drive: p.drive - p.kappa * frame.beta,
            g: p.coupling,
            u_drive: p.coupling * frame.beta,
            two_kappa: 2.0 * p.kappa,
            meas_amp: (2.0 * p.kappa * p.eta).sqrt(),
            phase: C64::new(p.phi.cos(), -p.phi.sin()),
            record_offset: 2.0 * frame.beta * p.phi.cos(),
            kappa_eta: p.kappa * p.eta,
        }
    }

    /// B = A ρ with A = e(a† − a) + g(a†σ − σ†a) + u(σ − σ†); A is
    /// anti-Hermitian, so [A, ρ] = B + B† for Hermitian ρ.
    fn apply_joint_left(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let (e, g, u) = (self.e_drive, self.g, self.u_drive);
        for col in 0..d {
            let x = &rho[col * d..(col + 1) * d];
            let y = &mut out[col * d..(col + 1) * d];
            for n in 0..=self.n_max {
                let down = n.checked_sub(1);
                let up = if n < self.n_max { Some(n + 1) } else { None };
                let sn = self.sqrt_n[n];
                let sn1 = self.sqrt_n[n + 1];
                // s = 0 (ground)
                let mut acc = C64::new(0.0, 0.0);
                if let Some(m) = down {
                    acc += x[2 * m] * (e * sn);
                    acc += x[2 * m + 1] * (g * sn);
                }
                if let Some(m) = up {
                    acc -= x[2 * m] * (e * sn1);
                }
                acc += x[2 * n + 1] * u;
                y[2 * n] = acc;
                // s = 1 (excited)
                let mut acc = C64::new(0.0, 0.0);
                if let Some(m) = down {
                    acc += x[2 * m + 1] * (e * sn);
                }
                if let Some(m) = up {
                    acc -= x[2 * m + 1] * (e * sn1);
                    acc -= x[2 * m] * (g * sn1);
                }
                acc -= x[2 * n] * u;
                y[2 * n + 1] = acc;
            }
        }
    }

    /// out = a ρ.
    fn apply_a_left(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for col in 0..d {
            let x = &rho[col * d..(col + 1) * d];
            let y = &mut out[col * d..(col + 1) * d];
            for n in 0..=self.n_max {
                for s in 0..2 {
                    y[2 * n + s] = if n < self.n_max {
                        x[2 * (n + 1) + s] * self.sqrt_n[n + 1]
                    } else {
                        C64::new(0.0, 0.0)
                    };
                }
            }
        }
    }

    /// out += 2κ (aρa† − ½{a†a, ρ}) for Hermitian ρ.
    fn add_dissipator(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let k2 = self.two_kappa;
        for col in 0..d {
            let m = col / 2;
            let up_col = if m < self.n_max {
                Some((col + 2) * d)
            } else {
                None
            };
            let base = col * d;
            for n in 0..=self.n_max {
                for s in 0..2 {
                    let row = 2 * n + s;
                    let mut gain = C64::new(0.0, 0.0);
                    if n < self.n_max {
                        if let Some(uc) = up_col {
                            gain = rho[uc + 2 * (n + 1) + s]
                                * (self.sqrt_n[n + 1] * self.sqrt_n[m + 1]);
                        }
                    }
                    let loss = rho[base + row] * (0.5 * (n + m) as f64);
                    out[base + row] += (gain - loss) * k2;
                }
            }
        }
    }

    /// out = L(ρ). `scratch` must have the same length as `rho`.
    fn liouvillian(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        self.apply_joint_left(rho, scratch);
        let d = self.dim;
        // commutator = B + B†
        for col in 0..d {
            for row in 0..d {
                out[col * d + row] = scratch[col * d + row] + scratch[row * d + col].conj();
            }
        }
        self.add_dissipator(rho, out);
    }

    /// out = M(ρ); returns the quadrature mean x̄ = tr[ρ(e^{−iφ}a + e^{iφ}a†)]
    /// in the current frame. `scratch` receives aρ.
    fn measurement(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) -> f64 {
        self.apply_a_left(rho, scratch);
        let d = self.dim;
        let mut tr_arho = C64::new(0.0, 0.0);
        for i in 0..d {
            tr_arho += scratch[i * d + i];
        }
        let x_bar = 2.0 * (self.phase * tr_arho).re;
        for col in 0..d {
            for row in 0..d {
                let b = self.phase * scratch[col * d + row]
                    + (self.phase * scratch[row * d + col]).conj();
                out[col * d + row] = (b - rho[col * d + row] * x_bar) * self.meas_amp;
            }
        }
        x_bar
    }

    /// Mean physical photocurrent rate dq/dt at the given frame state.
    fn record_rate(&self, x_bar: f64) -> f64 {
        2.0 * self.kappa_eta * (x_bar + self.record_offset)
    }
}

/// Outcome of a single integration step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepInfo {
    /// |tr ρ' − 1| before renormalization.
    pub trace_deviation: f64,
    /// Whether an exact positivity check ran on this step.
    pub positivity_checked: bool,
    /// Whether eigenvalue clipping was applied.
    pub clipped: bool,
}

/// Counters accumulated over a trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrajectoryDiagnostics {
    pub steps: usize,
    pub positivity_checks: usize,
    pub clipped_steps: usize,
    pub max_trace_deviation: f64,
}

/// One seeded realization of (W(t), q(t), ρ(t)).
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub seed: u64,
    /// Wiener increments ΔW ~ Normal(0, dt), one per step.
    pub noise: Vec<f64>,
    /// Photocharge increments dq, one per step.
    pub charge: Vec<f64>,
    /// Decimated (step, state) snapshots, when requested.
    pub states: Vec<(usize, DensityMatrix)>,
    pub final_state: DensityMatrix,
    pub diagnostics: TrajectoryDiagnostics,
}

/// Options for [`simulate_trajectory_with`].
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub frame: Frame,
    /// Store a state snapshot every this many steps (None: final state only).
    pub store_states_every: Option<usize>,
    /// Steps between exact positivity checks when the dimension is large.
    pub positivity_check_interval: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            frame: Frame::physical(),
            store_states_every: None,
            positivity_check_interval: 10,
        }
    }
}

/// Reusable stepper holding the generator tables and scratch buffers.
pub struct Stepper {
    gen: Generator,
    l_buf: Vec<C64>,
    m_buf: Vec<C64>,
    scratch: Vec<C64>,
    check_interval: usize,
    dim: usize,
}

impl Stepper {
    pub fn new(p: &SystemParams, frame: Frame, check_interval: usize) -> Self {
        let gen = Generator::new(p, frame);
        let len = gen.dim * gen.dim;
        let dim = gen.dim;
        Self {
            gen,
            l_buf: vec![C64::new(0.0, 0.0); len],
            m_buf: vec![C64::new(0.0, 0.0); len],
            scratch: vec![C64::new(0.0, 0.0); len],
            check_interval: check_interval.max(1),
            dim,
        }
    }

    /// Advance `rho` (column-major, Hermitian, unit trace) by one Euler-Maruyama
    /// step and return the physical photocharge increment together with step
    /// diagnostics.
    pub fn step(
        &mut self,
        rho: &mut [C64],
        dt: f64,
        dw: f64,
        step_index: usize,
    ) -> Result<(f64, StepInfo)> {
        let d = self.dim;
        self.gen.liouvillian(rho, &mut self.l_buf, &mut self.scratch);
        let x_bar = self.gen.measurement(rho, &mut self.m_buf, &mut self.scratch);
        let dq = self.gen.record_rate(x_bar) * dt + (self.gen.meas_amp) * dw;

        for i in 0..d * d {
            rho[i] += self.l_buf[i] * dt + self.m_buf[i] * dw;
        }
        // hermitize
        for col in 0..d {
            for row in 0..=col {
                let avg = (rho[col * d + row] + rho[row * d + col].conj()) * 0.5;
                rho[col * d + row] = avg;
                rho[row * d + col] = avg.conj();
            }
        }
        let mut tr = 0.0;
        for i in 0..d {
            tr += rho[i * d + i].re;
        }
        let deviation = (tr - 1.0).abs();
        // NaN-aware: a non-finite trace fails this guard too
        if !(deviation <= STABILITY_TRACE_TOL) {
            return Err(Error::Stability {
                step: step_index,
                deviation,
            });
        }
        let inv = 1.0 / tr;
        for v in rho.iter_mut() {
            *v *= inv;
        }

        let mut info = StepInfo {
            trace_deviation: deviation,
            ..Default::default()
        };
        let min_diag = (0..d).fold(f64::INFINITY, |a, i| a.min(rho[i * d + i].re));
        let due = step_index % self.check_interval == 0 || min_diag < -POSITIVITY_TOL;
        if due {
            info.positivity_checked = true;
            info.clipped = clip_if_needed(rho, d);
        }
        Ok((dq, info))
    }
}

/// Clips negative eigenvalues to zero and renormalizes when the minimum
/// eigenvalue is below -[`POSITIVITY_TOL`]. Returns whether clipping ran.
fn clip_if_needed(rho: &mut [C64], d: usize) -> bool {
    let m = DMatrix::<C64>::from_column_slice(d, d, rho);
    let eig = m.symmetric_eigen();
    let min_ev = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min_ev >= -POSITIVITY_TOL {
        return false;
    }
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let rebuilt = &eig.eigenvectors
        * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            d,
            clipped.iter().map(|&l| C64::new(l / total, 0.0)),
        ))
        * eig.eigenvectors.adjoint();
    rho.copy_from_slice(rebuilt.as_slice());
    true
}

/// L(ρ) in the physical frame: Hermitian and traceless.
pub fn liouvillian_apply(rho: &DensityMatrix, p: &SystemParams) -> Result<DMatrix<C64>> {
    liouvillian_apply_in_frame(rho, p, Frame::physical())
}

/// L(ρ) in an arbitrary displaced frame.
pub fn liouvillian_apply_in_frame(
    rho: &DensityMatrix,
    p: &SystemParams,
    frame: Frame,
) -> Result<DMatrix<C64>> {
    check_dims(rho, p)?;
    let gen = Generator::new(p, frame);
    let d = gen.dim;
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    let mut scratch = vec![C64::new(0.0, 0.0); d * d];
    gen.liouvillian(rho.matrix().as_slice(), &mut out, &mut scratch);
    Ok(DMatrix::from_column_slice(d, d, &out))
}

/// M(ρ) in the physical frame: Hermitian and traceless for unit-trace ρ.
pub fn measurement_apply(rho: &DensityMatrix, p: &SystemParams) -> Result<DMatrix<C64>> {
    measurement_apply_in_frame(rho, p, Frame::physical())
}

/// M(ρ) in a displaced frame (form-invariant under real displacements).
pub fn measurement_apply_in_frame(
    rho: &DensityMatrix,
    p: &SystemParams,
    frame: Frame,
) -> Result<DMatrix<C64>> {
    check_dims(rho, p)?;
    let gen = Generator::new(p, frame);
    let d = gen.dim;
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    let mut scratch = vec![C64::new(0.0, 0.0); d * d];
    gen.measurement(rho.matrix().as_slice(), &mut out, &mut scratch);
    Ok(DMatrix::from_column_slice(d, d, &out))
}

/// Photocharge increment dq for the given state and Wiener increment; the
/// same dW must drive the paired [`sme_step`].
pub fn photocurrent_increment(rho: &DensityMatrix, p: &SystemParams, dt: f64, dw: f64) -> f64 {
    photocurrent_increment_in_frame(rho, p, Frame::physical(), dt, dw)
}

pub fn photocurrent_increment_in_frame(
    rho: &DensityMatrix,
    p: &SystemParams,
    frame: Frame,
    dt: f64,
    dw: f64,
) -> f64 {
    let gen = Generator::new(p, frame);
    let d = gen.dim;
    let mut scratch = vec![C64::new(0.0, 0.0); d * d];
    gen.apply_a_left(rho.matrix().as_slice(), &mut scratch);
    let mut tr_arho = C64::new(0.0, 0.0);
    for i in 0..d {
        tr_arho += scratch[i * d + i];
    }
    let x_bar = 2.0 * (gen.phase * tr_arho).re;
    gen.record_rate(x_bar) * dt + gen.meas_amp * dw
}

/// Mean physical photocurrent rate ⟨dq/dt⟩ at a state.
pub fn mean_photocurrent_rate(rho: &DensityMatrix, p: &SystemParams, frame: Frame) -> f64 {
    photocurrent_increment_in_frame(rho, p, frame, 1.0, 0.0)
}

/// One Euler-Maruyama step: ρ' = ρ + L(ρ)dt + M(ρ)dW, hermitized and
/// renormalized, with eigenvalue clipping only when positivity is violated.
pub fn sme_step(rho: &DensityMatrix, p: &SystemParams, dt: f64, dw: f64) -> Result<DensityMatrix> {
    sme_step_in_frame(rho, p, Frame::physical(), dt, dw)
}

pub fn sme_step_in_frame(
    rho: &DensityMatrix,
    p: &SystemParams,
    frame: Frame,
    dt: f64,
    dw: f64,
) -> Result<DensityMatrix> {
    check_dims(rho, p)?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    // check_interval 1 forces the exact positivity check at any dimension
    let mut stepper = Stepper::new(p, frame, 1);
    let mut state = rho.matrix().as_slice().to_vec();
    let d = p.spec.dim();
    stepper.step(&mut state, dt, dw, 0)?;
    Ok(DensityMatrix::from_parts_unchecked(
        DMatrix::from_column_slice(d, d, &state),
        p.spec,
    ))
}

/// Integrate the SME with a seeded noise realization.
///
/// Deterministic given `(p, t_final, dt, seed)`: the Wiener increments are
/// drawn from a ChaCha12 stream as Normal(0, dt).
pub fn simulate_trajectory(
    rho0: &DensityMatrix,
    p: &SystemParams,
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    simulate_trajectory_with(rho0, p, t_final, dt, seed, &SimOptions::default())
}

pub fn simulate_trajectory_with(
    rho0: &DensityMatrix,
    p: &SystemParams,
    t_final: f64,
    dt: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<TrajectoryRecord> {
    check_dims(rho0, p)?;
    if !(t_final > 0.0) || !(dt > 0.0) {
        return Err(Error::Domain(
            "t_final and dt must both be positive".into(),
        ));
    }
    let steps = (t_final / dt).ceil() as usize;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let d = p.spec.dim();
    let mut stepper = Stepper::new(p, opts.frame, opts.positivity_check_interval);
    let mut state = rho0.matrix().as_slice().to_vec();

    let mut noise = Vec::with_capacity(steps);
    let mut charge = Vec::with_capacity(steps);
    let mut states = Vec::new();
    let mut diag = TrajectoryDiagnostics::default();

    for k in 0..steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        let dw = z * sqrt_dt;
        let (dq, info) = stepper.step(&mut state, dt, dw, k)?;
        noise.push(dw);
        charge.push(dq);
        diag.steps += 1;
        diag.positivity_checks += info.positivity_checked as usize;
        diag.clipped_steps += info.clipped as usize;
        diag.max_trace_deviation = diag.max_trace_deviation.max(info.trace_deviation);
        if let Some(every) = opts.store_states_every {
            if (k + 1) % every == 0 {
                // stored snapshots must satisfy the state invariants even
                // between scheduled positivity checks
                if !info.positivity_checked {
                    diag.positivity_checks += 1;
                    diag.clipped_steps += clip_if_needed(&mut state, d) as usize;
                }
                states.push((
                    k + 1,
                    DensityMatrix::from_parts_unchecked(
                        DMatrix::from_column_slice(d, d, &state),
                        p.spec,
                    ),
                ));
            }
        }
    }

    Ok(TrajectoryRecord {
        dt,
        seed,
        noise,
        charge,
        states,
        final_state: DensityMatrix::from_parts_unchecked(
            DMatrix::from_column_slice(d, d, &state),
            p.spec,
        ),
        diagnostics: diag,
    })
}

/// Deterministic integration of ρ̇ = L(ρ) with classical RK4, used as the
/// unconditional-evolution oracle.
pub fn unconditional_evolve_rk4(
    rho0: &DensityMatrix,
    p: &SystemParams,
    frame: Frame,
    t_final: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    check_dims(rho0, p)?;
    let gen = Generator::new(p, frame);
    let d = gen.dim;
    let len = d * d;
    let steps = (t_final / dt).ceil() as usize;
    let mut y = rho0.matrix().as_slice().to_vec();
    let mut k1 = vec![C64::new(0.0, 0.0); len];
    let mut k2 = vec![C64::new(0.0, 0.0); len];
    let mut k3 = vec![C64::new(0.0, 0.0); len];
    let mut k4 = vec![C64::new(0.0, 0.0); len];
    let mut tmp = vec![C64::new(0.0, 0.0); len];
    let mut scratch = vec![C64::new(0.0, 0.0); len];

    for _ in 0..steps {
        gen.liouvillian(&y, &mut k1, &mut scratch);
        for i in 0..len {
            tmp[i] = y[i] + k1[i] * (dt * 0.5);
        }
        gen.liouvillian(&tmp, &mut k2, &mut scratch);
        for i in 0..len {
            tmp[i] = y[i] + k2[i] * (dt * 0.5);
        }
        gen.liouvillian(&tmp, &mut k3, &mut scratch);
        for i in 0..len {
            tmp[i] = y[i] + k3[i] * dt;
        }
        gen.liouvillian(&tmp, &mut k4, &mut scratch);
        for i in 0..len {
            y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
    }
    // hermitize and renormalize against roundoff drift
    let mut m = DMatrix::from_column_slice(d, d, &y);
    let herm = (&m + m.adjoint()).scale(0.5);
    m = herm;
    let tr = trace(&m).re;
    m /= C64::new(tr, 0.0);
    Ok(DensityMatrix::from_parts_unchecked(m, p.spec))
}

/// ⟨a⟩, ⟨a†a⟩, and ⟨σ_z⟩ of a state, evaluated directly from the layout.
pub fn field_observables(rho: &DensityMatrix) -> (C64, f64, f64) {
    let spec = rho.spec();
    let m = rho.matrix();
    let mut a_mean = C64::new(0.0, 0.0);
    let mut n_mean = 0.0;
    let mut sz_mean = 0.0;
    for n in 0..=spec.n_max() {
        for s in 0..2 {
            let i = spec.joint_index(n, s);
            if n >= 1 {
                a_mean += m[(spec.joint_index(n, s), spec.joint_index(n - 1, s))]
                    * (n as f64).sqrt();
            }
            n_mean += n as f64 * m[(i, i)].re;
            sz_mean += if s == 1 { m[(i, i)].re } else { -m[(i, i)].re };
        }
    }
    (a_mean, n_mean, sz_mean)
}

fn check_dims(rho: &DensityMatrix, p: &SystemParams) -> Result<()> {
    if rho.dim() != p.spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.spec.dim(),
            actual: rho.dim(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_state, hermiticity_deviation, FockSpec};
    use rand::Rng;

    fn params(e: f64, g: f64, kappa: f64, eta: f64, phi: f64, n_max: usize) -> SystemParams {
        SystemParams::new(e, g, kappa, eta, phi, FockSpec::new(n_max).unwrap()).unwrap()
    }

    fn random_density(spec: FockSpec, seed: u64) -> DensityMatrix {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let d = spec.dim();
        let g = DMatrix::<C64>::from_fn(d, d, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let m = &g * g.adjoint();
        let tr = trace(&m).re;
        DensityMatrix::new(m / C64::new(tr, 0.0), spec).unwrap()
    }

    #[test]
    fn vacuum_is_dark_without_drive_or_coupling() {
        let p = params(0.0, 0.0, 1.0, 1.0, 0.0, 3);
        let spec = p.spec;
        let mut m = DMatrix::<C64>::zeros(spec.dim(), spec.dim());
        m[(0, 0)] = C64::new(1.0, 0.0);
        let rho = DensityMatrix::new(m, spec).unwrap();
        let l = liouvillian_apply(&rho, &p).unwrap();
        assert!(l.iter().all(|x| x.norm() < 1e-14));
    }

    #[test]
    fn liouvillian_is_traceless_and_hermitian_on_random_states() {
        let p = params(2.0, 0.7, 1.0, 0.8, 0.9, 5);
        for seed in 0..4 {
            let rho = random_density(p.spec, seed);
            let l = liouvillian_apply(&rho, &p).unwrap();
            assert!(trace(&l).norm() < 1e-10, "trace {}", trace(&l));
            assert!(hermiticity_deviation(&l) < 1e-10);
        }
    }

    #[test]
    fn measurement_is_traceless_and_hermitian_on_random_states() {
        let p = params(1.5, 0.4, 1.0, 0.6, 1.1, 5);
        for seed in 0..4 {
            let rho = random_density(p.spec, seed + 10);
            let m = measurement_apply(&rho, &p).unwrap();
            assert!(trace(&m).norm() < 1e-10);
            assert!(hermiticity_deviation(&m) < 1e-10);
        }
    }

    #[test]
    fn structured_kernels_match_dense_formulas() {
        let p = params(1.3, 0.6, 1.2, 0.7, 0.5, 6);
        let frame = Frame { beta: 0.8 };
        let rho = random_density(p.spec, 3);
        let a = crate::hilbert::make_annihilation(p.spec).matrix().clone();
        let sig = crate::hilbert::make_sigma(p.spec).matrix().clone();
        let e_eff = p.drive - p.kappa * frame.beta;
        let u = p.coupling * frame.beta;
        let big_a = (a.adjoint() - &a).scale(e_eff)
            + (a.adjoint() * &sig - sig.adjoint() * &a).scale(p.coupling)
            + (&sig - sig.adjoint()).scale(u);
        let n_op = a.adjoint() * &a;
        let r = rho.matrix();
        let dense_l = &big_a * r - r * &big_a
            + ((&a * r * a.adjoint()) - (&n_op * r + r * &n_op).scale(0.5)).scale(2.0 * p.kappa);
        let fast_l = liouvillian_apply_in_frame(&rho, &p, frame).unwrap();
        assert!((&dense_l - &fast_l).norm() < 1e-12);

        let phase = C64::new(p.phi.cos(), -p.phi.sin());
        let x_op = &a * phase + (a.adjoint()) * phase.conj();
        let x_bar = {
            let mut acc = C64::new(0.0, 0.0);
            let prod = r * &x_op;
            for i in 0..prod.nrows() {
                acc += prod[(i, i)];
            }
            acc
        };
        let dense_m = ((&a * r) * phase + (r * a.adjoint()) * phase.conj() - r * x_bar)
            .scale((2.0 * p.kappa * p.eta).sqrt());
        let fast_m = measurement_apply_in_frame(&rho, &p, frame).unwrap();
        assert!((&dense_m - &fast_m).norm() < 1e-12);
    }

    #[test]
    fn sme_step_preserves_trace_exactly() {
        let p = params(1.0, 0.5, 1.0, 1.0, 0.3, 5);
        let rho = random_density(p.spec, 7);
        let next = sme_step(&rho, &p, 1e-3, 2e-2).unwrap();
        assert!((trace(next.matrix()).re - 1.0).abs() < 1e-14);
        assert!(hermiticity_deviation(next.matrix()) < 1e-14);
    }

    #[test]
    fn stepper_flags_unnormalizable_states() {
        // The Lindblad and measurement forms preserve the trace identically,
        // so the trace guard is a blowup/NaN detector; exercise it directly
        // with an off-normalized input.
        let p = params(1.0, 0.2, 1.0, 1.0, 0.0, 4);
        let mut stepper = Stepper::new(&p, Frame::physical(), 1);
        let d = p.spec.dim();
        let mut state = vec![C64::new(0.0, 0.0); d * d];
        state[0] = C64::new(1.01, 0.0); // trace 1.01
        let err = stepper.step(&mut state, 1e-3, 0.0, 7).unwrap_err();
        match err {
            Error::Stability { step, deviation } => {
                assert_eq!(step, 7);
                assert!(deviation > STABILITY_TRACE_TOL);
            }
            other => panic!("expected stability error, got {other}"),
        }

        // dt <= 0 is rejected up front
        let rho = random_density(p.spec, 9);
        assert!(sme_step(&rho, &p, 0.0, 0.0).is_err());
    }

    #[test]
    fn trajectories_are_deterministic_given_seed() {
        let p = params(1.0, 0.4, 1.0, 0.9, 0.7, 6);
        let rho0 = crate::hilbert::dressed_state(
            crate::hilbert::DressedSign::Plus,
            C64::new(0.5, 0.0),
            p.spec,
        )
        .unwrap()
        .projector();
        let a = simulate_trajectory(&rho0, &p, 0.1, 1e-3, 42).unwrap();
        let b = simulate_trajectory(&rho0, &p, 0.1, 1e-3, 42).unwrap();
        assert_eq!(a.noise, b.noise);
        assert_eq!(a.charge, b.charge);
        assert_eq!(
            a.final_state.matrix().as_slice(),
            b.final_state.matrix().as_slice()
        );
        let c = simulate_trajectory(&rho0, &p, 0.1, 1e-3, 43).unwrap();
        assert_ne!(a.noise, c.noise);
    }

    #[test]
    fn wiener_increment_statistics() {
        let p = params(1.0, 0.0, 1.0, 1.0, 0.0, 4);
        let spec = p.spec;
        let mut m = DMatrix::<C64>::zeros(spec.dim(), spec.dim());
        m[(0, 0)] = C64::new(1.0, 0.0);
        let rho0 = DensityMatrix::new(m, spec).unwrap();
        let dt = 1e-3;
        let rec = simulate_trajectory(&rho0, &p, 20.0, dt, 11).unwrap();
        let n = rec.noise.len() as f64;
        let mean: f64 = rec.noise.iter().sum::<f64>() / n;
        let var: f64 = rec.noise.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0);
        // mean of ΔW/dt within 4 standard errors of 0
        let se_mean = (var / n).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean}");
        // variance of ΔW within 4 standard errors of dt
        let se_var = var * (2.0 / (n - 1.0)).sqrt();
        assert!((var - dt).abs() < 4.0 * se_var, "var {var} vs dt {dt}");
    }

    #[test]
    fn record_lengths_match_step_count() {
        let p = params(1.0, 0.2, 1.0, 1.0, 0.0, 4);
        let rho0 = random_density(p.spec, 5);
        let rec = simulate_trajectory(&rho0, &p, 0.0505, 1e-3, 3).unwrap();
        assert_eq!(rec.noise.len(), 51);
        assert_eq!(rec.charge.len(), 51);
    }

    #[test]
    fn displaced_frame_reproduces_physical_evolution() {
        // Deterministic evolution compared across frames: observables of the
        // displaced run, shifted back by beta, match the physical run.
        let e = 2.0;
        let g = 0.8;
        let p_phys = params(e, g, 1.0, 1.0, 0.0, 40);
        let frame = Frame { beta: e };
        let p_disp = params(e, g, 1.0, 1.0, 0.0, 14);

        // physical initial state: coherent at beta, atom ground
        let field = coherent_state(C64::new(e, 0.0), p_phys.spec).unwrap();
        let mut v = nalgebra::DVector::<C64>::zeros(p_phys.spec.dim());
        for n in 0..p_phys.spec.field_dim() {
            v[p_phys.spec.joint_index(n, 0)] = field.coefficients()[n];
        }
        let rho0_phys = crate::hilbert::PureState::new(v, p_phys.spec)
            .unwrap()
            .projector();
        // displaced image of the same state: vacuum, atom ground
        let mut m = DMatrix::<C64>::zeros(p_disp.spec.dim(), p_disp.spec.dim());
        m[(0, 0)] = C64::new(1.0, 0.0);
        let rho0_disp = DensityMatrix::new(m, p_disp.spec).unwrap();

        let t = 0.8;
        let dt = 2e-4;
        let out_phys = unconditional_evolve_rk4(&rho0_phys, &p_phys, Frame::physical(), t, dt)
            .unwrap();
        let out_disp = unconditional_evolve_rk4(&rho0_disp, &p_disp, frame, t, dt).unwrap();

        let (a_p, n_p, sz_p) = field_observables(&out_phys);
        let (a_d, n_d, sz_d) = field_observables(&out_disp);
        let a_shifted = a_d + C64::new(frame.beta, 0.0);
        assert!((a_p - a_shifted).norm() < 1e-6, "{a_p} vs {a_shifted}");
        // ⟨n⟩_phys = ⟨(a†+β)(a+β)⟩_disp
        let n_shifted = n_d + 2.0 * frame.beta * a_d.re + frame.beta * frame.beta;
        assert!((n_p - n_shifted).abs() < 1e-5, "{n_p} vs {n_shifted}");
        assert!((sz_p - sz_d).abs() < 1e-6);

        // photocurrent means agree
        let r_p = mean_photocurrent_rate(&out_phys, &p_phys, Frame::physical());
        let r_d = mean_photocurrent_rate(&out_disp, &p_disp, frame);
        assert!((r_p - r_d).abs() < 1e-5, "{r_p} vs {r_d}");
    }

    #[test]
    fn undriven_cavity_amplitude_decays_at_kappa() {
        // g = 0, E = 0: the unconditional mean of ⟨a⟩ follows the closed-form
        // amplitude decay e^{−κt} fixed by the dissipator normalization; the
        // deterministic integrator provides the oracle and an SME ensemble
        // must agree with it.
        let kappa = 1.0;
        let p = params(0.0, 0.0, kappa, 1.0, 0.0, 18);
        let alpha0 = C64::new(1.2, 0.0);
        let field = coherent_state(alpha0, p.spec).unwrap();
        let mut v = nalgebra::DVector::<C64>::zeros(p.spec.dim());
        for n in 0..p.spec.field_dim() {
            v[p.spec.joint_index(n, 0)] = field.coefficients()[n];
        }
        let rho0 = crate::hilbert::PureState::new(v, p.spec).unwrap().projector();

        let t = 0.5;
        let det = unconditional_evolve_rk4(&rho0, &p, Frame::physical(), t, 1e-4).unwrap();
        let (a_det, _, _) = field_observables(&det);
        let expected = alpha0 * C64::new((-kappa * t).exp(), 0.0);
        assert!(
            (a_det - expected).norm() < 1e-6,
            "deterministic ⟨a⟩ {a_det} vs closed form {expected}"
        );

        use rayon::prelude::*;
        let n_traj = 400usize;
        let means: Vec<C64> = (0..n_traj)
            .into_par_iter()
            .map(|k| {
                let rec = simulate_trajectory(&rho0, &p, t, 1e-3, 1000 + k as u64).unwrap();
                field_observables(&rec.final_state).0
            })
            .collect();
        let mean_re: f64 = means.iter().map(|z| z.re).sum::<f64>() / n_traj as f64;
        let var_re: f64 = means
            .iter()
            .map(|z| (z.re - mean_re) * (z.re - mean_re))
            .sum::<f64>()
            / (n_traj as f64 - 1.0);
        let se = (var_re / n_traj as f64).sqrt();
        assert!(
            (mean_re - expected.re).abs() < 3.0 * se + 2e-3,
            "ensemble ⟨a⟩ {mean_re} vs {expected}, se {se}"
        );
    }
}

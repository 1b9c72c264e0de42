//! Truncated Hilbert space of a single field mode tensored with a two-level
//! atom: canonical operators, coherent and dressed states, and the von Neumann
//! entropy.
//!
//! Tensor ordering is fixed as field ⊗ atom throughout the crate. The joint
//! basis index of Fock level `n` and atomic level `s` (0 = ground, 1 = excited)
//! is `2 * n + s`; see [`FockSpec::joint_index`], the single place this
//! convention is encoded.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Maximum allowed deviation from hermiticity for a density matrix.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Maximum allowed deviation of the trace from 1 for a density matrix.
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated before a state counts as non-positive.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Eigenvalues below this floor are treated as exactly zero in entropies.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;
/// Required pre-normalization norm accuracy for truncated coherent states.
pub const COHERENT_NORM_TOL: f64 = 1e-8;

/// Truncation of the field mode: Fock levels 0..=n_max are retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpec {
    n_max: usize,
}

impl FockSpec {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::Domain("n_max must be at least 1".into()));
        }
        Ok(Self { n_max })
    }

    /// Truncation adequate for a coherent amplitude, n_max = ⌈|α|² + 10|α| + 10⌉.
    ///
    /// The Poisson photon-number tail beyond this level is far below
    /// [`COHERENT_NORM_TOL`].
    pub fn for_amplitude(alpha: C64) -> Self {
        let a = alpha.norm();
        let n_max = (a * a + 10.0 * a + 10.0).ceil() as usize;
        Self { n_max: n_max.max(1) }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Dimension of the field factor, n_max + 1.
    pub fn field_dim(&self) -> usize {
        self.n_max + 1
    }

    /// Dimension of the joint field ⊗ atom space, 2 (n_max + 1).
    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    /// Joint index of |n⟩ ⊗ |s⟩ in the field ⊗ atom ordering.
    #[inline]
    pub fn joint_index(&self, n: usize, s: usize) -> usize {
        debug_assert!(n <= self.n_max && s < 2);
        2 * n + s
    }
}

/// A complex square matrix acting on the joint space.
#[derive(Debug, Clone)]
pub struct Operator {
    matrix: DMatrix<C64>,
    spec: FockSpec,
}

impl Operator {
    pub fn new(matrix: DMatrix<C64>, spec: FockSpec) -> Result<Self> {
        if matrix.nrows() != spec.dim() || matrix.ncols() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: matrix.nrows(),
            });
        }
        Ok(Self { matrix, spec })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn spec(&self) -> FockSpec {
        self.spec
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            spec: self.spec,
        }
    }
}

/// A normalized vector on the joint space.
#[derive(Debug, Clone)]
pub struct PureState {
    vector: DVector<C64>,
    spec: FockSpec,
}

impl PureState {
    pub fn new(vector: DVector<C64>, spec: FockSpec) -> Result<Self> {
        if vector.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: vector.len(),
            });
        }
        let norm = vector.norm();
        if (norm - 1.0).abs() > COHERENT_NORM_TOL {
            return Err(Error::Domain(format!(
                "pure state norm {norm} deviates from 1 by more than {COHERENT_NORM_TOL:e}"
            )));
        }
        Ok(Self { vector, spec })
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.vector
    }

    pub fn spec(&self) -> FockSpec {
        self.spec
    }

    /// ⟨ψ|A|ψ⟩.
    pub fn expectation(&self, op: &Operator) -> C64 {
        (self.vector.adjoint() * op.matrix() * &self.vector)[(0, 0)]
    }

    /// |ψ⟩⟨ψ| as a density matrix.
    pub fn projector(&self) -> DensityMatrix {
        let m = &self.vector * self.vector.adjoint();
        DensityMatrix {
            matrix: m,
            spec: self.spec,
        }
    }
}

/// Field-factor state vector (dimension n_max + 1), used to build joint states.
#[derive(Debug, Clone)]
pub struct FieldState {
    coefficients: DVector<C64>,
    spec: FockSpec,
}

impl FieldState {
    pub fn coefficients(&self) -> &DVector<C64> {
        &self.coefficients
    }

    pub fn spec(&self) -> FockSpec {
        self.spec
    }

    /// ⟨a⟩ on the field factor.
    pub fn annihilation_expectation(&self) -> C64 {
        let c = &self.coefficients;
        let mut acc = C64::new(0.0, 0.0);
        for n in 1..c.len() {
            acc += c[n - 1].conj() * c[n] * (n as f64).sqrt();
        }
        acc
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix on the joint space.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    spec: FockSpec,
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace, and numerical positivity.
    ///
    /// The positivity check costs a full eigendecomposition; internal hot
    /// paths that preserve the invariants by construction use
    /// [`DensityMatrix::from_parts_unchecked`] instead.
    pub fn new(matrix: DMatrix<C64>, spec: FockSpec) -> Result<Self> {
        if matrix.nrows() != spec.dim() || matrix.ncols() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: matrix.nrows(),
            });
        }
        let herm_dev = hermiticity_deviation(&matrix);
        if herm_dev > HERMITICITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "hermiticity deviation {herm_dev:e} exceeds {HERMITICITY_TOL:e}"
            )));
        }
        let tr = trace(&matrix);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "trace {tr} deviates from 1 beyond {TRACE_TOL:e}"
            )));
        }
        let min_ev = min_eigenvalue(&matrix);
        if min_ev < -POSITIVITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "minimum eigenvalue {min_ev:e} below -{POSITIVITY_TOL:e}"
            )));
        }
        Ok(Self { matrix, spec })
    }

    /// Constructor for matrices that satisfy the invariants by construction.
    pub(crate) fn from_parts_unchecked(matrix: DMatrix<C64>, spec: FockSpec) -> Self {
        Self { matrix, spec }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn spec(&self) -> FockSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// tr(ρ A).
    pub fn expectation(&self, op: &Operator) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.matrix.nrows() {
            for k in 0..self.matrix.ncols() {
                acc += self.matrix[(i, k)] * op.matrix()[(k, i)];
            }
        }
        acc
    }

    /// Eigenvalues of the Hermitian part, unsorted.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Half the trace norm of the difference of two states.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.matrix - &other.matrix;
        0.5 * trace_norm(&diff)
    }
}

/// Max elementwise deviation of a matrix from its adjoint.
pub fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn trace(m: &DMatrix<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..m.nrows() {
        acc += m[(i, i)];
    }
    acc
}

/// Trace norm Σ|λ_k| of a Hermitian matrix.
pub fn trace_norm(m: &DMatrix<C64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|x| x.abs())
        .sum()
}

fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Annihilation operator a ⊗ 1 on the joint space: ⟨n−1|a|n⟩ = √n.
pub fn make_annihilation(spec: FockSpec) -> Operator {
    let d = spec.dim();
    let mut m = DMatrix::<C64>::zeros(d, d);
    for n in 1..=spec.n_max() {
        let amp = C64::new((n as f64).sqrt(), 0.0);
        for s in 0..2 {
            m[(spec.joint_index(n - 1, s), spec.joint_index(n, s))] = amp;
        }
    }
    Operator { matrix: m, spec }
}

/// Atomic lowering operator 1 ⊗ σ with σ = |g⟩⟨e|.
pub fn make_sigma(spec: FockSpec) -> Operator {
    let d = spec.dim();
    let mut m = DMatrix::<C64>::zeros(d, d);
    for n in 0..=spec.n_max() {
        m[(spec.joint_index(n, 0), spec.joint_index(n, 1))] = C64::new(1.0, 0.0);
    }
    Operator { matrix: m, spec }
}

/// Field-factor coherent state with coefficients c_n = e^{−|α|²/2} αⁿ/√n!.
///
/// Fails with [`Error::Truncation`] when the retained probability falls short
/// of 1 by more than [`COHERENT_NORM_TOL`]; the returned state is renormalized.
pub fn coherent_state(amplitude: C64, spec: FockSpec) -> Result<FieldState> {
    let mut c = DVector::<C64>::zeros(spec.field_dim());
    let log_prefactor = -0.5 * amplitude.norm_sqr();
    c[0] = C64::new(log_prefactor.exp(), 0.0);
    for n in 1..spec.field_dim() {
        c[n] = c[n - 1] * amplitude / (n as f64).sqrt();
    }
    let norm_sq: f64 = c.iter().map(|x| x.norm_sqr()).sum();
    let deficit = 1.0 - norm_sq;
    if deficit > COHERENT_NORM_TOL {
        return Err(Error::Truncation {
            amplitude_abs: amplitude.norm(),
            norm_deficit: deficit,
            tol: COHERENT_NORM_TOL,
            n_max: spec.n_max(),
        });
    }
    let inv = C64::new(1.0 / norm_sq.sqrt(), 0.0);
    Ok(FieldState {
        coefficients: c * inv,
        spec,
    })
}

/// Branch label for the dressed coherent-atom product states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DressedSign {
    Plus,
    Minus,
}

/// Dressed product states on the joint space:
/// Plus  → |α⟩ (|g⟩ + i|e⟩)/√2,
/// Minus → |α*⟩ (|g⟩ − i|e⟩)/√2.
pub fn dressed_state(sign: DressedSign, amplitude: C64, spec: FockSpec) -> Result<PureState> {
    let (field_amp, atom) = match sign {
        DressedSign::Plus => (amplitude, [C64::new(1.0, 0.0), C64::new(0.0, 1.0)]),
        DressedSign::Minus => (amplitude.conj(), [C64::new(1.0, 0.0), C64::new(0.0, -1.0)]),
    };
    let field = coherent_state(field_amp, spec)?;
    let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
    let mut v = DVector::<C64>::zeros(spec.dim());
    for n in 0..spec.field_dim() {
        for s in 0..2 {
            v[spec.joint_index(n, s)] = field.coefficients()[n] * atom[s] * inv_sqrt2;
        }
    }
    PureState::new(v, spec)
}

/// Von Neumann entropy H(ρ) = −tr(ρ ln ρ) in nats, from the eigenvalue
/// spectrum. Eigenvalues below [`EIGENVALUE_FLOOR`] contribute zero.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_from_eigenvalues(rho.eigenvalues().iter().copied())
}

/// Shannon entropy −Σ λ ln λ of a spectrum, with the 0 ln 0 = 0 convention.
pub fn entropy_from_eigenvalues(eigenvalues: impl IntoIterator<Item = f64>) -> f64 {
    let h: f64 = eigenvalues
        .into_iter()
        .filter(|&l| l > EIGENVALUE_FLOOR)
        .map(|l| -l * l.ln())
        .sum();
    h.max(0.0)
}

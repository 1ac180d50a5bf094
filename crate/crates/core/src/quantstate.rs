//! Density matrices and two-qubit entanglement / nonlocality measures.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::matkernel::{herm_eig, kron, paulis, svd, ComplexMatrix, LinalgError, C64, ZERO};

/// Tolerance on Hermiticity, trace and eigenvalue positivity.
pub const STATE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("unknown Bell state label {0:?}")]
    UnknownLabel(String),
    #[error("dimension mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Hermitian, positive semi-definite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates and wraps `mat`. The stored matrix is symmetrized so later
    /// eigensolves never see round-off asymmetry.
    pub fn new(mat: ComplexMatrix) -> Result<Self, StateError> {
        if !mat.is_square() {
            return Err(StateError::InvalidState(format!("{}x{} is not square", mat.rows(), mat.cols())));
        }
        let dev = mat.hermitian_deviation();
        if dev > STATE_TOL {
            return Err(StateError::InvalidState(format!("not Hermitian (deviation {dev:e})")));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(StateError::InvalidState(format!("trace {tr} != 1")));
        }
        let mat = mat.hermitian_part();
        let eig = herm_eig(&mat, STATE_TOL)?;
        let min = *eig.values.last().expect("non-empty spectrum");
        if min < -STATE_TOL {
            return Err(StateError::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { mat })
    }

    /// Normalizes a Hermitian PSD matrix by its trace before validating.
    pub fn from_unnormalized(mat: ComplexMatrix) -> Result<Self, StateError> {
        let tr = mat.trace().re;
        if !(tr > 0.0) {
            return Err(StateError::InvalidState(format!("trace {tr} is not positive")));
        }
        Self::new(mat.scale_real(1.0 / tr))
    }

    /// `|psi><psi|` for a (not necessarily normalized) state vector.
    pub fn pure(psi: &[C64]) -> Result<Self, StateError> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(StateError::InvalidState("zero or non-finite state vector".into()));
        }
        let s = 1.0 / norm2.sqrt();
        let v: Vec<C64> = psi.iter().map(|z| z * s).collect();
        Ok(Self { mat: ComplexMatrix::outer(&v, &v).hermitian_part() })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { mat: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    /// Tensor product `self ⊗ other`.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix { mat: kron(&self.mat, &other.mat).hermitian_part() }
    }

    /// `Tr(rho O)`.
    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        let n = self.dim();
        let mut acc = ZERO;
        for r in 0..n {
            for c in 0..n {
                acc += self.mat[(r, c)] * op[(c, r)];
            }
        }
        acc
    }

    /// `U rho U^dag` for a unitary `U`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<DensityMatrix, StateError> {
        let out = &(u * &self.mat) * &u.adjoint();
        DensityMatrix::new(out)
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        (&self.mat - &other.mat).frobenius_norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl FromStr for BellLabel {
    type Err = StateError;
    fn from_str(s: &str) -> Result<Self, StateError> {
        match s {
            "phi+" | "Phi+" | "PhiPlus" | "Φ⁺" | "Φ+" => Ok(Self::PhiPlus),
            "phi-" | "Phi-" | "PhiMinus" | "Φ⁻" | "Φ-" => Ok(Self::PhiMinus),
            "psi+" | "Psi+" | "PsiPlus" | "Ψ⁺" | "Ψ+" => Ok(Self::PsiPlus),
            "psi-" | "Psi-" | "PsiMinus" | "Ψ⁻" | "Ψ-" => Ok(Self::PsiMinus),
            other => Err(StateError::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::PhiPlus => "phi+",
            Self::PhiMinus => "phi-",
            Self::PsiPlus => "psi+",
            Self::PsiMinus => "psi-",
        };
        f.write_str(s)
    }
}

pub fn bell_vector(label: BellLabel) -> [C64; 4] {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    match label {
        BellLabel::PhiPlus => [h, ZERO, ZERO, h],
        BellLabel::PhiMinus => [h, ZERO, ZERO, -h],
        BellLabel::PsiPlus => [ZERO, h, h, ZERO],
        BellLabel::PsiMinus => [ZERO, h, -h, ZERO],
    }
}

pub fn bell_state(label: BellLabel) -> DensityMatrix {
    DensityMatrix::pure(&bell_vector(label)).expect("Bell vectors are normalized")
}

/// `p |Phi+><Phi+| + (1 - p) I/4`; valid for p in [-1/3, 1].
pub fn werner(p: f64) -> Result<DensityMatrix, StateError> {
    if !(-1.0 / 3.0 - STATE_TOL..=1.0 + STATE_TOL).contains(&p) {
        return Err(StateError::InvalidState(format!("Werner weight {p} outside [-1/3, 1]")));
    }
    let phi = bell_state(BellLabel::PhiPlus);
    let mixed = DensityMatrix::maximally_mixed(4);
    DensityMatrix::new(&phi.mat.scale_real(p) + &mixed.mat.scale_real(1.0 - p))
}

/// Werner weight whose concurrence equals `c`: p = (2c + 1)/3.
pub fn werner_with_concurrence(c: f64) -> Result<DensityMatrix, StateError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(StateError::InvalidState(format!("target concurrence {c} outside [0, 1]")));
    }
    werner((2.0 * c + 1.0) / 3.0)
}

fn require_two_qubit(rho: &DensityMatrix) -> Result<(), StateError> {
    if rho.dim() != 4 {
        return Err(StateError::ShapeMismatch(rho.dim(), 4));
    }
    Ok(())
}

/// Eigenvalues at or below this are treated as exact zeros when factoring a
/// state, so eigensolver noise (~1e-17) is not amplified by the square root.
const RANK_CUTOFF: f64 = 1e-14;

/// `W` with `rho = W W^dag`, columns `sqrt(p_k) v_k` over the numerical support.
fn psd_factor(rho: &DensityMatrix) -> Result<ComplexMatrix, StateError> {
    let eig = herm_eig(&rho.mat, STATE_TOL)?;
    let n = rho.dim();
    let rank = eig.values.iter().filter(|&&p| p > RANK_CUTOFF).count().max(1);
    Ok(ComplexMatrix::from_fn(n, rank, |r, c| eig.vectors[(r, c)] * eig.values[c].max(0.0).sqrt()))
}

/// Wootters concurrence. The square roots of the eigenvalues of
/// `rho (Y⊗Y) rho* (Y⊗Y)` are the singular values of `W^T (Y⊗Y) W`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, StateError> {
    require_two_qubit(rho)?;
    let [_, y, _] = paulis();
    let yy = kron(&y, &y);
    let w = psd_factor(rho)?;
    let tau = &(&w.transpose() * &yy) * &w;
    let l = svd(&tau)?.singular;
    let c = l[0] - l[1..].iter().sum::<f64>();
    Ok(c.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FidelityConvention {
    /// `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`
    #[default]
    Squared,
    /// `Tr sqrt(sqrt(rho) sigma sqrt(rho))`
    Root,
}

pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, StateError> {
    fidelity_with(rho, sigma, FidelityConvention::Squared)
}

pub fn fidelity_with(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    convention: FidelityConvention,
) -> Result<f64, StateError> {
    if rho.dim() != sigma.dim() {
        return Err(StateError::ShapeMismatch(rho.dim(), sigma.dim()));
    }
    // root fidelity is the trace norm of W_rho^dag W_sigma
    let cross = &psd_factor(rho)?.adjoint() * &psd_factor(sigma)?;
    let root: f64 = svd(&cross)?.singular.iter().sum::<f64>().min(1.0);
    Ok(match convention {
        FidelityConvention::Squared => root * root,
        FidelityConvention::Root => root,
    })
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.mat.as_slice().iter().map(|z| z.norm_sqr()).sum()
}

/// `T_ij = Tr[rho (sigma_i ⊗ sigma_j)]`, i, j over (X, Y, Z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliCorrelation {
    pub tmatrix: [[f64; 3]; 3],
}

pub fn pauli_correlations(rho: &DensityMatrix) -> Result<PauliCorrelation, StateError> {
    require_two_qubit(rho)?;
    let p = paulis();
    let mut t = [[0.0; 3]; 3];
    for (i, si) in p.iter().enumerate() {
        for (j, sj) in p.iter().enumerate() {
            t[i][j] = rho.expectation(&kron(si, sj)).re;
        }
    }
    Ok(PauliCorrelation { tmatrix: t })
}

/// Largest CHSH value reachable with projective measurements:
/// `2 sqrt(m1 + m2)`, m1 >= m2 the top eigenvalues of `T^T T`.
pub fn chsh_max(rho: &DensityMatrix) -> Result<f64, StateError> {
    let t = pauli_correlations(rho)?.tmatrix;
    let ttt = ComplexMatrix::from_fn(3, 3, |r, c| {
        C64::new((0..3).map(|k| t[k][r] * t[k][c]).sum(), 0.0)
    });
    let eig = herm_eig(&ttt, 1e-12)?;
    Ok(2.0 * (eig.values[0] + eig.values[1]).max(0.0).sqrt())
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let g = ginibre(rng, n, n);
    let q = nalgebra::DMatrix::from_row_slice(n, n, g.as_slice()).qr();
    let (q_mat, r_mat) = (q.q(), q.r());
    // fix the phases of R's diagonal so the distribution is Haar
    ComplexMatrix::from_fn(n, n, |row, col| {
        let d = r_mat[(col, col)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        q_mat[(row, col)] * phase
    })
}

pub fn ginibre(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

/// Random density matrix `G G^dag / Tr` with `G` a dim x rank Ginibre matrix.
pub fn random_density(rng: &mut impl Rng, dim: usize, rank: usize) -> DensityMatrix {
    let g = ginibre(rng, dim, rank.max(1));
    DensityMatrix::from_unnormalized(&g * &g.adjoint()).expect("Ginibre states are valid")
}

pub fn random_pure(rng: &mut impl Rng, dim: usize) -> (Vec<C64>, DensityMatrix) {
    let g = ginibre(rng, dim, 1);
    let v = g.column(0);
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let v: Vec<C64> = v.iter().map(|z| z / norm).collect();
    let rho = DensityMatrix::pure(&v).expect("non-zero vector");
    (v, rho)
}

//! The frequency-conversion channel: Kraus operator from the drive matrix,
//! one- and two-qubit application, Choi state and its concurrence, the
//! concurrence bound for one-sided action, and Heisenberg mode evolution.
//!
//! The Kraus operator acts as `rho -> K^dag rho K`. Its matrix is built from
//! the SVD `A = U S V^dag` as `K^dag = (U sin(kt S) V^dag)^T`, so that input
//! polarization `i` is carried to output spatial mode `j` with amplitude
//! proportional to `alpha_ij`.

use thiserror::Error;

use crate::driveprep::{drive_concurrence, DriveMatrix};
use crate::matkernel::{kron, svd, ComplexMatrix, LinalgError, C64};
use crate::quantstate::{bell_state, concurrence, BellLabel, DensityMatrix, StateError};

/// Conversion probabilities at or below this are treated as zero.
pub const MIN_SUCCESS_PROB: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("interaction strength kt = {0} must be finite and non-negative")]
    InvalidStrength(f64),
    #[error("conversion probability {0:e} is zero; output state undefined")]
    ZeroConversionProbability(f64),
    #[error("expected a {expected}x{expected} state, got {got}x{got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub a: DriveMatrix,
    kt: f64,
}

impl ChannelSpec {
    pub fn new(a: DriveMatrix, kt: f64) -> Result<Self, ChannelError> {
        if !kt.is_finite() || kt < 0.0 {
            return Err(ChannelError::InvalidStrength(kt));
        }
        Ok(Self { a, kt })
    }

    pub fn kt(&self) -> f64 {
        self.kt
    }
}

/// Kraus operator `K`; the channel applies `K^dag`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausMatrix {
    pub k: ComplexMatrix,
}

impl KrausMatrix {
    pub fn k_dag(&self) -> ComplexMatrix {
        self.k.adjoint()
    }
}

pub fn kraus_from_drive(spec: &ChannelSpec) -> Result<KrausMatrix, ChannelError> {
    let s = svd(spec.a.matrix())?;
    let sin: Vec<f64> = s.singular.iter().map(|&x| (spec.kt * x).sin()).collect();
    let core = &(&s.u * &ComplexMatrix::diag_real(&sin)) * &s.v.adjoint();
    let k_dag = core.transpose();
    Ok(KrausMatrix { k: k_dag.adjoint() })
}

/// Singular values of the Kraus operator, `|sin(kt sigma_pm)|`, descending in sigma.
pub fn kraus_singulars(spec: &ChannelSpec) -> Result<[f64; 2], ChannelError> {
    let s = svd(spec.a.matrix())?.singular;
    Ok([(spec.kt * s[0]).sin().abs(), (spec.kt * s[1]).sin().abs()])
}

/// Blocks of the Heisenberg propagator for the annihilation-operator column
/// `(a_x, a_y, b_10, b_01)`: `d/dt (a; b) = kappa [[0, A], [-A^dag, 0]] (a; b)`.
/// The creation-operator row vector evolves with the adjoint of this matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTransfer {
    pub caa: ComplexMatrix,
    pub cab: ComplexMatrix,
    pub cba: ComplexMatrix,
    pub cbb: ComplexMatrix,
}

impl ModeTransfer {
    pub fn assembled(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(4, 4, |r, c| {
            let block = match (r < 2, c < 2) {
                (true, true) => &self.caa,
                (true, false) => &self.cab,
                (false, true) => &self.cba,
                (false, false) => &self.cbb,
            };
            block[(r % 2, c % 2)]
        })
    }
}

pub fn mode_transfer(spec: &ChannelSpec) -> Result<ModeTransfer, ChannelError> {
    let s = svd(spec.a.matrix())?;
    let kt = spec.kt;
    let cos = ComplexMatrix::diag_real(&s.singular.iter().map(|&x| (kt * x).cos()).collect::<Vec<_>>());
    let sin = ComplexMatrix::diag_real(&s.singular.iter().map(|&x| (kt * x).sin()).collect::<Vec<_>>());
    let (u, v) = (&s.u, &s.v);
    let (ud, vd) = (u.adjoint(), v.adjoint());
    Ok(ModeTransfer {
        caa: &(u * &cos) * &ud,
        cab: &(u * &sin) * &vd,
        cba: (&(v * &sin) * &ud).scale_real(-1.0),
        cbb: &(v * &cos) * &vd,
    })
}

/// Generator `[[0, A], [-A^dag, 0]]` of the column-vector mode equations.
pub fn mode_generator(a: &DriveMatrix) -> ComplexMatrix {
    let m = a.matrix();
    let md = m.adjoint();
    ComplexMatrix::from_fn(4, 4, |r, c| match (r < 2, c < 2) {
        (true, false) => m[(r, c - 2)],
        (false, true) => -md[(r - 2, c)],
        _ => C64::new(0.0, 0.0),
    })
}

fn require_dim(rho: &DensityMatrix, expected: usize) -> Result<(), ChannelError> {
    if rho.dim() != expected {
        return Err(ChannelError::ShapeMismatch { expected, got: rho.dim() });
    }
    Ok(())
}

fn filter(rho: &ComplexMatrix, op: &ComplexMatrix) -> Result<(DensityMatrix, f64), ChannelError> {
    let out = (&(op * rho) * &op.adjoint()).hermitian_part();
    let p = out.trace().re;
    if !(p > MIN_SUCCESS_PROB) {
        return Err(ChannelError::ZeroConversionProbability(p));
    }
    Ok((DensityMatrix::new(out.scale_real(1.0 / p))?, p))
}

/// `K^dag rho K / Tr(K^dag rho K)` and the conversion probability.
pub fn apply_channel(rho_in: &DensityMatrix, spec: &ChannelSpec) -> Result<(DensityMatrix, f64), ChannelError> {
    require_dim(rho_in, 2)?;
    let k = kraus_from_drive(spec)?;
    filter(rho_in.matrix(), &k.k_dag())
}

/// Channel on the second qubit of a two-qubit state.
pub fn one_sided_apply(rho0: &DensityMatrix, spec: &ChannelSpec) -> Result<(DensityMatrix, f64), ChannelError> {
    require_dim(rho0, 4)?;
    let k = kraus_from_drive(spec)?;
    let op = kron(&ComplexMatrix::identity(2), &k.k_dag());
    filter(rho0.matrix(), &op)
}

/// Unnormalized output `(I ⊗ K^dag) rho0 (I ⊗ K)`.
pub fn one_sided_unnormalized(rho0: &DensityMatrix, spec: &ChannelSpec) -> Result<ComplexMatrix, ChannelError> {
    require_dim(rho0, 4)?;
    let k = kraus_from_drive(spec)?;
    let op = kron(&ComplexMatrix::identity(2), &k.k_dag());
    Ok((&(&op * rho0.matrix()) * &op.adjoint()).hermitian_part())
}

pub fn choi_state(spec: &ChannelSpec) -> Result<DensityMatrix, ChannelError> {
    Ok(one_sided_apply(&bell_state(BellLabel::PhiPlus), spec)?.0)
}

/// `2 |sin(s+ kt) sin(s- kt)| / (sin^2(s+ kt) + sin^2(s- kt))` with
/// `s± = sqrt((1 ± sqrt(1 - C_D^2)) / 2)`.
pub fn choi_concurrence_closed(spec: &ChannelSpec) -> Result<f64, ChannelError> {
    let cd = drive_concurrence(&spec.a);
    let root = (1.0 - cd * cd).max(0.0).sqrt();
    let sp = ((1.0 + root) / 2.0).sqrt();
    let sm = ((1.0 - root) / 2.0).max(0.0).sqrt();
    let (a, b) = ((sp * spec.kt).sin(), (sm * spec.kt).sin());
    let denom = a * a + b * b;
    if !(denom / 2.0 > MIN_SUCCESS_PROB) {
        return Err(ChannelError::ZeroConversionProbability(denom / 2.0));
    }
    Ok((2.0 * (a * b).abs() / denom).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KonradReport {
    pub c_out: f64,
    pub bound: f64,
    pub holds: bool,
}

pub const KONRAD_TOL: f64 = 1e-9;

/// Compares the output concurrence of one-sided action with
/// `C(choi) * C(rho0)`.
pub fn konrad_check(rho0: &DensityMatrix, spec: &ChannelSpec) -> Result<KonradReport, ChannelError> {
    let (out, _) = one_sided_apply(rho0, spec)?;
    let c_out = concurrence(&out)?;
    let bound = choi_concurrence_closed(spec)? * concurrence(rho0)?;
    Ok(KonradReport { c_out, bound, holds: c_out <= bound + KONRAD_TOL })
}

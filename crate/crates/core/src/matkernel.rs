//! Dense complex linear algebra for the small matrices of the qubit algebra
//! (2x2, 4x4) and the medium-sized spectral grids (a few hundred points).
//!
//! Eigenvalues and singular values are always returned in descending order.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Above this dimension the Jacobi sweeps are replaced by nalgebra's
/// tridiagonal QR, which scales far better.
const JACOBI_MAX_DIM: usize = 16;
const JACOBI_MAX_SWEEPS: usize = 100;
const SVD_MAX_ITER: usize = 10_000;
/// Products with more multiply-adds than this go through nalgebra's blocked gemm.
const BLAS_LIKE_THRESHOLD: usize = 1 << 18;

/// Eigenvalues in `[-PSD_CLIP, 0)` are treated as zero in [`func_psd`].
pub const PSD_CLIP: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max |H - H^dag| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("iteration budget exhausted in {0}")]
    NoConvergence(&'static str),
    #[error("negative eigenvalue {value:e} below PSD tolerance")]
    NegativeEigenvalue { value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input; intended for literals.
    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::from_vec(n_rows, n_cols, data).expect("invalid matrix literal")
    }

    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (k, &v) in values.iter().enumerate() {
            m[(k, k)] = C64::new(v, 0.0);
        }
        m
    }

    /// Outer product `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
    }

    /// Column vector as an n x 1 matrix.
    pub fn column_vector(v: &[C64]) -> Self {
        Self::from_fn(v.len(), 1, |r, _| v[r])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|k| self[(k, k)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev = 0.0_f64;
        for r in 0..n {
            for c in r..n {
                dev = dev.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `(A + A^dag) / 2`; used to strip round-off asymmetry.
    pub fn hermitian_part(&self) -> Self {
        let adj = self.adjoint();
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + adj[(r, c)]) * 0.5)
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "({}x{}) * ({}x{})",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        if self.rows * self.cols * rhs.cols > BLAS_LIKE_THRESHOLD {
            let prod = self.to_nalgebra() * rhs.to_nalgebra();
            return Ok(Self::from_nalgebra(&prod));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let lhs_row = self.row(r);
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `<u| M |v>`.
    pub fn sandwich(&self, u: &[C64], v: &[C64]) -> C64 {
        let mv = self.mul_vec(v);
        u.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }

    /// Determinant of a 2x2 matrix.
    pub fn det2(&self) -> C64 {
        assert!(self.rows == 2 && self.cols == 2, "det2 needs a 2x2 matrix");
        self[(0, 0)] * self[(1, 1)] - self[(0, 1)] * self[(1, 0)]
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix sum shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix difference shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Spectral decomposition `H = V diag(values) V^dag`.
#[derive(Debug, Clone)]
pub struct HermEig {
    /// Descending.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: ComplexMatrix,
}

impl HermEig {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = ComplexMatrix::diag_real(&self.values);
        &(&self.vectors * &d) * &self.vectors.adjoint()
    }
}

/// `M = U diag(singular) V^dag`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    /// Descending, non-negative.
    pub singular: Vec<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.singular.len();
        let s = ComplexMatrix::from_fn(self.u.cols(), self.v.cols(), |r, c| {
            if r == c && r < k {
                C64::new(self.singular[r], 0.0)
            } else {
                ZERO
            }
        });
        &(&self.u * &s) * &self.v.adjoint()
    }
}

/// Eigendecomposition of a Hermitian matrix.
pub fn herm_eig(h: &ComplexMatrix, tol: f64) -> Result<HermEig, LinalgError> {
    if !h.is_square() {
        return Err(LinalgError::ShapeMismatch(format!("{}x{} is not square", h.rows, h.cols)));
    }
    let deviation = h.hermitian_deviation();
    if deviation > tol {
        return Err(LinalgError::NotHermitian { deviation });
    }
    let h = h.hermitian_part();
    let (values, vectors) = if h.rows <= JACOBI_MAX_DIM { jacobi_eig(&h)? } else { qr_eig(&h)? };
    Ok(sorted_descending(values, vectors))
}

fn sorted_descending(values: Vec<f64>, vectors: ComplexMatrix) -> HermEig {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let n = vectors.rows;
    let sorted_vecs = ComplexMatrix::from_fn(n, order.len(), |r, c| vectors[(r, order[c])]);
    HermEig { values: order.iter().map(|&k| values[k]).collect(), vectors: sorted_vecs }
}

/// Cyclic complex Jacobi: each rotation zeroes one off-diagonal pair after
/// rephasing it to a real value.
fn jacobi_eig(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), LinalgError> {
    let n = h.rows;
    let mut a = h.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = h.frobenius_norm().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            let values = (0..n).map(|k| a[(k, k)].re).collect();
            return Ok((values, v));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = 0.5 * (2.0 * mag).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                // Columns p, q of the rotation G: G_pp = c, G_qp = -s conj(phase),
                // G_pq = s phase, G_qq = c.
                let g_pp = C64::new(c, 0.0);
                let g_qp = -phase.conj() * s;
                let g_pq = phase * s;
                let g_qq = C64::new(c, 0.0);
                // A <- A G
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                // A <- G^dag A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }
    Err(LinalgError::NoConvergence("Jacobi eigensolver"))
}

fn qr_eig(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), LinalgError> {
    let m = h.to_nalgebra();
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(LinalgError::NoConvergence("symmetric QR eigensolver"))?;
    Ok((eig.eigenvalues.iter().copied().collect(), ComplexMatrix::from_nalgebra(&eig.eigenvectors)))
}

/// Thin singular-value decomposition; `u` is rows x k, `v` is cols x k with
/// k = min(rows, cols). For square input both factors are unitary.
pub fn svd(m: &ComplexMatrix) -> Result<Svd, LinalgError> {
    if m.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let nm = m.to_nalgebra();
    let dec = nalgebra::SVD::try_new(nm, true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(LinalgError::NoConvergence("SVD"))?;
    let u = dec.u.ok_or(LinalgError::NoConvergence("SVD left vectors"))?;
    let v_t = dec.v_t.ok_or(LinalgError::NoConvergence("SVD right vectors"))?;
    let values: Vec<f64> = dec.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let k = order.len();
    let u_sorted = ComplexMatrix::from_fn(m.rows, k, |r, c| u[(r, order[c])]);
    // v_t rows are v^dag rows; v column c = conj(v_t row c).
    let v_sorted = ComplexMatrix::from_fn(m.cols, k, |r, c| v_t[(order[c], r)].conj());
    Ok(Svd { u: u_sorted, singular: order.iter().map(|&i| values[i]).collect(), v: v_sorted })
}

/// Applies a scalar function to a Hermitian positive semi-definite matrix
/// through its spectrum.
pub fn func_psd(h: &ComplexMatrix, f: impl Fn(f64) -> f64) -> Result<ComplexMatrix, LinalgError> {
    let eig = herm_eig(h, PSD_CLIP)?;
    if let Some(&min) = eig.values.last() {
        if min < -PSD_CLIP {
            return Err(LinalgError::NegativeEigenvalue { value: min });
        }
    }
    let mapped: Vec<f64> = eig.values.iter().map(|&l| f(l.max(0.0))).collect();
    Ok(HermEig { values: mapped, vectors: eig.vectors }.reconstruct())
}

/// Principal square root of a PSD matrix.
pub fn sqrt_psd(h: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    func_psd(h, f64::sqrt)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.rows * b.rows, a.cols * b.cols, |r, c| {
        a[(r / b.rows, c / b.cols)] * b[(r % b.rows, c % b.cols)]
    })
}

/// Which qubit of a two-qubit register to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Reduces a 4x4 two-qubit operator to the kept qubit.
pub fn partial_trace(rho: &ComplexMatrix, keep: Subsystem) -> Result<ComplexMatrix, LinalgError> {
    if rho.rows != 4 || rho.cols != 4 {
        return Err(LinalgError::ShapeMismatch(format!(
            "partial trace needs 4x4, got {}x{}",
            rho.rows, rho.cols
        )));
    }
    let out = ComplexMatrix::from_fn(2, 2, |r, c| match keep {
        Subsystem::First => (0..2).map(|k| rho[(2 * r + k, 2 * c + k)]).sum(),
        Subsystem::Second => (0..2).map(|k| rho[(2 * k + r, 2 * k + c)]).sum(),
    });
    Ok(out)
}

/// Pauli matrices `[X, Y, Z]`.
pub fn paulis() -> [ComplexMatrix; 3] {
    [
        ComplexMatrix::from_rows(&[[ZERO, ONE], [ONE, ZERO]]),
        ComplexMatrix::from_rows(&[[ZERO, -I], [I, ZERO]]),
        ComplexMatrix::from_rows(&[[ONE, ZERO], [ZERO, -ONE]]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        random_matrix(rng, n, n).hermitian_part()
    }

    fn random_psd(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        let g = random_matrix(rng, n, n);
        &g * &g.adjoint()
    }

    fn assert_unitary(u: &ComplexMatrix, tol: f64) {
        let p = &u.adjoint() * u;
        assert!(p.max_abs_diff(&ComplexMatrix::identity(u.cols())) < tol, "not unitary: {u:?}");
    }

    #[test]
    fn eig_identity_and_pauli_z() {
        let e = herm_eig(&ComplexMatrix::identity(2), 1e-12).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert_unitary(&e.vectors, 1e-12);

        let z = ComplexMatrix::diag_real(&[1.0, -1.0]);
        let e = herm_eig(&z, 1e-12).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15 && (e.values[1] + 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((e.vectors[(1, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(herm_eig(&m, 1e-12), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn eig_reconstructs_random_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let h = random_hermitian(&mut rng, 4);
            let e = herm_eig(&h, 1e-12).unwrap();
            assert!(e.reconstruct().max_abs_diff(&h) < 1e-12 * h.frobenius_norm().max(1.0));
            assert_unitary(&e.vectors, 1e-12);
            for k in 0..4 {
                let v = e.vectors.column(k);
                let hv = h.mul_vec(&v);
                for (a, b) in hv.iter().zip(&v) {
                    assert!((a - b * e.values[k]).norm() < 1e-12 * h.frobenius_norm());
                }
            }
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn jacobi_and_qr_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 12);
        let (jv, _) = jacobi_eig(&h).unwrap();
        let (qv, _) = qr_eig(&h).unwrap();
        let mut jv = jv;
        let mut qv = qv;
        jv.sort_by(f64::total_cmp);
        qv.sort_by(f64::total_cmp);
        for (a, b) in jv.iter().zip(&qv) {
            assert!((a - b).abs() < 1e-12);
        }
        let big = random_hermitian(&mut rng, 40);
        let e = herm_eig(&big, 1e-12).unwrap();
        assert!(e.reconstruct().max_abs_diff(&big) < 1e-11 * big.frobenius_norm());
    }

    #[test]
    fn svd_basic_cases() {
        let s = svd(&ComplexMatrix::diag_real(&[3.0, 0.0])).unwrap();
        assert!((s.singular[0] - 3.0).abs() < 1e-15 && s.singular[1].abs() < 1e-15);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = svd(&ComplexMatrix::identity(2).scale_real(h)).unwrap();
        assert!((s.singular[0] - h).abs() < 1e-15 && (s.singular[1] - h).abs() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 4, 9] {
            let m = random_matrix(&mut rng, n, n);
            let s = svd(&m).unwrap();
            assert!((&s.reconstruct() - &m).frobenius_norm() < 1e-12 * m.frobenius_norm().max(1.0));
            assert_unitary(&s.u, 1e-12);
            assert_unitary(&s.v, 1e-12);
            assert!(s.singular.windows(2).all(|w| w[0] >= w[1]));
        }
        let rect = random_matrix(&mut rng, 5, 3);
        let s = svd(&rect).unwrap();
        assert!((&s.reconstruct() - &rect).frobenius_norm() < 1e-12 * rect.frobenius_norm());
    }

    #[test]
    fn svd_rejects_nan() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert_eq!(svd(&m).unwrap_err(), LinalgError::NonFinite);
    }

    #[test]
    fn func_psd_diagonal_and_identity() {
        let d = ComplexMatrix::diag_real(&[0.0, std::f64::consts::FRAC_PI_2]);
        let s = func_psd(&d, f64::sin).unwrap();
        assert!(s.max_abs_diff(&ComplexMatrix::diag_real(&[0.0, 1.0])) < 1e-15);
        let r = func_psd(&ComplexMatrix::identity(2), f64::sqrt).unwrap();
        assert!(r.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn func_psd_errors() {
        let neg = ComplexMatrix::diag_real(&[1.0, -1e-3]);
        assert!(matches!(func_psd(&neg, f64::sqrt), Err(LinalgError::NegativeEigenvalue { .. })));
        // tiny negativity is clipped, not rejected
        let clipped = func_psd(&ComplexMatrix::diag_real(&[1.0, -1e-12]), f64::sqrt).unwrap();
        assert_eq!(clipped[(1, 1)], ZERO);
        let asym = ComplexMatrix::from_real_rows(&[[1.0, 1.0], [0.0, 1.0]]);
        assert!(matches!(func_psd(&asym, f64::sqrt), Err(LinalgError::NotHermitian { .. })));
    }

    /// Independent route: truncated Taylor series of sin(H).
    fn taylor_sin(h: &ComplexMatrix, terms: usize) -> ComplexMatrix {
        let n = h.rows();
        let h2 = h * h;
        let mut term = h.clone();
        let mut acc = h.clone();
        for k in 1..terms {
            let denom = ((2 * k) * (2 * k + 1)) as f64;
            term = (&term * &h2).scale_real(-1.0 / denom);
            acc = &acc + &term;
        }
        assert_eq!(acc.rows(), n);
        acc
    }

    #[test]
    fn func_psd_sin_matches_taylor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = random_psd(&mut rng, 4);
            let h = p.scale_real(1.0 / p.frobenius_norm());
            let via_spectrum = func_psd(&h, f64::sin).unwrap();
            let via_series = taylor_sin(&h, 12);
            assert!(via_spectrum.max_abs_diff(&via_series) < 1e-10);
        }
    }

    #[test]
    fn kron_and_partial_trace() {
        assert_eq!(kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2)), ComplexMatrix::identity(4));

        let h = 0.5;
        let phi_plus = ComplexMatrix::from_real_rows(&[
            [h, 0.0, 0.0, h],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [h, 0.0, 0.0, h],
        ]);
        let half_id = ComplexMatrix::identity(2).scale_real(0.5);
        for keep in [Subsystem::First, Subsystem::Second] {
            assert!(partial_trace(&phi_plus, keep).unwrap().max_abs_diff(&half_id) < 1e-15);
        }
        assert!(matches!(
            partial_trace(&ComplexMatrix::identity(2), Subsystem::First),
            Err(LinalgError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_psd(&mut rng, 2);
        let b = random_psd(&mut rng, 2);
        let ab = kron(&a, &b);
        let first = partial_trace(&ab, Subsystem::First).unwrap();
        assert!(first.max_abs_diff(&a.scale(b.trace())) < 1e-12);
        let second = partial_trace(&ab, Subsystem::Second).unwrap();
        assert!(second.max_abs_diff(&b.scale(a.trace())) < 1e-12);
        assert!((first.trace() - ab.trace()).norm() < 1e-12);
    }

    #[test]
    fn kron_dimensions() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(4, 5);
        let k = kron(&a, &b);
        assert_eq!((k.rows(), k.cols()), (8, 15));
    }

    fn arb_hermitian(n: usize) -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
            let data = v.into_iter().map(|(re, im)| C64::new(re, im)).collect();
            ComplexMatrix::from_vec(n, n, data).unwrap().hermitian_part()
        })
    }

    fn arb_psd(n: usize) -> impl Strategy<Value = ComplexMatrix> {
        arb_hermitian(n).prop_map(|h| &h * &h)
    }

    proptest! {
        #[test]
        fn prop_eig_reconstruction(h in arb_hermitian(4)) {
            let e = herm_eig(&h, 1e-12).unwrap();
            let norm = h.frobenius_norm();
            prop_assume!(norm > 1e-6);
            prop_assert!((&e.reconstruct() - &h).frobenius_norm() / norm < 1e-11);
        }

        #[test]
        fn prop_commuting_functions(h in arb_psd(4)) {
            let f = func_psd(&h, f64::sin).unwrap();
            let g = func_psd(&h, f64::cos).unwrap();
            let fg = func_psd(&h, |x| x.sin() * x.cos()).unwrap();
            prop_assert!((&f * &g).max_abs_diff(&fg) < 1e-10);
        }

        #[test]
        fn prop_unitary_singulars(h in arb_hermitian(3)) {
            // exp(iH) built spectrally is unitary
            let e = herm_eig(&h, 1e-12).unwrap();
            let phases = ComplexMatrix::from_fn(3, 3, |r, c| if r == c { C64::from_polar(1.0, e.values[r]) } else { ZERO });
            let u = &(&e.vectors * &phases) * &e.vectors.adjoint();
            let s = svd(&u).unwrap();
            for sv in s.singular {
                prop_assert!((sv - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_partial_trace_is_state(h in arb_psd(4)) {
            let tr = h.trace().re;
            prop_assume!(tr > 1e-6);
            let rho = h.scale_real(1.0 / tr);
            for keep in [Subsystem::First, Subsystem::Second] {
                let red = partial_trace(&rho, keep).unwrap();
                prop_assert!(red.is_hermitian(1e-10));
                prop_assert!((red.trace().re - 1.0).abs() < 1e-10);
                let e = herm_eig(&red, 1e-10).unwrap();
                prop_assert!(e.values[1] > -1e-10);
            }
        }
    }
}

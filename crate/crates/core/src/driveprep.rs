//! Classical drive field: waveplate Jones calculus, the vortex-plate
//! polarization-to-mode map, the drive matrix and its coherence matrix.
//!
//! Index conventions: row `i` of the drive matrix is polarization (x, y),
//! column `j` is spatial mode (HG10, HG01). Flattening is row-major.

use thiserror::Error;

use crate::matkernel::{ComplexMatrix, C64, I, ONE, ZERO};
use crate::quantstate::{ginibre, DensityMatrix};

pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriveError {
    #[error("amplitudes are not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("drive matrix must be 2x2, got {0}x{1}")]
    ShapeMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub ex: C64,
    pub ey: C64,
}

impl JonesVector {
    pub fn new(ex: C64, ey: C64) -> Result<Self, DriveError> {
        let norm = (ex.norm_sqr() + ey.norm_sqr()).sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(DriveError::NotNormalized(norm));
        }
        Ok(Self { ex, ey })
    }

    pub fn x() -> Self {
        Self { ex: ONE, ey: ZERO }
    }

    pub fn norm(&self) -> f64 {
        (self.ex.norm_sqr() + self.ey.norm_sqr()).sqrt()
    }

    pub fn apply(&self, jones: &ComplexMatrix) -> JonesVector {
        let v = jones.mul_vec(&[self.ex, self.ey]);
        JonesVector { ex: v[0], ey: v[1] }
    }
}

/// 2x2 drive amplitudes `alpha_ij` with unit Frobenius norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveMatrix {
    a: ComplexMatrix,
}

impl DriveMatrix {
    pub fn new(a: ComplexMatrix) -> Result<Self, DriveError> {
        if a.rows() != 2 || a.cols() != 2 {
            return Err(DriveError::ShapeMismatch(a.rows(), a.cols()));
        }
        let norm = a.frobenius_norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(DriveError::NotNormalized(norm));
        }
        Ok(Self { a })
    }

    /// Rescales any non-zero 2x2 matrix to unit Frobenius norm.
    pub fn normalized(a: ComplexMatrix) -> Result<Self, DriveError> {
        if a.rows() != 2 || a.cols() != 2 {
            return Err(DriveError::ShapeMismatch(a.rows(), a.cols()));
        }
        let norm = a.frobenius_norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(DriveError::NotNormalized(norm));
        }
        Ok(Self { a: a.scale_real(1.0 / norm) })
    }

    /// Row-major amplitudes `[a00, a01, a10, a11]`.
    pub fn from_entries(entries: [C64; 4]) -> Result<Self, DriveError> {
        Self::new(ComplexMatrix::from_rows(&[[entries[0], entries[1]], [entries[2], entries[3]]]))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.a
    }

    /// `(alpha_11, alpha_12, alpha_21, alpha_22)`.
    pub fn flattened(&self) -> [C64; 4] {
        [self.a[(0, 0)], self.a[(0, 1)], self.a[(1, 0)], self.a[(1, 1)]]
    }

    pub fn det(&self) -> C64 {
        self.a.det2()
    }
}

/// Passive rotation `[[cos, -sin], [sin, cos]]`.
pub fn rotation(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    ComplexMatrix::from_real_rows(&[[c, -s], [s, c]])
}

/// Quarter-wave plate with fast axis at `theta` from x.
pub fn qwp_jones(theta: f64) -> ComplexMatrix {
    let retarder = ComplexMatrix::from_rows(&[[ONE, ZERO], [ZERO, I]]);
    &(&rotation(theta) * &retarder) * &rotation(-theta)
}

/// Vortex-plate map: x -> (HG10 x + HG01 y)/sqrt2, y -> (HG01 x - HG10 y)/sqrt2.
pub fn vwp_transform(e: &JonesVector) -> Result<DriveMatrix, DriveError> {
    let norm = e.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(DriveError::NotNormalized(norm));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let a = ComplexMatrix::from_rows(&[[e.ex, e.ey], [-e.ey, e.ex]]).scale_real(h);
    Ok(DriveMatrix { a })
}

/// Drive matrix produced by an x-polarized beam through a QWP at `theta`
/// followed by the vortex plate.
pub fn drive_from_theta(theta: f64) -> DriveMatrix {
    let e = JonesVector::x().apply(&qwp_jones(theta));
    vwp_transform(&e).expect("unitary plate preserves normalization")
}

/// `rho_D = alpha alpha^dag` with `alpha` the row-major flattening.
pub fn coherence_matrix(a: &DriveMatrix) -> DensityMatrix {
    DensityMatrix::pure(&a.flattened()).expect("unit-norm drive")
}

/// `2 |det A|`.
pub fn drive_concurrence(a: &DriveMatrix) -> f64 {
    (2.0 * a.det().norm()).min(1.0)
}

/// Random drive matrix with i.i.d. complex Gaussian entries, normalized.
pub fn random_drive(rng: &mut impl rand::Rng) -> DriveMatrix {
    DriveMatrix::normalized(ginibre(rng, 2, 2)).expect("Gaussian matrix is non-zero")
}

/// Drive matrix with prescribed concurrence `c`: `diag(cos t, sin t)` with
/// `sin 2t = c`.
pub fn drive_with_concurrence(c: f64) -> Result<DriveMatrix, DriveError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(DriveError::NotNormalized(c));
    }
    let t = 0.5 * c.asin();
    DriveMatrix::new(ComplexMatrix::diag_real(&[t.cos(), t.sin()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantstate::{concurrence, purity};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8, PI};

    #[test]
    fn qwp_cases() {
        let q0 = qwp_jones(0.0);
        let expect = ComplexMatrix::from_rows(&[[ONE, ZERO], [ZERO, I]]);
        assert!(q0.max_abs_diff(&expect) < 1e-15);
        let e = JonesVector::x().apply(&qwp_jones(FRAC_PI_4));
        assert!((e.ex.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((e.ey.norm() - FRAC_1_SQRT_2).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let j = qwp_jones(rng.gen_range(-10.0..10.0));
            let p = &j.adjoint() * &j;
            assert!(p.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
        }
    }

    #[test]
    fn vwp_cases() {
        let a = vwp_transform(&JonesVector::x()).unwrap();
        assert!(a.matrix().max_abs_diff(&ComplexMatrix::identity(2).scale_real(FRAC_1_SQRT_2)) < 1e-15);

        let h = FRAC_1_SQRT_2;
        let circ = JonesVector::new(C64::new(h, 0.0), C64::new(0.0, h)).unwrap();
        assert!(vwp_transform(&circ).unwrap().det().norm() < 1e-15);

        let diag = JonesVector::new(C64::new(h, 0.0), C64::new(h, 0.0)).unwrap();
        let a = vwp_transform(&diag).unwrap();
        assert!((a.det() - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((drive_concurrence(&a) - 1.0).abs() < 1e-15);

        assert!(matches!(JonesVector::new(ONE, ONE), Err(DriveError::NotNormalized(_))));
        let bad = JonesVector { ex: ONE, ey: ONE };
        assert!(matches!(vwp_transform(&bad), Err(DriveError::NotNormalized(_))));
    }

    #[test]
    fn theta_cases() {
        assert!((drive_concurrence(&drive_from_theta(0.0)) - 1.0).abs() < 1e-12);
        assert!(drive_concurrence(&drive_from_theta(FRAC_PI_4)) < 1e-12);
        assert!((drive_concurrence(&drive_from_theta(FRAC_PI_8)) - FRAC_1_SQRT_2).abs() < 1e-12);
        for deg in 0..=180 {
            let t = (deg as f64).to_radians();
            let c = drive_concurrence(&drive_from_theta(t));
            assert!((c - (2.0 * t).cos().abs()).abs() < 1e-10, "{deg}");
        }
    }

    #[test]
    fn coherence_cases() {
        let a = DriveMatrix::new(ComplexMatrix::identity(2).scale_real(FRAC_1_SQRT_2)).unwrap();
        let rho = coherence_matrix(&a);
        let phi = crate::quantstate::bell_state(crate::quantstate::BellLabel::PhiPlus);
        assert!(rho.frobenius_distance(&phi) < 1e-15);
        assert_eq!(drive_concurrence(&a), 1.0);
        let rank1 = DriveMatrix::new(ComplexMatrix::diag_real(&[1.0, 0.0])).unwrap();
        assert_eq!(drive_concurrence(&rank1), 0.0);
        assert!(matches!(
            DriveMatrix::new(ComplexMatrix::identity(2)),
            Err(DriveError::NotNormalized(_))
        ));
    }

    #[test]
    fn concurrence_with_prescribed_value() {
        for c in [0.0, 0.3, 0.6, 0.919, 1.0] {
            let a = drive_with_concurrence(c).unwrap();
            assert!((drive_concurrence(&a) - c).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn prop_wootters_matches_determinant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_drive(&mut rng);
            let rho = coherence_matrix(&a);
            prop_assert!((purity(&rho) - 1.0).abs() < 1e-12);
            prop_assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
            prop_assert!((concurrence(&rho).unwrap() - drive_concurrence(&a)).abs() < 1e-10);
        }

        #[test]
        fn prop_vwp_preserves_norm(re0 in -1.0f64..1.0, im0 in -1.0f64..1.0, re1 in -1.0f64..1.0, im1 in -1.0f64..1.0) {
            let n = (re0 * re0 + im0 * im0 + re1 * re1 + im1 * im1).sqrt();
            prop_assume!(n > 1e-3);
            let e = JonesVector::new(C64::new(re0 / n, im0 / n), C64::new(re1 / n, im1 / n)).unwrap();
            let a = vwp_transform(&e).unwrap();
            prop_assert!((a.matrix().frobenius_norm() - e.norm()).abs() < 1e-12);
        }

        #[test]
        fn prop_theta_law(theta in -PI..PI) {
            let c = drive_concurrence(&drive_from_theta(theta));
            prop_assert!((c - (2.0 * theta).cos().abs()).abs() < 1e-10);
        }
    }
}

//! CHSH test between the heralding photon's polarization and the converted
//! photon's spatial mode: correlation estimator, rotated bases and the
//! hologram-angle sweep.

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::matkernel::{ComplexMatrix, C64};
use crate::quantstate::{DensityMatrix, StateError};
use crate::tomosim::{sample_rng, simulate_counts, MeasurementSetting, ProjectorSpec, TomoError};

#[derive(Debug, Error)]
pub enum BellError {
    #[error("correlation estimator needs a non-zero total count")]
    ZeroTotalCounts,
    #[error("basis is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sweep CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// `exp(i phi Y) = cos(phi) I + i sin(phi) Y = [[c, s], [-s, c]]`.
pub fn rotation_r(phi: f64) -> ComplexMatrix {
    let (s, c) = phi.sin_cos();
    ComplexMatrix::from_real_rows(&[[c, s], [-s, c]])
}

/// Two basis vectors, `|0>` and `|1>` of the measured basis.
pub type Basis = [[C64; 2]; 2];

/// `{R(phi)|0>, R(phi)|1>}`.
pub fn rotated_basis(phi: f64) -> Basis {
    let r = rotation_r(phi);
    [r.column(0).try_into().unwrap(), r.column(1).try_into().unwrap()]
}

fn check_orthonormal(b: &Basis) -> Result<(), BellError> {
    let ip = |u: &[C64; 2], v: &[C64; 2]| u[0].conj() * v[0] + u[1].conj() * v[1];
    let dev = (ip(&b[0], &b[0]).re - 1.0)
        .abs()
        .max((ip(&b[1], &b[1]).re - 1.0).abs())
        .max(ip(&b[0], &b[1]).norm());
    if dev > 1e-10 {
        return Err(BellError::NotOrthonormal(dev));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChshBases {
    pub basis_a: Basis,
    pub basis_a_prime: Basis,
    pub basis_b: Basis,
    pub basis_b_prime: Basis,
    pub phi: f64,
}

impl ChshBases {
    /// a computational, a' = R(pi/4), b = R(phi), b' = R(phi + pi/4).
    pub fn for_phi(phi: f64) -> Self {
        Self {
            basis_a: rotated_basis(0.0),
            basis_a_prime: rotated_basis(std::f64::consts::FRAC_PI_4),
            basis_b: rotated_basis(phi),
            basis_b_prime: rotated_basis(phi + std::f64::consts::FRAC_PI_4),
            phi,
        }
    }

    pub fn new(a: Basis, a_prime: Basis, b: Basis, b_prime: Basis, phi: f64) -> Result<Self, BellError> {
        for basis in [&a, &a_prime, &b, &b_prime] {
            check_orthonormal(basis)?;
        }
        Ok(Self { basis_a: a, basis_a_prime: a_prime, basis_b: b, basis_b_prime: b_prime, phi })
    }

    /// Basis pairs in polynomial order (a b), (a b'), (a' b), (a' b').
    pub fn pairs(&self) -> [(&Basis, &Basis); 4] {
        [
            (&self.basis_a, &self.basis_b),
            (&self.basis_a, &self.basis_b_prime),
            (&self.basis_a_prime, &self.basis_b),
            (&self.basis_a_prime, &self.basis_b_prime),
        ]
    }
}

/// `(N00 + N11 - N01 - N10) / total`.
pub fn correlation_e(n: &[[f64; 2]; 2]) -> Result<f64, BellError> {
    if n.iter().flatten().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(BellError::InvalidParameter(format!("counts {n:?}")));
    }
    let total = n[0][0] + n[0][1] + n[1][0] + n[1][1];
    if total <= 0.0 {
        return Err(BellError::ZeroTotalCounts);
    }
    Ok((n[0][0] + n[1][1] - n[0][1] - n[1][0]) / total)
}

/// `|E(a,b) - E(a,b') + E(a',b) + E(a',b')|`.
pub fn chsh_polynomial(e_ab: f64, e_abp: f64, e_apb: f64, e_apbp: f64) -> f64 {
    (e_ab - e_abp + e_apb + e_apbp).abs()
}

/// Outcome probabilities `<a_i b_j|rho|a_i b_j>`.
pub fn outcome_probabilities(rho: &DensityMatrix, a: &Basis, b: &Basis) -> [[f64; 2]; 2] {
    let mut p = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let v = [a[i][0] * b[j][0], a[i][0] * b[j][1], a[i][1] * b[j][0], a[i][1] * b[j][1]];
            p[i][j] = rho.matrix().sandwich(&v, &v).re.max(0.0);
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMode {
    Exact,
    /// Poisson counts with `mean_pairs` expected pairs per projection pair.
    Sampled { mean_pairs: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub phi: f64,
    pub b: f64,
    /// Poisson-propagated standard deviation of `b` in sampled mode.
    pub b_std: Option<f64>,
}

pub fn chsh_exact(rho: &DensityMatrix, bases: &ChshBases) -> Result<f64, BellError> {
    let mut e = [0.0; 4];
    for (k, (a, b)) in bases.pairs().iter().enumerate() {
        e[k] = correlation_e(&outcome_probabilities(rho, a, b))?;
    }
    Ok(chsh_polynomial(e[0], e[1], e[2], e[3]))
}

/// One sampled CHSH value from simulated counts, with the first-order error
/// `sqrt(sum (1 - E^2) / N)`.
pub fn chsh_sampled(rho: &DensityMatrix, bases: &ChshBases, mean_pairs: f64, seed: u64) -> Result<(f64, f64), BellError> {
    let mut settings = Vec::with_capacity(16);
    for (a, b) in bases.pairs() {
        for va in a {
            for vb in b {
                settings.push(MeasurementSetting {
                    proj_a: ProjectorSpec::explicit(*va)?,
                    proj_b: ProjectorSpec::explicit(*vb)?,
                });
            }
        }
    }
    let records = simulate_counts(rho, &settings, mean_pairs, seed)?;
    let mut e = [0.0; 4];
    let mut var = 0.0;
    for k in 0..4 {
        let c = |i: usize| records[4 * k + i].counts as f64;
        let n = [[c(0), c(1)], [c(2), c(3)]];
        e[k] = correlation_e(&n)?;
        let total: f64 = n.iter().flatten().sum();
        var += (1.0 - e[k] * e[k]) / total;
    }
    Ok((chsh_polynomial(e[0], e[1], e[2], e[3]), var.sqrt()))
}

/// CHSH value for every `phi` (radians). Sampled points use independent
/// streams keyed by the point index, so the output does not depend on
/// thread scheduling.
pub fn chsh_sweep(rho: &DensityMatrix, phis: &[f64], mode: SweepMode) -> Result<Vec<SweepPoint>, BellError> {
    if rho.dim() != 4 {
        return Err(BellError::State(StateError::ShapeMismatch(rho.dim(), 4)));
    }
    if let SweepMode::Sampled { mean_pairs, .. } = mode {
        if !(mean_pairs > 0.0) || !mean_pairs.is_finite() {
            return Err(BellError::InvalidParameter(format!("mean pairs {mean_pairs}")));
        }
    }
    phis.par_iter()
        .enumerate()
        .map(|(idx, &phi)| {
            let bases = ChshBases::for_phi(phi);
            match mode {
                SweepMode::Exact => Ok(SweepPoint { phi, b: chsh_exact(rho, &bases)?, b_std: None }),
                SweepMode::Sampled { mean_pairs, seed } => {
                    let point_seed = sample_rng(seed, idx as u64).next_u64();
                    let (b, std) = chsh_sampled(rho, &bases, mean_pairs, point_seed)?;
                    Ok(SweepPoint { phi, b, b_std: Some(std) })
                }
            }
        })
        .collect()
}

/// Evenly spaced angles from `start` to `stop` inclusive.
pub fn angle_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Point of largest `b`; the first one wins ties.
pub fn sweep_max(points: &[SweepPoint]) -> Option<SweepPoint> {
    points.iter().copied().fold(None, |best: Option<SweepPoint>, p| match best {
        Some(b) if b.b >= p.b => Some(b),
        _ => Some(p),
    })
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<(), BellError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phi_deg", "B", "B_std_if_sampled"])?;
    for p in points {
        let std = p.b_std.map(|s| format!("{s:e}")).unwrap_or_default();
        w.write_record([format!("{:e}", p.phi.to_degrees()), format!("{:e}", p.b), std])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::{paulis, I};
    use crate::quantstate::{bell_state, chsh_max, random_density, BellLabel};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, SQRT_2};

    fn expm_taylor(m: &ComplexMatrix) -> ComplexMatrix {
        let mut term = ComplexMatrix::identity(m.rows());
        let mut acc = term.clone();
        for k in 1..40 {
            term = (&term * m).scale_real(1.0 / k as f64);
            acc = &acc + &term;
        }
        acc
    }

    #[test]
    fn rotation_matches_exponential() {
        assert!(rotation_r(0.0).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        let [_, y, _] = paulis();
        for phi in [FRAC_PI_2, 0.3, -1.2, 2.9] {
            let oracle = expm_taylor(&y.scale(I * phi));
            assert!(rotation_r(phi).max_abs_diff(&oracle) < 1e-12);
        }
        assert!(rotation_r(FRAC_PI_2).max_abs_diff(&y.scale(I)) < 1e-15);
        let prod = &rotation_r(0.4) * &rotation_r(0.7);
        assert!(prod.max_abs_diff(&rotation_r(1.1)) < 1e-12);
        let r = rotation_r(0.77);
        assert!((&r.adjoint() * &r).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn estimator_cases() {
        assert_eq!(correlation_e(&[[50.0, 0.0], [0.0, 50.0]]).unwrap(), 1.0);
        assert_eq!(correlation_e(&[[0.0, 50.0], [50.0, 0.0]]).unwrap(), -1.0);
        assert_eq!(correlation_e(&[[7.0, 7.0], [7.0, 7.0]]).unwrap(), 0.0);
        assert!(matches!(correlation_e(&[[0.0; 2]; 2]), Err(BellError::ZeroTotalCounts)));
    }

    #[test]
    fn polynomial_cases() {
        assert_eq!(chsh_polynomial(1.0, -1.0, 1.0, 1.0), 4.0);
        let h = FRAC_1_SQRT_2;
        assert!((chsh_polynomial(h, -h, h, h) - 2.0 * SQRT_2).abs() < 1e-15);
        assert_eq!(chsh_polynomial(0.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn bases_are_orthonormal() {
        let b = ChshBases::for_phi(0.37);
        for basis in [b.basis_a, b.basis_a_prime, b.basis_b, b.basis_b_prime] {
            check_orthonormal(&basis).unwrap();
        }
        let bad = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]];
        assert!(ChshBases::new(bad, b.basis_a, b.basis_b, b.basis_b_prime, 0.0).is_err());
    }

    #[test]
    fn bell_state_sweep() {
        let phi = bell_state(BellLabel::PhiPlus);
        let grid = angle_grid(0.0, PI, 1801);
        let pts = chsh_sweep(&phi, &grid, SweepMode::Exact).unwrap();
        let best = sweep_max(&pts).unwrap();
        assert!((best.b - 2.0 * SQRT_2).abs() < 1e-9);
        assert!((best.b - chsh_max(&phi).unwrap()).abs() < 1e-9);
        assert!((best.phi.to_degrees() - 22.5).abs() < 1e-9);

        let mixed = DensityMatrix::maximally_mixed(4);
        for p in chsh_sweep(&mixed, &grid, SweepMode::Exact).unwrap() {
            assert!(p.b.abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_sweep_is_reproducible_and_converges() {
        let phi = bell_state(BellLabel::PhiPlus);
        let grid = angle_grid(0.0, PI, 19);
        let mode = SweepMode::Sampled { mean_pairs: 1e6, seed: 3 };
        let a = chsh_sweep(&phi, &grid, mode).unwrap();
        assert_eq!(a, chsh_sweep(&phi, &grid, mode).unwrap());
        let exact = chsh_sweep(&phi, &grid, SweepMode::Exact).unwrap();
        for (s, e) in a.iter().zip(&exact) {
            assert!((s.b - e.b).abs() < 0.05);
            assert!(s.b_std.unwrap() < 0.01);
        }
    }

    #[test]
    fn csv_layout() {
        let pts = [
            SweepPoint { phi: 0.5, b: 2.0, b_std: None },
            SweepPoint { phi: 1.0, b: 2.5, b_std: Some(0.1) },
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "phi_deg,B,B_std_if_sampled");
        assert!(lines[1].ends_with(','));
        assert!(lines[2].ends_with("1e-1"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_sweep_below_horodecki(seed in any::<u64>(), rank in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density(&mut rng, 4, rank);
            let bound = chsh_max(&rho).unwrap();
            let grid = angle_grid(0.0, PI, 1801);
            for p in chsh_sweep(&rho, &grid, SweepMode::Exact).unwrap() {
                prop_assert!(p.b <= bound + 1e-6);
            }
        }

        #[test]
        fn prop_period_pi(seed in any::<u64>(), phi in -PI..PI) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density(&mut rng, 4, 2);
            let b0 = chsh_exact(&rho, &ChshBases::for_phi(phi)).unwrap();
            let b1 = chsh_exact(&rho, &ChshBases::for_phi(phi + PI)).unwrap();
            prop_assert!((b0 - b1).abs() < 1e-12);
        }
    }
}

#![allow(dead_code)]

use std::path::PathBuf;

use qfc_sim::driveprep::DriveMatrix;
use qfc_sim::matkernel::{ComplexMatrix, C64};
use qfc_sim::quantstate::DensityMatrix;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

pub fn schema_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/summary.schema.json")
}

/// Right-hand side of the coupled-mode equations for the annihilation
/// operators `(a_x, a_y, b_10, b_01)`, written out term by term:
/// `da_i/dt = sum_j alpha_ij b_j`, `db_j/dt = -sum_i conj(alpha_ij) a_i`.
fn coupled_modes(alpha: &ComplexMatrix, y: &[C64; 4]) -> [C64; 4] {
    let mut d = [C64::new(0.0, 0.0); 4];
    for i in 0..2 {
        for j in 0..2 {
            d[i] += alpha[(i, j)] * y[2 + j];
            d[2 + j] -= alpha[(i, j)].conj() * y[i];
        }
    }
    d
}

/// Classical RK4 propagation of each unit initial condition from 0 to `kt`;
/// column `c` of the result is the solution starting from `e_c`.
pub fn rk4_propagator(a: &DriveMatrix, kt: f64, steps: usize) -> ComplexMatrix {
    let alpha = a.matrix();
    let h = kt / steps as f64;
    let mut out = ComplexMatrix::zeros(4, 4);
    for c in 0..4 {
        let mut y = [C64::new(0.0, 0.0); 4];
        y[c] = C64::new(1.0, 0.0);
        for _ in 0..steps {
            let axpy = |base: &[C64; 4], k: &[C64; 4], s: f64| -> [C64; 4] {
                std::array::from_fn(|i| base[i] + k[i] * s)
            };
            let k1 = coupled_modes(alpha, &y);
            let k2 = coupled_modes(alpha, &axpy(&y, &k1, h / 2.0));
            let k3 = coupled_modes(alpha, &axpy(&y, &k2, h / 2.0));
            let k4 = coupled_modes(alpha, &axpy(&y, &k3, h));
            for i in 0..4 {
                y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
            }
        }
        for r in 0..4 {
            out[(r, c)] = y[r];
        }
    }
    out
}

/// Bell-diagonal state with weights `w` (normalized here), rotated by local
/// unitaries; both single-qubit marginals stay maximally mixed.
pub fn maximally_mixed_marginal_state(w: [f64; 4], u1: &ComplexMatrix, u2: &ComplexMatrix) -> DensityMatrix {
    use qfc_sim::matkernel::kron;
    use qfc_sim::quantstate::{bell_state, BellLabel};
    let total: f64 = w.iter().sum();
    let labels = [BellLabel::PhiPlus, BellLabel::PhiMinus, BellLabel::PsiPlus, BellLabel::PsiMinus];
    let mut m = ComplexMatrix::zeros(4, 4);
    for (wk, l) in w.iter().zip(labels) {
        m = &m + &bell_state(l).matrix().scale_real(wk / total);
    }
    DensityMatrix::from_unnormalized(m).unwrap().conjugate_by(&kron(u1, u2)).unwrap()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    qfc_sim::cli::loglog_slope(xs, ys).expect("at least two positive points")
}

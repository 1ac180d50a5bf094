//! Simulated two-qubit polarization tomography: projective settings,
//! Poisson coincidence counts, maximum-likelihood reconstruction and
//! Monte-Carlo error bars.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matkernel::{herm_eig, kron, ComplexMatrix, LinalgError, C64, ONE, ZERO};
use crate::quantstate::{DensityMatrix, StateError};

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("measurement settings are not informationally complete (operator rank {rank} < 16)")]
    NotInformationallyComplete { rank: usize },
    #[error("likelihood maximization did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("invalid projector: {0}")]
    InvalidProjector(String),
    #[error("invalid count records: {0}")]
    InvalidRecords(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("metric evaluation failed: {0}")]
    Metric(String),
    #[error("count CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Polarization states used by the standard tomography sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NamedState {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl NamedState {
    pub const ALL: [NamedState; 6] = [Self::H, Self::V, Self::D, Self::A, Self::R, Self::L];

    pub fn vector(self) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (r, i) = (C64::new(h, 0.0), C64::new(0.0, h));
        match self {
            Self::H => [ONE, ZERO],
            Self::V => [ZERO, ONE],
            Self::D => [r, r],
            Self::A => [r, -r],
            Self::R => [r, i],
            Self::L => [r, -i],
        }
    }
}

impl fmt::Display for NamedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A named polarization or an explicit normalized 2-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectorSpec {
    Named(NamedState),
    Explicit([C64; 2]),
}

impl ProjectorSpec {
    pub fn explicit(v: [C64; 2]) -> Result<Self, TomoError> {
        let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(TomoError::InvalidProjector(format!("norm {norm} != 1")));
        }
        Ok(Self::Explicit(v))
    }

    pub fn vector(&self) -> [C64; 2] {
        match self {
            Self::Named(n) => n.vector(),
            Self::Explicit(v) => *v,
        }
    }
}

impl fmt::Display for ProjectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Named(n) => write!(f, "{n}"),
            Self::Explicit([a, b]) => write!(f, "{:e},{:e};{:e},{:e}", a.re, a.im, b.re, b.im),
        }
    }
}

impl FromStr for ProjectorSpec {
    type Err = TomoError;
    fn from_str(s: &str) -> Result<Self, TomoError> {
        let s = s.trim();
        let named = match s {
            "H" => Some(NamedState::H),
            "V" => Some(NamedState::V),
            "D" => Some(NamedState::D),
            "A" => Some(NamedState::A),
            "R" => Some(NamedState::R),
            "L" => Some(NamedState::L),
            _ => None,
        };
        if let Some(n) = named {
            return Ok(Self::Named(n));
        }
        let bad = || TomoError::InvalidProjector(format!("cannot parse {s:?}; expected H/V/D/A/R/L or 're,im;re,im'"));
        let (p, q) = s.split_once(';').ok_or_else(bad)?;
        let parse_c = |t: &str| -> Result<C64, TomoError> {
            let (re, im) = t.split_once(',').ok_or_else(bad)?;
            Ok(C64::new(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?))
        };
        Self::explicit([parse_c(p)?, parse_c(q)?])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    pub proj_a: ProjectorSpec,
    pub proj_b: ProjectorSpec,
}

impl MeasurementSetting {
    pub fn named(a: NamedState, b: NamedState) -> Self {
        Self { proj_a: ProjectorSpec::Named(a), proj_b: ProjectorSpec::Named(b) }
    }

    /// `|a><a| ⊗ |b><b|`.
    pub fn operator(&self) -> ComplexMatrix {
        let a = self.proj_a.vector();
        let b = self.proj_b.vector();
        kron(&ComplexMatrix::outer(&a, &a), &ComplexMatrix::outer(&b, &b))
    }

    pub fn probability(&self, rho: &DensityMatrix) -> f64 {
        let a = self.proj_a.vector();
        let b = self.proj_b.vector();
        let ab = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]];
        rho.matrix().sandwich(&ab, &ab).re.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectorSetKind {
    /// {H, V, D, R} on each qubit.
    #[serde(rename = "16")]
    Sixteen,
    /// {H, V, D, A, R, L} on each qubit.
    #[serde(rename = "36")]
    ThirtySix,
}

pub fn projector_set(kind: ProjectorSetKind) -> Vec<MeasurementSetting> {
    use NamedState::*;
    let states: &[NamedState] = match kind {
        ProjectorSetKind::Sixteen => &[H, V, D, R],
        ProjectorSetKind::ThirtySix => &NamedState::ALL,
    };
    states.iter().flat_map(|&a| states.iter().map(move |&b| MeasurementSetting::named(a, b))).collect()
}

/// Rank of the span of the setting operators in the 16-dimensional space of
/// two-qubit Hermitian operators.
pub fn operator_rank(settings: &[MeasurementSetting]) -> Result<usize, TomoError> {
    let mut frame = ComplexMatrix::zeros(16, 16);
    for s in settings {
        let v = s.operator();
        let v = v.as_slice();
        for r in 0..16 {
            for c in 0..16 {
                frame[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    let eig = herm_eig(&frame, 1e-9)?;
    let top = eig.values[0].max(f64::MIN_POSITIVE);
    Ok(eig.values.iter().filter(|&&l| l > 1e-10 * top).count())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub setting: MeasurementSetting,
    pub counts: u64,
    pub integration_time_s: f64,
    /// Mean pair rate used when the record was simulated, if known.
    pub rate_scale_hz: Option<f64>,
}

pub const DEFAULT_INTEGRATION_TIME_S: f64 = 60.0;

fn validate_mean(mean_pairs: f64) -> Result<(), TomoError> {
    if !(mean_pairs > 0.0) || !mean_pairs.is_finite() {
        return Err(TomoError::InvalidParameter(format!("mean pairs {mean_pairs}")));
    }
    Ok(())
}

fn require_two_qubit(rho: &DensityMatrix) -> Result<(), TomoError> {
    if rho.dim() != 4 {
        return Err(TomoError::State(StateError::ShapeMismatch(rho.dim(), 4)));
    }
    Ok(())
}

/// Noise-free records: counts are the rounded expected means.
pub fn expected_counts(
    rho: &DensityMatrix,
    settings: &[MeasurementSetting],
    mean_pairs: f64,
) -> Result<Vec<CountRecord>, TomoError> {
    require_two_qubit(rho)?;
    validate_mean(mean_pairs)?;
    Ok(settings
        .iter()
        .map(|s| CountRecord {
            setting: *s,
            counts: (mean_pairs * s.probability(rho)).round() as u64,
            integration_time_s: DEFAULT_INTEGRATION_TIME_S,
            rate_scale_hz: Some(mean_pairs / DEFAULT_INTEGRATION_TIME_S),
        })
        .collect())
}

fn poisson_draw(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Counts `~ Poisson(mean_pairs <a b|rho|a b>)`, drawn in setting order.
pub fn simulate_counts(
    rho: &DensityMatrix,
    settings: &[MeasurementSetting],
    mean_pairs: f64,
    seed: u64,
) -> Result<Vec<CountRecord>, TomoError> {
    require_two_qubit(rho)?;
    validate_mean(mean_pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(settings
        .iter()
        .map(|s| CountRecord {
            setting: *s,
            counts: poisson_draw(&mut rng, mean_pairs * s.probability(rho)),
            integration_time_s: DEFAULT_INTEGRATION_TIME_S,
            rate_scale_hz: Some(mean_pairs / DEFAULT_INTEGRATION_TIME_S),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleOptions {
    pub max_iter: usize,
    /// Relative log-likelihood improvement below which the ascent stops.
    pub tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { max_iter: 5000, tol: 1e-10 }
    }
}

/// Poisson likelihood with the overall pair rate profiled out:
/// `sum n_k log p_k - (sum n) log(sum t_k p_k)`, invariant under scaling of
/// the (unnormalized) state.
struct Likelihood {
    ops: Vec<ComplexMatrix>,
    counts: Vec<f64>,
    times: Vec<f64>,
    total: f64,
}

/// Lower-triangular factor `T` packed as 16 reals: diagonal entries real,
/// off-diagonal entries as (re, im).
const N_PARAMS: usize = 16;

fn unpack(x: &[f64]) -> ComplexMatrix {
    let mut t = ComplexMatrix::zeros(4, 4);
    let mut k = 0;
    for i in 0..4 {
        for j in 0..=i {
            if i == j {
                t[(i, j)] = C64::new(x[k], 0.0);
                k += 1;
            } else {
                t[(i, j)] = C64::new(x[k], x[k + 1]);
                k += 2;
            }
        }
    }
    t
}

fn pack_gradient(g: &ComplexMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(N_PARAMS);
    for i in 0..4 {
        for j in 0..=i {
            out.push(g[(i, j)].re);
            if i != j {
                out.push(g[(i, j)].im);
            }
        }
    }
    out
}

fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for r in 0..n {
        for c in 0..n {
            acc += (a[(r, c)] * b[(c, r)]).re;
        }
    }
    acc
}

impl Likelihood {
    fn new(records: &[CountRecord]) -> Result<Self, TomoError> {
        if records.is_empty() {
            return Err(TomoError::InvalidRecords("no records".into()));
        }
        for r in records {
            if !(r.integration_time_s > 0.0) || !r.integration_time_s.is_finite() {
                return Err(TomoError::InvalidRecords(format!("integration time {}", r.integration_time_s)));
            }
        }
        let settings: Vec<MeasurementSetting> = records.iter().map(|r| r.setting).collect();
        let rank = operator_rank(&settings)?;
        if rank < 16 {
            return Err(TomoError::NotInformationallyComplete { rank });
        }
        let counts: Vec<f64> = records.iter().map(|r| r.counts as f64).collect();
        let total: f64 = counts.iter().sum();
        if total == 0.0 {
            return Err(TomoError::InvalidRecords("all counts are zero".into()));
        }
        Ok(Self {
            ops: settings.iter().map(MeasurementSetting::operator).collect(),
            counts,
            times: records.iter().map(|r| r.integration_time_s).collect(),
            total,
        })
    }

    #[allow(clippy::needless_range_loop)]
    fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let t = unpack(x);
        let m = &t.adjoint() * &t;
        let p: Vec<f64> = self.ops.iter().map(|op| trace_product(&m, op)).collect();
        let exposure: f64 = p.iter().zip(&self.times).map(|(p, t)| p * t).sum();
        if !(exposure > 0.0) {
            return (f64::NEG_INFINITY, vec![0.0; N_PARAMS]);
        }
        let mut value = -self.total * exposure.ln();
        let mut g = ComplexMatrix::zeros(4, 4);
        for k in 0..self.ops.len() {
            let n = self.counts[k];
            let mut w = -self.total * self.times[k] / exposure;
            if n > 0.0 {
                if !(p[k] > 0.0) {
                    return (f64::NEG_INFINITY, vec![0.0; N_PARAMS]);
                }
                value += n * p[k].ln();
                w += n / p[k];
            }
            g = &g + &self.ops[k].scale_real(w);
        }
        // dL/dT = 2 T G for M = T^dag T
        let grad = pack_gradient(&(&t * &g).scale_real(2.0));
        (value, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize_params(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

fn state_from_params(x: &[f64]) -> Result<DensityMatrix, TomoError> {
    let t = unpack(x);
    Ok(DensityMatrix::from_unnormalized((&t.adjoint() * &t).hermitian_part())?)
}

/// Maximum-likelihood two-qubit state. Ascends the profiled Poisson
/// likelihood over the lower-triangular factor `rho ∝ T^dag T` with BFGS and a
/// backtracking line search.
pub fn mle_reconstruct(records: &[CountRecord], options: &MleOptions) -> Result<DensityMatrix, TomoError> {
    if options.max_iter == 0 || !(options.tol > 0.0) {
        return Err(TomoError::InvalidParameter(format!("{options:?}")));
    }
    let lik = Likelihood::new(records)?;
    // start from the maximally mixed state
    let mut x: Vec<f64> = unpack_identity();
    normalize_params(&mut x);
    let (mut f, mut g) = lik.value_and_grad(&x);
    let mut h_inv = identity_n(N_PARAMS);
    let mut stalls = 0;
    let mut fresh_curvature = true;
    for _ in 0..options.max_iter {
        // ascent direction d = H^-1 g
        let mut d: Vec<f64> = (0..N_PARAMS).map(|r| dot(&h_inv[r], &g)).collect();
        if dot(&d, &g) <= 0.0 {
            h_inv = identity_n(N_PARAMS);
            d = g.clone();
        }
        let slope = dot(&d, &g);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (ft, gt) = lik.value_and_grad(&trial);
            if ft.is_finite() && ft >= f + 1e-4 * step * slope {
                // rescaling the factor leaves the likelihood unchanged
                let scale = dot(&trial, &trial).sqrt();
                normalize_params(&mut trial);
                let gt: Vec<f64> = gt.iter().map(|v| v * scale).collect();
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if fresh_curvature {
                // nothing left to gain along the steepest ascent either
                return state_from_params(&x);
            }
            h_inv = identity_n(N_PARAMS);
            fresh_curvature = true;
            continue;
        };
        let improvement = fn_ - f;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // BFGS on -L: y = grad(-L)_new - grad(-L)_old
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            bfgs_update(&mut h_inv, &s, &y, sy);
            fresh_curvature = false;
        }
        x = xn;
        f = fn_;
        g = gn;
        if improvement <= options.tol * f.abs().max(1.0) {
            stalls += 1;
            if stalls >= 3 {
                return state_from_params(&x);
            }
        } else {
            stalls = 0;
        }
    }
    Err(TomoError::NoConvergence(options.max_iter))
}

fn unpack_identity() -> Vec<f64> {
    let mut x = vec![0.0; N_PARAMS];
    let mut k = 0;
    for i in 0..4 {
        for j in 0..=i {
            if i == j {
                x[k] = 1.0;
                k += 1;
            } else {
                k += 2;
            }
        }
    }
    x
}

fn identity_n(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|r| (0..n).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|r| dot(&h[r], y)).collect();
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for r in 0..n {
        for c in 0..n {
            h[r][c] += (1.0 + yhy * rho) * rho * s[r] * s[c] - rho * (hy[r] * s[c] + s[r] * hy[c]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWithError {
    pub value: f64,
    pub std: f64,
    pub n_samples: usize,
}

/// Independent generator for Monte-Carlo sample `index`: the ChaCha stream
/// number carries the counter, so samples can be drawn in any order.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Resamples every record as `Poisson(observed)`, reconstructs, and reports
/// the mean and sample standard deviation of `metric`.
pub fn monte_carlo_metric<F>(
    records: &[CountRecord],
    metric: F,
    n_samples: usize,
    seed: u64,
    options: &MleOptions,
) -> Result<MetricWithError, TomoError>
where
    F: Fn(&DensityMatrix) -> Result<f64, TomoError> + Sync,
{
    if n_samples < 2 {
        return Err(TomoError::InvalidParameter(format!("need at least 2 samples, got {n_samples}")));
    }
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let resampled: Vec<CountRecord> = records
                .iter()
                .map(|r| CountRecord { counts: poisson_draw(&mut rng, r.counts as f64), ..r.clone() })
                .collect();
            let rho = mle_reconstruct(&resampled, options)?;
            metric(&rho)
        })
        .collect::<Result<_, _>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MetricWithError { value: mean, std: var.sqrt(), n_samples })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    proj_a_spec: String,
    proj_b_spec: String,
    counts: u64,
    integration_time_s: f64,
}

pub fn write_records_csv<W: Write>(records: &[CountRecord], out: W) -> Result<(), TomoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            proj_a_spec: r.setting.proj_a.to_string(),
            proj_b_spec: r.setting.proj_b.to_string(),
            counts: r.counts,
            integration_time_s: r.integration_time_s,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<CountRecord>, TomoError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize::<CsvRow>() {
        let row = row?;
        out.push(CountRecord {
            setting: MeasurementSetting { proj_a: row.proj_a_spec.parse()?, proj_b: row.proj_b_spec.parse()? },
            counts: row.counts,
            integration_time_s: row.integration_time_s,
            rate_scale_hz: None,
        });
    }
    Ok(out)
}

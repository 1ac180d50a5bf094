//! Joint spectral amplitude of quasi-phase-matched down-conversion, Schmidt
//! analysis, temporal mode decomposition and coincidence-delay profiles.
//!
//! Frequencies are angular (rad/s) internally. Grid amplitudes carry the
//! grid measure, so `sum |amp|^2 = 1` and reduced states have unit trace.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matkernel::{herm_eig, svd, ComplexMatrix, LinalgError, C64};
use crate::quantstate::{purity, DensityMatrix, StateError};

pub const C_LIGHT: f64 = 299_792_458.0;
pub const MIN_GRID_POINTS: usize = 64;

const BUNDLED_EL: &str = include_str!("../data/ln_congruent_el.disp");
const BUNDLED_ZELMON: &str = include_str!("../data/ln_mgo_zelmon.disp");
const DISPERSION_FORMAT: &str = "qfc-dispersion/1";

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("wavelength {wavelength_um} um outside model validity [{min}, {max}] um")]
    OutOfRange { wavelength_um: f64, min: f64, max: f64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dispersion file: {0}")]
    DispersionFormat(String),
    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),
    #[error("JSA dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    State(#[from] StateError),
}

pub fn omega_from_wavelength_nm(lambda_nm: f64) -> f64 {
    2.0 * PI * C_LIGHT / (lambda_nm * 1e-9)
}

pub fn wavelength_um_from_omega(omega: f64) -> f64 {
    2.0 * PI * C_LIGHT / omega * 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Ordinary,
    Extraordinary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DispersionForm {
    /// Temperature-dependent form with 7 coefficients per axis
    /// `(a1, a2, a3, a4, b1, b2, b3)`.
    ElThermal { ordinary: [f64; 7], extraordinary: [f64; 7] },
    /// Three-term Sellmeier `(b1, c1, b2, c2, b3, c3)` plus a linear
    /// thermo-optic correction about a reference temperature.
    Sellmeier3 { ordinary: [f64; 6], extraordinary: [f64; 6], dn_dt: [f64; 2], reference_c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionModel {
    pub name: String,
    pub form: DispersionForm,
    pub validity_um: (f64, f64),
}

fn parse_floats<const N: usize>(key: &str, value: &str) -> Result<[f64; N], SpectralError> {
    let vals: Vec<f64> = value
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| SpectralError::DispersionFormat(format!("{key}: {e}"))))
        .collect::<Result<_, _>>()?;
    vals.try_into()
        .map_err(|v: Vec<f64>| SpectralError::DispersionFormat(format!("{key}: expected {N} values, got {}", v.len())))
}

impl DispersionModel {
    /// Parses the `key = value` dispersion file format. Lines starting with
    /// `#` are comments.
    pub fn parse(text: &str) -> Result<Self, SpectralError> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SpectralError::DispersionFormat(format!("line {}: missing '='", lineno + 1)))?;
            if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(SpectralError::DispersionFormat(format!("duplicate key {}", k.trim())));
            }
        }
        let mut take = |k: &str| {
            map.remove(k).ok_or_else(|| SpectralError::DispersionFormat(format!("missing key {k}")))
        };
        let format = take("format")?;
        if format != DISPERSION_FORMAT {
            return Err(SpectralError::DispersionFormat(format!("unsupported format {format:?}")));
        }
        let name = take("name")?;
        let form_name = take("form")?;
        let [lo, hi] = parse_floats::<2>("validity_um", &take("validity_um")?)?;
        if !(lo > 0.0 && hi > lo) {
            return Err(SpectralError::DispersionFormat("validity_um must be an increasing positive pair".into()));
        }
        let form = match form_name.as_str() {
            "el-thermal" => DispersionForm::ElThermal {
                ordinary: parse_floats("ordinary", &take("ordinary")?)?,
                extraordinary: parse_floats("extraordinary", &take("extraordinary")?)?,
            },
            "sellmeier3" => DispersionForm::Sellmeier3 {
                ordinary: parse_floats("ordinary", &take("ordinary")?)?,
                extraordinary: parse_floats("extraordinary", &take("extraordinary")?)?,
                dn_dt: parse_floats("thermo_optic_per_k", &take("thermo_optic_per_k")?)?,
                reference_c: parse_floats::<1>("reference_temperature_c", &take("reference_temperature_c")?)?[0],
            },
            other => return Err(SpectralError::DispersionFormat(format!("unknown form {other:?}"))),
        };
        if let Some(extra) = map.keys().next() {
            return Err(SpectralError::DispersionFormat(format!("unknown key {extra}")));
        }
        let model = Self { name, form, validity_um: (lo, hi) };
        for pol in [Polarization::Ordinary, Polarization::Extraordinary] {
            for lam in [lo, 0.5 * (lo + hi), hi] {
                let n = model.index_unchecked(pol, lam, 25.0);
                if !(n > 1.0) {
                    return Err(SpectralError::DispersionFormat(format!("index {n} <= 1 at {lam} um")));
                }
            }
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, SpectralError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Congruent lithium niobate with temperature dependence; the default.
    pub fn congruent_ln() -> Self {
        Self::parse(BUNDLED_EL).expect("bundled dispersion file is valid")
    }

    /// MgO-doped lithium niobate at room temperature.
    pub fn mgo_ln() -> Self {
        Self::parse(BUNDLED_ZELMON).expect("bundled dispersion file is valid")
    }

    pub fn bundled(name: &str) -> Option<Self> {
        [Self::congruent_ln(), Self::mgo_ln()].into_iter().find(|m| m.name == name)
    }

    fn index_unchecked(&self, pol: Polarization, lam: f64, temp_c: f64) -> f64 {
        let l2 = lam * lam;
        match &self.form {
            DispersionForm::ElThermal { ordinary, extraordinary } => {
                let [a1, a2, a3, a4, b1, b2, b3] = match pol {
                    Polarization::Ordinary => *ordinary,
                    Polarization::Extraordinary => *extraordinary,
                };
                let f = (temp_c - 24.5) * (temp_c + 570.5);
                let pole = a3 + b2 * f;
                (a1 + (a2 + b1 * f) / (l2 - pole * pole) + b3 * f - a4 * l2).sqrt()
            }
            DispersionForm::Sellmeier3 { ordinary, extraordinary, dn_dt, reference_c } => {
                let (c, slope) = match pol {
                    Polarization::Ordinary => (ordinary, dn_dt[0]),
                    Polarization::Extraordinary => (extraordinary, dn_dt[1]),
                };
                let n2 = 1.0 + c.chunks(2).map(|bc| bc[0] * l2 / (l2 - bc[1])).sum::<f64>();
                n2.sqrt() + slope * (temp_c - reference_c)
            }
        }
    }
}

/// Refractive index at `wavelength_um` and `temperature_c`.
pub fn refractive_index(
    model: &DispersionModel,
    pol: Polarization,
    wavelength_um: f64,
    temperature_c: f64,
) -> Result<f64, SpectralError> {
    let (min, max) = model.validity_um;
    if !(wavelength_um >= min && wavelength_um <= max) {
        return Err(SpectralError::OutOfRange { wavelength_um, min, max });
    }
    Ok(model.index_unchecked(pol, wavelength_um, temperature_c))
}

/// Wave number `n(omega) omega / c` in rad/m.
pub fn wave_number(model: &DispersionModel, pol: Polarization, omega: f64, temperature_c: f64) -> Result<f64, SpectralError> {
    Ok(refractive_index(model, pol, wavelength_um_from_omega(omega), temperature_c)? * omega / C_LIGHT)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interaction {
    /// Pump, signal and idler all extraordinary.
    #[serde(rename = "type0_eee")]
    Type0Eee,
    /// Extraordinary pump, ordinary signal and idler.
    #[serde(rename = "type1_ooe")]
    Type1Ooe,
}

impl Interaction {
    /// Polarizations of (pump, signal, idler).
    pub fn polarizations(self) -> [Polarization; 3] {
        use Polarization::*;
        match self {
            Interaction::Type0Eee => [Extraordinary, Extraordinary, Extraordinary],
            Interaction::Type1Ooe => [Extraordinary, Ordinary, Ordinary],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalSpec {
    pub length_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    pub interaction: Interaction,
    pub dispersion: DispersionModel,
}

impl CrystalSpec {
    pub fn new(
        length_mm: f64,
        poling_period_um: f64,
        temperature_c: f64,
        interaction: Interaction,
        dispersion: DispersionModel,
    ) -> Result<Self, SpectralError> {
        if !(length_mm > 0.0) || !length_mm.is_finite() {
            return Err(SpectralError::InvalidParameter(format!("crystal length {length_mm} mm")));
        }
        if !(poling_period_um > 0.0) || !poling_period_um.is_finite() {
            return Err(SpectralError::InvalidParameter(format!("poling period {poling_period_um} um")));
        }
        if !temperature_c.is_finite() {
            return Err(SpectralError::InvalidParameter("temperature must be finite".into()));
        }
        Ok(Self { length_mm, poling_period_um, temperature_c, interaction, dispersion })
    }
}

/// Poling period that phase-matches degenerate down-conversion of the pump.
pub fn tuned_poling_period_um(
    dispersion: &DispersionModel,
    interaction: Interaction,
    pump_wavelength_nm: f64,
    temperature_c: f64,
) -> Result<f64, SpectralError> {
    let [pp, ps, pi] = interaction.polarizations();
    let wp = omega_from_wavelength_nm(pump_wavelength_nm);
    let dk = wave_number(dispersion, pp, wp, temperature_c)?
        - wave_number(dispersion, ps, wp / 2.0, temperature_c)?
        - wave_number(dispersion, pi, wp / 2.0, temperature_c)?;
    if dk == 0.0 {
        return Err(SpectralError::InvalidParameter("already phase-matched without poling".into()));
    }
    Ok(2.0 * PI / dk.abs() * 1e6)
}

/// `k_p(ws + wi) - k_s(ws) - k_i(wi) ∓ 2 pi / Lambda` in rad/m. The poling
/// grating has Fourier components at both signs; the one opposing the
/// material mismatch is used.
pub fn phase_mismatch(crystal: &CrystalSpec, omega_s: f64, omega_i: f64) -> Result<f64, SpectralError> {
    if !(omega_s > 0.0 && omega_i > 0.0) {
        return Err(SpectralError::InvalidParameter("frequencies must be positive".into()));
    }
    let [pp, ps, pi] = crystal.interaction.polarizations();
    let t = crystal.temperature_c;
    let d = &crystal.dispersion;
    let material =
        wave_number(d, pp, omega_s + omega_i, t)? - wave_number(d, ps, omega_s, t)? - wave_number(d, pi, omega_i, t)?;
    Ok(material - material.signum() * 2.0 * PI / (crystal.poling_period_um * 1e-6))
}

/// Transform-limited Gaussian pulse; `fwhm_duration_fs` is the intensity FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSpec {
    pub center_wavelength_nm: f64,
    pub fwhm_duration_fs: f64,
}

impl PumpSpec {
    pub fn validate(&self) -> Result<(), SpectralError> {
        if !(self.fwhm_duration_fs > 0.0) || !(self.center_wavelength_nm > 0.0) {
            return Err(SpectralError::InvalidParameter(format!("pump {self:?}")));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        omega_from_wavelength_nm(self.center_wavelength_nm)
    }

    /// Spectral amplitude `exp(-d^2 / (2 s^2))` has width `s = 2 sqrt(ln 2) / tau`.
    pub fn spectral_sigma(&self) -> f64 {
        gaussian_spectral_sigma(self.fwhm_duration_fs)
    }
}

pub fn gaussian_spectral_sigma(fwhm_duration_fs: f64) -> f64 {
    2.0 * std::f64::consts::LN_2.sqrt() / (fwhm_duration_fs * 1e-15)
}

/// Square grid symmetric in angular frequency about the degenerate point,
/// spanning the frequencies of `center ± half_span_nm` in wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    pub half_span_nm: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 512, half_span_nm: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsaGrid {
    pub signal_axis: Vec<f64>,
    pub idler_axis: Vec<f64>,
    pub amp: ComplexMatrix,
}

impl JsaGrid {
    pub fn new(signal_axis: Vec<f64>, idler_axis: Vec<f64>, amp: ComplexMatrix) -> Result<Self, SpectralError> {
        for axis in [&signal_axis, &idler_axis] {
            if axis.len() < 2 || axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(SpectralError::InvalidParameter("axes must be strictly increasing".into()));
            }
        }
        if amp.rows() != signal_axis.len() || amp.cols() != idler_axis.len() {
            return Err(SpectralError::InvalidParameter("amplitude shape does not match axes".into()));
        }
        let norm = amp.frobenius_norm();
        if !(norm > 0.0) {
            return Err(SpectralError::InvalidParameter("amplitude is identically zero".into()));
        }
        Ok(Self { signal_axis, idler_axis, amp: amp.scale_real(1.0 / norm) })
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + step * k as f64).collect()
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Frequency axis for a photon centred at `lambda_c_nm`.
pub fn frequency_axis(lambda_c_nm: f64, grid: &GridSpec) -> Result<Vec<f64>, SpectralError> {
    if grid.points < MIN_GRID_POINTS {
        return Err(SpectralError::GridTooCoarse(format!("{} points per axis, need {MIN_GRID_POINTS}", grid.points)));
    }
    if !(grid.half_span_nm > 0.0 && grid.half_span_nm < lambda_c_nm) {
        return Err(SpectralError::InvalidParameter(format!("half span {} nm", grid.half_span_nm)));
    }
    let wc = omega_from_wavelength_nm(lambda_c_nm);
    let half = 0.5 * (omega_from_wavelength_nm(lambda_c_nm - grid.half_span_nm)
        - omega_from_wavelength_nm(lambda_c_nm + grid.half_span_nm));
    Ok(linspace(wc - half, wc + half, grid.points))
}

/// Gaussian amplitude filter whose intensity FWHM is `fwhm_nm` at `lambda_c_nm`.
#[derive(Debug, Clone, Copy)]
struct Filter {
    center: f64,
    /// Intensity standard deviation in rad/s.
    sigma: f64,
}

impl Filter {
    fn new(lambda_c_nm: f64, fwhm_nm: f64) -> Self {
        let lam = lambda_c_nm * 1e-9;
        let fwhm_omega = 2.0 * PI * C_LIGHT * fwhm_nm * 1e-9 / (lam * lam);
        Self {
            center: omega_from_wavelength_nm(lambda_c_nm),
            sigma: fwhm_omega / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()),
        }
    }

    fn amplitude(&self, omega: f64) -> f64 {
        let d = omega - self.center;
        (-(d * d) / (4.0 * self.sigma * self.sigma)).exp()
    }
}

/// `pump(ws + wi) sinc(dk L / 2) F(ws) F(wi)` on the grid, normalized.
pub fn compute_jsa(
    pump: &PumpSpec,
    crystal: &CrystalSpec,
    filter_fwhm_nm: f64,
    grid: &GridSpec,
) -> Result<JsaGrid, SpectralError> {
    pump.validate()?;
    if !(filter_fwhm_nm > 0.0) {
        return Err(SpectralError::InvalidParameter(format!("filter FWHM {filter_fwhm_nm} nm")));
    }
    let lambda_c = 2.0 * pump.center_wavelength_nm;
    let axis = frequency_axis(lambda_c, grid)?;
    let filter = Filter::new(lambda_c, filter_fwhm_nm);
    let half = 0.5 * (axis[axis.len() - 1] - axis[0]);
    if half < 3.0 * filter.sigma {
        return Err(SpectralError::GridTooCoarse(format!(
            "grid half width covers {:.2} filter sigmas, need 3",
            half / filter.sigma
        )));
    }

    let [pp, ps, pi] = crystal.interaction.polarizations();
    let (d, t) = (&crystal.dispersion, crystal.temperature_c);
    let k_s: Vec<f64> = axis.iter().map(|&w| wave_number(d, ps, w, t)).collect::<Result<_, _>>()?;
    let k_i: Vec<f64> = axis.iter().map(|&w| wave_number(d, pi, w, t)).collect::<Result<_, _>>()?;
    let f: Vec<f64> = axis.iter().map(|&w| filter.amplitude(w)).collect();
    let grating = 2.0 * PI / (crystal.poling_period_um * 1e-6);
    let half_len = 0.5 * crystal.length_mm * 1e-3;
    let wp = pump.omega();
    let sp = pump.spectral_sigma();
    let n = axis.len();

    let rows: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            (0..n)
                .map(|c| {
                    let sum = axis[r] + axis[c];
                    let kp = wave_number(d, pp, sum, t)?;
                    let material = kp - k_s[r] - k_i[c];
                    let dk = material - material.signum() * grating;
                    let env = (-(sum - wp).powi(2) / (2.0 * sp * sp)).exp();
                    Ok(C64::new(env * sinc(dk * half_len) * f[r] * f[c], 0.0))
                })
                .collect::<Result<Vec<_>, SpectralError>>()
        })
        .collect::<Result<_, _>>()?;
    let amp = ComplexMatrix::from_vec(n, n, rows.concat())?;
    JsaGrid::new(axis.clone(), axis, amp)
}

#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    /// Descending, summing to 1.
    pub probabilities: Vec<f64>,
    /// Signal modes as columns on the signal axis.
    pub signal_modes: ComplexMatrix,
    /// Idler modes as columns on the idler axis.
    pub idler_modes: ComplexMatrix,
}

/// `amp = sum_k sqrt(p_k) signal_k(ws) idler_k(wi)`.
pub fn schmidt(grid: &JsaGrid) -> Result<SchmidtDecomposition, SpectralError> {
    let s = svd(&grid.amp)?;
    let total: f64 = s.singular.iter().map(|x| x * x).sum();
    let probabilities = s.singular.iter().map(|x| x * x / total).collect();
    Ok(SchmidtDecomposition { probabilities, signal_modes: s.u, idler_modes: s.v.conj() })
}

pub fn heralded_purity(s: &SchmidtDecomposition) -> f64 {
    s.probabilities.iter().map(|p| p * p).sum()
}

pub fn schmidt_number(s: &SchmidtDecomposition) -> f64 {
    1.0 / heralded_purity(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Photon {
    Signal,
    Idler,
}

/// Single-photon spectral state on its frequency axis.
#[derive(Debug, Clone)]
pub struct SpectralState {
    pub axis: Vec<f64>,
    pub rho: DensityMatrix,
}

impl SpectralState {
    pub fn new(axis: Vec<f64>, rho: DensityMatrix) -> Result<Self, SpectralError> {
        if axis.len() != rho.dim() || axis.len() < 2 {
            return Err(SpectralError::InvalidParameter("axis length does not match state".into()));
        }
        Ok(Self { axis, rho })
    }

    /// Pure state with the given amplitudes on `axis`.
    pub fn pure(axis: Vec<f64>, amplitudes: &[C64]) -> Result<Self, SpectralError> {
        let rho = DensityMatrix::pure(amplitudes)?;
        Self::new(axis, rho)
    }

    pub fn step(&self) -> f64 {
        self.axis[1] - self.axis[0]
    }

    /// Intensity-weighted mean frequency.
    pub fn mean_omega(&self) -> f64 {
        let m = self.rho.matrix();
        self.axis.iter().enumerate().map(|(k, w)| w * m[(k, k)].re).sum()
    }

    pub fn purity(&self) -> f64 {
        purity(&self.rho)
    }
}

/// Traces out the partner photon.
pub fn reduced_density(grid: &JsaGrid, which: Photon) -> Result<SpectralState, SpectralError> {
    let (m, axis) = match which {
        Photon::Signal => (&grid.amp * &grid.amp.adjoint(), grid.signal_axis.clone()),
        Photon::Idler => (&grid.amp.transpose() * &grid.amp.conj(), grid.idler_axis.clone()),
    };
    let rho = DensityMatrix::from_unnormalized(m.hermitian_part())?;
    SpectralState::new(axis, rho)
}

/// Hermite-Gauss functions `psi_n((w - center) / sigma)` sampled on `axis`
/// and normalized on the grid. Fails if a requested mode is undersampled or
/// its classical turning points lie outside the grid.
pub fn hermite_gauss_modes(axis: &[f64], center: f64, sigma: f64, n_modes: usize) -> Result<Vec<Vec<f64>>, SpectralError> {
    if n_modes == 0 {
        return Err(SpectralError::InvalidParameter("need at least one mode".into()));
    }
    if axis.len() < MIN_GRID_POINTS {
        return Err(SpectralError::GridTooCoarse(format!("{} points", axis.len())));
    }
    let xs: Vec<f64> = axis.iter().map(|w| (w - center) / sigma).collect();
    let dx = xs[1] - xs[0];
    let reach = (-xs[0]).min(xs[xs.len() - 1]);
    let turning = (2.0 * (n_modes - 1) as f64 + 1.0).sqrt();
    if reach < turning {
        return Err(SpectralError::GridTooCoarse(format!(
            "grid reaches {reach:.2} mode widths, mode {} needs {turning:.2}",
            n_modes - 1
        )));
    }
    // at least 8 samples per local oscillation of the highest mode
    if dx > PI / (4.0 * turning) {
        return Err(SpectralError::GridTooCoarse(format!("step {dx:.3} mode widths undersamples mode {}", n_modes - 1)));
    }
    let norm0 = PI.powf(-0.25);
    let mut prev: Vec<f64> = vec![0.0; xs.len()];
    let mut cur: Vec<f64> = xs.iter().map(|x| norm0 * (-0.5 * x * x).exp()).collect();
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for n in 0..n_modes {
        let s = cur.iter().map(|v| v * v).sum::<f64>().sqrt();
        modes.push(cur.iter().map(|v| v / s).collect());
        let nf = n as f64;
        let next: Vec<f64> = xs
            .iter()
            .zip(cur.iter().zip(&prev))
            .map(|(x, (c, p))| (2.0 / (nf + 1.0)).sqrt() * x * c - (nf / (nf + 1.0)).sqrt() * p)
            .collect();
        prev = cur;
        cur = next;
    }
    Ok(modes)
}

fn real_expectation(rho: &ComplexMatrix, v: &[f64]) -> f64 {
    let vc: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
    rho.sandwich(&vc, &vc).re
}

/// Occupations of the temporal Hermite-Gauss modes whose fundamental has
/// intensity FWHM `mode_duration_fs`, centred at the photon's mean frequency.
pub fn hg_mode_probabilities(state: &SpectralState, mode_duration_fs: f64, n_modes: usize) -> Result<Vec<f64>, SpectralError> {
    if !(mode_duration_fs > 0.0) {
        return Err(SpectralError::InvalidParameter(format!("mode duration {mode_duration_fs} fs")));
    }
    let sigma = gaussian_spectral_sigma(mode_duration_fs);
    let modes = hermite_gauss_modes(&state.axis, state.mean_omega(), sigma, n_modes)?;
    Ok(modes.iter().map(|m| real_expectation(state.rho.matrix(), m).max(0.0)).collect())
}

/// `<pump|rho|pump>` with the transform-limited pump amplitude centred on the photon.
pub fn pump_overlap(state: &SpectralState, pump: &PumpSpec) -> Result<f64, SpectralError> {
    pump.validate()?;
    let modes = hermite_gauss_modes(&state.axis, state.mean_omega(), pump.spectral_sigma(), 1)?;
    Ok(real_expectation(state.rho.matrix(), &modes[0]).clamp(0.0, 1.0))
}

/// Uniform time axis for time-domain profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub half_span_fs: f64,
    pub points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { half_span_fs: 4000.0, points: 801 }
    }
}

impl TimeGrid {
    pub fn times_s(&self) -> Vec<f64> {
        linspace(-self.half_span_fs * 1e-15, self.half_span_fs * 1e-15, self.points)
    }
}

/// Temporal intensity `sum_k l_k |sum_w v_k(w) e^{-i (w - w0) t} dw / 2pi|^2`.
pub fn temporal_intensity(state: &SpectralState, times: &TimeGrid) -> Result<Vec<f64>, SpectralError> {
    if times.points < 3 || !(times.half_span_fs > 0.0) {
        return Err(SpectralError::InvalidParameter("time grid".into()));
    }
    let dw = state.step();
    // the spectral sampling is periodic in time with period 2 pi / dw
    if 2.0 * times.half_span_fs * 1e-15 >= 2.0 * PI / dw {
        return Err(SpectralError::GridTooCoarse(format!(
            "frequency step {dw:e} rad/s aliases a {} fs window",
            2.0 * times.half_span_fs
        )));
    }
    let eig = herm_eig(state.rho.matrix(), 1e-9)?;
    let cutoff = eig.values[0] * 1e-12;
    let w0 = state.mean_omega();
    let ts = times.times_s();
    let kept: Vec<usize> = (0..eig.values.len()).filter(|&k| eig.values[k] > cutoff).collect();
    let intensity: Vec<f64> = ts
        .par_iter()
        .map(|&t| {
            let phases: Vec<C64> = state.axis.iter().map(|w| C64::from_polar(dw / (2.0 * PI), -(w - w0) * t)).collect();
            kept.iter()
                .map(|&k| {
                    let amp: C64 = phases.iter().enumerate().map(|(i, p)| p * eig.vectors[(i, k)]).sum();
                    eig.values[k] * amp.norm_sqr()
                })
                .sum()
        })
        .collect();
    let edge = intensity[0].max(intensity[intensity.len() - 1]);
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    if edge > 1e-2 * peak {
        return Err(SpectralError::GridTooCoarse("time window does not contain the photon".into()));
    }
    Ok(intensity)
}

/// Full width at half maximum of a sampled single-peaked profile, with linear
/// interpolation at the crossings.
pub fn fwhm(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (imax, &peak) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(peak > 0.0) {
        return None;
    }
    let half = 0.5 * peak;
    let left = (1..=imax).rev().find(|&k| ys[k - 1] < half)?;
    let right = (imax..ys.len() - 1).find(|&k| ys[k + 1] < half)?;
    let cross = |a: usize, b: usize| xs[a] + (half - ys[a]) * (xs[b] - xs[a]) / (ys[b] - ys[a]);
    Some(cross(right, right + 1) - cross(left - 1, left))
}

/// FWHM (fs) of the cross-correlation between the photon's temporal
/// intensity and the Gaussian drive-pulse intensity.
pub fn coincidence_delay_width(state: &SpectralState, drive: &PumpSpec, times: &TimeGrid) -> Result<f64, SpectralError> {
    drive.validate()?;
    let photon = temporal_intensity(state, times)?;
    let ts = times.times_s();
    let tau = drive.fwhm_duration_fs * 1e-15;
    let a = 4.0 * std::f64::consts::LN_2 / (tau * tau);
    let dt = ts[1] - ts[0];
    let xcorr: Vec<f64> = ts
        .iter()
        .map(|&delay| photon.iter().zip(&ts).map(|(i, t)| i * (-(a) * (t - delay).powi(2)).exp()).sum::<f64>() * dt)
        .collect();
    let width = fwhm(&ts, &xcorr)
        .ok_or_else(|| SpectralError::GridTooCoarse("cross-correlation peak not contained in the time window".into()))?;
    Ok(width * 1e15)
}

/// `eta = 2 r_up eta_snspd / (r_herald eta_apd)`.
pub fn estimate_efficiency(r_up_hz: f64, r_herald_hz: f64, eta_snspd: f64, eta_apd: f64) -> Result<f64, SpectralError> {
    if r_herald_hz == 0.0 || eta_apd == 0.0 {
        return Err(SpectralError::DivisionByZero("efficiency estimate"));
    }
    for (name, v) in [("r_up", r_up_hz), ("r_herald", r_herald_hz)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(SpectralError::InvalidParameter(format!("{name} = {v}")));
        }
    }
    for (name, v) in [("eta_snspd", eta_snspd), ("eta_apd", eta_apd)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(SpectralError::InvalidParameter(format!("{name} = {v} outside (0, 1]")));
        }
    }
    Ok(2.0 * r_up_hz * eta_snspd / (r_herald_hz * eta_apd))
}

/// CSV with header `omega_s,omega_i,re,im`, one row per grid point.
pub fn write_jsa_csv<W: Write>(grid: &JsaGrid, out: W) -> Result<(), SpectralError> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| SpectralError::Dump(e.to_string());
    w.write_record(["omega_s", "omega_i", "re", "im"]).map_err(map)?;
    for (r, ws) in grid.signal_axis.iter().enumerate() {
        for (c, wi) in grid.idler_axis.iter().enumerate() {
            let z = grid.amp[(r, c)];
            w.write_record([ws, wi, &z.re, &z.im].map(|v| format!("{v:e}"))).map_err(map)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Little-endian dump: `u32 n_s, u32 n_i`, the two axes as f64, then the
/// amplitude row-major as interleaved `(re, im)` f64 pairs.
pub fn write_jsa_binary<W: Write>(grid: &JsaGrid, mut out: W) -> Result<(), SpectralError> {
    let ns = u32::try_from(grid.signal_axis.len()).map_err(|_| SpectralError::Dump("axis too long".into()))?;
    let ni = u32::try_from(grid.idler_axis.len()).map_err(|_| SpectralError::Dump("axis too long".into()))?;
    out.write_all(&ns.to_le_bytes())?;
    out.write_all(&ni.to_le_bytes())?;
    for v in grid.signal_axis.iter().chain(&grid.idler_axis) {
        out.write_all(&v.to_le_bytes())?;
    }
    for z in grid.amp.as_slice() {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_jsa_binary<R: Read>(mut input: R) -> Result<JsaGrid, SpectralError> {
    let mut u = [0u8; 4];
    input.read_exact(&mut u)?;
    let ns = u32::from_le_bytes(u) as usize;
    input.read_exact(&mut u)?;
    let ni = u32::from_le_bytes(u) as usize;
    if ns == 0 || ni == 0 {
        return Err(SpectralError::Dump("empty axis".into()));
    }
    let mut read_f64 = || -> Result<f64, SpectralError> {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    };
    let signal: Vec<f64> = (0..ns).map(|_| read_f64()).collect::<Result<_, _>>()?;
    let idler: Vec<f64> = (0..ni).map(|_| read_f64()).collect::<Result<_, _>>()?;
    let data: Vec<C64> = (0..ns * ni)
        .map(|_| Ok(C64::new(read_f64()?, read_f64()?)))
        .collect::<Result<_, SpectralError>>()?;
    // validate through the normalizing constructor but keep the stored bits
    let amp = ComplexMatrix::from_vec(ns, ni, data)?;
    let checked = JsaGrid::new(signal, idler, amp.clone())?;
    if (amp.frobenius_norm() - 1.0).abs() > 1e-9 {
        return Err(SpectralError::Dump("amplitude is not normalized".into()));
    }
    Ok(JsaGrid { amp, ..checked })
}

/// Separable Gaussian JSA; handy as a reference and in tests.
pub fn gaussian_product_jsa(axis: &[f64], center: f64, sigma_s: f64, sigma_i: f64) -> Result<JsaGrid, SpectralError> {
    let n = axis.len();
    let g = |w: f64, s: f64| (-(w - center).powi(2) / (2.0 * s * s)).exp();
    let amp = ComplexMatrix::from_fn(n, n, |r, c| C64::new(g(axis[r], sigma_s) * g(axis[c], sigma_i), 0.0));
    JsaGrid::new(axis.to_vec(), axis.to_vec(), amp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn type1_crystal(model: DispersionModel) -> CrystalSpec {
        let period = tuned_poling_period_um(&model, Interaction::Type1Ooe, 780.0, 25.0).unwrap();
        CrystalSpec::new(10.0, period, 25.0, Interaction::Type1Ooe, model).unwrap()
    }

    fn type0_crystal() -> CrystalSpec {
        let model = DispersionModel::congruent_ln();
        let period = tuned_poling_period_um(&model, Interaction::Type0Eee, 780.0, 25.0).unwrap();
        CrystalSpec::new(10.0, period, 25.0, Interaction::Type0Eee, model).unwrap()
    }

    const PUMP: PumpSpec = PumpSpec { center_wavelength_nm: 780.0, fwhm_duration_fs: 220.0 };

    fn small_grid() -> GridSpec {
        GridSpec { points: 128, half_span_nm: 40.0 }
    }

    /// Direct evaluation of the temperature-dependent Sellmeier polynomial.
    fn el_extraordinary(lam: f64, t: f64) -> f64 {
        let f = (t - 24.5) * (t + 570.5);
        let n2 = 4.5820 + (0.099169 + 5.2716e-8 * f) / (lam * lam - (0.21090 - 4.9143e-8 * f).powi(2))
            + 2.2971e-8 * f
            - 0.021940 * lam * lam;
        n2.sqrt()
    }

    #[test]
    fn refractive_index_pinned() {
        let m = DispersionModel::congruent_ln();
        let ne = refractive_index(&m, Polarization::Extraordinary, 1.56, 25.0).unwrap();
        assert!((ne - 2.137785930932228).abs() < 1e-12, "{ne}");
        assert!((ne - el_extraordinary(1.56, 25.0)).abs() < 1e-14);
        let no = refractive_index(&m, Polarization::Ordinary, 1.56, 25.0).unwrap();
        assert!((no - 2.210899936718122).abs() < 1e-12);
        for t in [20.0, 70.0, 150.0] {
            let a = refractive_index(&m, Polarization::Extraordinary, 1.2, t).unwrap();
            assert!((a - el_extraordinary(1.2, t)).abs() < 1e-14);
        }
        assert_eq!(ne, refractive_index(&m, Polarization::Extraordinary, 1.56, 25.0).unwrap());
        assert!(matches!(
            refractive_index(&m, Polarization::Ordinary, 0.2, 25.0),
            Err(SpectralError::OutOfRange { .. })
        ));
    }

    #[test]
    fn normal_dispersion_scan() {
        for m in [DispersionModel::congruent_ln(), DispersionModel::mgo_ln()] {
            for pol in [Polarization::Ordinary, Polarization::Extraordinary] {
                let ns: Vec<f64> = (0..=60)
                    .map(|k| refractive_index(&m, pol, 1.0 + 0.01 * k as f64, 25.0).unwrap())
                    .collect();
                assert!(ns.windows(2).all(|w| w[1] < w[0]), "{}", m.name);
                assert!(ns.iter().all(|&n| n > 1.0));
            }
        }
    }

    #[test]
    fn dispersion_file_errors() {
        assert!(DispersionModel::parse("format = qfc-dispersion/2\n").is_err());
        let mut text = BUNDLED_EL.to_string();
        text.push_str("bogus = 1\n");
        assert!(matches!(DispersionModel::parse(&text), Err(SpectralError::DispersionFormat(_))));
        let short = BUNDLED_EL.replace("0.027153 2.2314e-8", "0.027153");
        assert!(DispersionModel::parse(&short).is_err());
        assert!(DispersionModel::bundled("ln-congruent-el").is_some());
        assert!(DispersionModel::bundled("none").is_none());
    }

    #[test]
    fn phase_mismatch_properties() {
        let c = type1_crystal(DispersionModel::congruent_ln());
        let w0 = omega_from_wavelength_nm(1560.0);
        let dk = phase_mismatch(&c, w0, w0).unwrap();
        assert!((dk * c.length_mm * 1e-3 / 2.0).abs() < PI);
        assert!(dk.abs() < 1e-6, "{dk}");
        let (a, b) = (w0 * 1.01, w0 * 0.985);
        let d1 = phase_mismatch(&c, a, b).unwrap();
        let d2 = phase_mismatch(&c, b, a).unwrap();
        assert!((d1 - d2).abs() < 1e-9 * d1.abs().max(1.0));

        // the zero contour drifts monotonically with temperature
        let dks: Vec<f64> = [25.0, 30.0, 35.0, 40.0, 45.0]
            .iter()
            .map(|&t| {
                let mut hot = c.clone();
                hot.temperature_c = t;
                phase_mismatch(&hot, w0, w0).unwrap()
            })
            .collect();
        let diffs: Vec<f64> = dks.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(diffs.iter().all(|d| d.signum() == diffs[0].signum() && d.abs() > 0.0));
    }

    #[test]
    fn tuned_periods() {
        let m = DispersionModel::congruent_ln();
        let p1 = tuned_poling_period_um(&m, Interaction::Type1Ooe, 780.0, 25.0).unwrap();
        let p0 = tuned_poling_period_um(&m, Interaction::Type0Eee, 780.0, 25.0).unwrap();
        assert!((p1 - 23.85).abs() < 0.05, "{p1}");
        assert!((p0 - 19.30).abs() < 0.05, "{p0}");
    }

    #[test]
    fn jsa_normalized_and_errors() {
        let g = compute_jsa(&PUMP, &type1_crystal(DispersionModel::congruent_ln()), 12.0, &small_grid()).unwrap();
        assert!((g.amp.frobenius_norm() - 1.0).abs() < 1e-12);
        let coarse = GridSpec { points: 32, half_span_nm: 40.0 };
        assert!(matches!(
            compute_jsa(&PUMP, &type0_crystal(), 12.0, &coarse),
            Err(SpectralError::GridTooCoarse(_))
        ));
        let narrow = GridSpec { points: 128, half_span_nm: 5.0 };
        assert!(matches!(
            compute_jsa(&PUMP, &type0_crystal(), 12.0, &narrow),
            Err(SpectralError::GridTooCoarse(_))
        ));
    }

    #[test]
    fn cw_pump_limit_is_antidiagonal() {
        let cw = PumpSpec { center_wavelength_nm: 780.0, fwhm_duration_fs: 1e7 };
        let g = compute_jsa(&cw, &type0_crystal(), 12.0, &small_grid()).unwrap();
        let n = g.signal_axis.len();
        let mut off = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r + c != n - 1 {
                    off += g.amp[(r, c)].norm_sqr();
                }
            }
        }
        assert!(off < 1e-6, "{off}");
    }

    #[test]
    fn separable_gaussian_is_pure() {
        let axis = frequency_axis(1560.0, &small_grid()).unwrap();
        let w0 = omega_from_wavelength_nm(1560.0);
        let g = gaussian_product_jsa(&axis, w0, 3e12, 5e12).unwrap();
        let s = schmidt(&g).unwrap();
        assert!((heralded_purity(&s) - 1.0).abs() < 1e-10);
        let r = reduced_density(&g, Photon::Idler).unwrap();
        assert!((r.purity() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn schmidt_modes_orthonormal() {
        let g = compute_jsa(&PUMP, &type0_crystal(), 12.0, &small_grid()).unwrap();
        let s = schmidt(&g).unwrap();
        assert!((s.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for modes in [&s.signal_modes, &s.idler_modes] {
            let k = 8;
            let sub = ComplexMatrix::from_fn(modes.rows(), k, |r, c| modes[(r, c)]);
            let gram = &sub.adjoint() * &sub;
            assert!(gram.max_abs_diff(&ComplexMatrix::identity(k)) < 1e-8);
        }
        // reconstruct the amplitude from the Schmidt form
        let n = g.signal_axis.len();
        let rebuilt = ComplexMatrix::from_fn(n, n, |r, c| {
            (0..n).map(|k| s.signal_modes[(r, k)] * s.idler_modes[(c, k)] * s.probabilities[k].sqrt()).sum()
        });
        assert!(rebuilt.max_abs_diff(&g.amp) < 1e-10);
    }

    #[test]
    fn purity_routes_agree_and_symmetry() {
        let g = compute_jsa(&PUMP, &type1_crystal(DispersionModel::congruent_ln()), 12.0, &small_grid()).unwrap();
        let ps = heralded_purity(&schmidt(&g).unwrap());
        let idler = reduced_density(&g, Photon::Idler).unwrap();
        let signal = reduced_density(&g, Photon::Signal).unwrap();
        assert!((ps - idler.purity()).abs() < 1e-8);
        assert!((idler.purity() - signal.purity()).abs() < 1e-8);
        assert!((idler.rho.matrix().trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn type0_purity_increases_with_narrower_filter() {
        let c = type0_crystal();
        let purities: Vec<f64> = [20.0, 12.0, 8.0, 4.0]
            .iter()
            .map(|&f| heralded_purity(&schmidt(&compute_jsa(&PUMP, &c, f, &small_grid()).unwrap()).unwrap()))
            .collect();
        assert!(purities.windows(2).all(|w| w[1] > w[0]), "{purities:?}");
    }

    fn matched_gaussian_state(duration_fs: f64) -> SpectralState {
        let axis = frequency_axis(1560.0, &GridSpec { points: 256, half_span_nm: 40.0 }).unwrap();
        let w0 = 0.5 * (axis[0] + axis[axis.len() - 1]);
        let sigma = gaussian_spectral_sigma(duration_fs);
        let amps: Vec<C64> = axis.iter().map(|w| C64::new((-(w - w0).powi(2) / (2.0 * sigma * sigma)).exp(), 0.0)).collect();
        SpectralState::pure(axis, &amps).unwrap()
    }

    #[test]
    fn matched_gaussian_mode_and_overlap() {
        let st = matched_gaussian_state(220.0);
        let p = hg_mode_probabilities(&st, 220.0, 5).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-6, "{p:?}");
        assert!((pump_overlap(&st, &PUMP).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hermite_gauss_orthonormal_on_grid() {
        let axis = frequency_axis(1560.0, &GridSpec { points: 256, half_span_nm: 80.0 }).unwrap();
        let w0 = 0.5 * (axis[0] + axis[axis.len() - 1]);
        let modes = hermite_gauss_modes(&axis, w0, gaussian_spectral_sigma(220.0), 10).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let d: f64 = modes[i].iter().zip(&modes[j]).map(|(a, b)| a * b).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8, "{i} {j} {d}");
            }
        }
        // a mode far wider than the grid is rejected
        assert!(matches!(
            hermite_gauss_modes(&axis, w0, gaussian_spectral_sigma(5.0), 1),
            Err(SpectralError::GridTooCoarse(_))
        ));
    }

    #[test]
    fn gaussian_delay_width() {
        let st = matched_gaussian_state(220.0);
        let w = coincidence_delay_width(&st, &PUMP, &TimeGrid::default()).unwrap();
        assert!((w - 2f64.sqrt() * 220.0).abs() < 1.0, "{w}");
    }

    #[test]
    fn delay_width_grows_with_photon_duration() {
        let widths: Vec<f64> = [150.0, 220.0, 400.0, 800.0]
            .iter()
            .map(|&d| coincidence_delay_width(&matched_gaussian_state(d), &PUMP, &TimeGrid::default()).unwrap())
            .collect();
        assert!(widths.windows(2).all(|w| w[1] > w[0]), "{widths:?}");
    }

    #[test]
    fn efficiency_cases() {
        let e = estimate_efficiency(100.0, 60_000.0, 0.8, 0.6).unwrap();
        assert!((e - 0.004444444444444444).abs() < 1e-15);
        let c = estimate_efficiency(5.0, 2600.0, 0.8, 0.6).unwrap();
        assert!((c - 0.005128205128205128).abs() < 1e-15);
        assert!((estimate_efficiency(200.0, 60_000.0, 0.8, 0.6).unwrap() - 2.0 * e).abs() < 1e-15);
        assert!(matches!(estimate_efficiency(1.0, 0.0, 0.8, 0.6), Err(SpectralError::DivisionByZero(_))));
        assert!(estimate_efficiency(1.0, 10.0, 1.5, 0.6).is_err());
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let g = compute_jsa(&PUMP, &type0_crystal(), 12.0, &GridSpec { points: 64, half_span_nm: 40.0 }).unwrap();
        let mut buf = Vec::new();
        write_jsa_binary(&g, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 * 128 + 16 * 64 * 64);
        let back = read_jsa_binary(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        assert!(read_jsa_binary(&buf[..100]).is_err());

        let mut csv_buf = Vec::new();
        write_jsa_csv(&g, &mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        assert!(text.starts_with("omega_s,omega_i,re,im\n"));
        assert_eq!(text.lines().count(), 1 + 64 * 64);
    }

    #[test]
    fn fwhm_of_triangle() {
        let xs: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 10.0 - (x - 10.0f64).abs()).collect();
        assert!((fwhm(&xs, &ys).unwrap() - 10.0).abs() < 1e-12);
        assert!(fwhm(&xs, &[1.0; 21]).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn prop_reduced_state_matches_schmidt(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let axis: Vec<f64> = (0..20).map(|k| k as f64).collect();
            let amp = ComplexMatrix::from_fn(20, 20, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let g = JsaGrid::new(axis.clone(), axis, amp).unwrap();
            prop_assert!((g.amp.frobenius_norm() - 1.0).abs() < 1e-12);
            let s = schmidt(&g).unwrap();
            for which in [Photon::Signal, Photon::Idler] {
                let r = reduced_density(&g, which).unwrap();
                prop_assert!((r.rho.matrix().trace().re - 1.0).abs() < 1e-10);
                prop_assert!((r.purity() - heralded_purity(&s)).abs() < 1e-8);
            }
        }

        #[test]
        fn prop_efficiency_linear(r in 1.0f64..1e4, h in 1.0f64..1e6, a in 0.01f64..1.0, b in 0.01f64..1.0, k in 0.1f64..10.0) {
            let e1 = estimate_efficiency(r, h, a, b).unwrap();
            let e2 = estimate_efficiency(k * r, h, a, b).unwrap();
            prop_assert!((e2 - k * e1).abs() <= 1e-12 * e2.abs().max(1.0));
        }
    }
}

//! `qfc` command line: one subcommand per pipeline, strict JSON configs,
//! CSV artifacts and a JSON summary per run.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::RngCore;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bellsweep::{angle_grid, chsh_sweep, sweep_max, write_sweep_csv, BellError, SweepMode, SweepPoint};
use crate::driveprep::{coherence_matrix, drive_concurrence, drive_from_theta, drive_with_concurrence, DriveError, DriveMatrix};
use crate::matkernel::{ComplexMatrix, C64};
use crate::qfcchannel::{choi_concurrence_closed, choi_state, one_sided_apply, ChannelError, ChannelSpec};
use crate::quantstate::{
    bell_state, chsh_max, concurrence, fidelity, purity, werner, werner_with_concurrence, BellLabel, DensityMatrix,
    StateError,
};
use crate::spectral::{
    coincidence_delay_width, compute_jsa, estimate_efficiency, heralded_purity, hg_mode_probabilities, pump_overlap,
    reduced_density, schmidt, schmidt_number, tuned_poling_period_um, write_jsa_binary, write_jsa_csv, CrystalSpec,
    DispersionModel, GridSpec, Interaction, Photon, PumpSpec, SpectralError, TimeGrid,
};
use crate::tomosim::{
    expected_counts, mle_reconstruct, monte_carlo_metric, projector_set, read_records_csv, sample_rng, simulate_counts,
    write_records_csv, CountRecord, MetricWithError, MleOptions, ProjectorSetKind, TomoError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error(transparent)]
    Bell(#[from] BellError),
}

impl CliError {
    /// 2 for configuration problems, 1 for failures while computing or writing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qfc", version, about = "Spin-orbit quantum frequency conversion simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw (overrides the config)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Compute expectation values directly from the state
    #[arg(long, global = true, conflicts_with = "sampled")]
    pub exact: bool,
    /// Simulate Poisson counts
    #[arg(long, global = true)]
    pub sampled: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drive matrix, coherence matrix and concurrence for a QWP angle
    Drive {
        /// QWP angle in degrees
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
    },
    /// Converted-state concurrence and CHSH bound versus QWP angle
    SweepTheta,
    /// Choi concurrence and duality distance versus interaction strength
    Choi,
    /// Joint spectral amplitude, Schmidt spectrum and temporal-mode report
    Jsa,
    /// Simulated tomography with maximum-likelihood reconstruction
    Tomo,
    /// CHSH sweep over the spatial-mode rotation angle
    Bell,
    /// Conversion efficiency from single-count rates
    Efficiency {
        r_up_hz: Option<f64>,
        r_herald_hz: Option<f64>,
        eta_snspd: Option<f64>,
        eta_apd: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Drive { .. } => "drive",
            Command::SweepTheta => "sweep-theta",
            Command::Choi => "choi",
            Command::Jsa => "jsa",
            Command::Tomo => "tomo",
            Command::Bell => "bell",
            Command::Efficiency { .. } => "efficiency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Sampled,
}

// ---------------------------------------------------------------- configs

/// Two-qubit state given in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    Bell { label: String },
    /// Werner state with the given concurrence.
    Werner { concurrence: f64 },
    /// Werner state `p |Phi+><Phi+| + (1 - p) I/4`.
    WernerP { p: f64 },
    /// Explicit 4x4 matrix as real and imaginary parts.
    Density { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl StateConfig {
    pub fn build(&self) -> Result<DensityMatrix, CliError> {
        Ok(match self {
            StateConfig::Bell { label } => bell_state(label.parse::<BellLabel>().map_err(|e| CliError::Config(e.to_string()))?),
            StateConfig::Werner { concurrence } => {
                werner_with_concurrence(*concurrence).map_err(|e| CliError::Config(e.to_string()))?
            }
            StateConfig::WernerP { p } => werner(*p).map_err(|e| CliError::Config(e.to_string()))?,
            StateConfig::Density { re, im } => {
                let ok = re.len() == 4 && im.len() == 4 && re.iter().chain(im).all(|r| r.len() == 4);
                if !ok {
                    return Err(CliError::Config("density matrix must be 4x4".into()));
                }
                let m = ComplexMatrix::from_fn(4, 4, |r, c| C64::new(re[r][c], im[r][c]));
                DensityMatrix::new(m).map_err(|e| CliError::Config(e.to_string()))?
            }
        })
    }
}

/// Drive field given in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveConfig {
    /// x-polarized beam through a QWP at `theta_deg` and the vortex plate.
    Theta { theta_deg: f64 },
    /// `diag(cos t, sin t)` with the given concurrence.
    Concurrence { concurrence: f64 },
    /// Explicit amplitudes, rescaled to unit norm.
    Matrix { re: [[f64; 2]; 2], im: [[f64; 2]; 2] },
}

impl DriveConfig {
    pub fn build(&self) -> Result<DriveMatrix, CliError> {
        let bad = |e: DriveError| CliError::Config(e.to_string());
        match self {
            DriveConfig::Theta { theta_deg } => Ok(drive_from_theta(theta_deg.to_radians())),
            DriveConfig::Concurrence { concurrence } => drive_with_concurrence(*concurrence).map_err(bad),
            DriveConfig::Matrix { re, im } => {
                DriveMatrix::normalized(ComplexMatrix::from_fn(2, 2, |r, c| C64::new(re[r][c], im[r][c]))).map_err(bad)
            }
        }
    }
}

/// One-sided conversion applied to the second qubit of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub drive: DriveConfig,
    pub kt: f64,
}

impl ChannelConfig {
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix, CliError> {
        let spec = ChannelSpec::new(self.drive.build()?, self.kt).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(one_sided_apply(rho, &spec)?.0)
    }
}

/// Angles in degrees: an explicit list or an inclusive evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    List(Vec<f64>),
    Range(AngleRange),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl AngleSpec {
    pub fn degrees(&self) -> Result<Vec<f64>, CliError> {
        let v = match self {
            AngleSpec::List(v) => v.clone(),
            AngleSpec::Range(r) => angle_grid(r.start, r.stop, r.points),
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config("angle grid must be non-empty and finite".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveRunConfig {
    pub theta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub mean_pairs: f64,
    #[serde(default = "default_settings")]
    pub settings: ProjectorSetKind,
    #[serde(default)]
    pub mle: MleOptions,
}

fn default_settings() -> ProjectorSetKind {
    ProjectorSetKind::ThirtySix
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepThetaConfig {
    pub theta_deg: AngleSpec,
    pub input: StateConfig,
    pub kt: f64,
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiConfig {
    pub drive: DriveConfig,
    pub kt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    pub length_mm: f64,
    /// Omitted: tuned to degenerate phase matching of the pump.
    #[serde(default)]
    pub poling_period_um: Option<f64>,
    pub temperature_c: f64,
    pub interaction: Interaction,
    /// Bundled model name or path to a dispersion file.
    pub dispersion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HgConfig {
    pub mode_duration_fs: f64,
    pub n_modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub drive_fwhm_fs: f64,
    #[serde(default)]
    pub time_grid: TimeGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsaConfig {
    pub pump: PumpSpec,
    pub crystal: CrystalConfig,
    pub filter_fwhm_nm: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_photon")]
    pub photon: Photon,
    #[serde(default)]
    pub hg: Option<HgConfig>,
    #[serde(default)]
    pub delay: Option<DelayConfig>,
    #[serde(default)]
    pub write_jsa_csv: bool,
}

fn default_photon() -> Photon {
    Photon::Idler
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoConfig {
    pub state: StateConfig,
    #[serde(default)]
    pub channel: Option<ChannelConfig>,
    #[serde(default = "default_settings")]
    pub settings: ProjectorSetKind,
    pub mean_pairs: f64,
    pub mc_samples: usize,
    #[serde(default)]
    pub mle: MleOptions,
    /// Measured counts to reconstruct instead of simulating.
    #[serde(default)]
    pub counts_csv: Option<PathBuf>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellConfig {
    pub state: StateConfig,
    #[serde(default)]
    pub channel: Option<ChannelConfig>,
    pub phi_deg: AngleSpec,
    #[serde(default)]
    pub mean_pairs: Option<f64>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyConfig {
    pub r_up_hz: f64,
    pub r_herald_hz: f64,
    pub eta_snspd: f64,
    pub eta_apd: f64,
    #[serde(default)]
    pub coincidence: Option<CoincidenceRates>,
}

/// Pair rates at the source and after conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoincidenceRates {
    pub source_pairs_hz: f64,
    pub converted_pairs_hz: f64,
}

// ------------------------------------------------------------- summaries

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub mode: Mode,
    pub results: Value,
    pub outputs: Vec<String>,
}

struct Outcome {
    hash: String,
    results: Value,
    mode: Mode,
    seed: u64,
}

impl Outcome {
    fn deterministic(hash: String, results: Value) -> Self {
        Self { hash, results, mode: Mode::Exact, seed: 0 }
    }
}

struct Run<'a> {
    global: &'a GlobalArgs,
    config_dir: PathBuf,
    outputs: Vec<String>,
}

impl Run<'_> {
    fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = self.global.out.join(name);
        fs::write(&path, buf).map_err(|e| CliError::Output { path, message: e.to_string() })?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn mode(&self, config: Option<Mode>) -> Mode {
        if self.global.sampled {
            Mode::Sampled
        } else if self.global.exact {
            Mode::Exact
        } else {
            config.unwrap_or(Mode::Exact)
        }
    }

    fn seed(&self, config: Option<u64>) -> u64 {
        self.global.seed.or(config).unwrap_or(0)
    }
}

fn load_config<T: DeserializeOwned>(path: Option<&Path>) -> Result<T, CliError> {
    let path = path.ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let bytes = fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// SHA-256 of the compact JSON form of the effective config.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent seed for a sub-task of a run.
fn derive_seed(seed: u64, index: u64) -> u64 {
    sample_rng(seed, index).next_u64()
}

fn matrix_json(m: &ComplexMatrix) -> Value {
    let part = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
        (0..m.rows()).map(|r| (0..m.cols()).map(|c| f(&m[(r, c)])).collect()).collect()
    };
    json!({ "re": part(|z| z.re), "im": part(|z| z.im) })
}

fn metric_json(m: &MetricWithError) -> Value {
    json!({ "value": m.value, "std": m.std, "n_samples": m.n_samples })
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Output { path: PathBuf::from("<csv>"), message: e.to_string() }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

// ------------------------------------------------------------- pipelines

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaRow {
    pub theta_deg: f64,
    pub concurrence: f64,
    pub chsh_max: f64,
    pub bound: f64,
}

/// Angle sweep: one-sided conversion of the input state for each QWP
/// angle. In sampled mode the metrics come from a maximum-likelihood
/// reconstruction of simulated counts.
pub fn sweep_theta(cfg: &SweepThetaConfig, mode: Mode, seed: u64) -> Result<Vec<ThetaRow>, CliError> {
    let rho0 = cfg.input.build()?;
    let c0 = concurrence(&rho0)?;
    let thetas = cfg.theta_deg.degrees()?;
    if !(cfg.kt > 0.0) || !cfg.kt.is_finite() {
        return Err(CliError::Config(format!("kt must be positive, got {}", cfg.kt)));
    }
    let sampling = match mode {
        Mode::Exact => None,
        Mode::Sampled => Some(
            cfg.sampling.as_ref().ok_or_else(|| CliError::Config("sampled mode needs a \"sampling\" block".into()))?,
        ),
    };
    thetas
        .par_iter()
        .enumerate()
        .map(|(i, &deg)| {
            let spec = ChannelSpec::new(drive_from_theta(deg.to_radians()), cfg.kt)?;
            let (rho, _) = one_sided_apply(&rho0, &spec)?;
            let bound = choi_concurrence_closed(&spec)? * c0;
            let rho = match sampling {
                None => rho,
                Some(s) => {
                    let recs = simulate_counts(&rho, &projector_set(s.settings), s.mean_pairs, derive_seed(seed, i as u64))?;
                    mle_reconstruct(&recs, &s.mle)?
                }
            };
            Ok(ThetaRow { theta_deg: deg, concurrence: concurrence(&rho)?, chsh_max: chsh_max(&rho)?, bound })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChoiRow {
    pub kt: f64,
    pub choi_concurrence: f64,
    pub duality_distance: f64,
}

pub fn choi_rows(cfg: &ChoiConfig) -> Result<Vec<ChoiRow>, CliError> {
    let a = cfg.drive.build()?;
    if cfg.kt.is_empty() {
        return Err(CliError::Config("kt list is empty".into()));
    }
    let rho_d = coherence_matrix(&a);
    cfg.kt
        .iter()
        .map(|&kt| {
            let spec = ChannelSpec::new(a.clone(), kt).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(ChoiRow {
                kt,
                choi_concurrence: choi_concurrence_closed(&spec)?,
                duality_distance: choi_state(&spec)?.frobenius_distance(&rho_d),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JsaReport {
    pub poling_period_um: f64,
    pub purity: f64,
    pub schmidt_number: f64,
    pub schmidt_probabilities: Vec<f64>,
    pub photon_purity: f64,
    pub hg_probabilities: Option<Vec<f64>>,
    pub pump_overlap: f64,
    pub delay_fwhm_fs: Option<f64>,
}

fn dispersion_model(name: &str, base: &Path) -> Result<DispersionModel, CliError> {
    match DispersionModel::bundled(name) {
        Some(m) => Ok(m),
        None => {
            let p = Path::new(name);
            let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            DispersionModel::load(&p).map_err(|e| CliError::Config(format!("dispersion {name:?}: {e}")))
        }
    }
}

/// Builds the crystal, resolving an omitted poling period by tuning.
pub fn jsa_crystal(cfg: &JsaConfig, base: &Path) -> Result<CrystalSpec, CliError> {
    let c = &cfg.crystal;
    let disp = dispersion_model(&c.dispersion, base)?;
    let period = match c.poling_period_um {
        Some(p) => p,
        None => tuned_poling_period_um(&disp, c.interaction, cfg.pump.center_wavelength_nm, c.temperature_c)?,
    };
    CrystalSpec::new(c.length_mm, period, c.temperature_c, c.interaction, disp).map_err(|e| CliError::Config(e.to_string()))
}

/// Runs the spectral pipeline and returns the report plus the JSA itself.
pub fn jsa_report(cfg: &JsaConfig, base: &Path) -> Result<(JsaReport, crate::spectral::JsaGrid), CliError> {
    let crystal = jsa_crystal(cfg, base)?;
    let grid = compute_jsa(&cfg.pump, &crystal, cfg.filter_fwhm_nm, &cfg.grid)?;
    let s = schmidt(&grid)?;
    let state = reduced_density(&grid, cfg.photon)?;
    let hg = match &cfg.hg {
        Some(h) => Some(hg_mode_probabilities(&state, h.mode_duration_fs, h.n_modes)?),
        None => None,
    };
    let delay = match &cfg.delay {
        Some(d) => {
            let drive = PumpSpec { center_wavelength_nm: cfg.pump.center_wavelength_nm, fwhm_duration_fs: d.drive_fwhm_fs };
            Some(coincidence_delay_width(&state, &drive, &d.time_grid)?)
        }
        None => None,
    };
    let report = JsaReport {
        poling_period_um: crystal.poling_period_um,
        purity: heralded_purity(&s),
        schmidt_number: schmidt_number(&s),
        photon_purity: state.purity(),
        hg_probabilities: hg,
        pump_overlap: pump_overlap(&state, &cfg.pump)?,
        delay_fwhm_fs: delay,
        schmidt_probabilities: s.probabilities,
    };
    Ok((report, grid))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomoOutcome {
    pub target: Option<DensityMatrix>,
    pub records: Vec<CountRecord>,
    pub reconstruction: DensityMatrix,
    pub concurrence: MetricWithError,
    pub fidelity_to_target: Option<MetricWithError>,
}

fn tomo_target(state: &StateConfig, channel: Option<&ChannelConfig>) -> Result<DensityMatrix, CliError> {
    let rho = state.build()?;
    match channel {
        Some(ch) => ch.apply(&rho),
        None => Ok(rho),
    }
}

pub fn run_tomography(cfg: &TomoConfig, mode: Mode, seed: u64, base: &Path) -> Result<TomoOutcome, CliError> {
    if cfg.mc_samples < 2 {
        return Err(CliError::Config("mc_samples must be at least 2".into()));
    }
    let (target, records) = match &cfg.counts_csv {
        Some(p) => {
            let p = if p.is_absolute() { p.clone() } else { base.join(p) };
            let file = fs::File::open(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            (None, read_records_csv(file)?)
        }
        None => {
            let target = tomo_target(&cfg.state, cfg.channel.as_ref())?;
            let settings = projector_set(cfg.settings);
            let recs = match mode {
                Mode::Exact => expected_counts(&target, &settings, cfg.mean_pairs)?,
                Mode::Sampled => simulate_counts(&target, &settings, cfg.mean_pairs, derive_seed(seed, 0))?,
            };
            (Some(target), recs)
        }
    };
    let reconstruction = mle_reconstruct(&records, &cfg.mle)?;
    let mc_seed = derive_seed(seed, 1);
    let conc = |r: &DensityMatrix| concurrence(r).map_err(|e| TomoError::Metric(e.to_string()));
    let concurrence = monte_carlo_metric(&records, conc, cfg.mc_samples, mc_seed, &cfg.mle)?;
    let fidelity_to_target = match &target {
        Some(t) => {
            let fid = |r: &DensityMatrix| fidelity(r, t).map_err(|e| TomoError::Metric(e.to_string()));
            Some(monte_carlo_metric(&records, fid, cfg.mc_samples, mc_seed, &cfg.mle)?)
        }
        None => None,
    };
    Ok(TomoOutcome { target, records, reconstruction, concurrence, fidelity_to_target })
}

pub fn bell_points(cfg: &BellConfig, mode: Mode, seed: u64) -> Result<Vec<SweepPoint>, CliError> {
    let rho = tomo_target(&cfg.state, cfg.channel.as_ref())?;
    let phis: Vec<f64> = cfg.phi_deg.degrees()?.iter().map(|d| d.to_radians()).collect();
    let sweep_mode = match mode {
        Mode::Exact => SweepMode::Exact,
        Mode::Sampled => SweepMode::Sampled {
            mean_pairs: cfg.mean_pairs.ok_or_else(|| CliError::Config("sampled mode needs \"mean_pairs\"".into()))?,
            seed,
        },
    };
    Ok(chsh_sweep(&rho, &phis, sweep_mode)?)
}

// --------------------------------------------------------------- commands

fn cmd_drive(run: &mut Run, theta: Option<f64>) -> Result<Outcome, CliError> {
    let cfg = match (theta, &run.global.config) {
        (Some(t), _) => DriveRunConfig { theta_deg: t },
        (None, Some(p)) => load_config(Some(p))?,
        (None, None) => return Err(CliError::Config("drive needs --theta or --config".into())),
    };
    if !cfg.theta_deg.is_finite() {
        return Err(CliError::Config("theta must be finite".into()));
    }
    let a = drive_from_theta(cfg.theta_deg.to_radians());
    let rho_d = coherence_matrix(&a);
    let results = json!({
        "theta_deg": cfg.theta_deg,
        "drive_matrix": matrix_json(a.matrix()),
        "coherence_matrix": matrix_json(rho_d.matrix()),
        "concurrence": drive_concurrence(&a),
    });
    Ok(Outcome::deterministic(config_hash(&cfg), results))
}

fn cmd_sweep_theta(run: &mut Run) -> Result<Outcome, CliError> {
    let cfg: SweepThetaConfig = load_config(run.global.config.as_deref())?;
    let mode = run.mode(cfg.mode);
    let seed = run.seed(cfg.seed);
    let rows = sweep_theta(&cfg, mode, seed)?;
    run.write("sweep_theta.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["theta_deg", "concurrence", "chsh_max", "bound"]).map_err(csv_err)?;
        for r in &rows {
            w.write_record([r.theta_deg, r.concurrence, r.chsh_max, r.bound].map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush().map_err(|e| csv_err(e.into()))
    })?;
    let c0 = concurrence(&cfg.input.build()?)?;
    let max_excess = rows.iter().map(|r| r.concurrence - r.bound).fold(f64::NEG_INFINITY, f64::max);
    let max_dev_cos = rows
        .iter()
        .map(|r| (r.concurrence - c0 * (2.0 * r.theta_deg.to_radians()).cos().abs()).abs())
        .fold(0.0, f64::max);
    let results = json!({
        "input_concurrence": c0,
        "points": rows.len(),
        "max_concurrence_minus_bound": max_excess,
        "max_abs_deviation_from_c0_cos2theta": max_dev_cos,
        "violating_points": rows.iter().filter(|r| r.chsh_max > 2.0).count(),
    });
    Ok(Outcome { hash: config_hash(&(&cfg, mode, seed)), results, mode, seed })
}

fn cmd_choi(run: &mut Run) -> Result<Outcome, CliError> {
    let cfg: ChoiConfig = load_config(run.global.config.as_deref())?;
    let rows = choi_rows(&cfg)?;
    run.write("choi.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["kt", "choi_concurrence", "duality_distance"]).map_err(csv_err)?;
        for r in &rows {
            w.write_record([r.kt, r.choi_concurrence, r.duality_distance].map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush().map_err(|e| csv_err(e.into()))
    })?;
    let kts: Vec<f64> = rows.iter().map(|r| r.kt).collect();
    let dists: Vec<f64> = rows.iter().map(|r| r.duality_distance).collect();
    let results = json!({
        "drive_concurrence": drive_concurrence(&cfg.drive.build()?),
        "points": rows.len(),
        "duality_convergence_slope": loglog_slope(&kts, &dists),
    });
    Ok(Outcome::deterministic(config_hash(&cfg), results))
}

fn cmd_jsa(run: &mut Run) -> Result<Outcome, CliError> {
    let cfg: JsaConfig = load_config(run.global.config.as_deref())?;
    let (report, grid) = jsa_report(&cfg, &run.config_dir)?;
    run.write("jsa.bin", |buf| Ok(write_jsa_binary(&grid, buf)?))?;
    if cfg.write_jsa_csv {
        run.write("jsa.csv", |buf| Ok(write_jsa_csv(&grid, buf)?))?;
    }
    run.write("schmidt.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["k", "probability"]).map_err(csv_err)?;
        for (k, p) in report.schmidt_probabilities.iter().enumerate() {
            w.write_record([k.to_string(), p.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| csv_err(e.into()))
    })?;
    if let Some(hg) = &report.hg_probabilities {
        run.write("hg_modes.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["n", "probability"]).map_err(csv_err)?;
            for (n, p) in hg.iter().enumerate() {
                w.write_record([n.to_string(), p.to_string()]).map_err(csv_err)?;
            }
            w.flush().map_err(|e| csv_err(e.into()))
        })?;
    }
    let results = json!({
        "poling_period_um": report.poling_period_um,
        "heralded_purity": report.purity,
        "schmidt_number": report.schmidt_number,
        "photon_purity": report.photon_purity,
        "hg0_probability": report.hg_probabilities.as_ref().map(|v| v[0]),
        "pump_overlap": report.pump_overlap,
        "delay_fwhm_fs": report.delay_fwhm_fs,
    });
    Ok(Outcome::deterministic(config_hash(&cfg), results))
}

fn cmd_tomo(run: &mut Run) -> Result<Outcome, CliError> {
    let cfg: TomoConfig = load_config(run.global.config.as_deref())?;
    let mode = run.mode(cfg.mode);
    let seed = run.seed(cfg.seed);
    let out = run_tomography(&cfg, mode, seed, &run.config_dir)?;
    if cfg.counts_csv.is_none() {
        run.write("tomo_counts.csv", |buf| Ok(write_records_csv(&out.records, buf)?))?;
    }
    let m = out.reconstruction.matrix().clone();
    run.write("tomo_rho.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["row", "col", "re", "im"]).map_err(csv_err)?;
        for r in 0..4 {
            for c in 0..4 {
                let z = m[(r, c)];
                w.write_record([r.to_string(), c.to_string(), z.re.to_string(), z.im.to_string()]).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| csv_err(e.into()))
    })?;
    let rho = &out.reconstruction;
    let results = json!({
        "reconstruction": matrix_json(rho.matrix()),
        "concurrence_point": concurrence(rho)?,
        "concurrence": metric_json(&out.concurrence),
        "purity": purity(rho),
        "fidelity_to_phi_plus": fidelity(rho, &bell_state(BellLabel::PhiPlus))?,
        "fidelity_to_target": out.fidelity_to_target.as_ref().map(metric_json),
        "target_concurrence": match &out.target { Some(t) => Some(concurrence(t)?), None => None },
        "total_counts": out.records.iter().map(|r| r.counts).sum::<u64>(),
    });
    Ok(Outcome { hash: config_hash(&(&cfg, mode, seed)), results, mode, seed })
}

fn cmd_bell(run: &mut Run) -> Result<Outcome, CliError> {
    let cfg: BellConfig = load_config(run.global.config.as_deref())?;
    let mode = run.mode(cfg.mode);
    let seed = run.seed(cfg.seed);
    let points = bell_points(&cfg, mode, seed)?;
    run.write("bell_sweep.csv", |buf| Ok(write_sweep_csv(&points, buf)?))?;
    let best = sweep_max(&points).expect("non-empty grid");
    let rho = tomo_target(&cfg.state, cfg.channel.as_ref())?;
    let results = json!({
        "max_b": best.b,
        "argmax_phi_deg": best.phi.to_degrees(),
        "b_std_at_max": best.b_std,
        "chsh_max": chsh_max(&rho)?,
        "points": points.len(),
    });
    Ok(Outcome { hash: config_hash(&(&cfg, mode, seed)), results, mode, seed })
}

fn cmd_efficiency(run: &mut Run, args: [Option<f64>; 4]) -> Result<Outcome, CliError> {
    let cfg = match args {
        [Some(r_up_hz), Some(r_herald_hz), Some(eta_snspd), Some(eta_apd)] => {
            EfficiencyConfig { r_up_hz, r_herald_hz, eta_snspd, eta_apd, coincidence: None }
        }
        [None, None, None, None] => load_config(run.global.config.as_deref())?,
        _ => return Err(CliError::Config("efficiency needs all four of R_UP R_HERALD ETA_SNSPD ETA_APD".into())),
    };
    let eta = estimate_efficiency(cfg.r_up_hz, cfg.r_herald_hz, cfg.eta_snspd, cfg.eta_apd)?;
    let coincidence = match &cfg.coincidence {
        Some(c) => Some(estimate_efficiency(c.converted_pairs_hz, c.source_pairs_hz, cfg.eta_snspd, cfg.eta_apd)?),
        None => None,
    };
    let results = json!({
        "eta": eta,
        "eta_percent": 100.0 * eta,
        "eta_coincidence": coincidence,
        "eta_coincidence_percent": coincidence.map(|e| 100.0 * e),
    });
    Ok(Outcome::deterministic(config_hash(&cfg), results))
}

/// Executes a parsed command, writes its artifacts and summary, and returns
/// the summary.
pub fn run(cli: &Cli) -> Result<Summary, CliError> {
    let g = &cli.global;
    fs::create_dir_all(&g.out).map_err(|e| CliError::Output { path: g.out.clone(), message: e.to_string() })?;
    let config_dir = g
        .config
        .as_ref()
        .and_then(|p| p.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut run = Run { global: g, config_dir, outputs: Vec::new() };
    let outcome = match &cli.command {
        Command::Drive { theta } => cmd_drive(&mut run, *theta)?,
        Command::SweepTheta => cmd_sweep_theta(&mut run)?,
        Command::Choi => cmd_choi(&mut run)?,
        Command::Jsa => cmd_jsa(&mut run)?,
        Command::Tomo => cmd_tomo(&mut run)?,
        Command::Bell => cmd_bell(&mut run)?,
        Command::Efficiency { r_up_hz, r_herald_hz, eta_snspd, eta_apd } => {
            cmd_efficiency(&mut run, [*r_up_hz, *r_herald_hz, *eta_snspd, *eta_apd])?
        }
    };
    let summary_name = format!("{}_summary.json", cli.command.name().replace('-', "_"));
    let mut outputs = std::mem::take(&mut run.outputs);
    outputs.push(summary_name.clone());
    let summary = Summary {
        command: cli.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: outcome.hash,
        seed: outcome.seed,
        mode: outcome.mode,
        results: outcome.results,
        outputs,
    };
    run.write(&summary_name, |buf| {
        serde_json::to_writer_pretty(&mut *buf, &summary)
            .map_err(|e| CliError::Output { path: summary_name.clone().into(), message: e.to_string() })?;
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(summary)
}

/// Parses `args` (program name first), runs, prints the summary and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            let mut stdout = std::io::stdout().lock();
            let _ = serde_json::to_writer_pretty(&mut stdout, &summary);
            let _ = writeln!(stdout);
            0
        }
        Err(e) => {
            eprintln!("qfc {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

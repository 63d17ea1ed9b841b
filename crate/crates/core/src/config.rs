//! TOML run configuration.
//!
//! A config has a `[model]`, a `[bath]` and a `[run]` table, plus optional
//! `[pulse]` and `[absorption]` tables. Relative file paths resolve against
//! the directory holding the config file. See `presets/` for annotated
//! examples.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bath::{BathSpec, TimeGrid};
use crate::error::{Error, Result};
use crate::model::{DipoleBasis, SiteBasisModel};
use crate::pulses::{discretize_gaussian, step_pulse, GaussianPulseSpec, PulseSchedule, MAX_SEGMENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub ground_energy: f64,
    /// E_n in cm⁻¹. Omit when `hamiltonian_file` is given.
    pub site_energies: Option<Vec<f64>>,
    /// Symmetric M×M coupling matrix with zero diagonal. Defaults to zero.
    pub couplings: Option<Vec<Vec<f64>>>,
    /// CSV file holding the full M×M site Hamiltonian (diagonal = E_n).
    pub hamiltonian_file: Option<PathBuf>,
    #[serde(default)]
    pub dipoles: Vec<f64>,
    #[serde(default)]
    pub dipole_basis: DipoleBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathBlock {
    /// λ in cm⁻¹ for the Ohmic form.
    pub reorganization: Option<f64>,
    /// ω_c in cm⁻¹ for the Ohmic form.
    pub cutoff: Option<f64>,
    /// Kelvin.
    pub temperature: f64,
    /// Two-column (ω, J) file replacing the Ohmic form.
    pub spectral_density_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Step,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseBlock {
    pub shape: PulseShape,
    /// Carrier frequency in cm⁻¹.
    pub omega: f64,
    /// Exciton–field couplings (peak values for a Gaussian), cm⁻¹.
    pub g: Vec<f64>,
    /// Step pulse duration, fs.
    pub t1: Option<f64>,
    /// Gaussian center; defaults to `width` so the pulse starts at t = 0.
    pub center: Option<f64>,
    pub width: Option<f64>,
    /// Relative area tolerance of the Gaussian discretization.
    pub tolerance: Option<f64>,
}

fn default_dt() -> f64 {
    1.0
}
fn default_stride() -> usize {
    1
}
fn default_trajectories() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// 0 starts in the electronic ground state, n ≥ 1 on site n.
    #[serde(default)]
    pub initial_site: usize,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorptionBlock {
    pub omega_min: f64,
    pub omega_max: f64,
    #[serde(default = "default_dt")]
    pub omega_step: f64,
}

/// The file as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: ModelBlock,
    pub bath: BathBlock,
    pub pulse: Option<PulseBlock>,
    pub run: RunBlock,
    pub absorption: Option<AbsorptionBlock>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config { key: "<file>".into(), reason: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }
}

/// Command-line overrides of `[run]` keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub trajectories: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub stride: Option<usize>,
    pub output: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, raw: &mut RawConfig) {
        if let Some(n) = self.trajectories {
            raw.run.trajectories = n;
        }
        if let Some(s) = self.seed {
            raw.run.seed = s;
        }
        if let Some(dt) = self.dt {
            raw.run.dt = dt;
        }
        if let Some(k) = self.stride {
            raw.run.stride = k;
        }
        if let Some(p) = &self.output {
            raw.run.output = Some(p.clone());
        }
    }
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub base_dir: PathBuf,
    pub model: SiteBasisModel,
    pub baths: Vec<BathSpec>,
    pub schedule: PulseSchedule,
    /// Relative area error of a discretized Gaussian, zero otherwise.
    pub pulse_area_error: f64,
    pub grid: TimeGrid,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut raw = RawConfig::from_path(path)?;
    overrides.apply(&mut raw);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunConfig::from_raw(raw, base)
}

fn invariant(text: &str) -> Error {
    Error::ConfigInvariant { invariant: text.into() }
}

fn key(key: &str, reason: impl ToString) -> Error {
    Error::Config { key: key.into(), reason: reason.to_string() }
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig, base_dir: PathBuf) -> Result<Self> {
        let model = build_model(&raw.model, &base_dir)?;
        let baths = vec![build_bath(&raw.bath, &base_dir)?];
        let run = &raw.run;
        if run.trajectories < 1 {
            return Err(invariant("run.trajectories >= 1"));
        }
        if run.stride < 1 {
            return Err(invariant("run.stride >= 1"));
        }
        if !(run.dt > 0.0) {
            return Err(invariant("run.dt > 0"));
        }
        if !(run.t_max > 0.0) {
            return Err(invariant("run.t_max > 0"));
        }
        let grid = TimeGrid::new(run.dt, run.t_max).map_err(|_| invariant("run.dt divides run.t_max"))?;
        if run.initial_site > model.num_sites() {
            return Err(invariant("run.initial_site <= number of sites"));
        }
        let (schedule, pulse_area_error) = match &raw.pulse {
            None => (PulseSchedule::empty(), 0.0),
            Some(p) => build_pulse(p, model.num_sites())?,
        };
        if let Some(a) = &raw.absorption {
            if !(a.omega_max > a.omega_min) || !(a.omega_step > 0.0) {
                return Err(invariant("absorption.omega_min < absorption.omega_max, absorption.omega_step > 0"));
            }
        }
        Ok(Self { raw, base_dir, model, baths, schedule, pulse_area_error, grid })
    }

    pub fn run(&self) -> &RunBlock {
        &self.raw.run
    }

    /// Output path resolved against the config directory.
    pub fn output_path(&self) -> Option<PathBuf> {
        self.raw.run.output.as_ref().map(|p| resolve(&self.base_dir, p))
    }

    /// The config echoed back as TOML, defaults included.
    pub fn echo(&self) -> String {
        toml::to_string(&self.raw).unwrap_or_default()
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn existing(base: &Path, p: &Path, name: &str) -> Result<PathBuf> {
    let full = resolve(base, p);
    if !full.is_file() {
        return Err(Error::ConfigInvariant { invariant: format!("{name} exists ({})", full.display()) });
    }
    Ok(full)
}

/// Reads a square site Hamiltonian from a comma or whitespace separated
/// file; `#` starts a comment.
pub fn read_hamiltonian(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| key("model.hamiltonian_file", format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        rows.push(row);
    }
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(key("model.hamiltonian_file", format!("{} is not a square matrix", path.display())));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn build_model(block: &ModelBlock, base: &Path) -> Result<SiteBasisModel> {
    let (energies, couplings) = match (&block.hamiltonian_file, &block.site_energies) {
        (Some(_), Some(_)) => {
            return Err(key("model.site_energies", "give either site_energies or hamiltonian_file, not both"));
        }
        (None, None) => return Err(key("model.site_energies", "missing (or give model.hamiltonian_file)")),
        (Some(file), None) => {
            if block.couplings.is_some() {
                return Err(key("model.couplings", "not allowed together with hamiltonian_file"));
            }
            let h = read_hamiltonian(&existing(base, file, "model.hamiltonian_file")?)?;
            let m = h.nrows();
            let energies: Vec<f64> = (0..m).map(|i| h[(i, i)]).collect();
            let mut j = h;
            j.fill_diagonal(0.0);
            (energies, j)
        }
        (None, Some(e)) => {
            let m = e.len();
            let j = match &block.couplings {
                None => DMatrix::zeros(m, m),
                Some(rows) => {
                    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                        return Err(key("model.couplings", format!("expected a {m}x{m} matrix")));
                    }
                    DMatrix::from_fn(m, m, |a, b| rows[a][b])
                }
            };
            (e.clone(), j)
        }
    };
    SiteBasisModel::new(block.ground_energy, energies, couplings, block.dipoles.clone(), block.dipole_basis)
        .map_err(|e| Error::ConfigInvariant { invariant: format!("model: {e}") })
}

fn build_bath(block: &BathBlock, base: &Path) -> Result<BathSpec> {
    if !(block.temperature > 0.0) || !block.temperature.is_finite() {
        return Err(invariant("bath.temperature > 0"));
    }
    match (&block.spectral_density_file, block.reorganization, block.cutoff) {
        (Some(file), None, None) => {
            let path = existing(base, file, "bath.spectral_density_file")?;
            BathSpec::from_file(&path, block.temperature)
        }
        (Some(_), _, _) => Err(key("bath.spectral_density_file", "not allowed together with reorganization/cutoff")),
        (None, Some(lambda), Some(cutoff)) => {
            if !(lambda >= 0.0) {
                return Err(invariant("bath.reorganization >= 0"));
            }
            if !(cutoff > 0.0) {
                return Err(invariant("bath.cutoff > 0"));
            }
            BathSpec::ohmic(lambda, cutoff, block.temperature)
        }
        (None, None, _) => Err(key("bath.reorganization", "missing")),
        (None, _, None) => Err(key("bath.cutoff", "missing")),
    }
}

fn build_pulse(p: &PulseBlock, sites: usize) -> Result<(PulseSchedule, f64)> {
    if p.g.len() != sites {
        return Err(key("pulse.g", format!("{} couplings given for {sites} excitons", p.g.len())));
    }
    if !p.omega.is_finite() {
        return Err(key("pulse.omega", "must be finite"));
    }
    match p.shape {
        PulseShape::Step => {
            let t1 = p.t1.ok_or_else(|| key("pulse.t1", "missing for shape = \"step\""))?;
            if !(t1 > 0.0) {
                return Err(invariant("pulse.t1 > 0"));
            }
            Ok((step_pulse(t1, p.omega, p.g.clone())?, 0.0))
        }
        PulseShape::Gaussian => {
            let width = p.width.ok_or_else(|| key("pulse.width", "missing for shape = \"gaussian\""))?;
            if !(width > 0.0) {
                return Err(invariant("pulse.width > 0"));
            }
            let center = p.center.unwrap_or(width);
            if center - width < 0.0 {
                return Err(invariant("pulse.center >= pulse.width"));
            }
            let tolerance = p.tolerance.unwrap_or(1e-6);
            if !(tolerance > 0.0) {
                return Err(invariant("pulse.tolerance > 0"));
            }
            let spec = GaussianPulseSpec {
                center,
                width,
                peak: p.g.clone(),
                carrier: p.omega,
                tolerance,
                max_segments: MAX_SEGMENTS,
            };
            let d = discretize_gaussian(&spec)?;
            Ok((d.schedule, d.area_error))
        }
    }
}

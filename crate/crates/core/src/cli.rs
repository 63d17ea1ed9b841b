//! Run orchestration behind the `cmrt-nmqj` binary.
//!
//! Each verb writes `<out>/<verb>.csv` plus `<out>/<verb>.manifest.json`.
//! `simulate` and `oracle` also write `<verb>.density.csv` holding the full
//! site-basis density matrix, so the two runs can be compared row by row.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::json;

use crate::bath::reorganization_energy;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{diagonalize_site_hamiltonian, ExcitonBasis};
use crate::nmqj::{run_ensemble, EnsembleOptions};
use crate::observables::{
    absorption_spectrum, concurrence, frequency_grid, site_populations, DensityMatrixSnapshot,
};
use crate::plan::{site_broadening, SimulationPlan};
use crate::rates::{plateau_estimate, BasisTag, RateTables, SiteBroadening, PLATEAU_DRIFT};

/// Environment variable overriding the worker count of `simulate`.
pub const THREADS_ENV: &str = "CMRT_NMQJ_THREADS";

/// Output directory used when neither the config nor `--out` names one.
pub const DEFAULT_OUTPUT: &str = "cmrt-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Simulate,
    Oracle,
    Rates,
    Absorption,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Simulate => "simulate",
            Verb::Oracle => "oracle",
            Verb::Rates => "rates",
            Verb::Absorption => "absorption",
        }
    }
}

/// Files written by one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub csv: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub warnings: Vec<String>,
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn run_command(verb: Verb, config: &RunConfig, workers: Option<usize>) -> Result<Artifacts> {
    let dir = config.output_path().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut warnings = Vec::new();
    let mut extra = json!({});
    match verb {
        Verb::Simulate | Verb::Oracle => {
            let plan = SimulationPlan::build(&config.model, &config.baths, &config.schedule, config.grid)?;
            let initial = plan.site_ket(config.run().initial_site)?;
            let stride = config.run().stride;
            let (times, states) = if verb == Verb::Simulate {
                let options = EnsembleOptions {
                    trajectories: config.run().trajectories,
                    seed: config.run().seed,
                    stride,
                    workers,
                };
                let run = run_ensemble(&plan, &initial, &options)?;
                extra = json!({
                    "registry_entries": run.registry_len,
                    "superposition_entries": run.superposition_entries,
                    "eigen_entries": run.eigen_entries,
                });
                (run.times, run.states)
            } else {
                let rho0 = &initial * initial.adjoint();
                let traj = plan.oracle(&rho0, stride)?;
                let worst = traj.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                extra = json!({ "min_eigenvalue": worst });
                (traj.times, traj.states)
            };
            let snaps: Vec<DensityMatrixSnapshot> = times
                .iter()
                .zip(&states)
                .map(|(t, rho)| DensityMatrixSnapshot::from_exciton(plan.exciton(), rho, plan.carrier(), *t))
                .collect();
            files.push((dir.join(format!("{}.csv", verb.name())), observables_csv(&snaps)?));
            files.push((dir.join(format!("{}.density.csv", verb.name())), density_csv(&snaps)));
        }
        Verb::Rates => {
            let (exciton, broadening) = prepare(config)?;
            let tables = RateTables::build(exciton.levels(), &broadening, BasisTag::Exciton, None)?;
            files.push((dir.join("rates.csv"), rates_csv(&tables)));
        }
        Verb::Absorption => {
            let (exciton, broadening) = prepare(config)?;
            let tables = RateTables::build(exciton.levels(), &broadening, BasisTag::Exciton, None)?;
            // a non-converged plateau only degrades the relaxation width, so
            // the window mean is used and the run carries a warning
            let (stationary, drift) = plateau_estimate(&tables);
            if drift > PLATEAU_DRIFT {
                warnings.push(format!("R^dis plateau not converged (relative drift {drift:e}); using the window mean"));
            }
            for (k, kp, r) in &stationary.negative {
                warnings.push(format!("negative plateau R^dis[{k}][{kp}] = {r:e} fs^-1"));
            }
            let omega = match &config.raw.absorption {
                Some(a) => frequency_grid(a.omega_min, a.omega_max, a.omega_step)?,
                None => default_window(&exciton)?,
            };
            let spectrum = absorption_spectrum(&exciton, &broadening, &stationary.rates, &omega)?;
            warnings.extend(spectrum.warning.clone());
            let mut csv = String::from("omega,intensity\n");
            for (w, i) in spectrum.omega.iter().zip(&spectrum.intensity) {
                let _ = writeln!(csv, "{w},{i}");
            }
            files.push((dir.join("absorption.csv"), csv));
        }
    }
    for (path, text) in &files {
        write_atomic(path, text.as_bytes())?;
    }
    let manifest = dir.join(format!("{}.manifest.json", verb.name()));
    let body = json!({
        "verb": verb.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.run().seed,
        "trajectories": config.run().trajectories,
        "pulse_segments": config.schedule.len(),
        "pulse_area_error": config.pulse_area_error,
        "outputs": files.iter().map(|(p, _)| p.display().to_string()).collect::<Vec<_>>(),
        "warnings": warnings,
        "details": extra,
        "config": config.echo(),
    });
    write_atomic(&manifest, serde_json::to_string_pretty(&body)?.as_bytes())?;
    Ok(Artifacts { csv: files.into_iter().map(|(p, _)| p).collect(), manifest, warnings })
}

fn prepare(config: &RunConfig) -> Result<(ExcitonBasis, SiteBroadening)> {
    let sites = config.model.num_sites();
    let lambda = reorganization_energy(&config.baths[0])?;
    let broadening = site_broadening(&config.baths, sites, &config.grid)?;
    let exciton = diagonalize_site_hamiltonian(&config.model, &vec![lambda; sites])?;
    Ok((exciton, broadening))
}

/// Transition energies ± 1000 cm⁻¹ in 1 cm⁻¹ steps.
fn default_window(exciton: &ExcitonBasis) -> Result<Vec<f64>> {
    let eps = exciton.shifted_energies();
    let lines: Vec<f64> = eps[1..].iter().map(|e| e - eps[0]).collect();
    let lo = lines.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lines.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    frequency_grid((lo - 1000.0).floor(), (hi + 1000.0).ceil(), 1.0)
}

/// t, P_G, P_1…P_M and, for a dimer, Re/Im ρ₂₁ and C.
pub fn observables_csv(snaps: &[DensityMatrixSnapshot]) -> Result<String> {
    let m = snaps.first().map_or(0, |s| s.num_sites());
    let mut out = String::from("t,P_G");
    for n in 1..=m {
        let _ = write!(out, ",P_{n}");
    }
    if m == 2 {
        out.push_str(",Re_rho21,Im_rho21,C");
    }
    out.push('\n');
    for s in snaps {
        let p = site_populations(s);
        let _ = write!(out, "{},{}", s.time, p.ground);
        for x in &p.sites {
            let _ = write!(out, ",{x}");
        }
        if m == 2 {
            let r = s.rho[(2, 1)];
            let _ = write!(out, ",{},{},{}", r.re, r.im, concurrence(s)?);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Every site-basis element as Re/Im column pairs, row-major (0 = ground).
pub fn density_csv(snaps: &[DensityMatrixSnapshot]) -> String {
    let l = snaps.first().map_or(0, |s| s.rho.nrows());
    let mut out = String::from("t");
    for i in 0..l {
        for j in 0..l {
            let _ = write!(out, ",Re_rho{i}{j},Im_rho{i}{j}");
        }
    }
    out.push('\n');
    for s in snaps {
        let _ = write!(out, "{}", s.time);
        for i in 0..l {
            for j in 0..l {
                let z: Complex64 = s.rho[(i, j)];
                let _ = write!(out, ",{},{}", z.re, z.im);
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a CSV written by this module back into a header and rows.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::parse::<f64>).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Domain(format!("malformed CSV: {e}")))?;
    Ok((header, rows))
}

/// R^dis_kk′(t) for k ≠ k′ and R^pd_kk′(t) for k < k′ over excited levels.
pub fn rates_csv(tables: &RateTables) -> String {
    let l = tables.levels();
    let mut out = String::from("t");
    for k in 1..l {
        for kp in (1..l).filter(|&kp| kp != k) {
            let _ = write!(out, ",Rdis_{k}_{kp}");
        }
    }
    for k in 1..l {
        for kp in k + 1..l {
            let _ = write!(out, ",Rpd_{k}_{kp}");
        }
    }
    out.push('\n');
    for i in 0..tables.len() {
        let _ = write!(out, "{}", tables.grid().time(i));
        let dis: DMatrix<f64> = tables.dis_matrix(i);
        let pd: DMatrix<f64> = tables.pd_matrix(i);
        for k in 1..l {
            for kp in (1..l).filter(|&kp| kp != k) {
                let _ = write!(out, ",{}", dis[(k, kp)]);
            }
        }
        for k in 1..l {
            for kp in k + 1..l {
                let _ = write!(out, ",{}", pd[(k, kp)]);
            }
        }
        out.push('\n');
    }
    out
}

//! Site populations, concurrence and the linear absorption spectrum.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{frame_transform_density, ExcitonBasis, FrameDirection};
use crate::rates::SiteBroadening;
use crate::units::CM_TO_RAD_PER_FS;

/// ρ(t) over {|G⟩, |1⟩, …, |M⟩} in the site basis and lab frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrixSnapshot {
    pub time: f64,
    pub rho: DMatrix<Complex64>,
}

impl DensityMatrixSnapshot {
    /// Converts a propagator state (exciton coordinates, rotating frame of
    /// `carrier`) into the lab-frame site basis.
    pub fn from_exciton(basis: &ExcitonBasis, rho: &DMatrix<Complex64>, carrier: f64, time: f64) -> Self {
        let lab = frame_transform_density(rho, carrier, time, FrameDirection::ToLab);
        let s = basis.coefficients().map(|x| Complex64::new(x, 0.0));
        Self { time, rho: s.transpose() * lab * s }
    }

    pub fn num_sites(&self) -> usize {
        self.rho.nrows() - 1
    }
}

/// Ground-state population and the population of every site.
#[derive(Debug, Clone, PartialEq)]
pub struct SitePopulations {
    pub ground: f64,
    pub sites: Vec<f64>,
}

pub fn site_populations(snapshot: &DensityMatrixSnapshot) -> SitePopulations {
    let rho = &snapshot.rho;
    SitePopulations { ground: rho[(0, 0)].re, sites: (1..rho.nrows()).map(|n| rho[(n, n)].re).collect() }
}

/// C = 2|ρ₂₁| for the first two sites.
///
/// The state space holds no doubly excited configuration, so the
/// zero/single-excitation block form is always satisfied.
pub fn concurrence(snapshot: &DensityMatrixSnapshot) -> Result<f64> {
    if snapshot.num_sites() < 2 {
        return Err(Error::Domain("concurrence needs two sites".into()));
    }
    Ok(2.0 * snapshot.rho[(2, 1)].norm())
}

/// Two-qubit density matrix over {|00⟩, |10⟩, |01⟩, |11⟩} built from sites
/// 1 and 2; the doubly excited amplitude is zero.
fn two_qubit_state(snapshot: &DensityMatrixSnapshot) -> Matrix4<Complex64> {
    let r = &snapshot.rho;
    let mut q = Matrix4::zeros();
    for a in 0..3 {
        for b in 0..3 {
            q[(a, b)] = r[(a, b)];
        }
    }
    q
}

/// Wootters concurrence of the two-site block, for validation of the
/// closed form.
///
/// Writes ρ = W W† from its eigen-decomposition and takes the singular
/// values of τ = Wᵀ (σy ⊗ σy) W, which avoids square roots of the
/// near-zero eigenvalues of ρ ρ̃.
pub fn wootters_concurrence(snapshot: &DensityMatrixSnapshot) -> Result<f64> {
    if snapshot.num_sites() != 2 {
        return Err(Error::Domain("Wootters concurrence needs exactly two sites".into()));
    }
    let rho = two_qubit_state(snapshot);
    let eig = ((rho + rho.adjoint()) * Complex64::new(0.5, 0.0)).symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..4).filter(|&i| eig.eigenvalues[i] > 1e-13 * top).collect();
    let w = DMatrix::from_fn(4, cols.len(), |r, c| {
        eig.eigenvectors[(r, cols[c])] * eig.eigenvalues[cols[c]].sqrt()
    });
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    // σy ⊗ σy
    let yy = DMatrix::from_row_slice(4, 4, &[z, z, z, -o, z, z, o, z, z, o, z, z, -o, z, z, z]);
    let tau = w.transpose() * yy * &w;
    let mut s: Vec<f64> = tau.singular_values().iter().copied().collect();
    s.resize(4, 0.0);
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok((s[0] - s[1] - s[2] - s[3]).max(0.0))
}

/// Max-normalized linear absorption spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionSpectrum {
    pub omega: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Set when χ(t) had not decayed by the end of the grid and an
    /// exponential window was applied.
    pub warning: Option<String>,
}

/// Relative |χ| below which the time transform is truncated.
pub const CHI_CUTOFF: f64 = 1e-8;

impl AbsorptionSpectrum {
    /// Local maxima as (ω, I), in ascending ω.
    pub fn peaks(&self) -> Vec<(f64, f64)> {
        let i = &self.intensity;
        (1..i.len().saturating_sub(1))
            .filter(|&j| i[j] > i[j - 1] && i[j] >= i[j + 1] && i[j] > 1e-3)
            .map(|j| (self.omega[j], i[j]))
            .collect()
    }

    /// Integral of I over [a, b) by the trapezoid rule.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        self.omega
            .windows(2)
            .zip(self.intensity.windows(2))
            .filter(|(w, _)| w[0] >= a && w[1] <= b)
            .map(|(w, y)| 0.5 * (w[1] - w[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Frequency of the smallest intensity between two frequencies.
    pub fn minimum_between(&self, a: f64, b: f64) -> f64 {
        self.omega
            .iter()
            .zip(&self.intensity)
            .filter(|(w, _)| **w > a && **w < b)
            .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .map_or(0.5 * (a + b), |(w, _)| *w)
    }
}

/// Frequencies `from..=to` in steps of `step` (cm⁻¹).
pub fn frequency_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(to > from) {
        return Err(Error::Domain("frequency grid needs from < to and step > 0".into()));
    }
    let n = ((to - from) / step).round() as usize;
    Ok((0..=n).map(|j| from + j as f64 * step).collect())
}

/// I(ω) = Re ∫₀^∞ χ(t) e^{iωt} dt with
/// χ(t) = Σ_k |μ_k0|² exp[i(ε₀ − ε_k)t − g_kkkk(t) − ½ Σ_{k′≠k} R^dis_{k′k}(∞) t].
///
/// `stationary` is the plateau matrix R^dis(∞) over all levels.
pub fn absorption_spectrum(
    basis: &ExcitonBasis,
    broadening: &SiteBroadening,
    stationary: &DMatrix<f64>,
    omega: &[f64],
) -> Result<AbsorptionSpectrum> {
    let levels = basis.levels().levels();
    let mu = basis.transition_dipoles();
    if mu.len() != levels - 1 {
        return Err(Error::InvalidModel(format!("{} transition dipoles for {} excitons", mu.len(), levels - 1)));
    }
    if stationary.nrows() != levels || stationary.ncols() != levels {
        return Err(Error::GridMismatch("stationary rate matrix has the wrong size".into()));
    }
    let grid = *broadening.grid();
    let dt = grid.dt();
    let eps = basis.shifted_energies();
    let a = basis.overlaps();

    // per exciton: line shape exp[−g_kkkk(t) − Γ_k t/2] on the grid
    let mut lines: Vec<(f64, f64, Vec<Complex64>)> = Vec::new();
    let mut chi0 = 0.0;
    for k in 1..levels {
        let weight = mu[k - 1] * mu[k - 1];
        if weight == 0.0 {
            continue;
        }
        chi0 += weight;
        let w: Vec<f64> = a.sites_of(k, k).iter().map(|x| x * x).collect();
        let half_width: f64 = 0.5 * (0..levels).filter(|&m| m != k).map(|m| stationary[(m, k)]).sum::<f64>();
        let shape: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let g: Complex64 = w.iter().enumerate().map(|(n, wn)| *wn * broadening.site(n).g(i)).sum();
                (-g - half_width * grid.time(i)).exp() * weight
            })
            .collect();
        lines.push((eps[k] - eps[0], half_width, shape));
    }
    if lines.is_empty() {
        return Err(Error::InvalidModel("all transition dipoles vanish".into()));
    }

    // truncate where the envelope of χ has decayed
    let envelope = |i: usize| lines.iter().map(|(_, _, s)| s[i].norm()).sum::<f64>();
    let cut = (0..grid.len()).find(|&i| envelope(i) < CHI_CUTOFF * chi0);
    let (len, window, warning) = match cut {
        Some(i) => (i + 1, 0.0, None),
        None => {
            let tau = grid.t_max() / 5.0;
            (
                grid.len(),
                1.0 / tau,
                Some(format!(
                    "χ(t) has not decayed below {CHI_CUTOFF:e} of χ(0) by {} fs; exponential window τ = {tau} fs applied",
                    grid.t_max()
                )),
            )
        }
    };

    let intensity: Vec<f64> = omega
        .iter()
        .map(|&w| {
            let mut total = 0.0;
            for (transition, half_width, shape) in &lines {
                let nu = CM_TO_RAD_PER_FS * (w - transition);
                let mut sum = Complex64::new(0.0, 0.0);
                for (i, s) in shape.iter().enumerate().take(len) {
                    let t = grid.time(i);
                    let f = s * Complex64::new(-window * t, nu * t).exp();
                    sum += if i == 0 { f * 0.5 } else { f };
                }
                // Euler–Maclaurin end correction, f′(0) = f(0)(iν − Γ/2 − window)
                let slope = shape[0] * Complex64::new(-half_width - window, nu);
                total += (sum * dt + slope * (dt * dt / 12.0)).re;
            }
            total
        })
        .collect();
    let peak = intensity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Domain("absorption spectrum has no positive intensity on the grid".into()));
    }
    Ok(AbsorptionSpectrum {
        omega: omega.to_vec(),
        intensity: intensity.iter().map(|x| x / peak).collect(),
        warning,
    })
}

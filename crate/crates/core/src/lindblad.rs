//! Generalized Lindblad form of the CMRT equations and a deterministic
//! density-matrix integrator used to check the jump unraveling.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::LevelBasis;
use crate::rates::RateTables;
use crate::units::CM_TO_RAD_PER_FS;

/// Which levels take part in the dephasing fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitScope {
    /// Levels 1.. only; Γ₀ is fixed at zero. Used for field-free runs,
    /// where the ground level never carries population.
    ExcitedOnly,
    /// Every level, as needed for dressed bases that mix in the ground state.
    AllLevels,
}

/// Minimum-norm least-squares solution of (Γ_k + Γ_k′)/2 = R^pd_kk′ over
/// all pairs k < k′. Returns Γ and the mean-square misfit.
pub fn fit_lindblad_dephasing(pd: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let m = pd.nrows();
    if pd.ncols() != m {
        return Err(Error::Domain("dephasing matrix must be square".into()));
    }
    if m < 2 {
        return Ok((vec![0.0; m], 0.0));
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|k| ((k + 1)..m).map(move |l| (k, l))).collect();
    let mut a = DMatrix::<f64>::zeros(pairs.len(), m);
    let mut b = DVector::<f64>::zeros(pairs.len());
    for (row, &(k, l)) in pairs.iter().enumerate() {
        a[(row, k)] = 0.5;
        a[(row, l)] = 0.5;
        b[row] = pd[(k, l)];
    }
    let pinv = a.clone().pseudo_inverse(1e-12).map_err(|e| Error::Domain(e.to_string()))?;
    let gamma = pinv * &b;
    let residual = (&a * &gamma - &b).norm_squared() / pairs.len() as f64;
    Ok((gamma.iter().copied().collect(), residual))
}

/// Mean-square displacement Σ_{k<k′}[R^pd_kk′ − (Γ_k+Γ_k′)/2]² / pairs.
pub fn dephasing_misfit(pd: &DMatrix<f64>, gamma: &[f64]) -> f64 {
    let m = gamma.len();
    let mut sum = 0.0;
    let mut count = 0;
    for k in 0..m {
        for l in (k + 1)..m {
            sum += (pd[(k, l)] - 0.5 * (gamma[k] + gamma[l])).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Γ_k(t_i) for every tabulated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingFit {
    levels: usize,
    scope: FitScope,
    gamma: Vec<f64>,
    residual: Vec<f64>,
}

impl DephasingFit {
    pub fn from_tables(tables: &RateTables, scope: FitScope) -> Result<Self> {
        let levels = tables.levels();
        let offset = match scope {
            FitScope::ExcitedOnly => 1,
            FitScope::AllLevels => 0,
        };
        let mut gamma = vec![0.0; tables.len() * levels];
        let mut residual = Vec::with_capacity(tables.len());
        for i in 0..tables.len() {
            let full = tables.pd_matrix(i);
            let sub = full.view((offset, offset), (levels - offset, levels - offset)).into_owned();
            let (g, r) = fit_lindblad_dephasing(&sub)?;
            gamma[i * levels + offset..(i + 1) * levels].copy_from_slice(&g);
            residual.push(r);
        }
        Ok(Self { levels, scope, gamma, residual })
    }

    pub fn scope(&self) -> FitScope {
        self.scope
    }

    pub fn len(&self) -> usize {
        self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residual.is_empty()
    }

    pub fn gamma(&self, i: usize) -> &[f64] {
        &self.gamma[i * self.levels..(i + 1) * self.levels]
    }

    pub fn residual(&self, i: usize) -> f64 {
        self.residual[i]
    }
}

/// Diagonal Hamiltonian plus jump channels |ε_k⟩⟨ε_k′| in one basis.
///
/// Off-diagonal entries of [`rate_matrix`](Self::rate_matrix) are R^dis,
/// the diagonal holds Γ_k. Rates are frozen on [t_i, t_{i+1}).
#[derive(Debug, Clone)]
pub struct GeneralizedLindbladGenerator {
    energies: Vec<f64>,
    tables: Arc<RateTables>,
    fit: Arc<DephasingFit>,
}

pub fn assemble_generator(
    basis: &LevelBasis,
    tables: Arc<RateTables>,
    fit: Arc<DephasingFit>,
) -> Result<GeneralizedLindbladGenerator> {
    GeneralizedLindbladGenerator::new(basis.shifted_energies.clone(), tables, fit)
}

impl GeneralizedLindbladGenerator {
    pub fn new(energies: Vec<f64>, tables: Arc<RateTables>, fit: Arc<DephasingFit>) -> Result<Self> {
        if energies.len() != tables.levels() || fit.len() != tables.len() {
            return Err(Error::GridMismatch("generator pieces disagree in size".into()));
        }
        Ok(Self { energies, tables, fit })
    }

    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn tables(&self) -> &RateTables {
        &self.tables
    }

    pub fn fit(&self) -> &DephasingFit {
        &self.fit
    }

    /// Table row used for a step starting at absolute time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.tables.grid().floor_index(t).min(self.tables.len() - 1)
    }

    pub fn dis(&self, i: usize, k: usize, kp: usize) -> f64 {
        self.tables.dis(i, k, kp)
    }

    pub fn gamma(&self, i: usize) -> &[f64] {
        self.fit.gamma(i)
    }

    pub fn rate_matrix(&self, i: usize) -> DMatrix<f64> {
        let mut r = self.tables.dis_matrix(i);
        for (k, g) in self.fit.gamma(i).iter().enumerate() {
            r[(k, k)] = *g;
        }
        r
    }

    /// Total outflow D_k = Σ_{k″≠k} R^dis_{k″k} from each level.
    pub fn outflow(&self, i: usize) -> Vec<f64> {
        let l = self.levels();
        (0..l).map(|k| (0..l).filter(|&m| m != k).map(|m| self.tables.dis(i, m, k)).sum()).collect()
    }

    /// dρ/dt at table row `i` (fs⁻¹).
    pub fn derivative(&self, i: usize, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let l = self.levels();
        let d = self.outflow(i);
        let g = self.fit.gamma(i);
        DMatrix::from_fn(l, l, |a, b| {
            if a == b {
                let gain: f64 = (0..l).filter(|&k| k != a).map(|k| self.tables.dis(i, a, k) * rho[(k, k)].re).sum();
                Complex64::new(gain - d[a] * rho[(a, a)].re, 0.0)
            } else {
                self.coherence_rate(a, b, &d, g) * rho[(a, b)]
            }
        })
    }

    fn coherence_rate(&self, a: usize, b: usize, d: &[f64], g: &[f64]) -> Complex64 {
        Complex64::new(
            -0.5 * (d[a] + d[b]) - 0.5 * (g[a] + g[b]),
            -CM_TO_RAD_PER_FS * (self.energies[a] - self.energies[b]),
        )
    }

    /// Advances ρ by `h` with the rates of row `i`: coherences exactly,
    /// populations by one classical RK4 step.
    pub fn step(&self, i: usize, rho: &DMatrix<Complex64>, h: f64) -> DMatrix<Complex64> {
        let l = self.levels();
        let d = self.outflow(i);
        let g = self.fit.gamma(i);
        let mut out = rho.clone();
        for a in 0..l {
            for b in 0..l {
                if a != b {
                    out[(a, b)] = rho[(a, b)] * (self.coherence_rate(a, b, &d, g) * h).exp();
                }
            }
        }
        let pop = DVector::from_fn(l, |k, _| rho[(k, k)].re);
        let flow = |p: &DVector<f64>| {
            DVector::from_fn(l, |a, _| {
                let gain: f64 = (0..l).filter(|&k| k != a).map(|k| self.tables.dis(i, a, k) * p[k]).sum();
                gain - d[a] * p[a]
            })
        };
        let k1 = flow(&pop);
        let k2 = flow(&(&pop + &k1 * (0.5 * h)));
        let k3 = flow(&(&pop + &k2 * (0.5 * h)));
        let k4 = flow(&(&pop + &k3 * h));
        let next = &pop + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        for k in 0..l {
            out[(k, k)] = Complex64::new(next[k], 0.0);
        }
        out
    }
}

/// Density matrices at each requested time.
#[derive(Debug, Clone)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<Complex64>>,
    /// Smallest eigenvalue of each state; negative values flag transient
    /// positivity violations.
    pub min_eigenvalues: Vec<f64>,
}

/// Largest tolerated |tr ρ − 1| over a run.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-8;

pub fn smallest_eigenvalue(rho: &DMatrix<Complex64>) -> f64 {
    let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn check_density(rho: &DMatrix<Complex64>) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::Domain("density matrix must be square".into()));
    }
    if (rho - rho.adjoint()).norm() > 1e-12 {
        return Err(Error::Domain("density matrix is not Hermitian".into()));
    }
    if (rho.trace().re - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("density matrix trace {} is not 1", rho.trace().re)));
    }
    if smallest_eigenvalue(rho) < -1e-12 {
        return Err(Error::Domain("density matrix is not positive semidefinite".into()));
    }
    Ok(())
}

/// Integrates ρ through the increasing time points `times`, starting at
/// `times[0]`. Each step uses the rates at the grid point at or below its
/// start time.
pub fn oracle_propagate(
    generator: &GeneralizedLindbladGenerator,
    rho0: &DMatrix<Complex64>,
    times: &[f64],
) -> Result<DensityTrajectory> {
    check_density(rho0)?;
    if rho0.nrows() != generator.levels() {
        return Err(Error::Domain("density matrix does not match generator size".into()));
    }
    let mut rho = rho0.clone();
    let mut out = DensityTrajectory {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        min_eigenvalues: Vec::with_capacity(times.len()),
    };
    for (n, &t) in times.iter().enumerate() {
        if n > 0 {
            let start = times[n - 1];
            rho = generator.step(generator.index_at(start), &rho, t - start);
            let drift = (rho.trace().re - 1.0).abs();
            if drift > TRACE_DRIFT_LIMIT || !drift.is_finite() {
                return Err(Error::IntegrationFailure(format!("trace drift {drift:e} at t = {t} fs")));
            }
        }
        out.times.push(t);
        out.min_eigenvalues.push(smallest_eigenvalue(&rho));
        out.states.push(rho.clone());
    }
    Ok(out)
}

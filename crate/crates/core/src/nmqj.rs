//! Non-Markovian quantum-jump unraveling of the generalized Lindblad
//! equation.
//!
//! The ensemble never stores one wavefunction per member. Members only
//! carry an index into a [`StateRegistry`] of deterministically evolving
//! kets: the initial state, the eigenstates of the current segment (jump
//! targets) and the former eigenstates of earlier segments, which keep
//! evolving as superpositions.
//!
//! Positive channels move a member from its ket to an eigenstate with
//! probability R dt |⟨ε_k′|ψ⟩|². Negative channels run in reverse: a
//! member sitting in the target eigenstate returns to a source ket with
//! probability (N_source/N_target) |R| dt |⟨ε_k′|ψ_source⟩|².
//!
//! Every member owns a PCG stream keyed by (seed, member index) and draws
//! exactly one uniform per step, so results do not depend on how rayon
//! schedules the work.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_pcg::Pcg32;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plan::{PlanSegment, SimulationPlan};
use crate::units::CM_TO_RAD_PER_FS;

/// Overlap above which a new eigenstate is identified with an old one.
const SAME_STATE: f64 = 1.0 - 1e-12;
/// Norm below which an occupied ket is considered lost.
const COLLAPSE_NORM: f64 = 1e-12;

/// Kets (columns, exciton coordinates, rotating frame) that members can
/// occupy.
#[derive(Debug, Clone)]
pub struct StateRegistry {
    kets: DMatrix<Complex64>,
    /// Registry index of each eigenstate of the current segment.
    eigen: Vec<usize>,
}

impl StateRegistry {
    /// Initial ket followed by the eigenstates of `segment`.
    pub fn new(initial: &DVector<Complex64>, segment: &PlanSegment) -> Result<Self> {
        let levels = segment.basis.levels();
        if initial.len() != levels {
            return Err(Error::Domain(format!("initial ket has {} entries, expected {levels}", initial.len())));
        }
        let norm = initial.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("initial ket norm {norm} is not 1")));
        }
        let mut kets = DMatrix::zeros(levels, levels + 1);
        kets.set_column(0, initial);
        let c = segment.eigenvectors();
        for k in 0..levels {
            for j in 0..levels {
                kets[(j, k + 1)] = Complex64::new(c[(k, j)], 0.0);
            }
        }
        Ok(Self { kets, eigen: (1..=levels).collect() })
    }

    /// Registry from explicit kets (columns); `eigen` lists the entries
    /// that are eigenstates of the current generator.
    pub fn from_kets(kets: DMatrix<Complex64>, eigen: Vec<usize>) -> Result<Self> {
        if eigen.len() != kets.nrows() || eigen.iter().any(|&e| e >= kets.ncols()) {
            return Err(Error::Domain("eigen-entry list does not match the kets".into()));
        }
        for col in kets.column_iter() {
            if (col.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::Domain("registry kets must be normalized".into()));
            }
        }
        Ok(Self { kets, eigen })
    }

    pub fn len(&self) -> usize {
        self.kets.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.kets.ncols() == 0
    }

    pub fn levels(&self) -> usize {
        self.kets.nrows()
    }

    pub fn ket(&self, alpha: usize) -> DVector<Complex64> {
        self.kets.column(alpha).into_owned()
    }

    pub fn kets(&self) -> &DMatrix<Complex64> {
        &self.kets
    }

    /// Registry indices of the current eigenstates.
    pub fn eigen_entries(&self) -> &[usize] {
        &self.eigen
    }

    /// Entries that are not eigenstates of the current segment.
    pub fn superposition_entries(&self) -> usize {
        self.len() - self.eigen.len()
    }

    /// Switches jump targets to the eigenstates of `segment`.
    ///
    /// The old eigen-entries stay as superposition kets. A new eigenstate
    /// that coincides with an old one reuses that entry, so dark-to-dark
    /// boundaries only relabel. Returns the number of appended entries.
    pub fn expand(&mut self, segment: &PlanSegment) -> usize {
        let levels = self.levels();
        let c = segment.eigenvectors();
        let old = std::mem::take(&mut self.eigen);
        let mut fresh = Vec::new();
        for k in 0..levels {
            let v = DVector::from_fn(levels, |j, _| Complex64::new(c[(k, j)], 0.0));
            let reuse = old.iter().copied().find(|&a| self.kets.column(a).dotc(&v).norm() > SAME_STATE);
            match reuse {
                Some(a) => self.eigen.push(a),
                None => {
                    self.eigen.push(self.len() + fresh.len());
                    fresh.push(v);
                }
            }
        }
        if !fresh.is_empty() {
            let start = self.len();
            let kets = std::mem::replace(&mut self.kets, DMatrix::zeros(0, 0));
            self.kets = kets.resize_horizontally(start + fresh.len(), Complex64::new(0.0, 0.0));
            for (i, v) in fresh.iter().enumerate() {
                self.kets.set_column(start + i, v);
            }
        }
        fresh.len()
    }
}

/// Member states, their random streams and the occupation counts.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    seed: u64,
    members: Vec<u32>,
    rngs: Vec<Pcg32>,
    counts: Vec<u64>,
}

impl TrajectoryEnsemble {
    /// All `n` members start in registry entry `start`.
    pub fn new(n: usize, seed: u64, registry_len: usize, start: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("ensemble needs at least one member".into()));
        }
        let members = vec![start as u32; n];
        let rngs = (0..n as u64).map(|i| Pcg32::new(seed, i)).collect();
        let mut counts = vec![0; registry_len];
        counts[start] = n as u64;
        Ok(Self { seed, members, rngs, counts })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    fn grow(&mut self, registry_len: usize) {
        self.counts.resize(registry_len, 0);
    }

    fn recount(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        for &m in &self.members {
            self.counts[m as usize] += 1;
        }
    }
}

/// Eigen-coordinates Φ = C Ψ of every registry ket.
fn eigen_coordinates(c: &DMatrix<Complex64>, registry: &StateRegistry) -> DMatrix<Complex64> {
    c * registry.kets()
}

#[allow(clippy::too_many_arguments)]
/// Advances every ket by `h` under H − (i/2)Σ R A†A and renormalizes.
///
/// `phi` holds the eigen-coordinates at the start of the step and `decay`
/// the per-level total rates D_k (outflow plus Γ_k).
pub fn deterministic_step(
    registry: &mut StateRegistry,
    c: &DMatrix<Complex64>,
    phi: &DMatrix<Complex64>,
    energies: &[f64],
    decay: &[f64],
    h: f64,
    counts: &[u64],
    t: f64,
) -> Result<()> {
    let factors: Vec<Complex64> = energies
        .iter()
        .zip(decay)
        .map(|(e, d)| Complex64::new(-0.5 * d * h, -CM_TO_RAD_PER_FS * e * h).exp())
        .collect();
    let mut evolved = phi.clone();
    for (k, f) in factors.iter().enumerate() {
        for a in 0..evolved.ncols() {
            evolved[(k, a)] *= *f;
        }
    }
    let mut kets = c.adjoint() * evolved;
    for (a, mut col) in kets.column_iter_mut().enumerate() {
        let n = col.norm();
        if n < COLLAPSE_NORM || !n.is_finite() {
            if counts.get(a).copied().unwrap_or(0) > 0 {
                return Err(Error::TrajectoryCollapse { t });
            }
            continue;
        }
        col.unscale_mut(n);
    }
    registry.kets = kets;
    Ok(())
}

/// Cumulative jump table of one registry entry: (target, cumulative P).
type JumpTable = Vec<(u32, f64)>;

/// Jump probabilities for every registry entry over a step of length `h`
/// with rate matrix `rates` (off-diagonal R^dis_kk′ from k′ into k,
/// diagonal Γ_k).
pub fn jump_tables(
    registry: &StateRegistry,
    phi: &DMatrix<Complex64>,
    rates: &DMatrix<f64>,
    counts: &[u64],
    h: f64,
    t: f64,
) -> Result<Vec<JumpTable>> {
    let levels = registry.levels();
    let eigen = registry.eigen_entries();
    let weight = |k: usize, a: usize| phi[(k, a)].norm_sqr();
    let mut tables: Vec<JumpTable> = vec![Vec::new(); registry.len()];
    for (a, table) in tables.iter_mut().enumerate() {
        if counts[a] == 0 {
            continue;
        }
        let mut cum = 0.0;
        // forward jumps into eigenstate k
        for k in 0..levels {
            let target = eigen[k];
            if target == a {
                continue;
            }
            let mut p = 0.0;
            for kp in 0..levels {
                let r = rates[(k, kp)];
                if r > 0.0 {
                    p += r * weight(kp, a);
                }
            }
            if p > 0.0 {
                cum += p * h;
                table.push((target as u32, cum));
            }
        }
        // reverse jumps out of eigenstate k back to the sources
        if let Some(k) = eigen.iter().position(|&e| e == a) {
            let n_target = counts[a] as f64;
            for (b, &nb) in counts.iter().enumerate() {
                if nb == 0 || b == a {
                    continue;
                }
                let mut p = 0.0;
                for kp in 0..levels {
                    let r = rates[(k, kp)];
                    if r < 0.0 {
                        p -= r * weight(kp, b);
                    }
                }
                if p > 0.0 {
                    cum += (nb as f64 / n_target) * p * h;
                    table.push((b as u32, cum));
                }
            }
        }
        if cum > 1.0 {
            return Err(Error::StepTooLarge { t, probability: cum });
        }
    }
    Ok(tables)
}

/// Applies one round of jumps; each member draws one uniform.
pub fn jump_step(ensemble: &mut TrajectoryEnsemble, tables: &[JumpTable]) {
    ensemble.members.par_iter_mut().zip(ensemble.rngs.par_iter_mut()).for_each(|(m, rng)| {
        let u: f64 = rng.random();
        if let Some(&(target, _)) = tables[*m as usize].iter().find(|(_, c)| u < *c) {
            *m = target;
        }
    });
    ensemble.recount();
}

/// ρ = (1/N) Σ_α N_α |ψ_α⟩⟨ψ_α| in exciton coordinates (rotating frame).
pub fn reconstruct_density_matrix(registry: &StateRegistry, ensemble: &TrajectoryEnsemble) -> DMatrix<Complex64> {
    let l = registry.levels();
    let n = ensemble.size() as f64;
    let mut rho = DMatrix::zeros(l, l);
    for (a, &count) in ensemble.counts().iter().enumerate() {
        if count == 0 {
            continue;
        }
        let psi = registry.kets.column(a);
        rho.ger(Complex64::new(count as f64 / n, 0.0), &psi, &psi.conjugate(), Complex64::new(1.0, 0.0));
    }
    rho
}

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub trajectories: usize,
    pub seed: u64,
    /// Snapshot every `stride` grid points.
    pub stride: usize,
    /// Rayon worker count; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { trajectories: 10_000, seed: 0, stride: 1, workers: None }
    }
}

/// Snapshots of a finished ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub times: Vec<f64>,
    /// Density matrices in exciton coordinates, rotating frame.
    pub states: Vec<DMatrix<Complex64>>,
    /// Occupation counts at each snapshot (registry order).
    pub counts: Vec<Vec<u64>>,
    pub registry_len: usize,
    pub superposition_entries: usize,
    pub eigen_entries: usize,
}

/// Propagates `options.trajectories` members that all start in `initial`.
pub fn run_ensemble(plan: &SimulationPlan, initial: &DVector<Complex64>, options: &EnsembleOptions) -> Result<EnsembleRun> {
    match options.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Domain(e.to_string()))?;
            pool.install(|| run_inner(plan, initial, options))
        }
        None => run_inner(plan, initial, options),
    }
}

fn run_inner(plan: &SimulationPlan, initial: &DVector<Complex64>, options: &EnsembleOptions) -> Result<EnsembleRun> {
    let segments = plan.segments();
    let mut registry = StateRegistry::new(initial, &segments[0])?;
    let mut ensemble = TrajectoryEnsemble::new(options.trajectories, options.seed, registry.len(), 0)?;
    let stride = options.stride.max(1);

    let mut run = EnsembleRun {
        times: vec![0.0],
        states: vec![reconstruct_density_matrix(&registry, &ensemble)],
        counts: vec![ensemble.counts().to_vec()],
        registry_len: 0,
        superposition_entries: 0,
        eigen_entries: 0,
    };

    let mut current = 0;
    let mut c = segments[0].eigenvectors().map(|x| Complex64::new(x, 0.0));
    for step in plan.steps() {
        if step.segment != current {
            current = step.segment;
            registry.expand(&segments[current]);
            ensemble.grow(registry.len());
            c = segments[current].eigenvectors().map(|x| Complex64::new(x, 0.0));
        }
        let generator = &segments[current].generator;
        let i = generator.index_at(step.from);
        let h = step.to - step.from;
        let rates = generator.rate_matrix(i);
        let decay: Vec<f64> =
            generator.outflow(i).iter().zip(generator.gamma(i)).map(|(d, g)| d + g).collect();

        let phi = eigen_coordinates(&c, &registry);
        let tables = jump_tables(&registry, &phi, &rates, ensemble.counts(), h, step.from)?;
        jump_step(&mut ensemble, &tables);
        deterministic_step(&mut registry, &c, &phi, generator.energies(), &decay, h, ensemble.counts(), step.to)?;

        if let Some(g) = step.grid {
            if g % stride == 0 {
                run.times.push(step.to);
                run.states.push(reconstruct_density_matrix(&registry, &ensemble));
                run.counts.push(ensemble.counts().to_vec());
            }
        }
    }
    run.registry_len = registry.len();
    run.eigen_entries = registry.eigen_entries().len();
    run.superposition_entries = registry.superposition_entries();
    Ok(run)
}

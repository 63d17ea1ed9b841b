//! Everything a run needs before propagation starts: one basis and one
//! generator per pulse segment, and the list of integration steps.
//!
//! The whole run lives in the rotating frame of the pulse carrier and in
//! exciton coordinates. Field-free stretches of a pulsed run use the
//! rotating-frame Hamiltonian with g = 0, which is diagonal in the exciton
//! basis. Runs without a pulse use carrier 0, i.e. the lab frame.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bath::{reorganization_energy, tabulate_linebroadening, BathSpec, LineBroadeningTable, TimeGrid};
use crate::error::{Error, Result};
use crate::lindblad::{
    assemble_generator, check_density, smallest_eigenvalue, DensityTrajectory, DephasingFit, FitScope,
    GeneralizedLindbladGenerator, TRACE_DRIFT_LIMIT,
};
use crate::model::{build_dressed_basis, diagonalize_site_hamiltonian, ExcitonBasis, LevelBasis, SiteBasisModel};
use crate::pulses::PulseSchedule;
use crate::rates::{BasisTag, RateTables, SiteBroadening};

/// One stretch of constant Hamiltonian.
#[derive(Debug, Clone)]
pub struct PlanSegment {
    pub start: f64,
    pub end: f64,
    pub couplings: Vec<f64>,
    pub basis: Arc<LevelBasis>,
    pub generator: Arc<GeneralizedLindbladGenerator>,
}

impl PlanSegment {
    pub fn is_dark(&self) -> bool {
        self.couplings.iter().all(|g| *g == 0.0)
    }

    /// Eigenstates as rows, in exciton coordinates.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.basis.exciton_coefficients
    }
}

/// One integration step [from, to] inside segment `segment`. `grid` is
/// set when `to` is a grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub from: f64,
    pub to: f64,
    pub segment: usize,
    pub grid: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    exciton: ExcitonBasis,
    carrier: f64,
    grid: TimeGrid,
    broadening: SiteBroadening,
    segments: Vec<PlanSegment>,
    steps: Vec<Step>,
}

/// Time points closer than this (fs) are merged.
const TIME_EPS: f64 = 1e-9;

/// Line-broadening tables for each site; one bath spec applies to all sites.
pub fn site_broadening(baths: &[BathSpec], sites: usize, grid: &TimeGrid) -> Result<SiteBroadening> {
    match baths.len() {
        1 => Ok(SiteBroadening::identical(tabulate_linebroadening(&baths[0], grid)?, sites)),
        n if n == sites => {
            let tables: Vec<Arc<LineBroadeningTable>> = baths
                .par_iter()
                .map(|b| tabulate_linebroadening(b, grid).map(Arc::new))
                .collect::<Result<_>>()?;
            SiteBroadening::new(tables)
        }
        n => Err(Error::InvalidBath(format!("{n} bath specs for {sites} sites"))),
    }
}

fn generator_for(
    basis: &LevelBasis,
    broadening: &SiteBroadening,
    tag: BasisTag,
    last: usize,
    scope: FitScope,
) -> Result<Arc<GeneralizedLindbladGenerator>> {
    let tables = RateTables::build(basis, broadening, tag, Some(last))?;
    let fit = DephasingFit::from_tables(&tables, scope)?;
    Ok(Arc::new(assemble_generator(basis, Arc::new(tables), Arc::new(fit))?))
}

impl SimulationPlan {
    pub fn build(model: &SiteBasisModel, baths: &[BathSpec], schedule: &PulseSchedule, grid: TimeGrid) -> Result<Self> {
        let sites = model.num_sites();
        let reorg: Vec<f64> = if baths.len() == 1 {
            vec![reorganization_energy(&baths[0])?; sites]
        } else {
            baths.iter().map(reorganization_energy).collect::<Result<_>>()?
        };
        let broadening = site_broadening(baths, sites, &grid)?;
        let exciton = diagonalize_site_hamiltonian(model, &reorg)?;
        Self::from_parts(exciton, broadening, schedule, grid)
    }

    /// Builds a plan from a precomputed exciton basis and broadening tables.
    pub fn from_parts(
        exciton: ExcitonBasis,
        broadening: SiteBroadening,
        schedule: &PulseSchedule,
        grid: TimeGrid,
    ) -> Result<Self> {
        if *broadening.grid() != grid {
            return Err(Error::GridMismatch("broadening tables use a different grid".into()));
        }
        let t_max = grid.t_max();
        let sites = exciton.num_sites();
        let last_index = grid.len() - 1;
        let carrier = schedule.carrier()?.unwrap_or(0.0);
        if schedule.is_empty() {
            let basis = Arc::new(exciton.levels().clone());
            let generator = generator_for(&basis, &broadening, BasisTag::Exciton, last_index, FitScope::ExcitedOnly)?;
            let segments = vec![PlanSegment { start: 0.0, end: t_max, couplings: vec![0.0; sites], basis, generator }];
            let steps = build_steps(&grid, &segments);
            return Ok(Self { exciton, carrier, grid, broadening, segments, steps });
        }
        if schedule.start().unwrap() < 0.0 {
            return Err(Error::InvalidPulse("pulse starts before t = 0".into()));
        }

        // (start, end, couplings) covering [0, t_max]
        let mut spans: Vec<(f64, f64, Vec<f64>)> = Vec::new();
        let first = schedule.start().unwrap();
        if first > TIME_EPS {
            spans.push((0.0, first.min(t_max), vec![0.0; sites]));
        }
        for s in schedule.segments() {
            if s.start >= t_max - TIME_EPS {
                break;
            }
            if s.couplings.len() != sites {
                return Err(Error::InvalidPulse(format!("{} couplings for {sites} excitons", s.couplings.len())));
            }
            spans.push((s.start, s.end.min(t_max), s.couplings.clone()));
        }
        let end = schedule.end().unwrap();
        if end < t_max - TIME_EPS {
            spans.push((end, t_max, vec![0.0; sites]));
        }

        let dark_basis = Arc::new(build_dressed_basis(&exciton, carrier, &vec![0.0; sites])?.into_levels());
        let needs_dark = spans.iter().any(|(_, _, g)| g.iter().all(|x| *x == 0.0));
        let dark_generator = if needs_dark {
            Some(generator_for(
                &dark_basis,
                &broadening,
                BasisTag::Dressed { carrier },
                last_index,
                FitScope::ExcitedOnly,
            )?)
        } else {
            None
        };

        let segments = spans
            .into_par_iter()
            .map(|(start, end, couplings)| {
                if couplings.iter().all(|x| *x == 0.0) {
                    return Ok(PlanSegment {
                        start,
                        end,
                        couplings,
                        basis: dark_basis.clone(),
                        generator: dark_generator.clone().unwrap(),
                    });
                }
                let basis = Arc::new(build_dressed_basis(&exciton, carrier, &couplings)?.into_levels());
                let last = grid.floor_index(end).min(last_index);
                let generator =
                    generator_for(&basis, &broadening, BasisTag::Dressed { carrier }, last, FitScope::ExcitedOnly)?;
                Ok(PlanSegment { start, end, couplings, basis, generator })
            })
            .collect::<Result<Vec<_>>>()?;
        let steps = build_steps(&grid, &segments);
        Ok(Self { exciton, carrier, grid, broadening, segments, steps })
    }

    pub fn exciton(&self) -> &ExcitonBasis {
        &self.exciton
    }

    /// Carrier of the rotating frame (0 for runs without a pulse).
    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn broadening(&self) -> &SiteBroadening {
        &self.broadening
    }

    pub fn segments(&self) -> &[PlanSegment] {
        &self.segments
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn levels(&self) -> usize {
        self.exciton.levels().levels()
    }

    /// Site state |n⟩ (n = 0 is the ground state) in exciton coordinates.
    pub fn site_ket(&self, n: usize) -> Result<DVector<Complex64>> {
        let s = &self.exciton.levels().site_coefficients;
        if n >= s.ncols() {
            return Err(Error::Domain(format!("site {n} out of range")));
        }
        Ok(DVector::from_fn(s.nrows(), |k, _| Complex64::new(s[(k, n)], 0.0)))
    }

    /// Deterministic solution of the generalized Lindblad equation,
    /// snapshots at every `stride`-th grid point (exciton coordinates,
    /// rotating frame).
    pub fn oracle(&self, rho0: &DMatrix<Complex64>, stride: usize) -> Result<DensityTrajectory> {
        check_density(rho0)?;
        if rho0.nrows() != self.levels() {
            return Err(Error::Domain("initial density matrix has the wrong size".into()));
        }
        let stride = stride.max(1);
        let mut out = DensityTrajectory { times: Vec::new(), states: Vec::new(), min_eigenvalues: Vec::new() };
        let record = |out: &mut DensityTrajectory, t: f64, rho: &DMatrix<Complex64>| {
            out.times.push(t);
            out.min_eigenvalues.push(smallest_eigenvalue(rho));
            out.states.push(rho.clone());
        };
        record(&mut out, 0.0, rho0);
        let mut rho = rho0.clone();
        let mut current = usize::MAX;
        let mut c = DMatrix::<Complex64>::zeros(0, 0);
        let mut local = DMatrix::<Complex64>::zeros(0, 0);
        for step in &self.steps {
            if step.segment != current {
                current = step.segment;
                c = self.segments[current].eigenvectors().map(|x| Complex64::new(x, 0.0));
                local = &c * &rho * c.adjoint();
            }
            let generator = &self.segments[current].generator;
            local = generator.step(generator.index_at(step.from), &local, step.to - step.from);
            let drift = (local.trace().re - 1.0).abs();
            if drift > TRACE_DRIFT_LIMIT || !drift.is_finite() {
                return Err(Error::IntegrationFailure(format!("trace drift {drift:e} at t = {} fs", step.to)));
            }
            rho = c.adjoint() * &local * &c;
            if let Some(i) = step.grid {
                if i % stride == 0 {
                    record(&mut out, step.to, &rho);
                }
            }
        }
        Ok(out)
    }
}

fn build_steps(grid: &TimeGrid, segments: &[PlanSegment]) -> Vec<Step> {
    let mut points: Vec<(f64, Option<usize>)> = (0..grid.len()).map(|i| (grid.time(i), Some(i))).collect();
    for s in segments.iter().skip(1) {
        points.push((s.start, None));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.is_some().cmp(&a.1.is_some())));
    points.dedup_by(|later, earlier| (later.0 - earlier.0).abs() < TIME_EPS);

    let mut steps = Vec::with_capacity(points.len());
    let mut seg = 0;
    for w in points.windows(2) {
        let from = w[0].0;
        while seg + 1 < segments.len() && segments[seg + 1].start <= from + TIME_EPS {
            seg += 1;
        }
        steps.push(Step { from, to: w[1].0, segment: seg, grid: w[1].1 });
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::{discretize_gaussian, step_pulse, GaussianPulseSpec};

    fn dimer(j: f64) -> SiteBasisModel {
        SiteBasisModel::dimer(-12800.0, 200.0, 100.0, j, [1.0, 1.0]).unwrap()
    }

    fn bath() -> Vec<BathSpec> {
        vec![BathSpec::ohmic(35.0, 50.0, 300.0).unwrap()]
    }

    #[test]
    fn step_pulse_plan_has_two_segments() {
        let grid = TimeGrid::new(1.0, 300.0).unwrap();
        let p = step_pulse(100.0, 13000.0, vec![100.0, 200.0]).unwrap();
        let plan = SimulationPlan::build(&dimer(120.0), &bath(), &p, grid).unwrap();
        assert_eq!(plan.segments().len(), 2);
        assert_eq!(plan.steps().len(), 300);
        assert!(plan.steps().iter().all(|s| s.grid.is_some()));
        assert_eq!(plan.steps()[99].segment, 0);
        assert_eq!(plan.steps()[100].segment, 1);
        assert!(plan.segments()[1].is_dark());
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((plan.segments()[1].eigenvectors() - id).norm() < 1e-14);
    }

    #[test]
    fn gaussian_boundaries_join_the_grid() {
        let grid = TimeGrid::new(1.0, 250.0).unwrap();
        let spec = GaussianPulseSpec::new(100.0, 100.0, vec![100.0, 200.0], 13000.0, 1e-3).unwrap();
        let d = discretize_gaussian(&spec).unwrap();
        let plan = SimulationPlan::build(&dimer(120.0), &bath(), &d.schedule, grid).unwrap();
        assert_eq!(plan.segments().len(), d.segments + 1);
        let steps = plan.steps();
        assert_eq!(steps.iter().filter(|s| s.grid.is_some()).count(), 250);
        assert!(steps.windows(2).all(|w| w[0].to == w[1].from && w[0].segment <= w[1].segment));
        for s in steps {
            let seg = &plan.segments()[s.segment];
            assert!(s.from >= seg.start - 1e-9 && s.to <= seg.end + 1e-9);
        }
    }

    #[test]
    fn oracle_with_zero_field_pulse_matches_free_run() {
        let grid = TimeGrid::new(1.0, 200.0).unwrap();
        let free = SimulationPlan::build(&dimer(120.0), &bath(), &PulseSchedule::empty(), grid).unwrap();
        let dark = step_pulse(50.0, 13000.0, vec![0.0, 0.0]).unwrap();
        let rotating = SimulationPlan::build(&dimer(120.0), &bath(), &dark, grid).unwrap();
        let ket = free.site_ket(1).unwrap();
        let rho0 = &ket * ket.adjoint();
        let a = free.oracle(&rho0, 10).unwrap();
        let b = rotating.oracle(&rho0, 10).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            for k in 0..3 {
                assert!((x[(k, k)].re - y[(k, k)].re).abs() < 1e-10);
            }
            assert!((x[(1, 2)] - y[(1, 2)]).norm() < 1e-10);
        }
    }
}

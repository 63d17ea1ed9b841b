//! Time-dependent coherent modified Redfield rates.
//!
//! `dis(i, k, k')` is the population-transfer rate from level k' into
//! level k at grid time t_i (the rate attached to the jump |ε_k⟩⟨ε_k'|).
//! `pd(i, k, k')` is the pure-dephasing rate of the coherence ρ_kk'.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bath::{LineBroadeningTable, TimeGrid};
use crate::error::{Error, Result};
use crate::model::{LevelBasis, OverlapTensor};
use crate::units::CM_TO_RAD_PER_FS;

/// Line-broadening tables for every site, sharing one grid.
#[derive(Debug, Clone)]
pub struct SiteBroadening {
    tables: Vec<Arc<LineBroadeningTable>>,
}

impl SiteBroadening {
    pub fn new(tables: Vec<Arc<LineBroadeningTable>>) -> Result<Self> {
        let first = tables.first().ok_or_else(|| Error::GridMismatch("no site tables".into()))?;
        if tables.iter().any(|t| t.grid() != first.grid()) {
            return Err(Error::GridMismatch("site tables use different time grids".into()));
        }
        Ok(Self { tables })
    }

    /// Same bath on every site.
    pub fn identical(table: LineBroadeningTable, sites: usize) -> Self {
        let t = Arc::new(table);
        Self { tables: vec![t; sites] }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.tables[0].grid()
    }

    pub fn sites(&self) -> usize {
        self.tables.len()
    }

    pub fn site(&self, n: usize) -> &LineBroadeningTable {
        &self.tables[n]
    }

    pub fn reorganization(&self) -> Vec<f64> {
        self.tables.iter().map(|t| t.reorganization()).collect()
    }
}

/// g_{k1k2k3k4}(t) and λ_{k1k2k3k4}, contracted over sites with
/// a_{k1k2}(n) a_{k3k4}(n).
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLineshape {
    weights: Vec<f64>,
    lambda: f64,
}

impl CompositeLineshape {
    pub fn contract(overlaps: &OverlapTensor, idx: [usize; 4], broadening: &SiteBroadening) -> Self {
        let left = overlaps.sites_of(idx[0], idx[1]);
        let right = overlaps.sites_of(idx[2], idx[3]);
        let weights: Vec<f64> = left.iter().zip(right).map(|(a, b)| a * b).collect();
        let lambda = weights.iter().enumerate().map(|(n, w)| w * broadening.site(n).reorganization()).sum();
        Self { weights, lambda }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| *w == 0.0)
    }

    fn sum(&self, broadening: &SiteBroadening, f: impl Fn(&LineBroadeningTable) -> Complex64) -> Complex64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(n, w)| *w * f(broadening.site(n)))
            .sum()
    }

    pub fn g(&self, broadening: &SiteBroadening, i: usize) -> Complex64 {
        self.sum(broadening, |t| t.g(i))
    }

    pub fn gdot(&self, broadening: &SiteBroadening, i: usize) -> Complex64 {
        self.sum(broadening, |t| t.gdot(i))
    }

    pub fn gddot(&self, broadening: &SiteBroadening, i: usize) -> Complex64 {
        self.sum(broadening, |t| t.gddot(i))
    }
}

/// Which Hamiltonian the rates belong to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisTag {
    Exciton,
    Dressed { carrier: f64 },
}

/// R^dis and R^pd on the grid points `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTables {
    tag: BasisTag,
    grid: TimeGrid,
    levels: usize,
    len: usize,
    dis: Vec<f64>,
    pd: Vec<f64>,
}

impl RateTables {
    /// Builds both tables for grid points `0..=last` (the whole grid when
    /// `last` is `None`).
    pub fn build(
        basis: &LevelBasis,
        broadening: &SiteBroadening,
        tag: BasisTag,
        last: Option<usize>,
    ) -> Result<Self> {
        let grid = *broadening.grid();
        let len = last.map_or(grid.len(), |l| (l + 1).min(grid.len()));
        let dis = dissipation_rate_table(basis, broadening, len)?;
        let pd = pure_dephasing_rate_table(basis, broadening, len)?;
        Ok(Self { tag, grid, levels: basis.levels(), len, dis, pd })
    }

    /// Tables from raw row-major data `[i][k][k']` (synthetic inputs).
    pub fn from_raw(tag: BasisTag, grid: TimeGrid, levels: usize, dis: Vec<f64>, pd: Vec<f64>) -> Result<Self> {
        let len = dis.len() / (levels * levels);
        if dis.len() != pd.len() || len * levels * levels != dis.len() || len == 0 || len > grid.len() {
            return Err(Error::GridMismatch("raw rate data does not match grid".into()));
        }
        Ok(Self { tag, grid, levels, len, dis, pd })
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Number of tabulated grid points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn at(&self, i: usize, k: usize, kp: usize) -> usize {
        (i * self.levels + k) * self.levels + kp
    }

    pub fn dis(&self, i: usize, k: usize, kp: usize) -> f64 {
        self.dis[self.at(i, k, kp)]
    }

    pub fn pd(&self, i: usize, k: usize, kp: usize) -> f64 {
        self.pd[self.at(i, k, kp)]
    }

    pub fn dis_matrix(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.levels, self.levels, |k, kp| self.dis(i, k, kp))
    }

    pub fn pd_matrix(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.levels, self.levels, |k, kp| self.pd(i, k, kp))
    }
}

fn check_shapes(basis: &LevelBasis, broadening: &SiteBroadening, len: usize) -> Result<()> {
    if basis.num_sites() != broadening.sites() {
        return Err(Error::GridMismatch(format!(
            "basis has {} sites, broadening tables {}",
            basis.num_sites(),
            broadening.sites()
        )));
    }
    if len == 0 || len > broadening.grid().len() {
        return Err(Error::GridMismatch(format!("{len} points requested from a {}-point grid", broadening.grid().len())));
    }
    Ok(())
}

/// Integrand of the dissipation rate R^dis_{kk'} (from k' into k) at grid
/// points `0..len`, in fs⁻².
pub fn dissipation_integrand(
    basis: &LevelBasis,
    broadening: &SiteBroadening,
    k: usize,
    kp: usize,
    len: usize,
) -> Vec<Complex64> {
    let a = &basis.overlaps;
    let c = |idx| CompositeLineshape::contract(a, idx, broadening);
    let transfer = c([kp, k, k, kp]);
    if transfer.is_zero() {
        return vec![Complex64::new(0.0, 0.0); len];
    }
    let g_kkkk = c([k, k, k, k]);
    let g_pppp = c([kp, kp, kp, kp]);
    let g_kkpp = c([k, k, kp, kp]);
    let gd_pk_kk = c([kp, k, k, k]);
    let gd_pk_pp = c([kp, k, kp, kp]);
    let gd_kp_kk = c([k, kp, k, k]);
    let gd_kp_pp = c([k, kp, kp, kp]);

    let kk = CM_TO_RAD_PER_FS;
    let e = &basis.shifted_energies;
    let lam = &basis.reorg_shifts;
    let omega = kk * ((e[kp] - e[k]) - (lam[k] + lam[kp] - 2.0 * g_kkpp.lambda()));
    let i2 = Complex64::new(0.0, 2.0 * kk);
    let grid = broadening.grid();

    (0..len)
        .map(|i| {
            let tau = grid.time(i);
            let line = -(g_kkkk.g(broadening, i) + g_pppp.g(broadening, i) - 2.0 * g_kkpp.g(broadening, i));
            let left = gd_pk_kk.gdot(broadening, i) - gd_pk_pp.gdot(broadening, i) - i2 * gd_pk_pp.lambda();
            let right = gd_kp_kk.gdot(broadening, i) - gd_kp_pp.gdot(broadening, i) - i2 * gd_kp_pp.lambda();
            let curly = transfer.gddot(broadening, i) - left * right;
            (Complex64::new(0.0, omega * tau) + line).exp() * curly
        })
        .collect()
}

/// R^dis on grid points `0..len`, row-major `[i][k][k']`.
///
/// The τ-integral uses the trapezoid rule, accumulated step by step.
pub fn dissipation_rate_table(basis: &LevelBasis, broadening: &SiteBroadening, len: usize) -> Result<Vec<f64>> {
    check_shapes(basis, broadening, len)?;
    let levels = basis.levels();
    let dt = broadening.grid().dt();
    let pairs: Vec<(usize, usize)> =
        (0..levels).flat_map(|k| (0..levels).filter(move |&kp| kp != k).map(move |kp| (k, kp))).collect();
    let columns: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(k, kp)| {
            let f = dissipation_integrand(basis, broadening, k, kp, len);
            let mut out = Vec::with_capacity(len);
            let mut acc = 0.0;
            out.push(0.0);
            for i in 1..len {
                acc += 0.5 * dt * (f[i - 1].re + f[i].re);
                out.push(2.0 * acc);
            }
            out
        })
        .collect();
    let mut table = vec![0.0; len * levels * levels];
    for ((k, kp), col) in pairs.iter().zip(columns) {
        for (i, v) in col.into_iter().enumerate() {
            table[(i * levels + k) * levels + kp] = v;
        }
    }
    Ok(table)
}

/// R^pd_{kk'}(t) = Σ_n [a_kk(n) − a_k'k'(n)]² Re ġ_n(t), row-major `[i][k][k']`.
pub fn pure_dephasing_rate_table(basis: &LevelBasis, broadening: &SiteBroadening, len: usize) -> Result<Vec<f64>> {
    check_shapes(basis, broadening, len)?;
    let levels = basis.levels();
    let a = &basis.overlaps;
    let mut table = vec![0.0; len * levels * levels];
    for k in 0..levels {
        for kp in (k + 1)..levels {
            let w: Vec<f64> = (0..a.sites()).map(|n| (a.get(k, k, n) - a.get(kp, kp, n)).powi(2)).collect();
            for i in 0..len {
                let r: f64 = w.iter().enumerate().map(|(n, w)| w * broadening.site(n).gdot(i).re).sum();
                table[(i * levels + k) * levels + kp] = r;
                table[(i * levels + kp) * levels + k] = r;
            }
        }
    }
    Ok(table)
}

/// Long-time dissipation rates R^dis(∞).
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryRates {
    pub rates: DMatrix<f64>,
    /// Pairs (k, k') whose plateau is negative.
    pub negative: Vec<(usize, usize, f64)>,
}

/// Fraction of the grid averaged for the plateau.
pub const PLATEAU_FRACTION: f64 = 0.1;
/// Largest relative spread tolerated inside the plateau window.
pub const PLATEAU_DRIFT: f64 = 0.01;
/// Rates below this magnitude (fs⁻¹) count as zero.
pub const RATE_FLOOR: f64 = 1e-12;

/// Mean of each R^dis over the final 10 % of the table.
///
/// Fails with [`Error::NonConvergence`] when the spread inside that window
/// exceeds 1 % of the mean.
pub fn stationary_dissipation_rates(tables: &RateTables) -> Result<StationaryRates> {
    let (rates, drift) = plateau_estimate(tables);
    if drift > PLATEAU_DRIFT {
        return Err(Error::NonConvergence { drift });
    }
    Ok(rates)
}

/// Window means and the largest relative spread, without the convergence
/// check.
pub fn plateau_estimate(tables: &RateTables) -> (StationaryRates, f64) {
    let len = tables.len();
    let window = ((len as f64 * PLATEAU_FRACTION).ceil() as usize).clamp(1, len);
    let start = len - window;
    let levels = tables.levels();
    let mut rates = DMatrix::zeros(levels, levels);
    let mut negative = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..levels {
        for kp in (0..levels).filter(|&kp| kp != k) {
            let vals: Vec<f64> = (start..len).map(|i| tables.dis(i, k, kp)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if mean.abs() > RATE_FLOOR || (hi - lo) > RATE_FLOOR {
                worst = worst.max((hi - lo) / mean.abs().max(RATE_FLOOR));
            }
            if mean < -RATE_FLOOR {
                negative.push((k, kp, mean));
            }
            rates[(k, kp)] = mean;
        }
    }
    (StationaryRates { rates, negative }, worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{tabulate_linebroadening, BathSpec};
    use crate::model::{diagonalize_site_hamiltonian, SiteBasisModel};

    fn setup(e1: f64, e2: f64, j: f64, t_max: f64, dt: f64) -> (LevelBasis, SiteBroadening) {
        let spec = BathSpec::ohmic(35.0, 50.0, 300.0).unwrap();
        let grid = TimeGrid::new(dt, t_max).unwrap();
        let table = tabulate_linebroadening(&spec, &grid).unwrap();
        let model = SiteBasisModel::dimer(-12800.0, e1, e2, j, [10.0, 5.0]).unwrap();
        let basis = diagonalize_site_hamiltonian(&model, &[35.0, 35.0]).unwrap();
        (basis.levels().clone(), SiteBroadening::identical(table, 2))
    }

    #[test]
    fn uncoupled_dimer_has_no_transfer() {
        let (b, br) = setup(200.0, 100.0, 0.0, 200.0, 1.0);
        let t = RateTables::build(&b, &br, BasisTag::Exciton, None).unwrap();
        for i in 0..t.len() {
            assert_eq!(t.dis(i, 1, 2), 0.0);
            assert_eq!(t.dis(i, 2, 1), 0.0);
            let expected = 2.0 * br.site(0).gdot(i).re;
            assert!((t.pd(i, 1, 2) - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn origin_and_ground_rows_vanish() {
        let (b, br) = setup(200.0, 100.0, 120.0, 200.0, 1.0);
        let t = RateTables::build(&b, &br, BasisTag::Exciton, None).unwrap();
        assert!(t.dis_matrix(0).iter().all(|x| *x == 0.0));
        for i in 0..t.len() {
            for k in 0..3 {
                assert_eq!(t.dis(i, 0, k), 0.0);
                assert_eq!(t.dis(i, k, 0), 0.0);
                assert_eq!(t.pd(i, k, k), 0.0);
                for kp in 0..3 {
                    assert_eq!(t.pd(i, k, kp), t.pd(i, kp, k));
                }
            }
        }
    }

    #[test]
    fn symmetric_dimer_has_no_pure_dephasing_between_excitons() {
        let (b, br) = setup(150.0, 150.0, 120.0, 100.0, 1.0);
        let t = RateTables::build(&b, &br, BasisTag::Exciton, None).unwrap();
        for i in 0..t.len() {
            assert!(t.pd(i, 1, 2).abs() < 1e-15);
        }
    }

    #[test]
    fn incremental_trapezoid_equals_full_recomputation() {
        let (b, br) = setup(200.0, 100.0, 120.0, 300.0, 1.0);
        let len = br.grid().len();
        let table = dissipation_rate_table(&b, &br, len).unwrap();
        let f = dissipation_integrand(&b, &br, 1, 2, len);
        let dt = br.grid().dt();
        for i in 0..len {
            let full: f64 = if i == 0 {
                0.0
            } else {
                let interior: f64 = f[1..i].iter().map(|z| z.re).sum();
                2.0 * dt * (0.5 * f[0].re + interior + 0.5 * f[i].re)
            };
            let inc = table[(i * 3 + 1) * 3 + 2];
            assert!((inc - full).abs() <= 1e-12 * full.abs().max(1e-6), "{i}: {inc} vs {full}");
        }
    }

    #[test]
    fn downhill_exceeds_uphill_and_matches_fine_grid() {
        let (b, br) = setup(200.0, 100.0, 120.0, 1500.0, 1.0);
        let t = RateTables::build(&b, &br, BasisTag::Exciton, None).unwrap();
        let plateau = stationary_dissipation_rates(&t).unwrap();
        // exciton 2 lies above exciton 1: R(1 ← 2) is downhill
        let down = plateau.rates[(1, 2)];
        let up = plateau.rates[(2, 1)];
        assert!(down > up && up > 0.0, "down {down} up {up}");

        let (bf, brf) = setup(200.0, 100.0, 120.0, 1500.0, 0.1);
        let tf = RateTables::build(&bf, &brf, BasisTag::Exciton, None).unwrap();
        let fine = stationary_dissipation_rates(&tf).unwrap();
        for (k, kp) in [(1, 2), (2, 1)] {
            let rel = (plateau.rates[(k, kp)] - fine.rates[(k, kp)]).abs() / fine.rates[(k, kp)];
            assert!(rel < 0.01, "pair ({k},{kp}) differs by {rel}");
        }
    }

    #[test]
    fn constant_tail_plateau() {
        let grid = TimeGrid::new(1.0, 99.0).unwrap();
        let mut dis = vec![0.0; 100 * 4];
        for i in 0..100 {
            let v = if i > 50 { 0.25 } else { i as f64 * 0.01 };
            dis[i * 4 + 1] = v;
            dis[i * 4 + 2] = 0.5 * v;
        }
        let t = RateTables::from_raw(BasisTag::Exciton, grid, 2, dis, vec![0.0; 400]).unwrap();
        let s = stationary_dissipation_rates(&t).unwrap();
        assert_eq!(s.rates[(0, 1)], 0.25);
        assert_eq!(s.rates[(1, 0)], 0.125);
    }

    #[test]
    fn drifting_tail_is_reported() {
        let grid = TimeGrid::new(1.0, 99.0).unwrap();
        let mut dis = vec![0.0; 100 * 4];
        for i in 0..100 {
            dis[i * 4 + 1] = 1.0 + i as f64;
        }
        let t = RateTables::from_raw(BasisTag::Exciton, grid, 2, dis, vec![0.0; 400]).unwrap();
        assert!(matches!(stationary_dissipation_rates(&t), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn uncoupled_plateau_is_zero() {
        let (b, br) = setup(200.0, 100.0, 0.0, 300.0, 1.0);
        let t = RateTables::build(&b, &br, BasisTag::Exciton, None).unwrap();
        let s = stationary_dissipation_rates(&t).unwrap();
        assert!(s.rates.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn mismatched_sites_rejected() {
        let (b, br) = setup(200.0, 100.0, 120.0, 10.0, 1.0);
        let single = SiteBroadening::new(vec![Arc::new(br.site(0).clone())]).unwrap();
        assert!(matches!(
            RateTables::build(&b, &single, BasisTag::Exciton, None),
            Err(Error::GridMismatch(_))
        ));
    }
}

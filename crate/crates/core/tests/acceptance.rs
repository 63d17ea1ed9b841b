//! Acceptance criteria 1–9. Each test prints one `criterion N: PASS|FAIL`
//! line to the process stderr before asserting.
//!
//!     cargo test --release --test acceptance -- --test-threads 1

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use cmrt_nmqj::bath::{reorganization_energy, tabulate_linebroadening, tabulate_linebroadening_refined, BathSpec, TimeGrid};
use cmrt_nmqj::cli::{run_command, Verb};
use cmrt_nmqj::config::{load_config, RunConfig};
use cmrt_nmqj::lindblad::{dephasing_misfit, fit_lindblad_dephasing, smallest_eigenvalue};
use cmrt_nmqj::model::{diagonalize_site_hamiltonian, SiteBasisModel};
use cmrt_nmqj::nmqj::{run_ensemble, EnsembleOptions};
use cmrt_nmqj::observables::{absorption_spectrum, concurrence, frequency_grid, site_populations, DensityMatrixSnapshot};
use cmrt_nmqj::plan::{site_broadening, SimulationPlan};
use cmrt_nmqj::pulses::{discretize_gaussian, GaussianPulseSpec};
use cmrt_nmqj::rates::{plateau_estimate, BasisTag, RateTables};
use cmrt_nmqj::units::CM_TO_RAD_PER_FS;

fn report(n: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("\ncriterion {n} ({title}): {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    // libtest captures print macros and io::stderr; a fresh handle on the
    // process stderr keeps the summary visible in plain `cargo test` runs
    match std::fs::OpenOptions::new().append(true).open("/dev/stderr") {
        Ok(mut f) => {
            let _ = f.write_all(line.as_bytes());
        }
        Err(_) => eprint!("{line}"),
    }
}

fn preset(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(format!("{name}.toml"));
    load_config(&path).unwrap()
}

fn plan_for(cfg: &RunConfig) -> SimulationPlan {
    SimulationPlan::build(&cfg.model, &cfg.baths, &cfg.schedule, cfg.grid).unwrap()
}

fn snapshots(plan: &SimulationPlan, times: &[f64], states: &[DMatrix<Complex64>]) -> Vec<DensityMatrixSnapshot> {
    times
        .iter()
        .zip(states)
        .map(|(t, rho)| DensityMatrixSnapshot::from_exciton(plan.exciton(), rho, plan.carrier(), *t))
        .collect()
}

fn oracle_snapshots(plan: &SimulationPlan, initial_site: usize, stride: usize) -> Vec<DensityMatrixSnapshot> {
    let ket = plan.site_ket(initial_site).unwrap();
    let traj = plan.oracle(&(&ket * ket.adjoint()), stride).unwrap();
    snapshots(plan, &traj.times, &traj.states)
}

fn ensemble_snapshots(plan: &SimulationPlan, initial_site: usize, n: usize, stride: usize) -> Vec<DensityMatrixSnapshot> {
    let ket = plan.site_ket(initial_site).unwrap();
    let run = run_ensemble(plan, &ket, &EnsembleOptions { trajectories: n, seed: 1, stride, workers: None }).unwrap();
    snapshots(plan, &run.times, &run.states)
}

fn max_deviation(a: &[DensityMatrixSnapshot], b: &[DensityMatrixSnapshot]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            assert!((x.time - y.time).abs() < 1e-9);
            (&x.rho - &y.rho).iter().map(|z| z.norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Peak-to-trough of `y` on [a, b] after removing a least-squares line.
fn detrended_amplitude(t: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = t.iter().zip(y).filter(|(x, _)| **x >= a && **x <= b).map(|(x, v)| (*x, *v)).unzip();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let r: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - my - slope * (x - mx)).collect();
    r.iter().copied().fold(f64::NEG_INFINITY, f64::max) - r.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Period of the exciton beat 2π/(K Δε) in fs.
fn beat_period(plan: &SimulationPlan) -> f64 {
    let e = plan.exciton().shifted_energies();
    2.0 * std::f64::consts::PI / (CM_TO_RAD_PER_FS * (e[2] - e[1]).abs())
}

fn series(snaps: &[DensityMatrixSnapshot], f: impl Fn(&DensityMatrixSnapshot) -> f64) -> (Vec<f64>, Vec<f64>) {
    (snaps.iter().map(|s| s.time).collect(), snaps.iter().map(f).collect())
}

#[test]
fn criterion_1_oracle_unraveling_equivalence() {
    let n = 10_000;
    let bound = 5.0 * (0.25 / n as f64).sqrt();
    let clock = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for name in ["dimer_j120", "dimer_j20"] {
        let plan = plan_for(&preset(name));
        let oracle = oracle_snapshots(&plan, 0, 10);
        let jumps = ensemble_snapshots(&plan, 0, n, 10);
        assert_eq!(oracle.len(), 101);
        let dev = max_deviation(&oracle, &jumps);
        pass &= dev < bound;
        details.push(format!("{name} max|Δρ| = {dev:.4}"));
    }
    let elapsed = clock.elapsed().as_secs_f64();
    pass &= elapsed < 120.0;
    report(1, "oracle-unraveling equivalence", pass, &format!("{}, bound {bound:.4}, {elapsed:.1} s", details.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_2_fmo_benchmark() {
    let cfg = preset("fmo");
    let plan = plan_for(&cfg);
    let site = cfg.run().initial_site;
    let oracle = oracle_snapshots(&plan, site, 5);
    let fine: Vec<_> = oracle.iter().step_by(2).cloned().collect();
    let jumps = ensemble_snapshots(&plan, site, 10_000, 10);
    let dev = max_deviation(&fine, &jumps);

    let (t, p6) = series(&oracle, |s| site_populations(s).sites[5]);
    let (_, p3) = series(&oracle, |s| site_populations(s).sites[2]);
    let below = t.iter().zip(&p6).find(|(_, p)| **p < 0.5).map(|(t, _)| *t);
    // damped oscillation: a local minimum followed by a local maximum in P6
    let extrema: Vec<(f64, bool)> =
        (1..p6.len() - 1).filter(|&i| (p6[i] - p6[i - 1]) * (p6[i + 1] - p6[i]) < 0.0).map(|i| (t[i], p6[i] > p6[i - 1])).collect();
    let oscillates = extrema.iter().any(|(_, is_max)| *is_max) && extrema.iter().any(|(_, is_max)| !*is_max);
    let rising = t.iter().zip(p3.windows(2)).filter(|(t, _)| **t >= 200.0).all(|(_, w)| w[1] >= w[0] - 1e-12);
    let last = site_populations(oracle.last().unwrap());
    let shown = [2, 3, 4, 5];
    let largest = shown.iter().all(|&k| last.sites[2] >= last.sites[k]);
    let trace_ok = oracle.iter().all(|s| {
        let tr: Complex64 = (0..s.rho.nrows()).map(|i| s.rho[(i, i)]).sum();
        (tr.re - 1.0).abs() < 1e-8 && tr.im.abs() < 1e-12 && (&s.rho - s.rho.adjoint()).iter().all(|z| z.norm() < 1e-12)
    });

    let pass = dev < 0.025 && below.is_some_and(|t| t <= 300.0) && oscillates && rising && largest && trace_ok;
    report(
        2,
        "FMO benchmark",
        pass,
        &format!(
            "P6 < 0.5 at {below:?} fs, P6 extrema {}, P3 rising after 200 fs: {rising}, P3(1 ps) = {:.3} largest: {largest}, \
             trace/Hermiticity: {trace_ok}, NMQJ max|Δρ| = {dev:.4}",
            extrema.len(),
            last.sites[2]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_coherence_lifetime_contrast() {
    let strong = plan_for(&preset("dimer_j120"));
    let weak = plan_for(&preset("dimer_j20"));
    let s = oracle_snapshots(&strong, 0, 1);
    let w = oracle_snapshots(&weak, 0, 1);

    let period = beat_period(&strong);
    let (t, p1) = series(&s, |x| site_populations(x).sites[0]);
    let strong_amp = detrended_amplitude(&t, &p1, 400.0 - period, 400.0);

    let period_w = beat_period(&weak);
    let (tw, p1w) = series(&w, |x| site_populations(x).sites[0]);
    let mut weak_amp: f64 = 0.0;
    let mut start = 250.0;
    while start + period_w <= 1000.0 {
        weak_amp = weak_amp.max(detrended_amplitude(&tw, &p1w, start, start + period_w));
        start += 10.0;
    }

    let pass = strong_amp > 0.02 && weak_amp < 0.02;
    report(
        3,
        "coherence-lifetime contrast",
        pass,
        &format!(
            "J=120 amplitude on [{:.0}, 400] fs = {strong_amp:.4} (need > 0.02); J=20 largest amplitude beyond 250 fs = {weak_amp:.4} (need < 0.02)",
            400.0 - period
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_selective_excitation() {
    let plan = plan_for(&preset("dimer_detuned_j20"));
    let snaps = oracle_snapshots(&plan, 0, 1);
    let pulse: Vec<_> = snaps.iter().filter(|s| s.time <= 100.0).collect();
    let p: Vec<(f64, f64)> = pulse.iter().map(|s| {
        let q = site_populations(s);
        (q.sites[0], q.sites[1])
    }).collect();
    let mut maxima: Vec<usize> = (1..p.len() - 1).filter(|&i| p[i].0 >= p[i - 1].0 && p[i].0 > p[i + 1].0).collect();
    if maxima.is_empty() {
        maxima.push((0..p.len()).max_by(|&a, &b| p[a].0.total_cmp(&p[b].0)).unwrap());
    }
    let pass = maxima.iter().all(|&i| p[i].0 > p[i].1);
    let text: Vec<String> =
        maxima.iter().map(|&i| format!("t={:.0}: P1={:.3} P2={:.3}", pulse[i].time, p[i].0, p[i].1)).collect();
    report(4, "selective excitation under detuning", pass, &text.join(", "));
    assert!(pass);
}

#[test]
fn criterion_5_concurrence() {
    let steady = |name: &str| {
        let plan = plan_for(&preset(name));
        let snaps = oracle_snapshots(&plan, 0, 1);
        let (t, c) = series(&snaps, |s| concurrence(s).unwrap());
        (t, c)
    };
    let mean_after = |t: &[f64], c: &[f64], a: f64| {
        let v: Vec<f64> = t.iter().zip(c).filter(|(t, _)| **t >= a).map(|(_, c)| *c).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (t, c) = steady("dimer_j120");
    let strong = mean_after(&t, &c, 800.0);
    let (tw, cw) = steady("dimer_j20");
    let (i_min, c_min) = tw
        .iter()
        .zip(&cw)
        .enumerate()
        .filter(|(_, (t, _))| **t >= 100.0)
        .map(|(i, (_, c))| (i, *c))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let recovered = *cw.last().unwrap() > c_min;
    let (td, cd) = steady("dimer_detuned_j120");
    let detuned = mean_after(&td, &cd, 800.0);
    let pass = strong > 0.1 && c_min < 0.05 && recovered && detuned < strong;
    report(
        5,
        "concurrence",
        pass,
        &format!(
            "J=120 steady C = {strong:.3}; J=20 min C = {c_min:.4} at {:.0} fs, C(1 ps) = {:.4}; detuned J=120 steady C = {detuned:.3}",
            tw[i_min],
            cw.last().unwrap()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_absorption_spectrum() {
    let model = SiteBasisModel::dimer(-12800.0, 120.0, 100.0, 300.0, [10.0, 5.0]).unwrap();
    let bath = BathSpec::ohmic(35.0, 50.0, 300.0).unwrap();
    let grid = TimeGrid::new(1.0, 2000.0).unwrap();
    let lambda = reorganization_energy(&bath).unwrap();
    let broadening = site_broadening(&[bath], 2, &grid).unwrap();
    let exciton = diagonalize_site_hamiltonian(&model, &[lambda, lambda]).unwrap();
    let tables = RateTables::build(exciton.levels(), &broadening, BasisTag::Exciton, None).unwrap();
    let (stationary, _) = plateau_estimate(&tables);
    let omega = frequency_grid(12200.0, 13800.0, 0.5).unwrap();
    let spectrum = absorption_spectrum(&exciton, &broadening, &stationary.rates, &omega).unwrap();

    let peaks = spectrum.peaks();
    let expected = 2.0 * (10.0f64 * 10.0 + 300.0 * 300.0).sqrt();
    let (split, ratio) = if let [(a, _), (b, _)] = peaks[..] {
        let mid = spectrum
            .omega
            .iter()
            .zip(&spectrum.intensity)
            .filter(|(w, _)| **w > a && **w < b)
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(w, _)| *w)
            .unwrap();
        let low = spectrum.integrate(omega[0], mid);
        let high = spectrum.integrate(mid, *omega.last().unwrap());
        (b - a, low / high)
    } else {
        (f64::NAN, f64::NAN)
    };
    let pass = peaks.len() == 2 && (split - expected).abs() <= 5.0 && (ratio / 4.0 - 1.0).abs() <= 0.1;
    report(
        6,
        "absorption spectrum",
        pass,
        &format!("{} peaks, splitting {split:.2} cm^-1 (expected {expected:.2} ± 5), area ratio {ratio:.3} (4 ± 10%)", peaks.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_7_gaussian_discretization_and_registry() {
    let spec = GaussianPulseSpec::new(100.0, 100.0, vec![100.0, 200.0], 13000.0, 1e-6).unwrap();
    let pulse = discretize_gaussian(&spec).unwrap();
    let model = SiteBasisModel::dimer(-12800.0, 200.0, 100.0, 120.0, [1.0, 1.0]).unwrap();
    let bath = BathSpec::ohmic(35.0, 50.0, 300.0).unwrap();
    let mut sizes = Vec::new();
    let mut linear = true;
    for tol in [1e-4, 1e-5, 1e-6] {
        let spec = GaussianPulseSpec { tolerance: tol, ..spec.clone() };
        let p = discretize_gaussian(&spec).unwrap();
        let plan = SimulationPlan::build(&model, std::slice::from_ref(&bath), &p.schedule, TimeGrid::new(1.0, 250.0).unwrap()).unwrap();
        let levels = plan.levels();
        let run = run_ensemble(&plan, &plan.site_ket(0).unwrap(), &EnsembleOptions { trajectories: 200, seed: 3, stride: 50, workers: None })
            .unwrap();
        linear &= run.superposition_entries == p.segments * levels + 1 && run.eigen_entries == levels;
        sizes.push(format!("N_p={}: {}+{}", p.segments, run.superposition_entries, run.eigen_entries));
    }
    let pass = pulse.segments == 513 && pulse.area_error < 1e-6 && linear;
    report(
        7,
        "Gaussian discretization",
        pass,
        &format!(
            "N_p = {}, area error {:.3e}; registry superpositions+eigen (L = 3 levels): {}",
            pulse.segments,
            pulse.area_error,
            sizes.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_dephasing_fit_properties() {
    let mut rng = Pcg64::seed_from_u64(8);
    let mut stationary = true;
    let mut dimer_exact = true;
    let mut instances = 0;
    for m in 2..=8 {
        for _ in 0..100 {
            let mut pd = DMatrix::zeros(m, m);
            for k in 0..m {
                for l in k + 1..m {
                    let v: f64 = rng.random_range(0.0..0.05);
                    pd[(k, l)] = v;
                    pd[(l, k)] = v;
                }
            }
            let (gamma, _) = fit_lindblad_dephasing(&pd).unwrap();
            let base = dephasing_misfit(&pd, &gamma);
            for k in 0..m {
                for d in [1e-6, -1e-6] {
                    let mut g = gamma.clone();
                    g[k] += d;
                    stationary &= dephasing_misfit(&pd, &g) >= base - 1e-18;
                }
            }
            if m == 2 {
                dimer_exact &= ((gamma[0] + gamma[1]) / 2.0 - pd[(0, 1)]).abs() < 1e-14;
            }
            instances += 1;
        }
    }
    let pd3 = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 4.0, 2.0, 0.0, 6.0, 4.0, 6.0, 0.0]);
    let (g3, _) = fit_lindblad_dephasing(&pd3).unwrap();
    let exact3 = g3.iter().zip([0.0, 4.0, 8.0]).all(|(a, b)| (a - b).abs() < 1e-12);
    let pass = stationary && dimer_exact && exact3;
    report(
        8,
        "dephasing fit",
        pass,
        &format!("{instances} instances stationary: {stationary}, dimer identity: {dimer_exact}, M=3 Γ = {g3:.3?}"),
    );
    assert!(pass);
}

fn csv_bytes(cfg: &RunConfig, workers: usize, dir: &Path) -> Vec<u8> {
    let mut cfg = cfg.clone();
    cfg.raw.run.output = Some(dir.join(format!("w{workers}")));
    let art = run_command(Verb::Simulate, &cfg, Some(workers)).unwrap();
    art.csv.iter().flat_map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn criterion_9_structural_invariants() {
    let mut checks: Vec<(String, bool)> = Vec::new();

    // reconstructed ρ and count bookkeeping
    let plan = plan_for(&preset("dimer_j120"));
    let n = 5000;
    let ket = plan.site_ket(0).unwrap();
    let run = run_ensemble(&plan, &ket, &EnsembleOptions { trajectories: n, seed: 11, stride: 5, workers: None }).unwrap();
    let mut worst_trace: f64 = 0.0;
    let mut worst_herm: f64 = 0.0;
    let mut worst_eig = f64::INFINITY;
    for rho in &run.states {
        let tr: Complex64 = (0..rho.nrows()).map(|i| rho[(i, i)]).sum();
        worst_trace = worst_trace.max((tr - 1.0).norm());
        worst_herm = worst_herm.max((rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max));
        worst_eig = worst_eig.min(smallest_eigenvalue(rho));
    }
    checks.push((format!("trace err {worst_trace:.1e}"), worst_trace < 1e-10));
    checks.push((format!("Hermiticity err {worst_herm:.1e}"), worst_herm < 1e-12));
    checks.push((format!("min eigenvalue {worst_eig:.1e}"), worst_eig > -1e-10));
    let conserved = run.counts.iter().all(|c| c.iter().sum::<u64>() == n as u64);
    checks.push((format!("counts sum to N: {conserved}"), conserved));

    // seed determinism across worker counts
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("dimer_j120");
    cfg.raw.run.trajectories = 2000;
    cfg.raw.run.seed = 42;
    let one = csv_bytes(&cfg, 1, dir.path());
    let identical = [2, 8].iter().all(|&w| csv_bytes(&cfg, w, dir.path()) == one) && !one.is_empty();
    checks.push((format!("1/2/8 workers byte-identical: {identical}"), identical));

    // line-broadening limits
    let bath = BathSpec::ohmic(35.0, 50.0, 300.0).unwrap();
    let grid = TimeGrid::new(1.0, 3000.0).unwrap();
    let table = tabulate_linebroadening(&bath, &grid).unwrap();
    let origin = table.g(0) == Complex64::new(0.0, 0.0) && table.gdot(0) == Complex64::new(0.0, 0.0);
    checks.push((format!("g(0) = ġ(0) = 0: {origin}"), origin));
    let lambda = 35.0 * CM_TO_RAD_PER_FS;
    let slope = table.gdot(grid.steps()).im;
    let rel = (slope + lambda).abs() / lambda;
    checks.push((format!("Im ġ(3 ps)/(−λ) off by {:.2}%", 100.0 * rel), rel < 0.01));

    let short = TimeGrid::new(1.0, 1000.0).unwrap();
    let a = tabulate_linebroadening(&bath, &short).unwrap();
    let b = tabulate_linebroadening_refined(&bath, &short, 2).unwrap();
    let mut halving: f64 = 0.0;
    for i in 1..short.len() {
        for (x, y) in [(a.g(i), b.g(i)), (a.gdot(i), b.gdot(i)), (a.gddot(i), b.gddot(i))] {
            halving = halving.max((x - y).norm() / y.norm().max(1e-300));
        }
    }
    checks.push((format!("quadrature halving change {halving:.1e}"), halving <= 1e-8));

    let pass = checks.iter().all(|(_, ok)| *ok);
    let text: Vec<String> = checks.iter().map(|(s, _)| s.clone()).collect();
    report(9, "structural invariants", pass, &text.join("; "));
    for (s, ok) in &checks {
        assert!(ok, "{s}");
    }
}

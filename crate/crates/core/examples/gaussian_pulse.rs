//! Gaussian pulse split into 2ⁿ + 1 constant segments, then propagated by
//! the quantum-jump ensemble. Shows how the state registry grows with the
//! number of segments.
//!
//!     cargo run --release --example gaussian_pulse -- [tolerance]

use cmrt_nmqj::bath::{BathSpec, TimeGrid};
use cmrt_nmqj::model::SiteBasisModel;
use cmrt_nmqj::nmqj::{run_ensemble, EnsembleOptions};
use cmrt_nmqj::plan::SimulationPlan;
use cmrt_nmqj::pulses::{discretize_gaussian, gaussian_area_error, GaussianPulseSpec};

fn main() -> cmrt_nmqj::Result<()> {
    let tol: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-6);
    let spec = GaussianPulseSpec::new(100.0, 100.0, vec![100.0, 200.0], 13000.0, tol)?;
    for n in [3, 5, 9, 17, 33, 65, 129, 257, 513] {
        println!("{n:4} segments: relative area error {:.3e}", gaussian_area_error(&spec, n));
    }
    let pulse = discretize_gaussian(&spec)?;
    println!("tolerance {tol:e} -> {} segments", pulse.segments);

    let model = SiteBasisModel::dimer(-12800.0, 200.0, 100.0, 120.0, [1.0, 1.0])?;
    let bath = BathSpec::ohmic(35.0, 50.0, 300.0)?;
    let plan = SimulationPlan::build(&model, &[bath], &pulse.schedule, TimeGrid::new(1.0, 400.0)?)?;
    let ground = plan.site_ket(0)?;
    let run = run_ensemble(&plan, &ground, &EnsembleOptions { trajectories: 2000, seed: 7, stride: 100, workers: None })?;
    println!(
        "registry: {} entries ({} superpositions, {} eigen-entries), {} levels",
        run.registry_len,
        run.superposition_entries,
        run.eigen_entries,
        plan.levels()
    );
    Ok(())
}

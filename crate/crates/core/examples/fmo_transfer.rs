//! Energy transfer in the 7-site FMO complex after excitation of site 6,
//! no laser. Loads `presets/fmo.toml` and prints the oracle populations of
//! the sites that carry more than 10 % at some time.
//!
//!     cargo run --release --example fmo_transfer

use std::path::Path;

use cmrt_nmqj::config::load_config;
use cmrt_nmqj::observables::{site_populations, DensityMatrixSnapshot};
use cmrt_nmqj::plan::SimulationPlan;

fn main() -> cmrt_nmqj::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/fmo.toml");
    let cfg = load_config(&path)?;
    let plan = SimulationPlan::build(&cfg.model, &cfg.baths, &cfg.schedule, cfg.grid)?;
    let ket = plan.site_ket(cfg.run().initial_site)?;
    let traj = plan.oracle(&(&ket * ket.adjoint()), 50)?;

    println!("{:>6} {:>7} {:>7} {:>7} {:>7}", "t", "P3", "P4", "P5", "P6");
    for (t, rho) in traj.times.iter().zip(&traj.states) {
        let p = site_populations(&DensityMatrixSnapshot::from_exciton(plan.exciton(), rho, plan.carrier(), *t));
        println!("{t:6.0} {:7.4} {:7.4} {:7.4} {:7.4}", p.sites[2], p.sites[3], p.sites[4], p.sites[5]);
    }
    Ok(())
}

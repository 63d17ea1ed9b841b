//! Time-dependent CMRT rates of the J = 120 cm⁻¹ dimer: the downhill rate
//! exceeds the uphill one once both reach their plateau.
//!
//!     cargo run --release --example rate_tables

use cmrt_nmqj::bath::{reorganization_energy, BathSpec, TimeGrid};
use cmrt_nmqj::model::{diagonalize_site_hamiltonian, SiteBasisModel};
use cmrt_nmqj::plan::site_broadening;
use cmrt_nmqj::rates::{stationary_dissipation_rates, BasisTag, RateTables};

fn main() -> cmrt_nmqj::Result<()> {
    let model = SiteBasisModel::dimer(-12800.0, 200.0, 100.0, 120.0, [1.0, 1.0])?;
    let bath = BathSpec::ohmic(35.0, 50.0, 300.0)?;
    let grid = TimeGrid::new(1.0, 1000.0)?;
    let lambda = reorganization_energy(&bath)?;
    let broadening = site_broadening(&[bath], 2, &grid)?;
    let exciton = diagonalize_site_hamiltonian(&model, &[lambda, lambda])?;
    let eps = exciton.shifted_energies();
    println!("λ = {lambda:.2} cm^-1, shifted exciton energies {:.2} {:.2}", eps[1], eps[2]);

    let tables = RateTables::build(exciton.levels(), &broadening, BasisTag::Exciton, None)?;
    println!("{:>6} {:>11} {:>11} {:>11}", "t", "R(1<-2)", "R(2<-1)", "R^pd_12");
    for i in (0..tables.len()).step_by(100) {
        println!(
            "{:6.0} {:11.3e} {:11.3e} {:11.3e}",
            grid.time(i),
            tables.dis(i, 1, 2),
            tables.dis(i, 2, 1),
            tables.pd(i, 1, 2)
        );
    }
    let plateau = stationary_dissipation_rates(&tables)?;
    println!("plateau R(1<-2) = {:.4e}, R(2<-1) = {:.4e} fs^-1", plateau.rates[(1, 2)], plateau.rates[(2, 1)]);
    Ok(())
}

//! Linear absorption of a J = 300 cm⁻¹ dimer with exciton dipoles 10 D and
//! 5 D. The two lines sit ≈ 2√(10² + 300²) apart with area ratio ≈ 4.
//!
//!     cargo run --release --example absorption_spectrum

use cmrt_nmqj::bath::{reorganization_energy, BathSpec, TimeGrid};
use cmrt_nmqj::model::{diagonalize_site_hamiltonian, SiteBasisModel};
use cmrt_nmqj::observables::{absorption_spectrum, frequency_grid};
use cmrt_nmqj::plan::site_broadening;
use cmrt_nmqj::rates::{plateau_estimate, BasisTag, RateTables};

fn main() -> cmrt_nmqj::Result<()> {
    let model = SiteBasisModel::dimer(-12800.0, 120.0, 100.0, 300.0, [10.0, 5.0])?;
    let bath = BathSpec::ohmic(35.0, 50.0, 300.0)?;
    let grid = TimeGrid::new(1.0, 2000.0)?;
    let lambda = reorganization_energy(&bath)?;
    let broadening = site_broadening(&[bath], 2, &grid)?;
    let exciton = diagonalize_site_hamiltonian(&model, &[lambda, lambda])?;

    // the delocalized pair relaxes very slowly; its rate barely matters here
    let tables = RateTables::build(exciton.levels(), &broadening, BasisTag::Exciton, None)?;
    let (stationary, drift) = plateau_estimate(&tables);
    println!("R^dis window mean {:.2e} fs^-1 (relative drift {drift:.1e})", stationary.rates[(1, 2)]);

    let omega = frequency_grid(12200.0, 13800.0, 1.0)?;
    let spectrum = absorption_spectrum(&exciton, &broadening, &stationary.rates, &omega)?;
    let peaks = spectrum.peaks();
    for (w, i) in &peaks {
        println!("peak at {w:.1} cm^-1, height {i:.4}");
    }
    if let [(a, _), (b, _)] = peaks[..] {
        let mid = spectrum.omega[spectrum
            .omega
            .iter()
            .zip(&spectrum.intensity)
            .filter(|(w, _)| **w > a && **w < b)
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(w, _)| spectrum.omega.iter().position(|v| v == w).unwrap())
            .unwrap()];
        let low = spectrum.integrate(omega[0], mid);
        let high = spectrum.integrate(mid, *omega.last().unwrap());
        println!("splitting {:.2} cm^-1 (expected {:.2})", b - a, 2.0 * (100.0f64 + 90000.0).sqrt());
        println!("area ratio {:.3}", low / high);
    }
    Ok(())
}

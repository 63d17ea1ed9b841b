//! Line-broadening function g(t) of an Ohmic bath and its short- and
//! long-time limits: g(0) = ġ(0) = 0 and Im ġ(t) → −λ.
//!
//!     cargo run --release --example bath_correlation -- [T]

use cmrt_nmqj::bath::{reorganization_energy, tabulate_linebroadening, BathSpec, TimeGrid};
use cmrt_nmqj::units::angular;

fn main() -> cmrt_nmqj::Result<()> {
    let temperature: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300.0);
    let bath = BathSpec::ohmic(35.0, 50.0, temperature)?;
    let lambda = reorganization_energy(&bath)?;
    let table = tabulate_linebroadening(&bath, &TimeGrid::new(1.0, 1000.0)?)?;
    println!("T = {temperature} K, λ = {lambda} cm^-1 = {:.4e} fs^-1", angular(lambda));
    println!("{:>6} {:>11} {:>11} {:>11} {:>11}", "t", "Re g", "Im g", "Re ġ", "Im ġ");
    for i in [0, 1, 5, 10, 25, 50, 100, 200, 500, 1000] {
        let (g, gd) = (table.g(i), table.gdot(i));
        println!("{i:6} {:11.4e} {:11.4e} {:11.4e} {:11.4e}", g.re, g.im, gd.re, gd.im);
    }
    Ok(())
}

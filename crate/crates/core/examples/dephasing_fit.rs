//! Least-squares map from pairwise pure-dephasing rates R^pd_kk′ to the
//! per-level Lindblad rates Γ_k with (Γ_k + Γ_k′)/2 ≈ R^pd_kk′.

use nalgebra::DMatrix;

use cmrt_nmqj::lindblad::fit_lindblad_dephasing;

fn main() -> cmrt_nmqj::Result<()> {
    // exactly representable: Γ = (0, 4, 8)
    let exact = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 4.0, 2.0, 0.0, 6.0, 4.0, 6.0, 0.0]);
    let (gamma, residual) = fit_lindblad_dephasing(&exact)?;
    println!("Γ = {gamma:.6?}, misfit {residual:.1e}");

    // four levels, generic rates: only a least-squares fit exists
    let pd = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 0.01 * (1 + i + j) as f64 + 0.003 * (i * j) as f64 });
    let (gamma, residual) = fit_lindblad_dephasing(&pd)?;
    println!("Γ = {gamma:.5?}, misfit {residual:.2e}");
    for k in 0..4 {
        for l in k + 1..4 {
            println!("  R^pd[{k}][{l}] = {:.5}  fit {:.5}", pd[(k, l)], 0.5 * (gamma[k] + gamma[l]));
        }
    }
    Ok(())
}

//! Unit conventions.

/// Angular frequency in rad/fs of an energy of 1 cm⁻¹ (2πc).
pub const CM_TO_RAD_PER_FS: f64 = 1.883_651_567_3e-4;

/// Boltzmann constant in cm⁻¹/K.
pub const BOLTZMANN_CM_PER_K: f64 = 0.695_034_800_4;

/// Converts an energy in cm⁻¹ to an angular frequency in rad/fs.
#[inline]
pub fn angular(energy_cm: f64) -> f64 {
    energy_cm * CM_TO_RAD_PER_FS
}

/// Inverse thermal energy β = 1/(k_B T) in cm.
#[inline]
pub fn beta(temperature_k: f64) -> f64 {
    1.0 / (BOLTZMANN_CM_PER_K * temperature_k)
}

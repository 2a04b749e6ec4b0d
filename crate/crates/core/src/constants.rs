//! CODATA 2018 exact SI constants.

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Superconducting flux quantum h / 2e (Wb).
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);
/// Reduced flux quantum Φ₀ / 2π (Wb).
pub const REDUCED_FLUX_QUANTUM: f64 = FLUX_QUANTUM / (2.0 * std::f64::consts::PI);

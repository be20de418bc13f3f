//! Physical constants (exact SI values since the 2019 redefinition).

use std::f64::consts::PI;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts an ordinary frequency (Hz) to an angular rate (rad/s).
#[inline]
pub fn angular(frequency_hz: f64) -> f64 {
    2.0 * PI * frequency_hz
}

/// Optical frequency of a vacuum wavelength.
#[inline]
pub fn frequency_from_wavelength(wavelength_m: f64) -> f64 {
    SPEED_OF_LIGHT / wavelength_m
}

/// Converts a power ratio to decibels.
#[inline]
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

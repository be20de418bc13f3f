//! Optomechanical device parameters and the analytic scattering-rate formulas.
//!
//! Every rate stored in these types is an ordinary frequency in Hz (the
//! "/2π" value). Conversion to angular units happens inside the formulas.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::units::{angular, BOLTZMANN, HBAR, PLANCK};

/// Optical whispering-gallery mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalMode {
    pub resonance_frequency: f64,
    pub kappa_intrinsic: f64,
    pub kappa_external: f64,
    /// Backscattering-induced doublet splitting; zero for a single mode.
    pub doublet_splitting: f64,
}

impl OpticalMode {
    pub fn new(
        resonance_frequency: f64,
        kappa_intrinsic: f64,
        kappa_external: f64,
        doublet_splitting: f64,
    ) -> Result<Self> {
        let mode = Self {
            resonance_frequency,
            kappa_intrinsic,
            kappa_external,
            doublet_splitting,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("resonance_frequency", self.resonance_frequency),
            ("kappa_intrinsic", self.kappa_intrinsic),
            ("kappa_external", self.kappa_external),
            ("doublet_splitting", self.doublet_splitting),
        ] {
            ensure_finite(name, v)?;
        }
        if self.resonance_frequency <= 0.0 {
            return Err(Error::Validation("optical resonance frequency must be > 0".into()));
        }
        if self.kappa_intrinsic <= 0.0 || self.kappa_external <= 0.0 {
            return Err(Error::Validation("optical loss rates must be > 0".into()));
        }
        if self.doublet_splitting < 0.0 {
            return Err(Error::Validation("doublet splitting must be >= 0".into()));
        }
        Ok(())
    }

    /// Total loss rate κ_i + κ_e.
    pub fn kappa_total(&self) -> f64 {
        self.kappa_intrinsic + self.kappa_external
    }

    /// Loaded quality factor.
    pub fn quality_factor(&self) -> f64 {
        self.resonance_frequency / self.kappa_total()
    }
}

/// Mechanical mode (radial breathing mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    pub frequency: f64,
    pub damping: f64,
}

impl MechanicalMode {
    pub fn new(frequency: f64, damping: f64) -> Result<Self> {
        let mode = Self { frequency, damping };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("mechanical frequency", self.frequency)?;
        ensure_finite("mechanical damping", self.damping)?;
        if self.frequency <= 0.0 || self.damping <= 0.0 {
            return Err(Error::Validation("mechanical frequency and damping must be > 0".into()));
        }
        Ok(())
    }

    pub fn quality_factor(&self) -> f64 {
        self.frequency / self.damping
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub optical: OpticalMode,
    pub mechanical: MechanicalMode,
    /// Vacuum optomechanical coupling g0/2π, Hz.
    pub g0: f64,
}

impl DeviceModel {
    pub fn new(optical: OpticalMode, mechanical: MechanicalMode, g0: f64) -> Result<Self> {
        let device = Self {
            optical,
            mechanical,
            g0,
        };
        device.validate()?;
        Ok(device)
    }

    pub fn validate(&self) -> Result<()> {
        self.optical.validate()?;
        self.mechanical.validate()?;
        ensure_finite("g0", self.g0)?;
        if self.g0 <= 0.0 {
            return Err(Error::Validation("g0 must be > 0".into()));
        }
        Ok(())
    }

    /// Sideband-resolution ratio Ω_m / κ_tot.
    pub fn sideband_resolution(&self) -> f64 {
        self.mechanical.frequency / self.optical.kappa_total()
    }

    /// Rate per intracavity photon per unit of detection efficiency,
    /// `4 κ_e g0² / κ_tot²` in s⁻¹.
    pub fn scattering_prefactor(&self) -> f64 {
        let ke = angular(self.optical.kappa_external);
        let kt = angular(self.optical.kappa_total());
        let g0 = angular(self.g0);
        4.0 * ke / (kt * kt) * g0 * g0
    }
}

/// Detection chain: efficiency, dark counts and probe leakage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency_total: f64,
    pub dark_rate: f64,
    pub pump_leak_rate: f64,
}

impl DetectorModel {
    pub fn new(efficiency_total: f64, dark_rate: f64, pump_leak_rate: f64) -> Result<Self> {
        let det = Self {
            efficiency_total,
            dark_rate,
            pump_leak_rate,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("efficiency_total", self.efficiency_total)?;
        ensure_finite("dark_rate", self.dark_rate)?;
        ensure_finite("pump_leak_rate", self.pump_leak_rate)?;
        if !(self.efficiency_total > 0.0 && self.efficiency_total <= 1.0) {
            return Err(Error::Validation("efficiency_total must lie in (0, 1]".into()));
        }
        if self.dark_rate < 0.0 || self.pump_leak_rate < 0.0 {
            return Err(Error::Validation("dark and leak rates must be >= 0".into()));
        }
        Ok(())
    }
}

/// Thermal mean occupancy `1 / (exp(h f / k_B T) - 1)`.
pub fn bose_einstein_occupancy(frequency: f64, temperature: f64) -> Result<f64> {
    ensure_finite("frequency", frequency)?;
    ensure_finite("temperature", temperature)?;
    if frequency <= 0.0 {
        return Err(Error::Domain(format!("frequency must be > 0, got {frequency}")));
    }
    if temperature < 0.0 {
        return Err(Error::Domain(format!("temperature must be >= 0, got {temperature}")));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let x = PLANCK * frequency / (BOLTZMANN * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Inverse of [`bose_einstein_occupancy`]: the temperature whose thermal
/// occupancy at `frequency` equals `occupancy`.
pub fn modal_temperature(occupancy: f64, frequency: f64) -> Result<f64> {
    ensure_finite("occupancy", occupancy)?;
    ensure_finite("frequency", frequency)?;
    if occupancy <= 0.0 {
        return Err(Error::Domain(format!("occupancy must be > 0, got {occupancy}")));
    }
    if frequency <= 0.0 {
        return Err(Error::Domain(format!("frequency must be > 0, got {frequency}")));
    }
    Ok(PLANCK * frequency / (BOLTZMANN * (1.0 / occupancy).ln_1p()))
}

/// Steady-state mean intracavity photon number for a drive of `power` watts
/// at `detuning` Hz from the optical resonance.
pub fn intracavity_photon_number(
    power: f64,
    detuning: f64,
    optical: &OpticalMode,
    laser_frequency: f64,
) -> Result<f64> {
    ensure_finite("power", power)?;
    ensure_finite("detuning", detuning)?;
    ensure_finite("laser_frequency", laser_frequency)?;
    if power < 0.0 {
        return Err(Error::Domain(format!("power must be >= 0, got {power}")));
    }
    if laser_frequency <= 0.0 {
        return Err(Error::Domain("laser frequency must be > 0".into()));
    }
    optical.validate()?;
    let photon_flux = power / (HBAR * angular(laser_frequency));
    let ke = angular(optical.kappa_external);
    let half_width = angular(optical.kappa_total()) / 2.0;
    let delta = angular(detuning);
    Ok(ke * photon_flux / (delta * delta + half_width * half_width))
}

/// Detected Stokes and anti-Stokes scattering rates `(Γ_b, Γ_r)` in counts/s.
pub fn sideband_rates(device: &DeviceModel, n_a: f64, n_b: f64, detector: &DetectorModel) -> Result<(f64, f64)> {
    ensure_finite("n_a", n_a)?;
    ensure_finite("n_b", n_b)?;
    if n_a < 0.0 || n_b < 0.0 {
        return Err(Error::Domain("photon and phonon numbers must be >= 0".into()));
    }
    let base = detector.efficiency_total * device.scattering_prefactor() * n_a;
    Ok((base * (n_b + 1.0), base * n_b))
}

/// Mean phonon occupancy from the Stokes/anti-Stokes rate ratio.
pub fn occupancy_from_rates(gamma_blue: f64, gamma_red: f64) -> Result<f64> {
    ensure_finite("gamma_blue", gamma_blue)?;
    ensure_finite("gamma_red", gamma_red)?;
    if gamma_red < 0.0 {
        return Err(Error::Estimation("anti-Stokes rate is negative".into()));
    }
    if gamma_red >= gamma_blue {
        return Err(Error::Estimation(format!(
            "anti-Stokes rate {gamma_red} is not below Stokes rate {gamma_blue}"
        )));
    }
    if gamma_red == 0.0 {
        return Ok(0.0);
    }
    // r / (b - r) is the same quantity as 1 / (b/r - 1) without the extra rounding.
    Ok(gamma_red / (gamma_blue - gamma_red))
}

/// Total count rate seen by the photon detector.
pub fn spd_rate(gamma_sideband: f64, detector: &DetectorModel) -> f64 {
    gamma_sideband + detector.dark_rate + detector.pump_leak_rate
}

/// Ground-state weight of a thermal state with mean occupancy `n_b`.
pub fn thermal_ground_probability(n_b: f64) -> Result<f64> {
    ensure_finite("n_b", n_b)?;
    if n_b < 0.0 {
        return Err(Error::Domain("occupancy must be >= 0".into()));
    }
    Ok(1.0 / (1.0 + n_b))
}

/// Device and detector values measured or computed for the GaAs disk.
pub mod reference {
    use super::*;

    pub const OPTICAL_WAVELENGTH_M: f64 = 1523.49e-9;
    pub const MECHANICAL_FREQUENCY_HZ: f64 = 1.085e9;
    pub const KAPPA_INTRINSIC_HZ: f64 = 1585e6;
    pub const KAPPA_EXTERNAL_HZ: f64 = 480e6;
    pub const MECHANICAL_DAMPING_HZ: f64 = 6e6;
    pub const G0_HZ: f64 = 220e3;
    pub const DARK_RATE_HZ: f64 = 11.0;

    pub fn optical() -> OpticalMode {
        OpticalMode {
            resonance_frequency: crate::units::frequency_from_wavelength(OPTICAL_WAVELENGTH_M),
            kappa_intrinsic: KAPPA_INTRINSIC_HZ,
            kappa_external: KAPPA_EXTERNAL_HZ,
            doublet_splitting: 0.0,
        }
    }

    pub fn mechanical() -> MechanicalMode {
        MechanicalMode {
            frequency: MECHANICAL_FREQUENCY_HZ,
            damping: MECHANICAL_DAMPING_HZ,
        }
    }

    pub fn device() -> DeviceModel {
        DeviceModel {
            optical: optical(),
            mechanical: mechanical(),
            g0: G0_HZ,
        }
    }
}

//! Vacuum coupling rate from the sideband count rate per intracavity photon.

use serde::{Deserialize, Serialize};

use crate::device::{DetectorModel, DeviceModel};
use crate::error::{ensure_finite, Error, Result};
use crate::units::angular;

/// Which sideband combination the fitted slope refers to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SidebandConvention {
    /// Stokes plus anti-Stokes, `∝ 2 n_b + 1`.
    #[default]
    Sum,
    /// Average of the two, `∝ n_b + 1/2`.
    Mean,
    /// Stokes only, `∝ n_b + 1`.
    Stokes,
    /// Anti-Stokes only, `∝ n_b`.
    AntiStokes,
}

impl SidebandConvention {
    pub fn occupancy_factor(&self, n_b: f64) -> f64 {
        match self {
            Self::Sum => 2.0 * n_b + 1.0,
            Self::Mean => n_b + 0.5,
            Self::Stokes => n_b + 1.0,
            Self::AntiStokes => n_b,
        }
    }
}

impl std::str::FromStr for SidebandConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            "stokes" => Ok(Self::Stokes),
            "anti-stokes" => Ok(Self::AntiStokes),
            other => Err(Error::Domain(format!("unknown sideband convention {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEstimate {
    /// g0 / 2π, Hz.
    pub g0: f64,
    pub uncertainty: f64,
    pub convention: SidebandConvention,
}

/// Inverts `slope = η · 4κ_e/κ_tot² · g0² · f(n_b)` for `g0`, where `slope`
/// is the detected count rate per intracavity photon and `f` is set by the
/// convention. The device's own `g0` is ignored.
pub fn extract_g0(
    slope: f64,
    slope_uncertainty: f64,
    device: &DeviceModel,
    detector: &DetectorModel,
    n_b_thermal: f64,
    convention: SidebandConvention,
) -> Result<CouplingEstimate> {
    ensure_finite("slope", slope)?;
    ensure_finite("slope_uncertainty", slope_uncertainty)?;
    ensure_finite("n_b_thermal", n_b_thermal)?;
    if slope <= 0.0 {
        return Err(Error::Domain(format!("slope must be > 0, got {slope}")));
    }
    if slope_uncertainty < 0.0 || n_b_thermal < 0.0 {
        return Err(Error::Domain("uncertainty and occupancy must be >= 0".into()));
    }
    device.optical.validate()?;
    detector.validate()?;
    let factor = convention.occupancy_factor(n_b_thermal);
    if factor <= 0.0 {
        return Err(Error::Domain("anti-Stokes convention needs n_b > 0".into()));
    }
    let ke = angular(device.optical.kappa_external);
    let kt = angular(device.optical.kappa_total());
    let g0_sq = slope / (detector.efficiency_total * 4.0 * ke / (kt * kt) * factor);
    let g0 = g0_sq.sqrt() / (2.0 * std::f64::consts::PI);
    Ok(CouplingEstimate {
        g0,
        // g0 ∝ √slope.
        uncertainty: 0.5 * g0 * slope_uncertainty / slope,
        convention,
    })
}

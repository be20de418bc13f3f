//! Cascaded Fabry-Perot filtering of the scattered light.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::device::MechanicalMode;
use crate::error::{ensure_finite, Error, Result};
use crate::numerics::integrate_piecewise;

/// One tunable Fabry-Perot cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FabryPerotStage {
    pub fwhm: f64,
    pub fsr: f64,
    pub peak_transmission: f64,
}

impl FabryPerotStage {
    pub fn new(fwhm: f64, fsr: f64, peak_transmission: f64) -> Result<Self> {
        let stage = Self {
            fwhm,
            fsr,
            peak_transmission,
        };
        stage.validate()?;
        Ok(stage)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("fwhm", self.fwhm)?;
        ensure_finite("fsr", self.fsr)?;
        ensure_finite("peak_transmission", self.peak_transmission)?;
        if !(self.fwhm > 0.0 && self.fwhm < self.fsr) {
            return Err(Error::Validation(format!(
                "filter stage needs 0 < fwhm < fsr (fwhm {}, fsr {})",
                self.fwhm, self.fsr
            )));
        }
        if !(self.peak_transmission > 0.0 && self.peak_transmission <= 1.0) {
            return Err(Error::Validation("peak transmission must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn finesse(&self) -> f64 {
        self.fsr / self.fwhm
    }
}

/// Step-like transmission loss once the filters leave their stable window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftLaw {
    pub stable_window: f64,
    pub post_window_transmission_factor: f64,
}

impl Default for DriftLaw {
    fn default() -> Self {
        Self {
            stable_window: 2.5,
            post_window_transmission_factor: 0.85,
        }
    }
}

impl DriftLaw {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("stable_window", self.stable_window)?;
        ensure_finite("post_window_transmission_factor", self.post_window_transmission_factor)?;
        if self.stable_window < 0.0 {
            return Err(Error::Validation("stable window must be >= 0".into()));
        }
        let f = self.post_window_transmission_factor;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Validation("drift factor must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn factor(&self, elapsed: f64) -> f64 {
        if elapsed <= self.stable_window {
            1.0
        } else {
            self.post_window_transmission_factor
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterChain {
    pub stages: Vec<FabryPerotStage>,
    pub drift: DriftLaw,
    /// Optional floor on the achievable extinction, in dB below the
    /// combined peak transmission.
    #[serde(default)]
    pub extinction_floor_db: Option<f64>,
}

impl FilterChain {
    pub fn new(stages: Vec<FabryPerotStage>, drift: DriftLaw) -> Result<Self> {
        let chain = Self {
            stages,
            drift,
            extinction_floor_db: None,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Validation("filter chain needs at least one stage".into()));
        }
        for s in &self.stages {
            s.validate()?;
        }
        self.drift.validate()?;
        if let Some(db) = self.extinction_floor_db {
            ensure_finite("extinction_floor_db", db)?;
            if db <= 0.0 {
                return Err(Error::Validation("extinction floor must be > 0 dB".into()));
            }
        }
        Ok(())
    }

    /// Product of the stage peak transmissions.
    pub fn peak_transmission(&self) -> f64 {
        self.stages.iter().map(|s| s.peak_transmission).product()
    }

    /// Widest stage linewidth, used to size quadrature windows.
    fn widest_fwhm(&self) -> f64 {
        self.stages.iter().map(|s| s.fwhm).fold(0.0, f64::max)
    }

    fn narrowest_fsr(&self) -> f64 {
        self.stages.iter().map(|s| s.fsr).fold(f64::INFINITY, f64::min)
    }

    /// Two cavities as built for the thermometry setup: one characterized
    /// at 5.06 GHz / 10.07 MHz, the other at 5.8 GHz / 10 MHz, each passing
    /// ~70% so the cascade passes ~50%.
    pub fn reference() -> Self {
        Self {
            stages: vec![
                FabryPerotStage {
                    fwhm: 10.07e6,
                    fsr: 5.06e9,
                    peak_transmission: std::f64::consts::FRAC_1_SQRT_2,
                },
                FabryPerotStage {
                    fwhm: 10e6,
                    fsr: 5.8e9,
                    peak_transmission: std::f64::consts::FRAC_1_SQRT_2,
                },
            ],
            drift: DriftLaw::default(),
            extinction_floor_db: None,
        }
    }
}

/// Airy transmission of a single stage at `offset` Hz from its resonance.
pub fn stage_transmission(stage: &FabryPerotStage, offset: f64) -> f64 {
    let coefficient = 2.0 * stage.finesse() / PI;
    let s = (PI * offset / stage.fsr).sin();
    stage.peak_transmission / (1.0 + coefficient * coefficient * s * s)
}

/// Transmission of the whole cascade after `elapsed` seconds of operation.
pub fn chain_transmission(chain: &FilterChain, offset: f64, elapsed: f64) -> f64 {
    let mut t: f64 = chain.stages.iter().map(|s| stage_transmission(s, offset)).product();
    if let Some(db) = chain.extinction_floor_db {
        t = t.max(chain.peak_transmission() * 10f64.powf(-db / 10.0));
    }
    t * chain.drift.factor(elapsed.max(0.0))
}

/// Extinction in dB relative to the on-resonance transmission.
pub fn extinction_db(chain: &FilterChain, offset: f64) -> f64 {
    10.0 * (chain_transmission(chain, 0.0, 0.0) / chain_transmission(chain, offset, 0.0)).log10()
}

fn lorentzian_density(x: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    hw / PI / (x * x + hw * hw)
}

/// Overlap of the filter transmission with a unit-area mechanical line
/// centered `line_offset` Hz away from the filter resonance.
pub fn filter_overlap(chain: &FilterChain, mech: &MechanicalMode, line_offset: f64) -> Result<f64> {
    let half_period = 0.5 * chain.narrowest_fsr();
    let width = chain.widest_fwhm().max(mech.damping);
    let mut points = vec![-half_period, half_period];
    for center in [0.0, line_offset] {
        for k in [-200.0, -20.0, -3.0, -1.0, 0.0, 1.0, 3.0, 20.0, 200.0] {
            let p = center + k * width;
            if p > -half_period && p < half_period {
                points.push(p);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    integrate_piecewise(
        |f| chain_transmission(chain, f, 0.0) * lorentzian_density(f - line_offset, mech.damping),
        &points,
        1e-15,
        1e-9,
    )
}

/// Relative scattered-photon throughput when the probe sits `probe_detuning`
/// Hz from the optical resonance, normalized to 1 at ±Ω_m.
///
/// Positive detunings select the Stokes (blue) branch, whose photons land at
/// `probe_detuning - Ω_m`; negative ones the anti-Stokes branch at
/// `probe_detuning + Ω_m`.
pub fn sweep_response(chain: &FilterChain, mech: &MechanicalMode, probe_detuning: f64) -> Result<f64> {
    ensure_finite("probe_detuning", probe_detuning)?;
    let line_offset = if probe_detuning >= 0.0 {
        probe_detuning - mech.frequency
    } else {
        probe_detuning + mech.frequency
    };
    let peak = filter_overlap(chain, mech, 0.0)?;
    Ok(filter_overlap(chain, mech, line_offset)? / peak)
}

/// Tabulates [`sweep_response`] as `(detuning, response)` rows.
pub fn sweep_table(chain: &FilterChain, mech: &MechanicalMode, detunings: &[f64]) -> Result<Vec<(f64, f64)>> {
    detunings
        .iter()
        .map(|&d| Ok((d, sweep_response(chain, mech, d)?)))
        .collect()
}

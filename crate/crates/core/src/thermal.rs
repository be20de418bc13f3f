//! Two-channel laser heating of the mechanical mode.
//!
//! The occupancy during a pulse is the bath occupancy plus a fast channel
//! that follows the instantaneous pulse power and a slow channel that only
//! sees the sequence-averaged power. Timescales act as step thresholds.

use serde::{Deserialize, Serialize};

use crate::device::{bose_einstein_occupancy, MechanicalMode};
use crate::error::{ensure_finite, Error, Result};
use crate::sequence::{average_power, Element, Pulse, PulseLabel, PulseSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CryostatEnvironment {
    /// Mixing-chamber temperature, K.
    pub base_temperature: f64,
}

impl CryostatEnvironment {
    pub fn new(base_temperature: f64) -> Result<Self> {
        let env = Self { base_temperature };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("base_temperature", self.base_temperature)?;
        if self.base_temperature <= 0.0 {
            return Err(Error::Validation("base temperature must be > 0 K".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingModel {
    /// Occupancy added per W^fast_exponent of pulse-on power.
    pub fast_amplitude: f64,
    pub fast_exponent: f64,
    /// Relaxation upper bound of the fast channel, s.
    pub fast_timescale: f64,
    /// Occupancy added per W^slow_exponent of average power.
    pub slow_amplitude: f64,
    pub slow_exponent: f64,
    /// Relaxation lower bound of the slow channel, s.
    pub slow_timescale: f64,
}

impl Default for HeatingModel {
    fn default() -> Self {
        Self {
            fast_amplitude: 0.0,
            fast_exponent: 1.0,
            fast_timescale: 100e-9,
            slow_amplitude: 0.0,
            slow_exponent: 1.0,
            slow_timescale: 20e-6,
        }
    }
}

impl HeatingModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fast_amplitude", self.fast_amplitude),
            ("fast_exponent", self.fast_exponent),
            ("fast_timescale", self.fast_timescale),
            ("slow_amplitude", self.slow_amplitude),
            ("slow_exponent", self.slow_exponent),
            ("slow_timescale", self.slow_timescale),
        ] {
            ensure_finite(name, v)?;
        }
        if self.fast_amplitude < 0.0 || self.slow_amplitude < 0.0 {
            return Err(Error::Validation("heating amplitudes must be >= 0".into()));
        }
        if self.fast_exponent <= 0.0 || self.slow_exponent <= 0.0 {
            return Err(Error::Validation("heating exponents must be > 0".into()));
        }
        if !(self.fast_timescale > 0.0 && self.fast_timescale < self.slow_timescale) {
            return Err(Error::Validation("need 0 < fast_timescale < slow_timescale".into()));
        }
        Ok(())
    }

    fn fast_term(&self, power: f64) -> f64 {
        if power <= 0.0 {
            0.0
        } else {
            self.fast_amplitude * power.powf(self.fast_exponent)
        }
    }

    fn slow_term(&self, average_power: f64) -> f64 {
        if average_power <= 0.0 {
            0.0
        } else {
            self.slow_amplitude * average_power.powf(self.slow_exponent)
        }
    }
}

/// Occupancy during the pulse at `element_index` of the sequence period.
///
/// Earlier pulses whose end lies less than `fast_timescale` before this
/// pulse starts have not relaxed; the fast channel then follows the largest
/// power among this pulse and those unrelaxed predecessors.
pub fn pulse_occupancy(
    seq: &PulseSequence,
    element_index: usize,
    env: &CryostatEnvironment,
    model: &HeatingModel,
    mech: &MechanicalMode,
) -> Result<f64> {
    env.validate()?;
    model.validate()?;
    let pulse = match seq.period_elements.get(element_index) {
        Some(Element::Pulse(p)) => p,
        _ => return Err(Error::Domain(format!("element {element_index} is not a pulse"))),
    };
    let bath = bose_einstein_occupancy(mech.frequency, env.base_temperature)?;

    let n = seq.period_elements.len();
    let mut driving_power = pulse.power;
    let mut elapsed = 0.0;
    for step in 1..n {
        if elapsed >= model.fast_timescale {
            break;
        }
        let el = &seq.period_elements[(element_index + n - step) % n];
        if let Element::Pulse(prev) = el {
            driving_power = driving_power.max(prev.power);
        }
        elapsed += el.duration();
    }

    Ok(bath + model.fast_term(driving_power) + model.slow_term(average_power(seq)?))
}

/// Occupancy during every pulse of the period, keyed by element index.
pub fn occupancy_per_pulse(
    seq: &PulseSequence,
    env: &CryostatEnvironment,
    model: &HeatingModel,
    mech: &MechanicalMode,
) -> Result<Vec<(usize, f64)>> {
    seq.pulses()
        .map(|(i, _)| Ok((i, pulse_occupancy(seq, i, env, model, mech)?)))
        .collect()
}

/// Occupancy during the measurement pulse: the first red, blue or probe
/// pulse of the period (falling back to the first pulse).
pub fn effective_occupancy(
    seq: &PulseSequence,
    env: &CryostatEnvironment,
    model: &HeatingModel,
    mech: &MechanicalMode,
) -> Result<f64> {
    let index = seq
        .pulses()
        .find(|(_, p)| matches!(p.label, PulseLabel::Red | PulseLabel::Blue | PulseLabel::Probe))
        .or_else(|| seq.pulses().next())
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Validation("sequence has no pulse".into()))?;
    pulse_occupancy(seq, index, env, model, mech)
}

/// Occupancy seen by `probe` when it follows `pump` after `delay`, within a
/// repeating period of `period` seconds.
#[allow(clippy::too_many_arguments)]
pub fn pump_probe_occupancy(
    pump: &Pulse,
    probe: &Pulse,
    delay: f64,
    period: f64,
    env: &CryostatEnvironment,
    model: &HeatingModel,
    mech: &MechanicalMode,
) -> Result<f64> {
    ensure_finite("delay", delay)?;
    if delay <= 0.0 {
        return Err(Error::Domain(format!("delay must be > 0, got {delay}")));
    }
    let remainder = period - pump.duration - delay - probe.duration;
    if remainder < 0.0 {
        return Err(Error::Validation(format!(
            "pump, delay and probe exceed the {period} s period"
        )));
    }
    let seq = PulseSequence::new(
        vec![
            Element::Pulse(*pump),
            Element::Gap(delay),
            Element::Pulse(*probe),
            Element::Gap(remainder),
        ],
        period,
    )?;
    pulse_occupancy(&seq, 2, env, model, mech)
}

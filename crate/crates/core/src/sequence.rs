//! Periodic optical drive sequences and their expansion into timelines.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseLabel {
    Red,
    Blue,
    Pump,
    Probe,
}

impl PulseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PulseLabel::Red => "red",
            PulseLabel::Blue => "blue",
            PulseLabel::Pump => "pump",
            PulseLabel::Probe => "probe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "red" => Some(PulseLabel::Red),
            "blue" => Some(PulseLabel::Blue),
            "pump" => Some(PulseLabel::Pump),
            "probe" => Some(PulseLabel::Probe),
            _ => None,
        }
    }
}

impl fmt::Display for PulseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A rectangular optical pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    /// Signed detuning from the optical resonance, Hz.
    pub detuning: f64,
    /// Pulse-on input power, W.
    pub power: f64,
    /// Duration, s.
    pub duration: f64,
    pub label: PulseLabel,
}

impl Pulse {
    pub fn new(label: PulseLabel, detuning: f64, power: f64, duration: f64) -> Result<Self> {
        let p = Self {
            detuning,
            power,
            duration,
            label,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("pulse detuning", self.detuning)?;
        ensure_finite("pulse power", self.power)?;
        ensure_finite("pulse duration", self.duration)?;
        if self.duration <= 0.0 {
            return Err(Error::Validation(format!(
                "{} pulse duration must be > 0, got {}",
                self.label, self.duration
            )));
        }
        if self.power < 0.0 {
            return Err(Error::Validation(format!(
                "{} pulse power must be >= 0, got {}",
                self.label, self.power
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Element {
    Pulse(Pulse),
    Gap(f64),
}

impl Element {
    pub fn duration(&self) -> f64 {
        match self {
            Element::Pulse(p) => p.duration,
            Element::Gap(g) => *g,
        }
    }
}

/// A strictly periodic sequence repeated for `total_duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub period_elements: Vec<Element>,
    pub total_duration: f64,
}

/// One concrete pulse occurrence on the expanded timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub pulse: Pulse,
    /// Position of the defining pulse within the period.
    pub element_index: usize,
    pub period_index: u64,
}

/// A gap occurrence on the expanded timeline (detector still counts darks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapInterval {
    pub start: f64,
    pub end: f64,
    pub element_index: usize,
    pub period_index: u64,
}

impl PulseSequence {
    pub fn new(period_elements: Vec<Element>, total_duration: f64) -> Result<Self> {
        let seq = Self {
            period_elements,
            total_duration,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        let mut pulses = 0;
        for el in &self.period_elements {
            match el {
                Element::Pulse(p) => {
                    p.validate()?;
                    pulses += 1;
                }
                Element::Gap(g) => {
                    ensure_finite("gap", *g)?;
                    if *g < 0.0 {
                        return Err(Error::Validation(format!(
                            "negative gap {g} s would overlap adjacent pulses"
                        )));
                    }
                }
            }
        }
        if pulses == 0 {
            return Err(Error::Validation("sequence period contains no pulse".into()));
        }
        ensure_finite("total_duration", self.total_duration)?;
        let period = self.period();
        if period <= 0.0 {
            return Err(Error::Domain("sequence period has zero length".into()));
        }
        if self.total_duration < period * (1.0 - 1e-12) {
            return Err(Error::Validation(format!(
                "total duration {} s is shorter than one period ({period} s)",
                self.total_duration
            )));
        }
        Ok(())
    }

    /// Canonical thermometry period: red pulse, gap, blue pulse, gap.
    pub fn thermometry(
        power: f64,
        pulse_duration: f64,
        gap: f64,
        mechanical_frequency: f64,
        total_duration: f64,
    ) -> Result<Self> {
        Self::new(
            vec![
                Element::Pulse(Pulse::new(
                    PulseLabel::Red,
                    -mechanical_frequency,
                    power,
                    pulse_duration,
                )?),
                Element::Gap(gap),
                Element::Pulse(Pulse::new(
                    PulseLabel::Blue,
                    mechanical_frequency,
                    power,
                    pulse_duration,
                )?),
                Element::Gap(gap),
            ],
            total_duration,
        )
    }

    /// Pump (blue) then probe (red) after `delay`, padded to `period`.
    #[allow(clippy::too_many_arguments)]
    pub fn pump_probe(
        pump_power: f64,
        pump_duration: f64,
        probe_power: f64,
        probe_duration: f64,
        delay: f64,
        period: f64,
        mechanical_frequency: f64,
        total_duration: f64,
    ) -> Result<Self> {
        let remainder = period - pump_duration - delay - probe_duration;
        if remainder < 0.0 {
            return Err(Error::Validation(format!(
                "pump-probe elements exceed the {period} s period"
            )));
        }
        Self::new(
            vec![
                Element::Pulse(Pulse::new(
                    PulseLabel::Pump,
                    mechanical_frequency,
                    pump_power,
                    pump_duration,
                )?),
                Element::Gap(delay),
                Element::Pulse(Pulse::new(
                    PulseLabel::Probe,
                    -mechanical_frequency,
                    probe_power,
                    probe_duration,
                )?),
                Element::Gap(remainder),
            ],
            total_duration,
        )
    }

    pub fn period(&self) -> f64 {
        self.period_elements.iter().map(Element::duration).sum()
    }

    pub fn on_time_per_period(&self) -> f64 {
        self.pulses().map(|(_, p)| p.duration).sum()
    }

    /// Pulse elements with their index in the period.
    pub fn pulses(&self) -> impl Iterator<Item = (usize, &Pulse)> {
        self.period_elements.iter().enumerate().filter_map(|(i, e)| match e {
            Element::Pulse(p) => Some((i, p)),
            Element::Gap(_) => None,
        })
    }

    /// Start offset of each element within the period.
    pub fn element_offsets(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.period_elements
            .iter()
            .map(|e| {
                let start = t;
                t += e.duration();
                start
            })
            .collect()
    }

    /// Number of periods started within `total_duration`.
    pub fn period_count(&self) -> u64 {
        let period = self.period();
        let n = (self.total_duration / period).ceil();
        // Guard against a rounding-induced extra, empty period.
        let n = if (n - 1.0) * period >= self.total_duration * (1.0 - 1e-12) {
            n - 1.0
        } else {
            n
        };
        n.max(1.0) as u64
    }

    /// Lazily walks every element occurrence, clipped to `total_duration`.
    fn walk(&self) -> impl Iterator<Item = (usize, u64, f64, f64)> + '_ {
        let period = self.period();
        let offsets = self.element_offsets();
        let total = self.total_duration;
        (0..self.period_count()).flat_map(move |k| {
            let base = k as f64 * period;
            let offsets = offsets.clone();
            self.period_elements.iter().enumerate().filter_map(move |(i, e)| {
                let start = base + offsets[i];
                let end = (start + e.duration()).min(total);
                (end > start).then_some((i, k, start, end))
            })
        })
    }

    /// Pulse occurrences as an iterator.
    pub fn timeline(&self) -> impl Iterator<Item = Interval> + '_ {
        self.walk()
            .filter_map(move |(i, k, start, end)| match self.period_elements[i] {
                Element::Pulse(pulse) => Some(Interval {
                    start,
                    end,
                    pulse,
                    element_index: i,
                    period_index: k,
                }),
                Element::Gap(_) => None,
            })
    }

    /// Gap occurrences as an iterator.
    pub fn gap_timeline(&self) -> impl Iterator<Item = GapInterval> + '_ {
        self.walk()
            .filter_map(move |(i, k, start, end)| match self.period_elements[i] {
                Element::Gap(_) => Some(GapInterval {
                    start,
                    end,
                    element_index: i,
                    period_index: k,
                }),
                Element::Pulse(_) => None,
            })
    }
}

/// Pulse-on fraction of one period.
pub fn duty_cycle(seq: &PulseSequence) -> Result<f64> {
    let period = seq.period();
    if !(period > 0.0) {
        return Err(Error::Domain("sequence period has zero length".into()));
    }
    Ok(seq.on_time_per_period() / period)
}

/// Time-averaged input power over one period.
pub fn average_power(seq: &PulseSequence) -> Result<f64> {
    let period = seq.period();
    if !(period > 0.0) {
        return Err(Error::Domain("sequence period has zero length".into()));
    }
    let energy: f64 = seq.pulses().map(|(_, p)| p.power * p.duration).sum();
    Ok(energy / period)
}

/// Expands the sequence into its ordered, non-overlapping pulse intervals.
pub fn expand_timeline(seq: &PulseSequence) -> Result<Vec<Interval>> {
    seq.validate()?;
    Ok(seq.timeline().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const MECH: f64 = 1.085e9;

    #[test]
    fn duty_cycle_examples() {
        let s = PulseSequence::thermometry(1e-9, 4e-6, 1e-6, MECH, 1e-3).unwrap();
        assert_relative_eq!(duty_cycle(&s).unwrap(), 0.8, max_relative = 1e-12);
        let s = PulseSequence::thermometry(1e-9, 4e-6, 0.0, MECH, 1e-3).unwrap();
        assert_eq!(duty_cycle(&s).unwrap(), 1.0);
        let s = PulseSequence::thermometry(1e-9, 4e-6, 96e-6, MECH, 1e-2).unwrap();
        assert_relative_eq!(duty_cycle(&s).unwrap(), 0.04, max_relative = 1e-12);
    }

    #[test]
    fn average_power_examples() {
        let s = PulseSequence::thermometry(340e-9, 4e-6, 96e-6, MECH, 1e-2).unwrap();
        assert_relative_eq!(average_power(&s).unwrap(), 13.6e-9, max_relative = 1e-12);
        let s = PulseSequence::thermometry(340e-9, 4e-6, 1e-6, MECH, 1e-2).unwrap();
        assert_relative_eq!(average_power(&s).unwrap(), 272e-9, max_relative = 1e-12);
        let s = PulseSequence::thermometry(0.0, 4e-6, 1e-6, MECH, 1e-2).unwrap();
        assert_eq!(average_power(&s).unwrap(), 0.0);
    }

    #[test]
    fn canonical_expansion() {
        let s = PulseSequence::thermometry(1e-9, 4e-6, 1e-6, MECH, 20e-6).unwrap();
        assert_relative_eq!(s.period(), 10e-6, max_relative = 1e-12);
        let t = expand_timeline(&s).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t[0].pulse.label, PulseLabel::Red);
        assert_eq!(t[1].pulse.label, PulseLabel::Blue);
        assert_relative_eq!(t[2].start, 10e-6, max_relative = 1e-12);
    }

    #[test]
    fn pump_probe_expansion() {
        let s = PulseSequence::pump_probe(850e-9, 4e-6, 85e-9, 1e-6, 2e-6, 50e-6, MECH, 100e-6).unwrap();
        let t = expand_timeline(&s).unwrap();
        assert_eq!(t.len(), 4);
        assert_relative_eq!(s.period(), 50e-6, max_relative = 1e-12);
        assert_eq!(t[0].pulse.label, PulseLabel::Pump);
        assert!(t[0].pulse.detuning > 0.0);
        assert_eq!(t[1].pulse.label, PulseLabel::Probe);
        assert_relative_eq!(t[1].start, 6e-6, max_relative = 1e-12);
        assert!(PulseSequence::pump_probe(850e-9, 4e-6, 85e-9, 1e-6, 46e-6, 50e-6, MECH, 1e-3).is_err());
    }

    #[test]
    fn single_pulse_period() {
        let p = Pulse::new(PulseLabel::Blue, MECH, 1e-9, 1e-6).unwrap();
        let s = PulseSequence::new(vec![Element::Pulse(p)], 5e-6).unwrap();
        assert_eq!(expand_timeline(&s).unwrap().len(), 5);
    }

    #[test]
    fn truncated_final_period_is_clipped() {
        let s = PulseSequence::thermometry(1e-9, 4e-6, 1e-6, MECH, 12e-6).unwrap();
        let t = expand_timeline(&s).unwrap();
        assert_eq!(t.len(), 3);
        assert_relative_eq!(t[2].end - t[2].start, 2e-6, max_relative = 1e-9);
    }

    #[test]
    fn validation_errors() {
        assert!(Pulse::new(PulseLabel::Red, 0.0, 1e-9, 0.0).is_err());
        assert!(Pulse::new(PulseLabel::Red, 0.0, -1e-9, 1e-6).is_err());
        assert!(PulseSequence::new(vec![Element::Gap(1e-6)], 1e-3).is_err());
        let p = Pulse::new(PulseLabel::Blue, MECH, 1e-9, 1e-6).unwrap();
        assert!(PulseSequence::new(vec![Element::Pulse(p), Element::Gap(-1e-7)], 1e-3).is_err());
        assert!(PulseSequence::new(vec![Element::Pulse(p)], 1e-7).is_err());
    }
}

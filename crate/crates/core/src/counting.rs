//! Monte Carlo photon-count records.
//!
//! A plan is compiled once into per-epoch expected counts. An epoch gathers
//! every occurrence of one period element within one repetition and one
//! filter-drift segment; since sums of independent Poisson variables are
//! Poisson, drawing one variate per epoch is equivalent to drawing one per
//! pulse. Each epoch draws from its own counter-based stream, so records are
//! independent of evaluation order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{intracavity_photon_number, sideband_rates, spd_rate, DetectorModel, DeviceModel};
use crate::error::{ensure_finite, Error, Result};
use crate::filter::{chain_transmission, sweep_response, FilterChain};
use crate::rng::StreamRng;
use crate::sequence::{Element, Pulse, PulseLabel, PulseSequence};
use crate::thermal::{pulse_occupancy, CryostatEnvironment, HeatingModel};
use crate::units::PLANCK;

/// Epoch label: a pulse kind, or detector-only time between pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountLabel {
    Red,
    Blue,
    Pump,
    Probe,
    DarkOnly,
}

impl CountLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CountLabel::Red => "red",
            CountLabel::Blue => "blue",
            CountLabel::Pump => "pump",
            CountLabel::Probe => "probe",
            CountLabel::DarkOnly => "dark-only",
        }
    }
}

impl From<PulseLabel> for CountLabel {
    fn from(l: PulseLabel) -> Self {
        match l {
            PulseLabel::Red => CountLabel::Red,
            PulseLabel::Blue => CountLabel::Blue,
            PulseLabel::Pump => CountLabel::Pump,
            PulseLabel::Probe => CountLabel::Probe,
        }
    }
}

impl fmt::Display for CountLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "red" => Ok(CountLabel::Red),
            "blue" => Ok(CountLabel::Blue),
            "pump" => Ok(CountLabel::Pump),
            "probe" => Ok(CountLabel::Probe),
            "dark-only" => Ok(CountLabel::DarkOnly),
            other => Err(Error::Parse {
                location: None,
                message: format!("unknown count label `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub device: DeviceModel,
    pub detector: DetectorModel,
    pub chain: FilterChain,
    pub sequence: PulseSequence,
    pub environment: CryostatEnvironment,
    pub heating: HeatingModel,
    pub repetitions: u32,
    pub seed: u64,
    /// Fraction of the probe flux that reaches the filters after the
    /// backward-detection rejection; 0 disables modeled leakage.
    #[serde(default)]
    pub leak_rejection: f64,
    /// Optional non-paralyzable detector dead time, s.
    #[serde(default)]
    pub dead_time: Option<f64>,
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.detector.validate()?;
        self.chain.validate()?;
        self.sequence.validate()?;
        self.environment.validate()?;
        self.heating.validate()?;
        if self.repetitions < 1 {
            return Err(Error::Validation("repetitions must be >= 1".into()));
        }
        ensure_finite("leak_rejection", self.leak_rejection)?;
        if !(0.0..=1.0).contains(&self.leak_rejection) {
            return Err(Error::Validation("leak_rejection must lie in [0, 1]".into()));
        }
        if let Some(t) = self.dead_time {
            ensure_finite("dead_time", t)?;
            if t < 0.0 {
                return Err(Error::Validation("dead time must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the plan.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// One aggregated count epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub index: usize,
    pub label: CountLabel,
    /// Start of the first aggregated occurrence, s from the first repetition.
    pub start: f64,
    /// Summed exposure, s.
    pub exposure: f64,
    pub counts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub plan_digest: String,
    pub seed: u64,
    /// Ensemble stream index used to draw this record.
    pub stream: u64,
    pub epochs: Vec<Epoch>,
}

impl CountRecord {
    /// Summed `(counts, exposure)` for one label.
    pub fn totals(&self, label: CountLabel) -> (u64, f64) {
        self.epochs
            .iter()
            .filter(|e| e.label == label)
            .fold((0, 0.0), |(c, t), e| (c + e.counts, t + e.exposure))
    }

    /// Epoch table preceded by a `#` provenance line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# plan_digest={} seed={} stream={}\nepoch_index,label,start_s,exposure_s,counts\n",
            self.plan_digest, self.seed, self.stream
        );
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{:e},{:e},{}\n",
                e.index, e.label, e.start, e.exposure, e.counts
            ));
        }
        out
    }

    /// Reads the CSV table. Provenance comes from `key=value` pairs on `#`
    /// lines and is left empty when absent.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut record = Self {
            plan_digest: String::new(),
            seed: 0,
            stream: 0,
            epochs: Vec::new(),
        };
        for (n, line) in text.lines().enumerate() {
            let Some(comment) = line.trim().strip_prefix('#') else {
                continue;
            };
            for pair in comment.split_whitespace() {
                let bad = || Error::Parse {
                    location: Some(format!("line {}", n + 1)),
                    message: format!("invalid provenance entry {pair:?}"),
                };
                match pair.split_once('=') {
                    Some(("plan_digest", v)) => record.plan_digest = v.to_string(),
                    Some(("seed", v)) => record.seed = v.parse().map_err(|_| bad())?,
                    Some(("stream", v)) => record.stream = v.parse().map_err(|_| bad())?,
                    _ => {}
                }
            }
        }
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        match lines.next() {
            Some((_, h)) if h.trim() == "epoch_index,label,start_s,exposure_s,counts" => {}
            _ => {
                return Err(Error::Parse {
                    location: Some("line 1".into()),
                    message: "expected header `epoch_index,label,start_s,exposure_s,counts`".into(),
                })
            }
        }
        for (n, line) in lines {
            let loc = || Some(format!("line {}", n + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(Error::Parse {
                    location: loc(),
                    message: format!("expected 5 columns, found {}", cols.len()),
                });
            }
            let bad = |what: &str| Error::Parse {
                location: loc(),
                message: format!("invalid {what}"),
            };
            let epoch = Epoch {
                index: cols[0].parse().map_err(|_| bad("epoch_index"))?,
                label: cols[1].parse().map_err(|_| bad("label"))?,
                start: cols[2].parse().map_err(|_| bad("start_s"))?,
                exposure: cols[3].parse().map_err(|_| bad("exposure_s"))?,
                counts: cols[4].parse().map_err(|_| bad("counts"))?,
            };
            if !(epoch.exposure > 0.0) {
                return Err(Error::Parse {
                    location: loc(),
                    message: "exposure must be > 0".into(),
                });
            }
            record.epochs.push(epoch);
        }
        Ok(record)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Expected-count template for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTemplate {
    pub label: CountLabel,
    pub start: f64,
    pub exposure: f64,
    /// Mean detected rate over the epoch, counts/s.
    pub rate: f64,
}

impl EpochTemplate {
    pub fn mean_counts(&self) -> f64 {
        self.rate * self.exposure
    }
}

/// Leakage of probe photons through the filter cascade, which sits
/// `sideband_offset` Hz away from the probe.
pub fn pump_leak_rate(chain: &FilterChain, probe_flux_at_detector: f64, sideband_offset: f64) -> Result<f64> {
    ensure_finite("probe flux", probe_flux_at_detector)?;
    if probe_flux_at_detector < 0.0 {
        return Err(Error::Domain("probe flux must be >= 0".into()));
    }
    Ok(probe_flux_at_detector * chain_transmission(chain, sideband_offset, 0.0))
}

/// Stationary detected rate during `pulse` at occupancy `n_b`, `elapsed`
/// seconds into a repetition. `response` is the filter sweep response.
pub fn pulse_detection_rate(
    plan: &SimulationPlan,
    pulse: &Pulse,
    n_b: f64,
    elapsed: f64,
    response: f64,
) -> Result<f64> {
    let optical = &plan.device.optical;
    let laser_frequency = optical.resonance_frequency + pulse.detuning;
    let n_a = intracavity_photon_number(pulse.power, pulse.detuning, optical, laser_frequency)?;
    let detector = DetectorModel {
        efficiency_total: plan.detector.efficiency_total * chain_transmission(&plan.chain, 0.0, elapsed),
        ..plan.detector
    };
    let (blue, red) = sideband_rates(&plan.device, n_a, n_b, &detector)?;
    let sideband = if pulse.detuning >= 0.0 { blue } else { red } * response;
    let flux = pulse.power / (PLANCK * laser_frequency) * plan.leak_rejection;
    let leak = pump_leak_rate(&plan.chain, flux, pulse.detuning.abs())?;
    Ok(spd_rate(sideband, &detector) + leak)
}

/// Expected-count templates of one repetition of the plan, followed by the
/// same templates shifted for every further repetition.
pub fn expected_epochs(plan: &SimulationPlan) -> Result<Vec<EpochTemplate>> {
    plan.validate()?;
    let seq = &plan.sequence;
    if seq.total_duration > plan.chain.drift.stable_window {
        log::warn!(
            "sequence lasts {} s, beyond the {} s filter stability window",
            seq.total_duration,
            plan.chain.drift.stable_window
        );
    }
    let window = plan.chain.drift.stable_window;
    let segment = |t: f64| usize::from(t > window);

    // (segment, element) -> (first start, exposure)
    let mut buckets: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let mut add = |seg: usize, el: usize, start: f64, len: f64| {
        let b = buckets.entry((seg, el)).or_insert((start, 0.0));
        b.1 += len;
    };
    for iv in seq.timeline() {
        add(segment(iv.start), iv.element_index, iv.start, iv.end - iv.start);
    }
    for gap in seq.gap_timeline() {
        add(segment(gap.start), gap.element_index, gap.start, gap.end - gap.start);
    }

    let mut per_element = Vec::with_capacity(seq.period_elements.len());
    for (i, el) in seq.period_elements.iter().enumerate() {
        per_element.push(match el {
            Element::Pulse(p) => Some((
                pulse_occupancy(seq, i, &plan.environment, &plan.heating, &plan.device.mechanical)?,
                sweep_response(&plan.chain, &plan.device.mechanical, p.detuning)?,
            )),
            Element::Gap(_) => None,
        });
    }

    let mut one_rep = Vec::with_capacity(buckets.len());
    for ((seg, el), (start, exposure)) in buckets {
        let elapsed = if seg == 0 { 0.0 } else { start };
        let (label, rate) = match (&seq.period_elements[el], per_element[el]) {
            (Element::Pulse(p), Some((n_b, response))) => (
                CountLabel::from(p.label),
                pulse_detection_rate(plan, p, n_b, elapsed, response)?,
            ),
            _ => (CountLabel::DarkOnly, plan.detector.dark_rate),
        };
        one_rep.push(EpochTemplate {
            label,
            start,
            exposure,
            rate,
        });
    }

    let mut all = Vec::with_capacity(one_rep.len() * plan.repetitions as usize);
    for r in 0..plan.repetitions {
        let shift = r as f64 * seq.total_duration;
        all.extend(one_rep.iter().map(|t| EpochTemplate {
            start: t.start + shift,
            ..t.clone()
        }));
    }
    Ok(all)
}

fn draw(templates: &[EpochTemplate], plan: &SimulationPlan, digest: &str, stream: u64) -> Result<CountRecord> {
    let root = StreamRng::new(plan.seed).split(stream);
    let mut epochs = Vec::with_capacity(templates.len());
    for (i, t) in templates.iter().enumerate() {
        let mean = t.mean_counts();
        let mut counts = if mean > 0.0 {
            let mut rng = root.split(i as u64);
            let dist = Poisson::new(mean).map_err(|e| Error::Numerical(format!("poisson mean {mean}: {e}")))?;
            dist.sample(&mut rng) as u64
        } else {
            0
        };
        if let Some(tau) = plan.dead_time {
            let n = counts as f64;
            counts = (n / (1.0 + n * tau / t.exposure)).floor() as u64;
        }
        epochs.push(Epoch {
            index: i,
            label: t.label,
            start: t.start,
            exposure: t.exposure,
            counts,
        });
    }
    Ok(CountRecord {
        plan_digest: digest.to_string(),
        seed: plan.seed,
        stream,
        epochs,
    })
}

/// Record for ensemble stream `stream`; reproducible in isolation.
pub fn simulate_counts_stream(plan: &SimulationPlan, stream: u64) -> Result<CountRecord> {
    let templates = expected_epochs(plan)?;
    draw(&templates, plan, &plan.digest(), stream)
}

/// Simulated count record of the plan (ensemble stream 0).
pub fn simulate_counts(plan: &SimulationPlan) -> Result<CountRecord> {
    simulate_counts_stream(plan, 0)
}

/// `n_ensembles` independent records, stream `i` for record `i`.
pub fn ensemble_counts(plan: &SimulationPlan, n_ensembles: usize) -> Result<Vec<CountRecord>> {
    if n_ensembles < 1 {
        return Err(Error::Domain("need at least one ensemble".into()));
    }
    let templates = expected_epochs(plan)?;
    let digest = plan.digest();
    (0..n_ensembles as u64)
        .into_par_iter()
        .map(|i| draw(&templates, plan, &digest, i))
        .collect()
}

//! Sectioned TOML configuration.
//!
//! Every physical quantity carries its unit in the key (`_hz`, `_w`, `_s`,
//! `_k`). Unknown keys are rejected. Parse and validation errors report the
//! line of the offending entry when it can be located.
//!
//! ```toml
//! [sequence]
//! total_duration_s = 2.5
//!
//! [[sequence.element]]
//! label = "red"
//! detuning_hz = "-mech"
//! power_w = 8.5e-9
//! duration_s = 4e-6
//!
//! [[sequence.element]]
//! gap_s = 1e-6
//! ```

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::counting::SimulationPlan;
use crate::device::{DetectorModel, DeviceModel, MechanicalMode, OpticalMode};
use crate::error::{Error, Result};
use crate::filter::{DriftLaw, FabryPerotStage, FilterChain};
use crate::inference::SidebandConvention;
use crate::sequence::{Element, Pulse, PulseLabel, PulseSequence};
use crate::thermal::{CryostatEnvironment, HeatingModel};

/// The shipped "paper-like" heating parameters.
pub const PAPER_LIKE_HEATING: &str = include_str!("../presets/heating-paper-like.toml");

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    Error::Parse {
        location: e.span().map(|s| format!("line {}", line_of(text, s.start))),
        message: e.message().trim().to_string(),
    }
}

fn at_line(text: &str, offset: usize, e: Error) -> Error {
    let location = Some(format!("line {}", line_of(text, offset)));
    match e {
        Error::Parse { message, .. } => Error::Parse { location, message },
        other => Error::Parse {
            location,
            message: other.to_string(),
        },
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub optical_frequency_hz: f64,
    pub kappa_intrinsic_hz: f64,
    pub kappa_external_hz: f64,
    #[serde(default)]
    pub doublet_splitting_hz: f64,
    pub mechanical_frequency_hz: f64,
    pub mechanical_damping_hz: f64,
    pub g0_hz: f64,
}

impl DeviceSection {
    pub fn resolve(&self) -> Result<DeviceModel> {
        let optical = OpticalMode::new(
            self.optical_frequency_hz,
            self.kappa_intrinsic_hz,
            self.kappa_external_hz,
            self.doublet_splitting_hz,
        )?;
        DeviceModel::new(
            optical,
            MechanicalMode::new(self.mechanical_frequency_hz, self.mechanical_damping_hz)?,
            self.g0_hz,
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency_total: f64,
    pub dark_rate_hz: f64,
    #[serde(default)]
    pub pump_leak_rate_hz: f64,
    /// Fraction of probe light reaching the filters after backward-detection
    /// rejection; 0 disables modeled leakage.
    #[serde(default)]
    pub leak_rejection: f64,
    #[serde(default)]
    pub dead_time_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub fwhm_hz: f64,
    pub fsr_hz: f64,
    pub peak_transmission: f64,
}

fn default_window() -> f64 {
    DriftLaw::default().stable_window
}

fn default_drift_factor() -> f64 {
    DriftLaw::default().post_window_transmission_factor
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiltersSection {
    #[serde(default = "default_window")]
    pub stable_window_s: f64,
    #[serde(default = "default_drift_factor")]
    pub post_window_transmission_factor: f64,
    #[serde(default)]
    pub extinction_floor_db: Option<f64>,
    pub stage: Vec<StageSection>,
}

impl FiltersSection {
    pub fn resolve(&self) -> Result<FilterChain> {
        let chain = FilterChain {
            stages: self
                .stage
                .iter()
                .map(|s| FabryPerotStage::new(s.fwhm_hz, s.fsr_hz, s.peak_transmission))
                .collect::<Result<_>>()?,
            drift: DriftLaw {
                stable_window: self.stable_window_s,
                post_window_transmission_factor: self.post_window_transmission_factor,
            },
            extinction_floor_db: self.extinction_floor_db,
        };
        chain.validate()?;
        Ok(chain)
    }
}

/// Detuning in Hz, or `"+mech"` / `"-mech"` for ± the mechanical frequency.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DetuningValue {
    Hz(f64),
    Symbolic(String),
}

impl DetuningValue {
    pub fn resolve(&self, mechanical_frequency: f64) -> Result<f64> {
        match self {
            DetuningValue::Hz(v) => Ok(*v),
            DetuningValue::Symbolic(s) => match s.trim() {
                "+mech" | "mech" => Ok(mechanical_frequency),
                "-mech" => Ok(-mechanical_frequency),
                other => Err(Error::Parse {
                    location: None,
                    message: format!("detuning must be a number or \"+mech\"/\"-mech\", got {other:?}"),
                }),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSection {
    pub label: Option<String>,
    pub detuning_hz: Option<DetuningValue>,
    pub power_w: Option<f64>,
    pub duration_s: Option<f64>,
    pub gap_s: Option<f64>,
}

impl ElementSection {
    fn resolve(&self, mechanical_frequency: f64) -> Result<Element> {
        let parse_err = |message: String| Error::Parse {
            location: None,
            message,
        };
        if let Some(gap) = self.gap_s {
            if self.label.is_some() || self.detuning_hz.is_some() || self.power_w.is_some() || self.duration_s.is_some()
            {
                return Err(parse_err("a gap entry takes only gap_s".into()));
            }
            return Ok(Element::Gap(gap));
        }
        let missing = |k: &str| parse_err(format!("pulse entry is missing `{k}`"));
        let label = self.label.as_deref().ok_or_else(|| missing("label"))?;
        let label = PulseLabel::parse(label)
            .ok_or_else(|| parse_err(format!("unknown pulse label {label:?} (red, blue, pump, probe)")))?;
        let detuning = self
            .detuning_hz
            .as_ref()
            .ok_or_else(|| missing("detuning_hz"))?
            .resolve(mechanical_frequency)?;
        let power = self.power_w.ok_or_else(|| missing("power_w"))?;
        let duration = self.duration_s.ok_or_else(|| missing("duration_s"))?;
        Ok(Element::Pulse(Pulse::new(label, detuning, power, duration)?))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub total_duration_s: f64,
    pub element: Vec<Spanned<ElementSection>>,
}

impl SequenceSection {
    /// `text` is the source, used to locate failing entries.
    pub fn resolve(&self, mechanical_frequency: f64, text: &str) -> Result<PulseSequence> {
        let elements = self
            .element
            .iter()
            .map(|e| {
                e.get_ref()
                    .resolve(mechanical_frequency)
                    .map_err(|err| at_line(text, e.span().start, err))
            })
            .collect::<Result<Vec<_>>>()?;
        PulseSequence::new(elements, self.total_duration_s)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub base_temperature_k: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingSection {
    /// Named parameter set; explicit keys override it.
    pub preset: Option<String>,
    pub fast_amplitude: Option<f64>,
    pub fast_exponent: Option<f64>,
    pub fast_timescale_s: Option<f64>,
    pub slow_amplitude: Option<f64>,
    pub slow_exponent: Option<f64>,
    pub slow_timescale_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatingFile {
    heating: HeatingSection,
}

impl HeatingSection {
    pub fn resolve(&self) -> Result<HeatingModel> {
        let base = match self.preset.as_deref() {
            None => HeatingModel::default(),
            Some("paper-like") => paper_like_heating()?,
            Some(other) => {
                return Err(Error::Parse {
                    location: None,
                    message: format!("unknown heating preset {other:?} (known: \"paper-like\")"),
                })
            }
        };
        let model = HeatingModel {
            fast_amplitude: self.fast_amplitude.unwrap_or(base.fast_amplitude),
            fast_exponent: self.fast_exponent.unwrap_or(base.fast_exponent),
            fast_timescale: self.fast_timescale_s.unwrap_or(base.fast_timescale),
            slow_amplitude: self.slow_amplitude.unwrap_or(base.slow_amplitude),
            slow_exponent: self.slow_exponent.unwrap_or(base.slow_exponent),
            slow_timescale: self.slow_timescale_s.unwrap_or(base.slow_timescale),
        };
        model.validate()?;
        Ok(model)
    }
}

/// The "paper-like" heating model shipped with the crate.
pub fn paper_like_heating() -> Result<HeatingModel> {
    let file: HeatingFile = toml::from_str(PAPER_LIKE_HEATING).map_err(|e| toml_error(PAPER_LIKE_HEATING, e))?;
    if file.heating.preset.is_some() {
        return Err(Error::Validation(
            "the heating preset file may not name a preset".into(),
        ));
    }
    file.heating.resolve()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignKind {
    /// Simulated photon counting, optionally swept over one parameter.
    Counting,
    /// Synthetic reflection spectrum of the optical doublet.
    DoubletSpectrum,
    /// Synthetic thermal spectrum of the mechanical mode.
    MechanicalSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    /// Profile-likelihood occupancy per sweep point.
    Occupancy,
    /// Bootstrap cross-check of the occupancy interval.
    Bootstrap,
    /// Dark subtraction with a delta-method interval.
    Subtraction,
    /// Power-law fits of sideband rates against pulse power.
    PowerLaw,
    /// Vacuum coupling from the rate per intracavity photon.
    G0,
    /// Line fits to both branches of a detuning sweep.
    Peaks,
    /// Straight-line fit of the probe rate against pump-probe delay.
    DelaySlope,
    DoubletFit,
    MechanicalFit,
}

impl Analysis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Analysis::Occupancy => "occupancy",
            Analysis::Bootstrap => "bootstrap",
            Analysis::Subtraction => "subtraction",
            Analysis::PowerLaw => "power-law",
            Analysis::G0 => "g0",
            Analysis::Peaks => "peaks",
            Analysis::DelaySlope => "delay-slope",
            Analysis::DoubletFit => "doublet-fit",
            Analysis::MechanicalFit => "mechanical-fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Pulse-on power of every pulse, W.
    PowerW,
    /// Detuning magnitude; blue pulses get `+v`, red pulses `-v`, Hz.
    DetuningHz,
    /// Every gap set so that the period has this duty cycle.
    DutyCycle,
    /// Every gap set to this duration, s.
    GapS,
    /// First gap of a two-pulse period, the last gap absorbing the
    /// remainder so the period is unchanged, s.
    DelayS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
}

impl SweepSection {
    pub fn resolve(&self) -> Result<Sweep> {
        let err = |m: &str| Error::Validation(format!("campaign.sweep: {m}"));
        let values = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n < 2 {
                    return Err(err("points must be >= 2"));
                }
                match self.spacing {
                    Spacing::Linear => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
                    Spacing::Log => {
                        if !(a > 0.0 && b > 0.0) {
                            return Err(err("log spacing needs positive bounds"));
                        }
                        (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
                    }
                }
            }
            _ => return Err(err("give either `values` or all of `start`, `stop`, `points`")),
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(err("values must be finite and non-empty"));
        }
        Ok(Sweep {
            parameter: self.parameter,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub span_hz: f64,
    pub points: usize,
    /// Standard deviation of additive white noise, in value units.
    pub noise: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub background: f64,
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

fn one_usize() -> usize {
    1
}

fn default_confidence() -> f64 {
    0.95
}

fn default_resamples() -> usize {
    2000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kind: CampaignKind,
    pub seed: u64,
    /// Back-to-back repetitions of the sequence per record.
    #[serde(default = "one_u32")]
    pub repetitions: u32,
    /// Independent records per sweep point, fitted jointly.
    #[serde(default = "one_usize")]
    pub datasets: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub sideband_convention: SidebandConvention,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    pub sweep: Option<SweepSection>,
    pub spectrum: Option<SpectrumSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub campaign: CampaignSection,
    pub device: DeviceSection,
    pub detector: Option<DetectorSection>,
    pub filters: Option<FiltersSection>,
    pub sequence: Option<SequenceSection>,
    pub environment: Option<EnvironmentSection>,
    pub heating: Option<HeatingSection>,
}

/// A validated campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub name: String,
    pub description: String,
    pub kind: CampaignKind,
    pub seed: u64,
    pub datasets: usize,
    pub confidence: f64,
    pub bootstrap_resamples: usize,
    pub sideband_convention: SidebandConvention,
    pub analyses: Vec<Analysis>,
    pub device: DeviceModel,
    /// Present for counting campaigns.
    pub plan: Option<SimulationPlan>,
    pub sweep: Option<Sweep>,
    pub spectrum: Option<SpectrumSection>,
}

impl CampaignConfig {
    /// SHA-256 over the canonical JSON of the resolved configuration, so
    /// formatting and comments do not change it.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let Some(plan) = &mut self.plan {
            plan.seed = seed;
        }
        self
    }
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("counting campaigns need a [{name}] section")))
}

/// Parses and validates a campaign configuration.
pub fn parse_config(text: &str) -> Result<CampaignConfig> {
    let raw: ConfigFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let c = &raw.campaign;
    let device = raw.device.resolve()?;
    if !(c.confidence > 0.0 && c.confidence < 1.0) {
        return Err(Error::Validation("campaign.confidence must lie in (0, 1)".into()));
    }
    if c.datasets < 1 {
        return Err(Error::Validation("campaign.datasets must be >= 1".into()));
    }
    let sweep = c.sweep.as_ref().map(SweepSection::resolve).transpose()?;

    let (plan, analyses, spectrum) = match c.kind {
        CampaignKind::Counting => {
            let det = require(&raw.detector, "detector")?;
            let env = require(&raw.environment, "environment")?;
            let plan = SimulationPlan {
                device,
                detector: DetectorModel::new(det.efficiency_total, det.dark_rate_hz, det.pump_leak_rate_hz)?,
                chain: require(&raw.filters, "filters")?.resolve()?,
                sequence: require(&raw.sequence, "sequence")?.resolve(device.mechanical.frequency, text)?,
                environment: CryostatEnvironment::new(env.base_temperature_k)?,
                heating: raw.heating.clone().unwrap_or_default().resolve()?,
                repetitions: c.repetitions,
                seed: c.seed,
                leak_rejection: det.leak_rejection,
                dead_time: det.dead_time_s,
            };
            plan.validate()?;
            if let Some(s) = &sweep {
                check_sweep(s, &plan.sequence)?;
            }
            let analyses = if c.analyses.is_empty() {
                vec![Analysis::Occupancy]
            } else {
                c.analyses.clone()
            };
            if let Some(a) = analyses
                .iter()
                .find(|a| matches!(a, Analysis::DoubletFit | Analysis::MechanicalFit))
            {
                return Err(Error::Validation(format!(
                    "analysis `{}` needs a spectrum campaign",
                    a.as_str()
                )));
            }
            (Some(plan), analyses, None)
        }
        kind => {
            let shape = c
                .spectrum
                .ok_or_else(|| Error::Validation("spectrum campaigns need a [campaign.spectrum] table".into()))?;
            if !(shape.span_hz > 0.0 && shape.noise >= 0.0 && shape.points >= 10 && shape.amplitude > 0.0) {
                return Err(Error::Validation(
                    "spectrum needs span_hz > 0, noise >= 0, points >= 10 and amplitude > 0".into(),
                ));
            }
            let fit = if kind == CampaignKind::DoubletSpectrum {
                Analysis::DoubletFit
            } else {
                Analysis::MechanicalFit
            };
            let analyses = if c.analyses.is_empty() {
                vec![fit]
            } else {
                c.analyses.clone()
            };
            if analyses.iter().any(|a| *a != fit) {
                return Err(Error::Validation(format!(
                    "a {kind:?} campaign only supports `{}`",
                    fit.as_str()
                )));
            }
            (None, analyses, Some(shape))
        }
    };

    Ok(CampaignConfig {
        name: c.name.clone(),
        description: c.description.clone(),
        kind: c.kind,
        seed: c.seed,
        datasets: c.datasets,
        confidence: c.confidence,
        bootstrap_resamples: c.bootstrap_resamples,
        sideband_convention: c.sideband_convention,
        analyses,
        device,
        plan,
        sweep,
        spectrum,
    })
}

fn check_sweep(sweep: &Sweep, seq: &PulseSequence) -> Result<()> {
    let err = |m: String| Err(Error::Validation(format!("campaign.sweep: {m}")));
    match sweep.parameter {
        SweepParameter::PowerW | SweepParameter::DetuningHz | SweepParameter::GapS => {
            if sweep.values.iter().any(|v| *v < 0.0) {
                return err("values must be >= 0".into());
            }
        }
        SweepParameter::DutyCycle => {
            if sweep.values.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                return err("duty cycles must lie in (0, 1]".into());
            }
        }
        SweepParameter::DelayS => {
            let e = &seq.period_elements;
            let shape_ok = e.len() == 4
                && matches!(e[0], Element::Pulse(_))
                && matches!(e[1], Element::Gap(_))
                && matches!(e[2], Element::Pulse(_))
                && matches!(e[3], Element::Gap(_));
            if !shape_ok {
                return err("delay sweeps need a pulse, gap, pulse, gap period".into());
            }
        }
    }
    // Every point must produce a valid sequence.
    for &v in &sweep.values {
        apply_sweep(seq, sweep.parameter, v)?;
    }
    Ok(())
}

/// The sequence with one sweep parameter set to `value`.
pub fn apply_sweep(seq: &PulseSequence, parameter: SweepParameter, value: f64) -> Result<PulseSequence> {
    let mut elements = seq.period_elements.clone();
    match parameter {
        SweepParameter::PowerW => {
            for e in &mut elements {
                if let Element::Pulse(p) = e {
                    p.power = value;
                }
            }
        }
        SweepParameter::DetuningHz => {
            for e in &mut elements {
                if let Element::Pulse(p) = e {
                    p.detuning = if p.detuning < 0.0 { -value } else { value };
                }
            }
        }
        SweepParameter::GapS => {
            for e in &mut elements {
                if let Element::Gap(g) = e {
                    *g = value;
                }
            }
        }
        SweepParameter::DutyCycle => {
            let on: f64 = seq.on_time_per_period();
            let gaps = elements.iter().filter(|e| matches!(e, Element::Gap(_))).count();
            if gaps == 0 {
                return Err(Error::Validation("duty-cycle sweeps need at least one gap".into()));
            }
            let each = on * (1.0 / value - 1.0) / gaps as f64;
            for e in &mut elements {
                if let Element::Gap(g) = e {
                    *g = each;
                }
            }
        }
        SweepParameter::DelayS => {
            let period = seq.period();
            if let [Element::Pulse(a), Element::Gap(d), Element::Pulse(b), Element::Gap(rest)] = &mut elements[..] {
                *d = value;
                *rest = period - a.duration - value - b.duration;
                if *rest < 0.0 {
                    return Err(Error::Validation(format!(
                        "delay {value} s does not fit the {period} s period"
                    )));
                }
            }
        }
    }
    PulseSequence::new(elements, seq.total_duration)
}

/// Parses a document holding only a `[sequence]` section. `"+mech"` and
/// `"-mech"` detunings resolve against `mechanical_frequency`.
pub fn parse_sequence_config(text: &str, mechanical_frequency: f64) -> Result<PulseSequence> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        sequence: SequenceSection,
    }
    let doc: Doc = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    doc.sequence.resolve(mechanical_frequency, text)
}

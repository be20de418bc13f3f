//! Campaign execution: simulate every sweep point, run the configured
//! analyses in order, write data tables and a manifest.
//!
//! Output files depend only on the configuration and seed. Floats are
//! written in shortest round-trip form; nothing time- or host-dependent
//! enters the files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{apply_sweep, Analysis, CampaignConfig, CampaignKind, SweepParameter};
use crate::counting::{simulate_counts_stream, CountLabel, CountRecord, SimulationPlan};
use crate::device::{bose_einstein_occupancy, intracavity_photon_number, modal_temperature, DetectorModel};
use crate::error::{Error, Result};
use crate::inference::{
    bootstrap_occupancy, estimate_occupancy, estimate_occupancy_subtraction, extract_g0, fit_line,
    fit_lorentzian_doublet, fit_mechanical_spectrum, fit_power_law, fit_proportional, CountSample, CouplingEstimate,
    DoubletModel, FitModel, LineFit, MechanicalLineModel, OccupancyEstimate, PowerLawFit, ProportionalFit,
    SidebandConvention, SpectralFit, Spectrum,
};
use crate::rng::StreamRng;
use crate::sequence::{average_power, duty_cycle, PulseSequence};
use crate::thermal::pulse_occupancy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    #[default]
    Csv,
    Json,
}

impl RecordFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            RecordFormat::Csv => "csv",
            RecordFormat::Json => "json",
        }
    }
}

/// Per-label summary of one simulated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: CountLabel,
    pub counts: u64,
    pub exposure: f64,
    /// Intracavity photons during the first pulse with this label.
    pub n_a: Option<f64>,
    /// Model occupancy during the first pulse with this label.
    pub model_n_b: Option<f64>,
}

impl LabelSummary {
    pub fn sample(&self) -> CountSample {
        CountSample::new(self.counts, self.exposure)
    }

    pub fn signal_rate(&self, dark_rate: f64) -> f64 {
        self.counts as f64 / self.exposure - dark_rate
    }

    pub fn signal_sigma(&self) -> f64 {
        (self.counts.max(1) as f64).sqrt() / self.exposure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub dataset: usize,
    pub point: usize,
    /// Sweep value, if the campaign sweeps.
    pub value: Option<f64>,
    pub stream: u64,
    pub duty_cycle: f64,
    pub average_power: f64,
    pub labels: Vec<LabelSummary>,
}

impl PointResult {
    pub fn label(&self, label: CountLabel) -> Option<&LabelSummary> {
        self.labels.iter().find(|l| l.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub dataset: usize,
    pub point: usize,
    pub value: Option<f64>,
    pub model_n_b: Option<f64>,
    pub estimate: OccupancyEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawReport {
    /// Stokes plus anti-Stokes signal rate.
    pub sum: PowerLawFit,
    pub blue: Option<PowerLawFit>,
    pub red: Option<PowerLawFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub convention: SidebandConvention,
    pub thermal_occupancy: f64,
    pub detection_efficiency: f64,
    pub joint_slope: ProportionalFit,
    pub joint: CouplingEstimate,
    pub per_dataset: Vec<CouplingEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPeak {
    pub label: CountLabel,
    /// Signed probe detuning of the fitted line center, Hz.
    pub center: f64,
    pub center_uncertainty: f64,
    pub width: f64,
    pub amplitude: f64,
    pub amplitude_uncertainty: f64,
    /// Grid point with the highest rate, Hz (signed).
    pub argmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeaksReport {
    pub dataset: usize,
    pub grid_step: f64,
    pub blue: BranchPeak,
    pub red: BranchPeak,
    /// `(A_blue - A_red) / σ` of the amplitude difference.
    pub asymmetry_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySlopeReport {
    pub line: LineFit,
    /// Slope over its uncertainty.
    pub z: f64,
    pub mean_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignResults {
    pub points: Vec<PointResult>,
    pub occupancy: Vec<OccupancyRow>,
    pub bootstrap: Vec<OccupancyRow>,
    pub subtraction: Vec<OccupancyRow>,
    pub power_law: Option<PowerLawReport>,
    pub g0: Option<CouplingReport>,
    pub peaks: Vec<PeaksReport>,
    pub delay_slope: Option<DelaySlopeReport>,
    pub spectrum: Option<Spectrum>,
    pub spectral_fit: Option<SpectralFit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisStatus {
    pub name: String,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub campaign: String,
    pub kind: CampaignKind,
    pub config_digest: String,
    pub seed: u64,
    pub version: String,
    pub record_format: RecordFormat,
    pub files: Vec<ManifestFile>,
    pub analyses: Vec<AnalysisStatus>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Paths whose current content no longer matches the recorded digest.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            match fs::read(dir.join(&f.path)) {
                Ok(bytes) if hex::encode(Sha256::digest(&bytes)) == f.sha256 => {}
                _ => bad.push(f.path.clone()),
            }
        }
        Ok(bad)
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub manifest: Manifest,
    pub results: CampaignResults,
    /// Relative path and content of every data file, in write order.
    pub files: Vec<(String, String)>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Stream index of `(dataset, point)`.
pub fn point_stream(dataset: usize, point: usize) -> u64 {
    ((dataset as u64) << 32) | point as u64
}

fn summarize(plan: &SimulationPlan, record: &CountRecord) -> Result<Vec<LabelSummary>> {
    let seq = &plan.sequence;
    let mut by_label: BTreeMap<CountLabel, (u64, f64)> = BTreeMap::new();
    for e in &record.epochs {
        let t = by_label.entry(e.label).or_insert((0, 0.0));
        t.0 += e.counts;
        t.1 += e.exposure;
    }
    by_label
        .into_iter()
        .map(|(label, (counts, exposure))| {
            let first = seq.pulses().find(|(_, p)| CountLabel::from(p.label) == label);
            let (n_a, model_n_b) = match first {
                Some((i, p)) => {
                    let optical = &plan.device.optical;
                    let n_a = intracavity_photon_number(
                        p.power,
                        p.detuning,
                        optical,
                        optical.resonance_frequency + p.detuning,
                    )?;
                    let n_b = pulse_occupancy(seq, i, &plan.environment, &plan.heating, &plan.device.mechanical)?;
                    (Some(n_a), Some(n_b))
                }
                None => (None, None),
            };
            Ok(LabelSummary {
                label,
                counts,
                exposure,
                n_a,
                model_n_b,
            })
        })
        .collect()
}

fn simulate_points(config: &CampaignConfig, plan: &SimulationPlan) -> Result<Vec<(PointResult, CountRecord)>> {
    let values: Vec<Option<f64>> = match &config.sweep {
        Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
        None => vec![None],
    };
    let jobs: Vec<(usize, usize, Option<f64>)> = (0..config.datasets)
        .flat_map(|d| values.iter().enumerate().map(move |(i, v)| (d, i, *v)))
        .collect();
    jobs.into_par_iter()
        .map(|(dataset, point, value)| {
            let mut p = plan.clone();
            if let (Some(s), Some(v)) = (&config.sweep, value) {
                p.sequence = apply_sweep(&plan.sequence, s.parameter, v)?;
            }
            let stream = point_stream(dataset, point);
            let record = simulate_counts_stream(&p, stream)?;
            let labels = summarize(&p, &record)?;
            Ok((
                PointResult {
                    dataset,
                    point,
                    value,
                    stream,
                    duty_cycle: duty_cycle(&p.sequence)?,
                    average_power: average_power(&p.sequence)?,
                    labels,
                },
                record,
            ))
        })
        .collect()
}

fn sweep_table(points: &[PointResult], dark_rate: f64) -> String {
    let mut out = String::from(
        "dataset,point,value,label,counts,exposure_s,signal_rate_hz,signal_sigma_hz,n_a,model_n_b,duty_cycle,average_power_w\n",
    );
    for p in points {
        for l in &p.labels {
            out.push_str(&format!(
                "{},{},{},{},{},{:e},{:e},{:e},{},{},{:e},{:e}\n",
                p.dataset,
                p.point,
                fmt_opt(p.value),
                l.label,
                l.counts,
                l.exposure,
                l.signal_rate(dark_rate),
                l.signal_sigma(),
                fmt_opt(l.n_a),
                fmt_opt(l.model_n_b),
                p.duty_cycle,
                p.average_power,
            ));
        }
    }
    out
}

fn occupancy_table(rows: &[OccupancyRow], mechanical_frequency: f64) -> String {
    let mut out = String::from(
        "dataset,point,value,method,n_b,ci_low,ci_high,confidence,boundary,model_n_b,modal_temperature_k,ground_probability\n",
    );
    for r in rows {
        let e = &r.estimate;
        let temperature = modal_temperature(e.n_b, mechanical_frequency).ok();
        let method = serde_json::to_value(e.method)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        let boundary = serde_json::to_value(e.boundary)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{:e},{:e},{:e},{:e},{},{},{},{:e}\n",
            r.dataset,
            r.point,
            fmt_opt(r.value),
            method,
            e.n_b,
            e.ci_low,
            e.ci_high,
            e.confidence,
            boundary,
            fmt_opt(r.model_n_b),
            fmt_opt(temperature),
            1.0 / (1.0 + e.n_b),
        ));
    }
    out
}

/// Files produced by one analysis, as `(relative path, content)`.
type Staged = Vec<(String, String)>;

type Estimator = dyn Fn(CountSample, CountSample) -> Result<OccupancyEstimate> + Sync;

fn occupancy_rows(points: &[PointResult], estimator: &Estimator) -> Result<Vec<OccupancyRow>> {
    let rows: Vec<OccupancyRow> = points
        .par_iter()
        .filter_map(|p| {
            let blue = p.label(CountLabel::Blue)?;
            let red = p.label(CountLabel::Red)?;
            Some(estimator(blue.sample(), red.sample()).map(|estimate| OccupancyRow {
                dataset: p.dataset,
                point: p.point,
                value: p.value,
                model_n_b: blue.model_n_b,
                estimate,
            }))
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Estimation("no point has both red and blue counts".into()));
    }
    Ok(rows)
}

fn require_parameter(config: &CampaignConfig, parameter: SweepParameter, analysis: Analysis) -> Result<()> {
    match &config.sweep {
        Some(s) if s.parameter == parameter => Ok(()),
        _ => Err(Error::Validation(format!(
            "analysis `{}` needs a `{}` sweep",
            analysis.as_str(),
            serde_json::to_value(parameter)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default()
        ))),
    }
}

/// `(x, y, σ)` of a rate combination across every dataset and point.
fn combined_rates(
    points: &[PointResult],
    dark: f64,
    x: impl Fn(&PointResult, &LabelSummary) -> Option<f64>,
    combine: SidebandConvention,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ss = Vec::new();
    for p in points {
        let (Some(b), Some(r)) = (p.label(CountLabel::Blue), p.label(CountLabel::Red)) else {
            continue;
        };
        let Some(xv) = x(p, b) else { continue };
        let (y, var) = match combine {
            SidebandConvention::Sum => (
                b.signal_rate(dark) + r.signal_rate(dark),
                b.signal_sigma().powi(2) + r.signal_sigma().powi(2),
            ),
            SidebandConvention::Mean => (
                0.5 * (b.signal_rate(dark) + r.signal_rate(dark)),
                0.25 * (b.signal_sigma().powi(2) + r.signal_sigma().powi(2)),
            ),
            SidebandConvention::Stokes => (b.signal_rate(dark), b.signal_sigma().powi(2)),
            SidebandConvention::AntiStokes => (r.signal_rate(dark), r.signal_sigma().powi(2)),
        };
        xs.push(xv);
        ys.push(y);
        ss.push(var.sqrt());
    }
    (xs, ys, ss)
}

fn power_law_report(points: &[PointResult], dark: f64) -> Result<PowerLawReport> {
    let fit = |conv| {
        let (x, y, s) = combined_rates(points, dark, |p, _| p.value, conv);
        fit_power_law(&x, &y, Some(&s))
    };
    Ok(PowerLawReport {
        sum: fit(SidebandConvention::Sum)?,
        blue: fit(SidebandConvention::Stokes).ok(),
        red: fit(SidebandConvention::AntiStokes).ok(),
    })
}

fn coupling_report(config: &CampaignConfig, plan: &SimulationPlan, points: &[PointResult]) -> Result<CouplingReport> {
    let dark = plan.detector.dark_rate;
    let convention = config.sideband_convention;
    let detector = DetectorModel {
        efficiency_total: plan.detector.efficiency_total * plan.chain.peak_transmission(),
        ..plan.detector
    };
    let thermal = bose_einstein_occupancy(plan.device.mechanical.frequency, plan.environment.base_temperature)?;
    let estimate = |pts: &[PointResult]| -> Result<(ProportionalFit, CouplingEstimate)> {
        let (x, y, s) = combined_rates(pts, dark, |_, b| b.n_a, convention);
        let slope = fit_proportional(&x, &y, Some(&s))?;
        let g0 = extract_g0(
            slope.slope,
            slope.slope_uncertainty,
            &plan.device,
            &detector,
            thermal,
            convention,
        )?;
        Ok((slope, g0))
    };
    let (joint_slope, joint) = estimate(points)?;
    let per_dataset = (0..config.datasets)
        .map(|d| {
            let pts: Vec<PointResult> = points.iter().filter(|p| p.dataset == d).cloned().collect();
            estimate(&pts).map(|(_, g)| g)
        })
        .collect::<Result<_>>()?;
    Ok(CouplingReport {
        convention,
        thermal_occupancy: thermal,
        detection_efficiency: detector.efficiency_total,
        joint_slope,
        joint,
        per_dataset,
    })
}

fn branch_peak(points: &[&PointResult], label: CountLabel, dark: f64) -> Result<BranchPeak> {
    let mut rows: Vec<(f64, f64, f64)> = points
        .iter()
        .filter_map(|p| {
            let l = p.label(label)?;
            Some((p.value?, l.signal_rate(dark), l.signal_sigma()))
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let spectrum = Spectrum::new(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        Some(rows.iter().map(|r| r.2).collect()),
    )?;
    let fit = fit_mechanical_spectrum(&spectrum)?;
    let sign = if label == CountLabel::Red { -1.0 } else { 1.0 };
    let argmax = rows
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|r| r.0)
        .unwrap_or(f64::NAN);
    let get = |n: &str| fit.value(n).unwrap_or(f64::NAN);
    let unc = |n: &str| fit.uncertainty(n).unwrap_or(f64::NAN);
    Ok(BranchPeak {
        label,
        center: sign * get("frequency_hz"),
        center_uncertainty: unc("frequency_hz"),
        width: get("damping_hz"),
        amplitude: get("amplitude"),
        amplitude_uncertainty: unc("amplitude"),
        argmax: sign * argmax,
    })
}

fn peaks_reports(config: &CampaignConfig, points: &[PointResult], dark: f64) -> Result<Vec<PeaksReport>> {
    let values = &config.sweep.as_ref().expect("checked").values;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let grid_step = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    (0..config.datasets)
        .map(|d| {
            let pts: Vec<&PointResult> = points.iter().filter(|p| p.dataset == d).collect();
            let blue = branch_peak(&pts, CountLabel::Blue, dark)?;
            let red = branch_peak(&pts, CountLabel::Red, dark)?;
            let asymmetry_z = (blue.amplitude - red.amplitude)
                / (blue.amplitude_uncertainty.powi(2) + red.amplitude_uncertainty.powi(2)).sqrt();
            Ok(PeaksReport {
                dataset: d,
                grid_step,
                blue,
                red,
                asymmetry_z,
            })
        })
        .collect()
}

fn delay_report(points: &[PointResult], dark: f64) -> Result<DelaySlopeReport> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut s = Vec::new();
    for p in points {
        if let (Some(v), Some(l)) = (p.value, p.label(CountLabel::Probe)) {
            x.push(v);
            y.push(l.signal_rate(dark));
            s.push(l.signal_sigma());
        }
    }
    let line = fit_line(&x, &y, Some(&s))?;
    Ok(DelaySlopeReport {
        z: line.slope / line.slope_uncertainty,
        mean_rate: y.iter().sum::<f64>() / y.len() as f64,
        line,
    })
}

/// Synthetic spectrum for a spectrum campaign, with white Gaussian noise
/// drawn from stream 0 of the seed.
pub fn synthetic_spectrum(config: &CampaignConfig) -> Result<Spectrum> {
    let shape = config
        .spectrum
        .ok_or_else(|| Error::Validation("campaign has no spectrum section".into()))?;
    let dev = &config.device;
    let center = match config.kind {
        CampaignKind::DoubletSpectrum => dev.optical.resonance_frequency,
        CampaignKind::MechanicalSpectrum => dev.mechanical.frequency,
        CampaignKind::Counting => return Err(Error::Validation("not a spectrum campaign".into())),
    };
    let n = shape.points;
    let freq: Vec<f64> = (0..n)
        .map(|i| center - 0.5 * shape.span_hz + shape.span_hz * i as f64 / (n - 1) as f64)
        .collect();
    let mut rng = StreamRng::new(config.seed).split(0);
    let value = freq
        .iter()
        .map(|&f| {
            let clean = match config.kind {
                CampaignKind::DoubletSpectrum => DoubletModel.eval(
                    f - center,
                    &[
                        0.0,
                        dev.optical.doublet_splitting,
                        dev.optical.kappa_intrinsic,
                        dev.optical.kappa_external,
                        shape.amplitude,
                    ],
                ),
                _ => MechanicalLineModel.eval(
                    f,
                    &[
                        dev.mechanical.frequency,
                        dev.mechanical.damping,
                        shape.amplitude,
                        shape.background,
                    ],
                ),
            };
            let e: f64 = StandardNormal.sample(&mut rng);
            clean + shape.noise * e
        })
        .collect();
    let sigma = (shape.noise > 0.0).then(|| vec![shape.noise; n]);
    Spectrum::new(freq, value, sigma)
}

fn spectrum_text(s: &Spectrum) -> String {
    let mut out = String::from("# frequency_hz value");
    out.push_str(if s.sigma.is_some() { " sigma\n" } else { "\n" });
    for i in 0..s.len() {
        out.push_str(&format!("{:e} {:e}", s.frequency[i], s.value[i]));
        if let Some(sig) = &s.sigma {
            out.push_str(&format!(" {:e}", sig[i]));
        }
        out.push('\n');
    }
    out
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Runs the campaign in memory.
pub fn execute_campaign(config: &CampaignConfig, format: RecordFormat) -> Result<CampaignOutput> {
    let mut files: Vec<(String, String)> = Vec::new();
    let mut results = CampaignResults::default();
    let mut statuses = Vec::new();

    let mut run = |analysis: Analysis, files: &mut Staged, f: &mut dyn FnMut(&mut Staged) -> Result<()>| {
        let mut staged = Vec::new();
        let status = match f(&mut staged) {
            Ok(()) => {
                files.extend(staged);
                AnalysisStatus {
                    name: analysis.as_str().into(),
                    ok: true,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("analysis {} failed: {e}", analysis.as_str());
                AnalysisStatus {
                    name: analysis.as_str().into(),
                    ok: false,
                    error: Some(e.to_string()),
                }
            }
        };
        statuses.push(status);
    };

    match (&config.plan, config.kind) {
        (Some(plan), CampaignKind::Counting) => {
            let dark = plan.detector.dark_rate;
            let simulated = simulate_points(config, plan)?;
            for (p, record) in &simulated {
                let name = if config.sweep.is_some() || config.datasets > 1 {
                    format!("records/d{}_p{:03}.{}", p.dataset, p.point, format.extension())
                } else {
                    format!("counts.{}", format.extension())
                };
                let body = match format {
                    RecordFormat::Csv => record.to_csv(),
                    RecordFormat::Json => record.to_json()? + "\n",
                };
                files.push((name, body));
            }
            results.points = simulated.into_iter().map(|(p, _)| p).collect();
            files.push(("sweep.csv".into(), sweep_table(&results.points, dark)));
            let mech = plan.device.mechanical.frequency;
            let conf = config.confidence;

            for &analysis in &config.analyses {
                let points = &results.points;
                match analysis {
                    Analysis::Occupancy => run(analysis, &mut files, &mut |out| {
                        let rows = occupancy_rows(points, &move |b, r| estimate_occupancy(b, r, dark, conf))?;
                        out.push(("occupancy.csv".into(), occupancy_table(&rows, mech)));
                        results.occupancy = rows;
                        Ok(())
                    }),
                    Analysis::Bootstrap => run(analysis, &mut files, &mut |out| {
                        let n = config.bootstrap_resamples;
                        let rows = points
                            .iter()
                            .filter_map(|p| {
                                let blue = p.label(CountLabel::Blue)?;
                                let red = p.label(CountLabel::Red)?;
                                // Resample streams are keyed by the point stream.
                                let seed = StreamRng::new(config.seed).split(p.stream).at(0);
                                Some(
                                    bootstrap_occupancy(blue.sample(), red.sample(), dark, conf, n, seed).map(
                                        |estimate| OccupancyRow {
                                            dataset: p.dataset,
                                            point: p.point,
                                            value: p.value,
                                            model_n_b: blue.model_n_b,
                                            estimate,
                                        },
                                    ),
                                )
                            })
                            .collect::<Result<Vec<_>>>()?;
                        if rows.is_empty() {
                            return Err(Error::Estimation("no point has both red and blue counts".into()));
                        }
                        out.push(("occupancy_bootstrap.csv".into(), occupancy_table(&rows, mech)));
                        results.bootstrap = rows;
                        Ok(())
                    }),
                    Analysis::Subtraction => run(analysis, &mut files, &mut |out| {
                        let rows =
                            occupancy_rows(points, &move |b, r| estimate_occupancy_subtraction(b, r, dark, conf))?;
                        out.push(("occupancy_subtraction.csv".into(), occupancy_table(&rows, mech)));
                        results.subtraction = rows;
                        Ok(())
                    }),
                    Analysis::PowerLaw => run(analysis, &mut files, &mut |out| {
                        require_parameter(config, SweepParameter::PowerW, analysis)?;
                        let report = power_law_report(points, dark)?;
                        out.push(("power_law.json".into(), json(&report)?));
                        results.power_law = Some(report);
                        Ok(())
                    }),
                    Analysis::G0 => run(analysis, &mut files, &mut |out| {
                        require_parameter(config, SweepParameter::PowerW, analysis)?;
                        let report = coupling_report(config, plan, points)?;
                        out.push(("g0.json".into(), json(&report)?));
                        results.g0 = Some(report);
                        Ok(())
                    }),
                    Analysis::Peaks => run(analysis, &mut files, &mut |out| {
                        require_parameter(config, SweepParameter::DetuningHz, analysis)?;
                        let reports = peaks_reports(config, points, dark)?;
                        out.push(("peaks.json".into(), json(&reports)?));
                        results.peaks = reports;
                        Ok(())
                    }),
                    Analysis::DelaySlope => run(analysis, &mut files, &mut |out| {
                        require_parameter(config, SweepParameter::DelayS, analysis)?;
                        let report = delay_report(points, dark)?;
                        out.push(("delay_slope.json".into(), json(&report)?));
                        results.delay_slope = Some(report);
                        Ok(())
                    }),
                    Analysis::DoubletFit | Analysis::MechanicalFit => unreachable!("rejected by the config parser"),
                }
            }
        }
        (None, CampaignKind::DoubletSpectrum | CampaignKind::MechanicalSpectrum) => {
            let spectrum = synthetic_spectrum(config)?;
            files.push(("spectrum.txt".into(), spectrum_text(&spectrum)));
            for &analysis in &config.analyses {
                let stem = analysis.as_str().replace('-', "_");
                run(analysis, &mut files, &mut |out| {
                    let fit = match analysis {
                        Analysis::DoubletFit => fit_lorentzian_doublet(&spectrum)?,
                        _ => fit_mechanical_spectrum(&spectrum)?,
                    };
                    out.push((format!("{stem}.json"), fit.to_json()? + "\n"));
                    out.push((format!("{stem}_residuals.csv"), fit.residual_csv(&spectrum)));
                    results.spectral_fit = Some(fit);
                    Ok(())
                });
            }
            results.spectrum = Some(spectrum);
        }
        _ => return Err(Error::Validation("campaign kind and plan disagree".into())),
    }

    let mut listed: Vec<ManifestFile> = files
        .iter()
        .map(|(path, body)| ManifestFile {
            path: path.clone(),
            sha256: hex::encode(Sha256::digest(body.as_bytes())),
            bytes: body.len() as u64,
        })
        .collect();
    listed.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        campaign: config.name.clone(),
        kind: config.kind,
        config_digest: config.digest(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        record_format: format,
        files: listed,
        analyses: statuses,
    };
    Ok(CampaignOutput {
        manifest,
        results,
        files,
    })
}

/// Runs the campaign and writes its files and `manifest.json` under `out`.
pub fn run_campaign(config: &CampaignConfig, out: &Path, format: RecordFormat) -> Result<CampaignOutput> {
    let output = execute_campaign(config, format)?;
    fs::create_dir_all(out)?;
    for (path, body) in &output.files {
        let target: PathBuf = out.join(path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(target, body)?;
    }
    fs::write(out.join("manifest.json"), output.manifest.to_json()?)?;
    Ok(output)
}

/// Parses the configuration at `path` and runs it.
pub fn run_campaign_file(path: &Path, out: &Path, seed: Option<u64>, format: RecordFormat) -> Result<CampaignOutput> {
    let text = fs::read_to_string(path)?;
    let mut config = crate::config::parse_config(&text)?;
    if let Some(s) = seed {
        config = config.with_seed(s);
    }
    run_campaign(&config, out, format)
}

/// Sequence for one sweep point of a counting campaign.
pub fn point_sequence(config: &CampaignConfig, value: Option<f64>) -> Result<PulseSequence> {
    let plan = config
        .plan
        .as_ref()
        .ok_or_else(|| Error::Validation("not a counting campaign".into()))?;
    match (&config.sweep, value) {
        (Some(s), Some(v)) => apply_sweep(&plan.sequence, s.parameter, v),
        _ => Ok(plan.sequence.clone()),
    }
}

//! Optical doublet and mechanical line fits.
//!
//! Initial guesses come from a moving-average copy of the data: dips (or
//! the peak) are located as prominent local extrema, widths from half-depth
//! crossings. The procedure has no random component.

use serde::{Deserialize, Serialize};

use super::lm::{covariance, levenberg_marquardt, FitModel, LmConfig, LmOutcome};
use super::models::{DoubletModel, MechanicalLineModel, SingleDipModel};
use crate::error::{Error, Result};

/// Tabulated spectrum with optional per-point uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequency: Vec<f64>,
    pub value: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl Spectrum {
    pub fn new(frequency: Vec<f64>, value: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        let s = Self {
            frequency,
            value,
            sigma,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.frequency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequency.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequency.len() != self.value.len() {
            return Err(Error::Validation("frequency and value columns differ in length".into()));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.frequency.len() {
                return Err(Error::Validation("uncertainty column differs in length".into()));
            }
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Validation("uncertainties must be positive and finite".into()));
            }
        }
        if self.frequency.iter().chain(&self.value).any(|v| !v.is_finite()) {
            return Err(Error::Validation("spectrum contains non-finite values".into()));
        }
        if self.frequency.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("frequency axis must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Parses two or three whitespace- or comma-separated columns:
    /// `frequency_hz value [uncertainty]`. Blank lines and `#` comments are
    /// skipped; every data line must have the same column count.
    pub fn parse(text: &str) -> Result<Self> {
        let mut f = Vec::new();
        let mut v = Vec::new();
        let mut s = Vec::new();
        let mut columns = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                location: Some(format!("line {}", n + 1)),
                message,
            };
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(err(format!("expected 2 or 3 columns, found {}", fields.len())));
            }
            match columns {
                None => columns = Some(fields.len()),
                Some(c) if c != fields.len() => {
                    return Err(err(format!("expected {c} columns, found {}", fields.len())))
                }
                _ => {}
            }
            let nums = fields
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| err(format!("not a number: {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            f.push(nums[0]);
            v.push(nums[1]);
            if let Some(&u) = nums.get(2) {
                s.push(u);
            }
        }
        let sigma = (columns == Some(3)).then_some(s);
        Self::new(f, v, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralModel {
    Doublet,
    SingleDip,
    MechanicalLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFlag {
    /// Fewer than two dips were resolved; a single-mode model was fitted.
    SingleModeFallback,
    /// The fit preferred κ_e > κ_i; the labels were swapped to report the
    /// under-coupled solution, which reflection alone cannot distinguish.
    CouplingSwapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFit {
    pub model: SpectralModel,
    /// Frequency subtracted from the axis before fitting optical models.
    pub reference_frequency: f64,
    /// Fitted parameters in model order; centers are absolute frequencies.
    pub parameters: Vec<FitParameter>,
    pub covariance: Vec<Vec<f64>>,
    pub derived: Vec<FitParameter>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub termination: String,
    pub flags: Vec<FitFlag>,
}

impl SpectralFit {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.find(name).map(|p| p.value)
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.find(name).map(|p| p.uncertainty)
    }

    fn find(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().chain(&self.derived).find(|p| p.name == name)
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }

    /// Model prediction at an absolute frequency.
    pub fn evaluate(&self, frequency: f64) -> f64 {
        let mut p: Vec<f64> = self.parameters.iter().map(|p| p.value).collect();
        match self.model {
            SpectralModel::Doublet => {
                p[0] -= self.reference_frequency;
                DoubletModel.eval(frequency - self.reference_frequency, &p)
            }
            SpectralModel::SingleDip => {
                p[0] -= self.reference_frequency;
                SingleDipModel.eval(frequency - self.reference_frequency, &p)
            }
            SpectralModel::MechanicalLine => MechanicalLineModel.eval(frequency, &p),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `frequency_hz,data,model,residual` rows.
    pub fn residual_csv(&self, spectrum: &Spectrum) -> String {
        let mut out = String::from("frequency_hz,data,model,residual\n");
        for (&f, &y) in spectrum.frequency.iter().zip(&spectrum.value) {
            let m = self.evaluate(f);
            out.push_str(&format!("{f:e},{y:e},{m:e},{:e}\n", y - m));
        }
        out
    }
}

fn moving_average(y: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn smoothing_window(n: usize) -> usize {
    2 * (n / 200) + 1
}

/// Robust white-noise level from first differences.
fn noise_level(y: &[f64]) -> f64 {
    let mut d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    crate::numerics::median(&d) * 1.4826 / std::f64::consts::SQRT_2
}

/// Local minima of `s` with their topographic prominence, most prominent
/// first. Ties keep the lower index first.
fn prominent_minima(s: &[f64]) -> Vec<(usize, f64)> {
    let n = s.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if s[i] < s[i - 1] {
            // Walk across a flat bottom.
            let mut j = i;
            while j + 1 < n && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < n && s[j + 1] > s[i] {
                let v = s[i];
                let mut left = v;
                for &u in s[..i].iter().rev() {
                    if u < v {
                        break;
                    }
                    left = left.max(u);
                }
                let mut right = v;
                for &u in &s[j + 1..] {
                    if u < v {
                        break;
                    }
                    right = right.max(u);
                }
                out.push(((i + j) / 2, left.min(right) - v));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Distance from `start` to where `s` first reaches `level`, walking in
/// `direction` (±1); falls back to the distance to the edge.
fn half_crossing(x: &[f64], s: &[f64], start: usize, level: f64, rising: bool, direction: isize) -> f64 {
    let mut i = start as isize;
    loop {
        let next = i + direction;
        if next < 0 || next as usize >= s.len() {
            return (x[i as usize] - x[start]).abs();
        }
        let (a, b) = (s[i as usize], s[next as usize]);
        let crossed = if rising { b >= level } else { b <= level };
        if crossed {
            let t = if b != a { (level - a) / (b - a) } else { 0.0 };
            let xa = x[i as usize];
            let xb = x[next as usize];
            return (xa + t * (xb - xa) - x[start]).abs();
        }
        i = next;
    }
}

/// Splits an observed depth `d` into the (κ_i, κ_e) pair, taking the
/// under-coupled root.
fn couplings_from_depth(kappa_total: f64, d: f64) -> (f64, f64) {
    let d = d.clamp(1e-6, 0.99);
    let r = (1.0 - d).sqrt();
    (0.5 * kappa_total * (1.0 + r), 0.5 * kappa_total * (1.0 - r))
}

fn finish<M: FitModel>(
    model_kind: SpectralModel,
    model: &M,
    outcome: LmOutcome,
    n: usize,
    had_sigmas: bool,
    reference_frequency: f64,
    mut flags: Vec<FitFlag>,
) -> Result<SpectralFit> {
    if !outcome.converged {
        return Err(Error::Fit(format!(
            "no convergence after {} iterations ({}); chi2 = {:e}, parameters = {:?}",
            outcome.iterations, outcome.reason, outcome.chi2, outcome.params
        )));
    }
    let cov = covariance(&outcome, n, had_sigmas)?;
    let k = outcome.params.len();
    let mut values = outcome.params.clone();
    let mut cov: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect();

    // Reflection is symmetric in κ_i and κ_e; report the under-coupled root.
    let coupling = match model_kind {
        SpectralModel::Doublet => Some((2, 3)),
        SpectralModel::SingleDip => Some((1, 2)),
        SpectralModel::MechanicalLine => None,
    };
    if let Some((a, b)) = coupling {
        if values[b] > values[a] {
            values.swap(a, b);
            cov.swap(a, b);
            for row in &mut cov {
                row.swap(a, b);
            }
            flags.push(FitFlag::CouplingSwapped);
        }
        values[0] += reference_frequency;
    }
    let mut parameters: Vec<FitParameter> = model
        .parameter_names()
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(i, (name, &value))| FitParameter {
            name: (*name).to_string(),
            value,
            uncertainty: cov[i][i].max(0.0).sqrt(),
        })
        .collect();
    if matches!(model_kind, SpectralModel::MechanicalLine) {
        // A Lorentzian is even in its width.
        parameters[1].value = parameters[1].value.abs();
    }

    let derived = match coupling {
        Some((a, b)) => {
            // Q_o = f / (κ_i + κ_e).
            let f = values[0];
            let kt = values[a] + values[b];
            let var_kt = cov[a][a] + cov[b][b] + 2.0 * cov[a][b];
            let q = f / kt;
            let var_q = q * q * (cov[0][0] / (f * f) + var_kt / (kt * kt) - 2.0 * (cov[0][a] + cov[0][b]) / (f * kt));
            vec![
                FitParameter {
                    name: "kappa_total_hz".into(),
                    value: kt,
                    uncertainty: var_kt.max(0.0).sqrt(),
                },
                FitParameter {
                    name: "optical_quality_factor".into(),
                    value: q,
                    uncertainty: var_q.max(0.0).sqrt(),
                },
            ]
        }
        None => {
            let (f, g) = (values[0], values[1].abs());
            let q = f / g;
            let var_q = q * q * (cov[0][0] / (f * f) + cov[1][1] / (g * g) - 2.0 * cov[0][1] / (f * g));
            vec![FitParameter {
                name: "mechanical_quality_factor".into(),
                value: q,
                uncertainty: var_q.max(0.0).sqrt(),
            }]
        }
    };

    Ok(SpectralFit {
        model: model_kind,
        reference_frequency,
        parameters,
        covariance: cov,
        derived,
        chi2: outcome.chi2,
        dof: n.saturating_sub(k),
        iterations: outcome.iterations,
        termination: outcome.reason.to_string(),
        flags,
    })
}

fn check_size(spectrum: &Spectrum, n_params: usize) -> Result<()> {
    spectrum.validate()?;
    if spectrum.len() < 2 * n_params {
        return Err(Error::Fit(format!(
            "{} points are fewer than twice the {n_params} model parameters",
            spectrum.len()
        )));
    }
    Ok(())
}

/// Fits a split optical mode in reflection. When fewer than two prominent
/// dips are found a single-dip model is fitted instead and flagged.
pub fn fit_lorentzian_doublet(spectrum: &Spectrum) -> Result<SpectralFit> {
    check_size(spectrum, 5)?;
    let n = spectrum.len();
    let reference = 0.5 * (spectrum.frequency[0] + spectrum.frequency[n - 1]);
    let x: Vec<f64> = spectrum.frequency.iter().map(|f| f - reference).collect();
    let y = &spectrum.value;
    let window = smoothing_window(n);
    let s = moving_average(y, window);
    let baseline = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lowest = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = baseline - lowest;
    let noise = noise_level(y) / (window as f64).sqrt();
    if !(span > 0.0) || span < 5.0 * noise {
        return Err(Error::Fit("no reflection dip found".into()));
    }
    let threshold = (0.1 * span).max(3.0 * noise);
    let dips: Vec<usize> = prominent_minima(&s)
        .into_iter()
        .filter(|&(_, p)| p >= threshold)
        .map(|(i, _)| i)
        .take(2)
        .collect();
    let sigmas = spectrum.sigma.as_deref();
    let cfg = LmConfig::default();

    if dips.len() == 2 {
        let (i1, i2) = (dips[0].min(dips[1]), dips[0].max(dips[1]));
        let center = 0.5 * (x[i1] + x[i2]);
        let splitting = x[i2] - x[i1];
        let level = |i: usize| baseline - 0.5 * (baseline - s[i]);
        let w1 = half_crossing(&x, &s, i1, level(i1), true, -1);
        let w2 = half_crossing(&x, &s, i2, level(i2), true, 1);
        let kt = (w1 + w2).max(x[1] - x[0]);
        let h = 0.5 * kt;
        let deeper = if s[i1] < s[i2] { i1 } else { i2 };
        let observed = 1.0 - s[deeper] / baseline;
        let overlap = 1.0 / (1.0 + (splitting / h).powi(2));
        let (ki, ke) = couplings_from_depth(kt, observed / (1.0 + overlap));
        let p0 = [center, splitting, ki, ke, baseline];
        let out = levenberg_marquardt(&DoubletModel, &x, y, sigmas, &p0, &cfg)?;
        return finish(
            SpectralModel::Doublet,
            &DoubletModel,
            out,
            n,
            sigmas.is_some(),
            reference,
            vec![],
        );
    }

    let i = s
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let level = baseline - 0.5 * (baseline - s[i]);
    let kt = (half_crossing(&x, &s, i, level, true, -1) + half_crossing(&x, &s, i, level, true, 1)).max(x[1] - x[0]);
    let (ki, ke) = couplings_from_depth(kt, 1.0 - s[i] / baseline);
    let p0 = [x[i], ki, ke, baseline];
    let out = levenberg_marquardt(&SingleDipModel, &x, y, sigmas, &p0, &cfg)?;
    finish(
        SpectralModel::SingleDip,
        &SingleDipModel,
        out,
        n,
        sigmas.is_some(),
        reference,
        vec![FitFlag::SingleModeFallback],
    )
}

/// Fits a Lorentzian line on a flat background and derives `Q_m`.
pub fn fit_mechanical_spectrum(spectrum: &Spectrum) -> Result<SpectralFit> {
    check_size(spectrum, 4)?;
    let n = spectrum.len();
    let x = &spectrum.frequency;
    let y = &spectrum.value;
    let window = smoothing_window(n);
    let s = moving_average(y, window);
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let background = crate::numerics::quantile(&sorted, 0.2);
    let (peak_index, peak) = s
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap_or((0, 0.0));
    let amplitude = peak - background;
    let noise = noise_level(y) / (window as f64).sqrt();
    if !(amplitude > 0.0) || amplitude < 5.0 * noise {
        return Err(Error::Fit("no line found above the background".into()));
    }
    let level = background + 0.5 * amplitude;
    let width = (half_crossing(x, &s, peak_index, level, false, -1)
        + half_crossing(x, &s, peak_index, level, false, 1))
    .max(x[1] - x[0]);
    let p0 = [x[peak_index], width, amplitude, background];
    let sigmas = spectrum.sigma.as_deref();
    let out = levenberg_marquardt(&MechanicalLineModel, x, y, sigmas, &p0, &LmConfig::default())?;
    finish(
        SpectralModel::MechanicalLine,
        &MechanicalLineModel,
        out,
        n,
        sigmas.is_some(),
        0.0,
        vec![],
    )
}

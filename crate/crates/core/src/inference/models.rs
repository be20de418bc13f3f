//! Spectral line shapes with analytic parameter gradients.

use serde::{Deserialize, Serialize};

use super::lm::FitModel;

/// Unit-peak Lorentzian `h² / (x² + h²)` and its derivatives in `x` and `h`.
#[inline]
fn lorentzian(x: f64, h: f64) -> (f64, f64, f64) {
    let u = x * x + h * h;
    let l = h * h / u;
    let dl_dx = -2.0 * x * h * h / (u * u);
    let dl_dh = 2.0 * h * x * x / (u * u);
    (l, dl_dx, dl_dh)
}

/// Coupling depth `4 κ_i κ_e / κ_tot²` and its partials.
#[inline]
fn depth(ki: f64, ke: f64) -> (f64, f64, f64) {
    let kt = ki + ke;
    let kt3 = kt * kt * kt;
    (
        4.0 * ki * ke / (kt * kt),
        4.0 * ke * (ke - ki) / kt3,
        4.0 * ki * (ki - ke) / kt3,
    )
}

/// Reflection of a split optical mode, frequencies relative to a reference.
///
/// Parameters: `[center, splitting, kappa_i, kappa_e, baseline]`, all in Hz
/// except the dimensionless baseline. Each dip has full width `κ_i + κ_e`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubletModel;

impl FitModel for DoubletModel {
    fn parameter_names(&self) -> &'static [&'static str] {
        &[
            "center_hz",
            "splitting_hz",
            "kappa_intrinsic_hz",
            "kappa_external_hz",
            "baseline",
        ]
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let (c, s, ki, ke, b) = (p[0], p[1], p[2], p[3], p[4]);
        let h = 0.5 * (ki + ke);
        let (d, _, _) = depth(ki, ke);
        let (l1, _, _) = lorentzian(x - c + 0.5 * s, h);
        let (l2, _, _) = lorentzian(x - c - 0.5 * s, h);
        b * (1.0 - d * (l1 + l2))
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let (c, s, ki, ke, b) = (p[0], p[1], p[2], p[3], p[4]);
        let h = 0.5 * (ki + ke);
        let (d, dd_ki, dd_ke) = depth(ki, ke);
        let (l1, l1x, l1h) = lorentzian(x - c + 0.5 * s, h);
        let (l2, l2x, l2h) = lorentzian(x - c - 0.5 * s, h);
        let sum = l1 + l2;
        let sum_h = 0.5 * (l1h + l2h);
        out[0] = b * d * (l1x + l2x);
        out[1] = -b * d * 0.5 * (l1x - l2x);
        out[2] = -b * (dd_ki * sum + d * sum_h);
        out[3] = -b * (dd_ke * sum + d * sum_h);
        out[4] = 1.0 - d * sum;
    }

    fn scale(&self, p: &[f64], j: usize) -> f64 {
        let kt = (p[2] + p[3]).abs();
        match j {
            0 => kt,
            1 => p[1].abs().max(kt),
            _ => p[j].abs(),
        }
    }
}

/// Single reflection dip: `[center, kappa_i, kappa_e, baseline]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleDipModel;

impl FitModel for SingleDipModel {
    fn parameter_names(&self) -> &'static [&'static str] {
        &["center_hz", "kappa_intrinsic_hz", "kappa_external_hz", "baseline"]
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let (d, _, _) = depth(p[1], p[2]);
        let (l, _, _) = lorentzian(x - p[0], 0.5 * (p[1] + p[2]));
        p[3] * (1.0 - d * l)
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let b = p[3];
        let (d, dd_ki, dd_ke) = depth(p[1], p[2]);
        let (l, lx, lh) = lorentzian(x - p[0], 0.5 * (p[1] + p[2]));
        out[0] = b * d * lx;
        out[1] = -b * (dd_ki * l + d * 0.5 * lh);
        out[2] = -b * (dd_ke * l + d * 0.5 * lh);
        out[3] = 1.0 - d * l;
    }

    fn scale(&self, p: &[f64], j: usize) -> f64 {
        match j {
            0 => (p[1] + p[2]).abs(),
            _ => p[j].abs(),
        }
    }
}

/// Lorentzian line on a flat background, frequencies in absolute Hz.
///
/// Parameters: `[frequency, damping, amplitude, background]`; `damping` is
/// the full width at half maximum.
#[derive(Debug, Clone, Copy, Default)]
pub struct MechanicalLineModel;

impl FitModel for MechanicalLineModel {
    fn parameter_names(&self) -> &'static [&'static str] {
        &["frequency_hz", "damping_hz", "amplitude", "background"]
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let (l, _, _) = lorentzian(x - p[0], 0.5 * p[1]);
        p[2] * l + p[3]
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let (l, lx, lh) = lorentzian(x - p[0], 0.5 * p[1]);
        out[0] = -p[2] * lx;
        out[1] = 0.5 * p[2] * lh;
        out[2] = l;
        out[3] = 1.0;
    }

    fn scale(&self, p: &[f64], j: usize) -> f64 {
        match j {
            3 => p[3].abs().max(p[2].abs()),
            _ => p[j].abs(),
        }
    }
}

/// `ln y = ln A + k ln x`, evaluated on `ln x`. Parameters `[ln A, k]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogPowerLawModel;

impl FitModel for LogPowerLawModel {
    fn parameter_names(&self) -> &'static [&'static str] {
        &["ln_amplitude", "exponent"]
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] + p[1] * x
    }

    fn gradient(&self, x: f64, _p: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = x;
    }

    fn scale(&self, p: &[f64], j: usize) -> f64 {
        p[j].abs().max(1.0)
    }
}

/// Outcome of comparing analytic gradients with finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianCheck {
    /// Max over parameters of the column-normalized deviation.
    pub max_relative_deviation: f64,
    /// Set when the deviation exceeds `JACOBIAN_TOLERANCE`.
    pub ill_conditioned: bool,
}

pub const JACOBIAN_TOLERANCE: f64 = 1e-6;

/// Compares the analytic Jacobian at `xs` against a five-point central
/// difference with steps of `1e-6` times each parameter's scale.
///
/// For each parameter the deviation is `max_i |J_a - J_fd| / max_i |J_a|`.
pub fn jacobian_check<M: FitModel>(model: &M, xs: &[f64], params: &[f64]) -> JacobianCheck {
    let k = model.n_params();
    let mut analytic = vec![vec![0.0; k]; xs.len()];
    for (row, &x) in analytic.iter_mut().zip(xs) {
        model.gradient(x, params, row);
    }
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for j in 0..k {
        let h = 1e-6 * model.scale(params, j).max(f64::MIN_POSITIVE);
        let mut at = |offset: f64, x: f64| {
            p[j] = params[j] + offset;
            let v = model.eval(x, &p);
            p[j] = params[j];
            v
        };
        let mut col_max: f64 = 0.0;
        let mut dev_max: f64 = 0.0;
        for (row, &x) in analytic.iter().zip(xs) {
            let fd = (8.0 * (at(h, x) - at(-h, x)) - (at(2.0 * h, x) - at(-2.0 * h, x))) / (12.0 * h);
            col_max = col_max.max(row[j].abs());
            dev_max = dev_max.max((row[j] - fd).abs());
        }
        let dev = if col_max > 0.0 {
            dev_max / col_max
        } else if dev_max > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst = worst.max(if dev.is_nan() { f64::INFINITY } else { dev });
    }
    JacobianCheck {
        max_relative_deviation: worst,
        ill_conditioned: worst > JACOBIAN_TOLERANCE,
    }
}

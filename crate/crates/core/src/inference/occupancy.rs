//! Phonon occupancy from Stokes / anti-Stokes photon counts.
//!
//! The two counts are modelled as independent Poisson variables with means
//! `(S (n+1) + d) T_b` and `(S n + d) T_r`, where `S` is the sideband rate
//! per quantum, `n` the occupancy and `d` the known dark rate. Intervals are
//! likelihood-ratio intervals on `n` with `S` profiled out, restricted to
//! the physical domain `n >= 0`.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{ensure_finite, Error, Result};
use crate::numerics::quantile;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountSample {
    pub counts: u64,
    /// Integration time, s.
    pub exposure: f64,
}

impl CountSample {
    pub fn new(counts: u64, exposure: f64) -> Self {
        Self { counts, exposure }
    }

    fn validate(&self, name: &str) -> Result<()> {
        ensure_finite(name, self.exposure)?;
        if self.exposure <= 0.0 {
            return Err(Error::Domain(format!(
                "{name} exposure must be > 0, got {}",
                self.exposure
            )));
        }
        Ok(())
    }

    fn rate(&self) -> f64 {
        self.counts as f64 / self.exposure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    ProfileLikelihood,
    Bootstrap,
    /// Dark subtraction with a delta-method (Wald) interval.
    Subtraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryFlag {
    /// Interior estimate.
    None,
    /// Red signal at or below the dark level; estimate clipped to 0.
    Ground,
    /// Red signal at or above the blue signal; occupancy unbounded above.
    NoiseDominated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEstimate {
    /// Point estimate; `inf` in the noise-dominated regime.
    pub n_b: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub method: EstimateMethod,
    pub boundary: BoundaryFlag,
    /// Dark-subtracted blue (Stokes) rate, Hz.
    pub blue_signal_rate: f64,
    /// Dark-subtracted red (anti-Stokes) rate, Hz.
    pub red_signal_rate: f64,
}

impl OccupancyEstimate {
    pub fn contains(&self, n_b: f64) -> bool {
        self.ci_low <= n_b && n_b <= self.ci_high
    }
}

fn check_inputs(blue: &CountSample, red: &CountSample, dark_rate: f64, confidence: f64) -> Result<()> {
    blue.validate("blue")?;
    red.validate("red")?;
    ensure_finite("dark_rate", dark_rate)?;
    if dark_rate < 0.0 {
        return Err(Error::Domain(format!("dark rate must be >= 0, got {dark_rate}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    Ok(())
}

/// Two-sided standard-normal quantile for `confidence`.
fn z_value(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 * (1.0 + confidence))
}

/// Point estimate and boundary regime from dark-subtracted rates.
fn point_estimate(blue: f64, red: f64) -> (f64, BoundaryFlag) {
    if blue > red && red > 0.0 {
        (red / (blue - red), BoundaryFlag::None)
    } else if blue > red {
        (0.0, BoundaryFlag::Ground)
    } else {
        (f64::INFINITY, BoundaryFlag::NoiseDominated)
    }
}

/// `x ln μ - μ` with the convention `0 ln 0 = 0`.
#[inline]
fn poisson_term(k: f64, mu: f64) -> f64 {
    if k == 0.0 {
        -mu
    } else if mu <= 0.0 {
        f64::NEG_INFINITY
    } else {
        k * mu.ln() - mu
    }
}

struct Likelihood {
    b: f64,
    r: f64,
    tb: f64,
    tr: f64,
    d: f64,
}

impl Likelihood {
    fn log_l(&self, s: f64, n: f64) -> f64 {
        poisson_term(self.b, (s * (n + 1.0) + self.d) * self.tb) + poisson_term(self.r, (s * n + self.d) * self.tr)
    }

    /// `max_{S >= 0} log L(S, n)`; the objective is concave in `S`.
    fn profile(&self, n: f64) -> f64 {
        let (a, c) = (n + 1.0, n);
        let dl = |s: f64| {
            let mut v = -(a * self.tb + c * self.tr);
            if self.b > 0.0 {
                v += self.b * a / (a * s + self.d);
            }
            if self.r > 0.0 && c > 0.0 {
                v += self.r * c / (c * s + self.d);
            }
            v
        };
        if dl(0.0) <= 0.0 {
            return self.log_l(0.0, n);
        }
        let mut lo = 0.0;
        let mut hi = 2.0 * (self.b + self.r) / (a * self.tb + c * self.tr) + 1e-300;
        while dl(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dl(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.log_l(0.5 * (lo + hi), n)
    }

    /// Supremum of the likelihood as `n → ∞` with `S n` held finite; both
    /// channels then share one rate.
    fn asymptote(&self) -> f64 {
        let c = ((self.b + self.r) / (self.tb + self.tr) - self.d).max(0.0);
        poisson_term(self.b, (c + self.d) * self.tb) + poisson_term(self.r, (c + self.d) * self.tr)
    }
}

/// Profile-likelihood estimate of the occupancy with a two-sided interval
/// at `confidence`.
pub fn estimate_occupancy(
    blue: CountSample,
    red: CountSample,
    dark_rate: f64,
    confidence: f64,
) -> Result<OccupancyEstimate> {
    check_inputs(&blue, &red, dark_rate, confidence)?;
    let blue_signal = blue.rate() - dark_rate;
    let red_signal = red.rate() - dark_rate;
    let (n_hat, boundary) = point_estimate(blue_signal, red_signal);

    let lik = Likelihood {
        b: blue.counts as f64,
        r: red.counts as f64,
        tb: blue.exposure,
        tr: red.exposure,
        d: dark_rate,
    };
    let l_max = if n_hat.is_finite() {
        lik.profile(n_hat).max(lik.asymptote())
    } else {
        lik.asymptote()
    };
    let z = z_value(confidence);
    let critical = z * z;
    let excess = |n: f64| 2.0 * (l_max - lik.profile(n)) - critical;
    let solve = |mut lo: f64, mut hi: f64| {
        // `excess` is negative at `inside` and positive at `outside`.
        let inside_is_lo = excess(lo) < 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo.min(hi) || mid >= lo.max(hi) {
                break;
            }
            if (excess(mid) < 0.0) == inside_is_lo {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() <= 1e-12 * hi.abs().max(lo.abs()).max(1e-12) {
                break;
            }
        }
        0.5 * (lo + hi)
    };

    let ci_low = if n_hat == 0.0 || excess(0.0) <= 0.0 {
        0.0
    } else {
        // Search down from the estimate (or a finite anchor when unbounded).
        let mut inside = if n_hat.is_finite() { n_hat } else { 1.0 };
        while excess(inside) > 0.0 {
            inside *= 2.0;
            if inside > 1e12 {
                break;
            }
        }
        if excess(inside) > 0.0 {
            inside
        } else {
            solve(0.0, inside)
        }
    };
    let ci_high = if !n_hat.is_finite() {
        f64::INFINITY
    } else {
        let mut outside = 2.0 * n_hat + 1.0;
        while excess(outside) <= 0.0 && outside < 1e12 {
            outside *= 2.0;
        }
        if excess(outside) <= 0.0 {
            f64::INFINITY
        } else {
            solve(n_hat, outside)
        }
    };

    Ok(OccupancyEstimate {
        n_b: n_hat,
        ci_low: ci_low.min(n_hat),
        ci_high: ci_high.max(n_hat),
        confidence,
        method: EstimateMethod::ProfileLikelihood,
        boundary,
        blue_signal_rate: blue_signal,
        red_signal_rate: red_signal,
    })
}

/// Dark subtraction with a delta-method interval, clipped at zero.
pub fn estimate_occupancy_subtraction(
    blue: CountSample,
    red: CountSample,
    dark_rate: f64,
    confidence: f64,
) -> Result<OccupancyEstimate> {
    check_inputs(&blue, &red, dark_rate, confidence)?;
    let b = blue.rate() - dark_rate;
    let r = red.rate() - dark_rate;
    let (n_hat, boundary) = point_estimate(b, r);
    let (lo, hi) = if boundary == BoundaryFlag::NoiseDominated {
        (0.0, f64::INFINITY)
    } else {
        // n = r / (b - r): ∂n/∂b = -r/(b-r)², ∂n/∂r = b/(b-r)².
        let var_b = blue.counts as f64 / (blue.exposure * blue.exposure);
        let var_r = red.counts as f64 / (red.exposure * red.exposure);
        let den = (b - r).powi(2);
        let sd = ((r * r * var_b + b * b * var_r) / (den * den)).sqrt();
        let z = z_value(confidence);
        ((n_hat - z * sd).max(0.0), n_hat + z * sd)
    };
    Ok(OccupancyEstimate {
        n_b: n_hat,
        ci_low: lo.min(n_hat),
        ci_high: hi.max(n_hat),
        confidence,
        method: EstimateMethod::Subtraction,
        boundary,
        blue_signal_rate: b,
        red_signal_rate: r,
    })
}

/// Parametric bootstrap: counts are redrawn from Poisson laws at the
/// observed values and the percentile interval of the resampled point
/// estimates is reported. Resample `i` uses stream `split(i)` of `seed`.
pub fn bootstrap_occupancy(
    blue: CountSample,
    red: CountSample,
    dark_rate: f64,
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<OccupancyEstimate> {
    check_inputs(&blue, &red, dark_rate, confidence)?;
    if resamples < 10 {
        return Err(Error::Domain(format!("need at least 10 resamples, got {resamples}")));
    }
    let b = blue.rate() - dark_rate;
    let r = red.rate() - dark_rate;
    let (n_hat, boundary) = point_estimate(b, r);
    let root = StreamRng::new(seed);
    let draw = |mean: f64, rng: &mut StreamRng| -> f64 {
        if mean <= 0.0 {
            0.0
        } else {
            Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(mean)
        }
    };
    let mut estimates: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.split(i);
            let bb = draw(blue.counts as f64, &mut rng) / blue.exposure - dark_rate;
            let rr = draw(red.counts as f64, &mut rng) / red.exposure - dark_rate;
            point_estimate(bb, rr).0
        })
        .collect();
    estimates.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - confidence);
    let pick = |q: f64| {
        let v = quantile(&estimates, q);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    Ok(OccupancyEstimate {
        n_b: n_hat,
        ci_low: pick(alpha).min(n_hat),
        ci_high: pick(1.0 - alpha).max(n_hat),
        confidence,
        method: EstimateMethod::Bootstrap,
        boundary,
        blue_signal_rate: b,
        red_signal_rate: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_invariant_point_estimate() {
        for scale in [1.0, 10.0, 1e3, 1e5] {
            let blue = CountSample::new((2515.0 * scale) as u64, 1.0);
            let red = CountSample::new((1000.0 * scale) as u64, 1.0);
            let e = estimate_occupancy(blue, red, 0.0, 0.95).unwrap();
            assert!((e.n_b - 1000.0 / 1515.0).abs() < 1e-12, "{}", e.n_b);
            assert!((e.n_b - 0.66).abs() < 1e-4);
            assert!(e.contains(e.n_b));
        }
    }

    #[test]
    fn red_at_dark_level_is_clipped() {
        let e = estimate_occupancy(CountSample::new(500, 10.0), CountSample::new(110, 10.0), 11.0, 0.95).unwrap();
        assert_eq!(e.n_b, 0.0);
        assert_eq!(e.ci_low, 0.0);
        assert_eq!(e.boundary, BoundaryFlag::Ground);
        assert!(e.ci_high > 0.0);
    }

    #[test]
    fn noise_dominated_is_flagged() {
        let e = estimate_occupancy(CountSample::new(100, 1.0), CountSample::new(120, 1.0), 0.0, 0.95).unwrap();
        assert_eq!(e.boundary, BoundaryFlag::NoiseDominated);
        assert!(e.n_b.is_infinite() && e.ci_high.is_infinite());
        assert!(e.ci_low > 0.0 && e.ci_low.is_finite(), "{e:?}");
    }

    #[test]
    fn bad_inputs_are_domain_errors() {
        let ok = CountSample::new(10, 1.0);
        assert!(matches!(
            estimate_occupancy(CountSample::new(10, 0.0), ok, 0.0, 0.95),
            Err(Error::Domain(_))
        ));
        assert!(estimate_occupancy(ok, ok, -1.0, 0.95).is_err());
        assert!(estimate_occupancy(ok, ok, 0.0, 1.0).is_err());
    }

    #[test]
    fn interval_endpoints_sit_on_the_critical_deviance() {
        let blue = CountSample::new(2515, 10.0);
        let red = CountSample::new(1000, 10.0);
        let e = estimate_occupancy(blue, red, 0.0, 0.683).unwrap();
        // Wide-sample Wald interval is close to the likelihood interval.
        let w = estimate_occupancy_subtraction(blue, red, 0.0, 0.683).unwrap();
        assert!((e.ci_high - e.ci_low) / (w.ci_high - w.ci_low) - 1.0 < 0.05);
        let lik = Likelihood {
            b: 2515.0,
            r: 1000.0,
            tb: 10.0,
            tr: 10.0,
            d: 0.0,
        };
        let lmax = lik.profile(e.n_b);
        let z = z_value(0.683);
        for end in [e.ci_low, e.ci_high] {
            assert!((2.0 * (lmax - lik.profile(end)) - z * z).abs() < 1e-6);
        }
    }

    #[test]
    fn bootstrap_is_reproducible_and_close() {
        let blue = CountSample::new(2515, 10.0);
        let red = CountSample::new(1000, 10.0);
        let a = bootstrap_occupancy(blue, red, 0.0, 0.95, 2000, 5).unwrap();
        let b = bootstrap_occupancy(blue, red, 0.0, 0.95, 2000, 5).unwrap();
        assert_eq!(a, b);
        let p = estimate_occupancy(blue, red, 0.0, 0.95).unwrap();
        let width = p.ci_high - p.ci_low;
        assert!((a.ci_low - p.ci_low).abs() < 0.15 * width);
        assert!((a.ci_high - p.ci_high).abs() < 0.15 * width);
    }
}

//! Damped least squares (Levenberg-Marquardt with Marquardt scaling).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A scalar model `y = f(x; p)` with an analytic gradient in `p`.
pub trait FitModel {
    fn parameter_names(&self) -> &'static [&'static str];

    fn n_params(&self) -> usize {
        self.parameter_names().len()
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// Writes `∂f/∂p_j` at `x` into `out`.
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]);

    /// Natural magnitude of parameter `j`, used to size finite-difference
    /// steps and to judge relative step lengths.
    fn scale(&self, p: &[f64], j: usize) -> f64 {
        p[j].abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Converged once every gradient component is this small relative to
    /// the residual norm and the column norm (cosine criterion).
    pub gradient_tolerance: f64,
    /// Converged once every step component is this small relative to the
    /// parameter scale.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reason: &'static str,
    /// `JᵀJ` of the weighted residuals at the solution.
    pub normal_matrix: DMatrix<f64>,
}

struct Problem<'a, M: FitModel> {
    model: &'a M,
    xs: &'a [f64],
    ys: &'a [f64],
    weights: Vec<f64>,
}

impl<M: FitModel> Problem<'_, M> {
    fn chi2(&self, p: &[f64]) -> f64 {
        self.xs
            .iter()
            .zip(self.ys)
            .zip(&self.weights)
            .map(|((&x, &y), &w)| {
                let r = (y - self.model.eval(x, p)) * w;
                r * r
            })
            .sum()
    }

    fn normal_equations(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>, f64) {
        let k = p.len();
        let mut a = DMatrix::zeros(k, k);
        let mut g = DVector::zeros(k);
        let mut grad = vec![0.0; k];
        let mut chi2 = 0.0;
        for ((&x, &y), &w) in self.xs.iter().zip(self.ys).zip(&self.weights) {
            let r = (y - self.model.eval(x, p)) * w;
            chi2 += r * r;
            self.model.gradient(x, p, &mut grad);
            for i in 0..k {
                let ji = grad[i] * w;
                g[i] += ji * r;
                for j in i..k {
                    a[(i, j)] += ji * grad[j] * w;
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                a[(i, j)] = a[(j, i)];
            }
        }
        (a, g, chi2)
    }
}

fn column_scales(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|j| {
            let v = a[(j, j)].sqrt();
            if v > 0.0 && v.is_finite() {
                v
            } else {
                1.0
            }
        })
        .collect()
}

/// Minimizes `Σ ((y - f(x; p)) / σ)²` from `initial`. Every accepted step
/// strictly decreases the objective.
pub fn levenberg_marquardt<M: FitModel>(
    model: &M,
    xs: &[f64],
    ys: &[f64],
    sigmas: Option<&[f64]>,
    initial: &[f64],
    config: &LmConfig,
) -> Result<LmOutcome> {
    let k = model.n_params();
    if initial.len() != k {
        return Err(Error::Fit(format!(
            "expected {k} initial parameters, got {}",
            initial.len()
        )));
    }
    if xs.len() != ys.len() || sigmas.is_some_and(|s| s.len() != xs.len()) {
        return Err(Error::Fit("data columns have different lengths".into()));
    }
    if xs.len() < k {
        return Err(Error::Fit(format!(
            "{} points cannot constrain {k} parameters",
            xs.len()
        )));
    }
    let weights = match sigmas {
        Some(s) => s
            .iter()
            .map(|&v| {
                if v > 0.0 && v.is_finite() {
                    Ok(1.0 / v)
                } else {
                    Err(Error::Fit(format!("uncertainty must be positive and finite, got {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![1.0; xs.len()],
    };
    let problem = Problem { model, xs, ys, weights };

    let mut p = initial.to_vec();
    let mut lambda = config.initial_lambda;
    let (mut a, mut g, mut chi2) = problem.normal_equations(&p);
    if !chi2.is_finite() {
        return Err(Error::Fit("objective is not finite at the initial point".into()));
    }

    let mut iterations = 0;
    let (converged, reason) = loop {
        if chi2 == 0.0 {
            break (true, "exact fit");
        }
        let residual_norm = chi2.sqrt();
        let gradient_cosine = (0..k)
            .map(|j| {
                let col = a[(j, j)].sqrt();
                if col > 0.0 {
                    g[j].abs() / (col * residual_norm)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        if gradient_cosine <= config.gradient_tolerance {
            break (true, "gradient tolerance");
        }
        if iterations >= config.max_iterations {
            break (false, "iteration limit");
        }
        iterations += 1;

        // Inner loop: raise damping until a step lowers the objective.
        loop {
            // Solve in column-normalized variables so that wildly different
            // parameter magnitudes do not spoil the factorization.
            let d = column_scales(&a);
            let mut damped = DMatrix::from_fn(k, k, |i, j| a[(i, j)] / (d[i] * d[j]));
            for j in 0..k {
                damped[(j, j)] += lambda;
            }
            let rhs = DVector::from_fn(k, |i, _| g[i] / d[i]);
            let step = match damped.cholesky() {
                Some(ch) => {
                    let s = ch.solve(&rhs);
                    DVector::from_fn(k, |i, _| s[i] / d[i])
                }
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return Err(Error::Fit("normal matrix is singular".into()));
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(pi, si)| pi + si).collect();
            let small_step = (0..k).all(|j| step[j].abs() <= config.step_tolerance * model.scale(&p, j));
            let trial_chi2 = problem.chi2(&trial);
            if trial_chi2.is_finite() && trial_chi2 < chi2 {
                p = trial;
                lambda = (lambda / 10.0).max(1e-12);
                (a, g, chi2) = problem.normal_equations(&p);
                if small_step {
                    return Ok(LmOutcome {
                        params: p,
                        chi2,
                        iterations,
                        converged: true,
                        reason: "step tolerance",
                        normal_matrix: a,
                    });
                }
                break;
            }
            if small_step {
                return Ok(LmOutcome {
                    params: p,
                    chi2,
                    iterations,
                    converged: true,
                    reason: "step tolerance",
                    normal_matrix: a,
                });
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                return Ok(LmOutcome {
                    params: p,
                    chi2,
                    iterations,
                    converged: false,
                    reason: "damping overflow",
                    normal_matrix: a,
                });
            }
        }
    };
    Ok(LmOutcome {
        params: p,
        chi2,
        iterations,
        converged,
        reason,
        normal_matrix: a,
    })
}

/// Parameter covariance from the normal matrix; scaled by the reduced
/// chi-square when no measurement uncertainties were supplied.
pub fn covariance(outcome: &LmOutcome, n_points: usize, had_sigmas: bool) -> Result<DMatrix<f64>> {
    let a = &outcome.normal_matrix;
    let k = outcome.params.len();
    let d = column_scales(a);
    let inv = DMatrix::from_fn(k, k, |i, j| a[(i, j)] / (d[i] * d[j]))
        .try_inverse()
        .ok_or_else(|| Error::Fit("normal matrix is singular at the solution".into()))?;
    let inv = DMatrix::from_fn(k, k, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)]) / (d[i] * d[j]));
    if had_sigmas {
        Ok(inv)
    } else {
        let dof = n_points.saturating_sub(k).max(1) as f64;
        Ok(inv * (outcome.chi2 / dof))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exponential;

    impl FitModel for Exponential {
        fn parameter_names(&self) -> &'static [&'static str] {
            &["amplitude", "rate"]
        }
        fn eval(&self, x: f64, p: &[f64]) -> f64 {
            p[0] * (-p[1] * x).exp()
        }
        fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
            let e = (-p[1] * x).exp();
            out[0] = e;
            out[1] = -p[0] * x * e;
        }
    }

    #[test]
    fn recovers_noiseless_exponential() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 * (-1.7 * x).exp()).collect();
        let out = levenberg_marquardt(&Exponential, &xs, &ys, None, &[1.0, 0.5], &LmConfig::default()).unwrap();
        assert!(out.converged, "{}", out.reason);
        assert!((out.params[0] - 3.0).abs() < 1e-10);
        assert!((out.params[1] - 1.7).abs() < 1e-10);
    }

    #[test]
    fn rejects_underdetermined_problems() {
        assert!(levenberg_marquardt(&Exponential, &[1.0], &[1.0], None, &[1.0, 1.0], &LmConfig::default()).is_err());
        assert!(levenberg_marquardt(
            &Exponential,
            &[0.0, 1.0, 2.0],
            &[1.0, 1.0, 1.0],
            Some(&[1.0, 0.0, 1.0]),
            &[1.0, 1.0],
            &LmConfig::default()
        )
        .is_err());
    }

    #[test]
    fn iteration_limit_reports_non_convergence() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 3.0 * (-1.7 * x).exp() + 0.01 * (x * 7.0).sin())
            .collect();
        let cfg = LmConfig {
            max_iterations: 1,
            ..LmConfig::default()
        };
        let out = levenberg_marquardt(&Exponential, &xs, &ys, None, &[0.1, 5.0], &cfg).unwrap();
        assert!(!out.converged);
    }
}

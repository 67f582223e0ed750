//! Maximum-likelihood estimation of one model on one dataset.
//!
//! Newton's method on the exact Hessian with step halving, starting from
//! zero. When the Hessian cannot be factored, a BFGS secant approximation
//! takes over. After convergence the curvature is checked: the model is
//! rejected as not identified when the information matrix is too badly
//! conditioned or when the likelihood fails to fall along its flattest
//! direction (the signature of separation).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize, Serializer};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{Design, LikelihoodEvaluation, Order};
use crate::spec::{ModelSpec, ParameterVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    /// Convergence when the gradient max-norm falls below this.
    pub tol: f64,
    /// Convergence when an accepted step improves the log-likelihood by
    /// less than this fraction.
    pub ll_rel_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Information matrices with a larger condition number are singular.
    pub condition_threshold: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            ll_rel_tol: 1e-10,
            max_iter: 200,
            max_halvings: 30,
            condition_threshold: 1e10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationResult {
    pub theta_hat: ParameterVector,
    pub labels: Vec<String>,
    #[serde(serialize_with = "matrix_rows")]
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub t_ratios: Vec<f64>,
    pub ll_converged: f64,
    /// Constants-only (market share) log-likelihood.
    pub ll_null: f64,
    /// Log-likelihood with every parameter at zero.
    pub ll_zero: f64,
    pub n_obs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_max_norm: f64,
    pub condition_number: f64,
    pub diagnostics: Vec<String>,
}

impl EstimationResult {
    pub fn k(&self) -> usize {
        self.theta_hat.len()
    }
}

fn matrix_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

pub fn estimate(spec: &ModelSpec, dataset: &Dataset, options: &EstimateOptions) -> Result<EstimationResult> {
    validate_options(options)?;
    let design = Design::new(spec, dataset)?;
    let k = spec.k();
    let mut diagnostics = Vec::new();

    let weighted = dataset.weighted_outcome_counts();
    for i in spec.referenced_outcomes() {
        if weighted[i] == 0.0 {
            diagnostics.push(format!(
                "outcome `{}` never occurs in the data; its parameters are not identified",
                spec.outcome_set().label(i)
            ));
        }
    }

    let mut theta = DVector::<f64>::zeros(k);
    let mut eval = design.evaluate(theta.as_slice(), Order::Hessian)?;
    let ll_zero = eval.value;
    let mut secant: Option<DMatrix<f64>> = None;
    let mut last_rel_change = f64::INFINITY;
    let mut iterations = 0;
    let mut previous_gmax = f64::INFINITY;

    loop {
        let gmax = eval.gradient.amax();
        // A negligible likelihood change only ends the search once Newton
        // steps stop shrinking the gradient; until then they are cheap polish.
        let stalled = last_rel_change < options.ll_rel_tol && gmax > 0.5 * previous_gmax;
        if gmax < options.tol || stalled {
            break;
        }
        previous_gmax = gmax;
        if iterations >= options.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                last_theta: theta.as_slice().to_vec(),
                gradient_max_norm: gmax,
            });
        }
        iterations += 1;

        let information = -&eval.hessian;
        let direction = match information.clone().cholesky() {
            Some(ch) if secant.is_none() => ch.solve(&eval.gradient),
            _ => {
                let b = secant.get_or_insert_with(|| {
                    diagnostics.push(format!(
                        "Hessian factorization failed at iteration {iterations}; switched to secant updates"
                    ));
                    let scale = information.diagonal().amax().max(1.0);
                    DMatrix::identity(k, k) * scale
                });
                match b.clone().cholesky() {
                    Some(ch) => ch.solve(&eval.gradient),
                    None => eval.gradient.clone() / b.diagonal().amax().max(1.0),
                }
            }
        };

        // Near the optimum the true gain falls below summation round-off,
        // so a step that loses less than that is still accepted.
        let noise = 1e-13 * eval.value.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        let mut last_trial = eval.value;
        for _ in 0..=options.max_halvings {
            let trial = &theta + &direction * step;
            let value = design.evaluate(trial.as_slice(), Order::Value).map(|e| e.value);
            if let Ok(v) = value {
                last_trial = v;
                if v >= eval.value - noise {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            // no ascent direction left at working precision
            if (last_trial - eval.value).abs() <= options.ll_rel_tol * eval.value.abs().max(1.0) {
                diagnostics.push(format!(
                    "line search stalled at iteration {iterations} with gradient max-norm {gmax:.3e}"
                ));
                break;
            }
            return Err(Error::NonConvergence {
                iterations,
                last_theta: theta.as_slice().to_vec(),
                gradient_max_norm: gmax,
            });
        };

        let next_eval = design.evaluate(next.as_slice(), Order::Hessian)?;
        if let Some(b) = secant.as_mut() {
            bfgs_update(b, &(&next - &theta), &(&eval.gradient - &next_eval.gradient));
        }
        last_rel_change = (next_eval.value - eval.value) / eval.value.abs().max(1.0);
        theta = next;
        eval = next_eval;
    }

    if eval.floored > 0 {
        diagnostics.push(format!(
            "{} observation(s) had fitted probabilities below the smallest normal double (quasi-separation)",
            eval.floored
        ));
    }

    let condition_number = check_identification(spec, &design, &theta, &eval, options)?;
    let covariance = invert_information(spec, &eval)?;
    let std_errors: Vec<f64> = covariance.diagonal().iter().map(|v| v.sqrt()).collect();
    let t_ratios = theta
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| b / se)
        .collect();

    Ok(EstimationResult {
        theta_hat: ParameterVector::from_values(spec, theta.as_slice().to_vec())?,
        labels: spec.layout().labels().to_vec(),
        covariance,
        std_errors,
        t_ratios,
        ll_converged: eval.value,
        ll_null: null_log_likelihood(dataset),
        ll_zero,
        n_obs: dataset.len(),
        iterations,
        converged: true,
        gradient_max_norm: eval.gradient.amax(),
        condition_number,
        diagnostics,
    })
}

fn validate_options(o: &EstimateOptions) -> Result<()> {
    if !(o.tol > 0.0 && o.ll_rel_tol >= 0.0 && o.condition_threshold > 1.0) || o.max_iter == 0 {
        return Err(Error::Config(format!("invalid estimation options {o:?}")));
    }
    Ok(())
}

/// Damped BFGS update of a positive definite approximation `b` to the
/// negative Hessian. `y` is the decrease of the gradient over step `s`.
fn bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let sy = s.dot(y);
    if sy <= 1e-12 * s.norm() * y.norm() {
        return;
    }
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 0.0 {
        return;
    }
    *b -= &bs * bs.transpose() / sbs;
    *b += y * y.transpose() / sy;
}

/// Returns the condition number of the information matrix, or a
/// non-identification error naming the slots of any flat direction.
fn check_identification(
    spec: &ModelSpec,
    design: &Design,
    theta: &DVector<f64>,
    eval: &LikelihoodEvaluation,
    options: &EstimateOptions,
) -> Result<f64> {
    let labels = spec.layout().labels();
    let fail = |slots: Vec<usize>, reason: String| Error::NonIdentification {
        labels: slots.iter().map(|&s| labels[s].clone()).collect(),
        slots,
        reason,
    };
    let k = spec.k();

    let scales = design.column_scales();
    let dead: Vec<usize> = (0..k).filter(|&s| scales[s] == 0.0).collect();
    if !dead.is_empty() {
        return Err(fail(dead, "covariate column is identically zero".into()));
    }

    let information = -&eval.hessian;
    let eig = SymmetricEigen::new(information.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition > options.condition_threshold {
        let cutoff = max / options.condition_threshold;
        let mut slots: Vec<usize> = Vec::new();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= cutoff {
                slots.extend(loading_slots(eig.eigenvectors.column(j).iter().copied()));
            }
        }
        slots.sort_unstable();
        slots.dedup();
        return Err(fail(
            slots,
            format!("information matrix condition number {condition:.3e} exceeds {:.1e}", options.condition_threshold),
        ));
    }

    // Recession check along the flattest direction measured in utility
    // units: a one-unit move must lower the log-likelihood.
    let d_inv = DMatrix::from_diagonal(&DVector::from_iterator(k, scales.iter().map(|s| 1.0 / s)));
    let standardized = &d_inv * &information * &d_inv;
    let seig = SymmetricEigen::new(standardized);
    let j = seig.eigenvalues.imin();
    let v = seig.eigenvectors.column(j).into_owned();
    let direction = &d_inv * &v;
    let margin = 1e-9 * (1.0 + eval.value.abs());
    for sign in [1.0, -1.0] {
        let moved = theta + &direction * sign;
        let ll = design.evaluate(moved.as_slice(), Order::Value)?.value;
        if ll >= eval.value - margin {
            return Err(fail(
                loading_slots(v.iter().copied()),
                "log-likelihood does not decrease away from the estimate (separation or collinearity)".into(),
            ));
        }
    }
    Ok(condition)
}

fn loading_slots(v: impl Iterator<Item = f64>) -> Vec<usize> {
    let v: Vec<f64> = v.collect();
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() >= 0.1 * max)
        .map(|(s, _)| s)
        .collect()
}

fn invert_information(spec: &ModelSpec, eval: &LikelihoodEvaluation) -> Result<DMatrix<f64>> {
    let information = -&eval.hessian;
    let ch = information.cholesky().ok_or_else(|| Error::NonIdentification {
        slots: (0..spec.k()).collect(),
        labels: spec.layout().labels().to_vec(),
        reason: "information matrix is not positive definite".into(),
    })?;
    let cov = ch.inverse();
    // exact symmetry
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Log-likelihood of the saturated constants-only model: sum of
/// `W_i ln(W_i / W)` over outcomes with weighted counts `W_i`.
pub fn null_log_likelihood(dataset: &Dataset) -> f64 {
    let counts = dataset.weighted_outcome_counts();
    let total: f64 = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| c * (c / total).ln())
        .sum()
}

/// Likelihood-based goodness-of-fit summaries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitStatistics {
    /// `1 - LL(beta) / LL(0)`.
    pub rho_squared: f64,
    /// `1 - (LL(beta) - K) / LL(0)`.
    pub adjusted_rho_squared: f64,
    /// `1 - LL(beta) / LL(c)` against the constants-only model.
    pub rho_squared_constants: f64,
    pub aic: f64,
    pub bic: f64,
}

pub fn fit_statistics(result: &EstimationResult) -> Result<FitStatistics> {
    if !result.converged {
        return Err(Error::UndefinedStatistic("estimation did not converge".into()));
    }
    if result.ll_zero == 0.0 {
        return Err(Error::UndefinedStatistic(
            "LL(0) is zero, rho-squared is undefined".into(),
        ));
    }
    let k = result.k() as f64;
    let ll = result.ll_converged;
    let rho_squared_constants = if result.ll_null == 0.0 {
        f64::NAN
    } else {
        1.0 - ll / result.ll_null
    };
    Ok(FitStatistics {
        rho_squared: 1.0 - ll / result.ll_zero,
        adjusted_rho_squared: 1.0 - (ll - k) / result.ll_zero,
        rho_squared_constants,
        aic: 2.0 * k - 2.0 * ll,
        bic: k * (result.n_obs as f64).ln() - 2.0 * ll,
    })
}

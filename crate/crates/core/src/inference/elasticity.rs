use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::estimator::EstimationResult;
use crate::likelihood::softmax;
use crate::spec::{utility, ModelSpec, ParameterVector};

/// Point elasticity of `P(i)` with respect to a covariate entering only
/// outcome `i`'s utility: `(1 - P(i)) * beta * x`.
pub fn elasticity_point(p_i: f64, beta: f64, x: f64) -> f64 {
    (1.0 - p_i) * beta * x
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Weighted by observation weight only (a simple mean for unit weights).
    #[default]
    Mean,
    /// Additionally weighted by the fitted probability of the outcome.
    ProbWeighted,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::ProbWeighted => "prob-weighted",
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "prob-weighted" => Ok(Aggregation::ProbWeighted),
            other => Err(Error::InvalidArgument(format!(
                "unknown aggregation `{other}` (expected mean or prob-weighted)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ElasticityKind {
    Elasticity,
    /// Relative change in `P(i)` when a 0/1 indicator flips from 0 to 1.
    PseudoElasticity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticityOptions {
    pub aggregation: Aggregation,
    /// Slots with `|t| <=` this are left out of the report.
    pub significance_threshold: f64,
    /// Restrict the report to these variables; all covariates when `None`.
    pub variables: Option<Vec<String>>,
    pub keep_per_observation: bool,
}

impl Default for ElasticityOptions {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::Mean,
            significance_threshold: 1.96,
            variables: None,
            keep_per_observation: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElasticityEntry {
    pub variable: String,
    pub outcome: usize,
    pub outcome_label: String,
    pub slot: usize,
    pub slot_label: String,
    pub shared: bool,
    pub estimate: f64,
    pub t_ratio: f64,
    pub kind: ElasticityKind,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_observation: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElasticityReport {
    pub aggregation: Aggregation,
    pub significance_threshold: f64,
    pub entries: Vec<ElasticityEntry>,
}

impl ElasticityReport {
    pub fn get(&self, variable: &str, outcome: usize) -> Option<&ElasticityEntry> {
        self.entries
            .iter()
            .find(|e| e.variable == variable && e.outcome == outcome)
    }
}

/// True when every value of `variable` is exactly 0 or 1.
pub fn is_indicator(dataset: &Dataset, variable: &str) -> bool {
    dataset
        .observations()
        .iter()
        .all(|o| matches!(o.covariates.get(variable), Some(&v) if v == 0.0 || v == 1.0))
}

/// Elasticities per (variable, outcome) for every significant slot,
/// computed per observation and aggregated.
pub fn elasticity_report(
    spec: &ModelSpec,
    result: &EstimationResult,
    dataset: &Dataset,
    options: &ElasticityOptions,
) -> Result<ElasticityReport> {
    if !result.converged {
        return Err(Error::InvalidArgument(
            "elasticities need a converged estimate".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let spec_vars = spec.variables();
    if let Some(vars) = &options.variables {
        if let Some(missing) = vars.iter().find(|v| !spec_vars.contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "variable `{missing}` does not appear in the model spec"
            )));
        }
    }
    let theta = &result.theta_hat;
    let layout = spec.layout();
    let n_out = spec.outcome_set().len();

    let utilities: Vec<Vec<f64>> = dataset
        .observations()
        .iter()
        .map(|o| (0..n_out).map(|i| utility(spec, theta, o, i)).collect())
        .collect::<Result<_>>()?;
    let probs: Vec<Vec<f64>> = utilities.iter().map(|u| softmax(u)).collect::<Result<_>>()?;

    let mut entries = Vec::new();
    for (s, slot) in layout.slots().iter().enumerate() {
        if slot.is_constant() {
            continue;
        }
        if let Some(vars) = &options.variables {
            if !vars.contains(&slot.variable) {
                continue;
            }
        }
        let t = result.t_ratios[s];
        if !(t.abs() > options.significance_threshold) {
            continue;
        }
        let beta = theta.values[s];
        let kind = if is_indicator(dataset, &slot.variable) {
            ElasticityKind::PseudoElasticity
        } else {
            ElasticityKind::Elasticity
        };
        for &i in &slot.outcomes {
            let per_obs: Vec<f64> = dataset
                .observations()
                .iter()
                .enumerate()
                .map(|(n, obs)| {
                    let x = obs.covariates[&slot.variable];
                    match kind {
                        ElasticityKind::Elasticity => Ok(elasticity_point(probs[n][i], beta, x)),
                        ElasticityKind::PseudoElasticity => {
                            let mut u = utilities[n].clone();
                            u[i] += beta * (0.0 - x);
                            let off = softmax(&u)?[i];
                            u[i] += beta;
                            let on = softmax(&u)?[i];
                            Ok((on - off) / off)
                        }
                    }
                })
                .collect::<Result<_>>()?;
            let weights: Vec<f64> = dataset
                .observations()
                .iter()
                .enumerate()
                .map(|(n, o)| match options.aggregation {
                    Aggregation::Mean => o.weight,
                    Aggregation::ProbWeighted => o.weight * probs[n][i],
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let value = per_obs.iter().zip(&weights).map(|(e, w)| e * w).sum::<f64>() / total;
            entries.push(ElasticityEntry {
                variable: slot.variable.clone(),
                outcome: i,
                outcome_label: spec.outcome_set().label(i).to_string(),
                slot: s,
                slot_label: layout.labels()[s].clone(),
                shared: slot.is_shared(),
                estimate: beta,
                t_ratio: t,
                kind,
                value,
                per_observation: options.keep_per_observation.then_some(per_obs),
            });
        }
    }
    Ok(ElasticityReport {
        aggregation: options.aggregation,
        significance_threshold: options.significance_threshold,
        entries,
    })
}

/// Elasticity of `P(outcome)` with respect to the copy of `slot`'s
/// covariate in `outcome`'s utility, by central difference with relative
/// step `rel_step`.
pub fn finite_difference_elasticity(
    spec: &ModelSpec,
    theta: &ParameterVector,
    obs: &Observation,
    slot: usize,
    outcome: usize,
    rel_step: f64,
) -> Result<f64> {
    let layout = spec.layout();
    if slot >= layout.len() || !layout.slot(slot).outcomes.contains(&outcome) {
        return Err(Error::InvalidArgument(format!(
            "slot {slot} does not enter outcome {outcome}"
        )));
    }
    let variable = &layout.slot(slot).variable;
    let x = if layout.slot(slot).is_constant() {
        1.0
    } else {
        obs.covariate(variable)?
    };
    if x == 0.0 {
        return Ok(0.0);
    }
    let beta = theta.values[slot];
    let u = (0..spec.outcome_set().len())
        .map(|i| utility(spec, theta, obs, i))
        .collect::<Result<Vec<_>>>()?;
    let p = softmax(&u)?[outcome];
    let shifted = |h: f64| -> Result<f64> {
        let mut v = u.clone();
        v[outcome] += beta * x * h;
        Ok(softmax(&v)?[outcome])
    };
    let up = shifted(rel_step)?;
    let down = shifted(-rel_step)?;
    // dP/dx * x / P with dx = x * rel_step
    Ok((up - down) / (2.0 * rel_step * p))
}

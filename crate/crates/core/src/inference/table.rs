use serde::Serialize;

use super::elasticity::{ElasticityKind, ElasticityReport};
use crate::data::OutcomeSet;
use crate::estimator::EstimationResult;
use crate::spec::ModelSpec;

/// Three significant digits, e.g. `0.0396`, `0.00506`, `5.60`.
pub fn format_estimate(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Two decimals, one decimal from 10 upward (`0.84`, `2.77`, `11.9`).
pub fn format_elasticity(v: f64) -> String {
    if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn humanize(name: &str) -> String {
    let spaced = name.replace('_', " ");
    let mut chars = spaced.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => spaced,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElasticityTableRow {
    pub model: String,
    /// `(estimate, t-ratio)` per outcome column; `None` when the variable
    /// does not enter that outcome.
    pub estimates: Vec<Option<(f64, f64)>>,
    /// `None` for insignificant or absent slots.
    pub elasticities: Vec<Option<f64>>,
    pub pseudo: Vec<bool>,
}

/// One variable's coefficients and elasticities across segment models:
/// rows are models, columns are the estimate (t-ratio) per non-base
/// outcome followed by the elasticity per outcome, most severe first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElasticityTable {
    pub variable: String,
    pub outcomes: Vec<usize>,
    pub outcome_labels: Vec<String>,
    pub rows: Vec<ElasticityTableRow>,
}

impl ElasticityTable {
    pub fn new(variable: impl Into<String>, outcome_set: &OutcomeSet) -> Self {
        let outcomes: Vec<usize> = (1..outcome_set.len()).rev().collect();
        Self {
            variable: variable.into(),
            outcome_labels: outcomes.iter().map(|&i| outcome_set.label(i).to_string()).collect(),
            outcomes,
            rows: Vec::new(),
        }
    }

    pub fn push_row(
        &mut self,
        model: impl Into<String>,
        spec: &ModelSpec,
        result: &EstimationResult,
        report: &ElasticityReport,
    ) {
        let layout = spec.layout();
        let estimates = self
            .outcomes
            .iter()
            .map(|&i| {
                layout
                    .slot_for(&self.variable, i)
                    .map(|s| (result.theta_hat.values[s], result.t_ratios[s]))
            })
            .collect();
        let entries: Vec<_> = self
            .outcomes
            .iter()
            .map(|&i| report.get(&self.variable, i))
            .collect();
        self.rows.push(ElasticityTableRow {
            model: model.into(),
            estimates,
            elasticities: entries.iter().map(|e| e.map(|e| e.value)).collect(),
            pseudo: entries
                .iter()
                .map(|e| e.is_some_and(|e| e.kind == ElasticityKind::PseudoElasticity))
                .collect(),
        });
    }

    /// Tab-separated rendering; blank cells for insignificant elasticities.
    /// Pseudo-elasticities of indicator variables carry a `*`.
    pub fn to_text(&self) -> String {
        let m = self.outcomes.len();
        let mut out = String::new();
        out.push_str("Model\t");
        out.push_str(&humanize(&self.variable));
        out.push_str(" parameter estimate (t-ratio)");
        out.push_str(&"\t".repeat(m - 1));
        for label in &self.outcome_labels {
            out.push('\t');
            out.push_str(&crate::data::display_outcome(label));
            out.push_str(" Elasticity");
        }
        out.push('\n');
        for label in &self.outcome_labels {
            out.push('\t');
            out.push_str(label);
        }
        out.push_str(&"\t".repeat(m));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.model);
            for cell in &row.estimates {
                out.push('\t');
                if let Some((b, t)) = cell {
                    out.push_str(&format!("{}({t:.2})", format_estimate(*b)));
                }
            }
            for (e, pseudo) in row.elasticities.iter().zip(&row.pseudo) {
                out.push('\t');
                if let Some(e) = e {
                    out.push_str(&format_elasticity(*e));
                    if *pseudo {
                        out.push('*');
                    }
                }
            }
            out.push('\n');
        }
        if self.rows.iter().any(|r| r.pseudo.iter().any(|&p| p)) {
            out.push_str("* pseudo-elasticity: relative change in probability when the indicator flips from 0 to 1\n");
        }
        out
    }
}

use serde::Serialize;

use super::chi_square_sf;
use crate::error::{Error, Result};

/// Confidence levels reported by the segmentation test.
pub const SPLIT_CONFIDENCE: &[f64] = &[0.90, 0.95, 0.99];
/// Temporal tests also report the weak 70% level.
pub const TEMPORAL_CONFIDENCE: &[f64] = &[0.70, 0.90, 0.95, 0.99];

/// Statistics this far below zero cannot come from correctly nested fits.
const NEGATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LrTestKind {
    Split,
    Temporal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub confidence: f64,
    pub reject: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrTestResult {
    pub kind: LrTestKind,
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub decisions: Vec<Decision>,
    /// Log-likelihood of the pooled (restricted) model.
    pub ll_restricted: f64,
    pub k_restricted: usize,
    /// Log-likelihoods of the separate (unrestricted) models.
    pub ll_components: Vec<f64>,
    pub k_components: Vec<usize>,
}

impl LrTestResult {
    /// Whether the null of equal parameters is rejected at `confidence`.
    pub fn rejects_at(&self, confidence: f64) -> bool {
        self.p_value < 1.0 - confidence
    }

    /// Decision recorded for one of the reported levels.
    pub fn decision(&self, confidence: f64) -> Option<bool> {
        self.decisions
            .iter()
            .find(|d| (d.confidence - confidence).abs() < 1e-12)
            .map(|d| d.reject)
    }
}

fn build(
    kind: LrTestKind,
    ll_restricted: f64,
    k_restricted: usize,
    components: &[(f64, usize)],
    df: usize,
    levels: &[f64],
) -> Result<LrTestResult> {
    let sum: f64 = components.iter().map(|c| c.0).sum();
    let raw = -2.0 * (ll_restricted - sum);
    if !raw.is_finite() {
        return Err(Error::Numeric(format!("non-finite LR statistic {raw}")));
    }
    if raw < -NEGATIVE_TOLERANCE {
        let what = match kind {
            LrTestKind::Split => "one of the subset estimations",
            LrTestKind::Temporal => "one of the period estimations",
        };
        return Err(Error::Inconsistency(format!(
            "separate models sum to LL {sum} below the pooled LL {ll_restricted}; {what} most likely stopped short of its maximum"
        )));
    }
    let statistic = raw.max(0.0);
    let df = u32::try_from(df).map_err(|_| Error::InvalidArgument("df too large".into()))?;
    let p_value = chi_square_sf(statistic, df)?;
    let decisions = levels
        .iter()
        .map(|&confidence| Decision {
            confidence,
            reject: p_value < 1.0 - confidence,
        })
        .collect();
    Ok(LrTestResult {
        kind,
        statistic,
        df,
        p_value,
        decisions,
        ll_restricted,
        k_restricted,
        ll_components: components.iter().map(|c| c.0).collect(),
        k_components: components.iter().map(|c| c.1).collect(),
    })
}

/// Segmentation test: pooled model versus `M` separate subset models.
/// `df = sum K_m - K_pooled`, which is `(M - 1) K` when every model has
/// the same `K` parameters.
pub fn lr_split_test(ll_pooled: f64, k_pooled: usize, subsets: &[(f64, usize)]) -> Result<LrTestResult> {
    if subsets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a split test needs at least 2 subsets, got {}",
            subsets.len()
        )));
    }
    let k_sum: usize = subsets.iter().map(|s| s.1).sum();
    if k_sum <= k_pooled {
        return Err(Error::InvalidArgument(format!(
            "subset models have {k_sum} parameters in total, not more than the pooled {k_pooled}"
        )));
    }
    build(
        LrTestKind::Split,
        ll_pooled,
        k_pooled,
        subsets,
        k_sum - k_pooled,
        SPLIT_CONFIDENCE,
    )
}

/// Temporal stability test: model on both periods against one model per
/// period, with `df = K_a + K_b - K_all`.
pub fn lr_temporal_test(
    ll_all: f64,
    ll_a: f64,
    ll_b: f64,
    k_all: usize,
    k_a: usize,
    k_b: usize,
) -> Result<LrTestResult> {
    if k_a + k_b <= k_all {
        return Err(Error::InvalidArgument(format!(
            "degrees of freedom {k_a} + {k_b} - {k_all} must be positive"
        )));
    }
    build(
        LrTestKind::Temporal,
        ll_all,
        k_all,
        &[(ll_a, k_a), (ll_b, k_b)],
        k_a + k_b - k_all,
        TEMPORAL_CONFIDENCE,
    )
}

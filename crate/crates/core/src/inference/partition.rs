use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lr::{lr_split_test, LrTestResult};
use crate::data::{partition, CellKey, Dataset, Dimension};
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimateOptions, EstimationResult};
use crate::spec::ModelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionOptions {
    pub estimate: EstimateOptions,
    /// Minimum observations per cell; `min_cell_factor * K` when unset.
    pub min_cell_size: Option<usize>,
    pub min_cell_factor: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            estimate: EstimateOptions::default(),
            min_cell_size: None,
            min_cell_factor: 30,
        }
    }
}

impl PartitionOptions {
    pub fn threshold(&self, k: usize) -> usize {
        self.min_cell_size.unwrap_or(self.min_cell_factor * k)
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Estimated { result: Box<EstimationResult> },
    Skipped { reason: String },
    Failed { error: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct CellReport {
    pub key: CellKey,
    pub n_obs: usize,
    #[serde(flatten)]
    pub status: CellStatus,
}

impl CellReport {
    pub fn result(&self) -> Option<&EstimationResult> {
        match &self.status {
            CellStatus::Estimated { result } => Some(result),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionReport {
    pub dims: Vec<Dimension>,
    pub min_cell_size: usize,
    pub pooled: EstimationResult,
    pub cells: Vec<CellReport>,
    pub split_test: Option<LrTestResult>,
    /// Why `split_test` is absent.
    pub test_unavailable: Option<String>,
}

impl PartitionReport {
    /// Separate models are warranted at `confidence`; `None` when the test
    /// could not be run.
    pub fn split_recommended(&self, confidence: f64) -> Option<bool> {
        self.split_test.as_ref().map(|t| t.rejects_at(confidence))
    }
}

/// Estimates the pooled model and one model per partition cell, then runs
/// the split test. The test is only computed when every cell estimated
/// successfully; otherwise it is marked unavailable.
pub fn evaluate_partition(
    spec: &ModelSpec,
    dataset: &Dataset,
    dims: &[Dimension],
    options: &PartitionOptions,
) -> Result<PartitionReport> {
    let cells = partition(dataset, dims)?;
    let threshold = options.threshold(spec.k());
    if cells.values().all(|c| c.len() < threshold) {
        return Err(Error::EmptyPartition);
    }
    let pooled = estimate(spec, dataset, &options.estimate)?;

    let cells: Vec<(CellKey, Dataset)> = cells.into_iter().collect();
    let reports: Vec<CellReport> = cells
        .par_iter()
        .map(|(key, data)| {
            let status = if data.len() < threshold {
                CellStatus::Skipped {
                    reason: format!("{} observations, below the minimum of {threshold}", data.len()),
                }
            } else {
                match estimate(spec, data, &options.estimate) {
                    Ok(r) => CellStatus::Estimated { result: Box::new(r) },
                    Err(e) => CellStatus::Failed { error: e.to_string() },
                }
            };
            CellReport {
                key: key.clone(),
                n_obs: data.len(),
                status,
            }
        })
        .collect();

    let skipped = reports
        .iter()
        .filter(|c| matches!(c.status, CellStatus::Skipped { .. }))
        .count();
    let failed = reports
        .iter()
        .filter(|c| matches!(c.status, CellStatus::Failed { .. }))
        .count();
    let (split_test, test_unavailable) = if reports.len() < 2 {
        (None, Some("partition has a single cell".to_string()))
    } else if skipped + failed > 0 {
        (
            None,
            Some(format!(
                "{skipped} cell(s) skipped and {failed} failed; the test would only cover a subset of the data"
            )),
        )
    } else {
        let subsets: Vec<(f64, usize)> = reports
            .iter()
            .filter_map(CellReport::result)
            .map(|r| (r.ll_converged, r.k()))
            .collect();
        (Some(lr_split_test(pooled.ll_converged, pooled.k(), &subsets)?), None)
    };

    Ok(PartitionReport {
        dims: dims.to_vec(),
        min_cell_size: threshold,
        pooled,
        cells: reports,
        split_test,
        test_unavailable,
    })
}

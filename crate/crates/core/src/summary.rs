//! Outcome distributions by posted speed-limit band.

use serde::Serialize;

use crate::data::{display_outcome, Dataset};
use crate::error::{Error, Result};

pub const SPEED_LIMIT: &str = "speed_limit";

/// Band edges for [`summarize`]. With edges `e1 < ... < em` the bands are
/// `x <= e1`, `e1 < x <= e2`, ..., `x > em`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedBins {
    pub variable: String,
    pub edges: Vec<f64>,
    /// One row per (band, period) instead of one per band.
    pub by_period: bool,
}

impl SpeedBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidArgument("at least one bin edge is required".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("bin edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "bin edges must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            variable: SPEED_LIMIT.into(),
            edges,
            by_period: false,
        })
    }

    /// Bands matching the grouping used for Indiana speed limits:
    /// 30 or less, 35-50, 55-60, 65 and above.
    pub fn indiana() -> Self {
        Self::new(vec![30.0, 50.0, 60.0]).expect("static edges are valid")
    }

    pub fn by_period(mut self, yes: bool) -> Self {
        self.by_period = yes;
        self
    }

    pub fn variable(mut self, name: impl Into<String>) -> Self {
        self.variable = name.into();
        self
    }

    pub fn band_count(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn band_of(&self, x: f64) -> usize {
        self.edges.iter().take_while(|&&e| x > e).count()
    }

    pub fn band_label(&self, band: usize) -> String {
        let last = self.edges.len();
        if band == 0 {
            format!("posted {} mi/h or less", self.edges[0])
        } else if band == last {
            format!("posted over {} mi/h", self.edges[last - 1])
        } else {
            format!(
                "posted over {} to {} mi/h",
                self.edges[band - 1],
                self.edges[band]
            )
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeverityRow {
    pub band: usize,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<String>,
    pub counts: Vec<usize>,
    pub total: usize,
    /// `None` for empty rows.
    pub shares: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeverityTable {
    pub variable: String,
    pub outcome_labels: Vec<String>,
    pub rows: Vec<SeverityRow>,
}

/// Counts and shares of each outcome per speed band, highest band first.
pub fn summarize(dataset: &Dataset, bins: &SpeedBins) -> Result<SeverityTable> {
    if !dataset.has_variable(&bins.variable) {
        return Err(Error::Schema(format!(
            "dataset has no `{}` column",
            bins.variable
        )));
    }
    let n_out = dataset.outcome_set().len();
    let periods: Vec<Option<String>> = if bins.by_period {
        let mut p: Vec<Option<String>> = dataset.periods().into_iter().map(Some).collect();
        p.sort();
        if dataset.observations().iter().any(|o| o.period.is_none()) {
            p.insert(0, None);
        }
        p
    } else {
        vec![None]
    };

    let mut counts = vec![vec![vec![0usize; n_out]; periods.len()]; bins.band_count()];
    for obs in dataset.observations() {
        let band = bins.band_of(obs.covariates[&bins.variable]);
        let p = if bins.by_period {
            periods.iter().position(|p| *p == obs.period).unwrap()
        } else {
            0
        };
        counts[band][p][obs.outcome] += 1;
    }

    let mut rows = Vec::new();
    for band in (0..bins.band_count()).rev() {
        for (p, period) in periods.iter().enumerate() {
            let c = counts[band][p].clone();
            let total: usize = c.iter().sum();
            let shares = (total > 0).then(|| c.iter().map(|&k| k as f64 / total as f64).collect());
            let label = match period {
                Some(p) => format!("{p} {}", bins.band_label(band)),
                None => bins.band_label(band),
            };
            rows.push(SeverityRow {
                band,
                label,
                period: period.clone(),
                counts: c,
                total,
                shares,
            });
        }
    }
    Ok(SeverityTable {
        variable: bins.variable.clone(),
        outcome_labels: dataset.outcome_set().labels().to_vec(),
        rows,
    })
}

impl SeverityTable {
    /// Tab-separated table: a two-line header (severity levels spanning the
    /// outcome columns) then one row per band, percentages to one decimal.
    /// Bands are separated by a blank line when rows are split by period.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let heading = if self.variable == SPEED_LIMIT {
            "Speed limit".to_string()
        } else {
            display_outcome(&self.variable)
        };
        out.push_str(&heading);
        out.push_str("\tInjury Severity Level");
        out.push_str(&"\t".repeat(self.outcome_labels.len().saturating_sub(1)));
        out.push('\n');
        for label in &self.outcome_labels {
            out.push('\t');
            out.push_str(&display_outcome(label));
        }
        out.push('\n');
        let split_bands = self.rows.iter().any(|r| r.period.is_some());
        let mut prev_band = None;
        for row in &self.rows {
            if split_bands && prev_band.is_some_and(|b| b != row.band) {
                out.push('\n');
            }
            prev_band = Some(row.band);
            out.push_str(&row.label);
            match &row.shares {
                Some(shares) => {
                    for s in shares {
                        out.push_str(&format!("\t{:.1}%", 100.0 * s));
                    }
                }
                None => {
                    for _ in &self.outcome_labels {
                        out.push_str("\t-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

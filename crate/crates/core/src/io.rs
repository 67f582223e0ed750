//! CSV ingestion and emission.
//!
//! Schema: a header row naming `outcome`, `road_class`, `location` and
//! `accident_type`, optionally `period` and `weight`; every other column is
//! a numeric covariate. Lines starting with `#` are comments. Outcome
//! labels are matched case-sensitively.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{AccidentType, Dataset, Location, Observation, OutcomeSet, RoadClass, SegmentKey};
use crate::error::{Error, LineError, Result};

const REQUIRED: [&str; 4] = ["outcome", "road_class", "location", "accident_type"];

pub fn ingest_csv(path: &Path, outcome_set: &OutcomeSet) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, outcome_set)
}

/// Parses a whole file, collecting every offending line before failing.
pub fn read_csv<R: Read>(reader: R, outcome_set: &OutcomeSet) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header_line = rdr.position().line().max(1);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            return Err(Error::Ingestion(vec![LineError {
                line: e.position().map_or(header_line, |p| p.line()),
                message: format!("cannot read header: {e}"),
            }]))
        }
    };
    let column = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|c| column(c).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Ingestion(vec![LineError {
            line: 1,
            message: format!("missing required column(s): {}", missing.join(", ")),
        }]));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = headers.iter().find(|h| !seen.insert(*h)) {
        return Err(Error::Ingestion(vec![LineError {
            line: 1,
            message: format!("duplicate column `{dup}`"),
        }]));
    }
    let outcome_col = column("outcome").unwrap();
    let road_col = column("road_class").unwrap();
    let location_col = column("location").unwrap();
    let type_col = column("accident_type").unwrap();
    let period_col = column("period");
    let weight_col = column("weight");
    let reserved = [Some(outcome_col), Some(road_col), Some(location_col), Some(type_col), period_col, weight_col];
    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !reserved.contains(&Some(*i)))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if let Some((_, name)) = covariate_cols.iter().find(|(_, n)| n.is_empty() || n == crate::spec::CONSTANT) {
        return Err(Error::Ingestion(vec![LineError {
            line: 1,
            message: format!("invalid covariate column name `{name}`"),
        }]));
    }

    let mut errors = Vec::new();
    let mut observations = Vec::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(LineError {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let mut problems = Vec::new();

        let outcome = match outcome_set.index_of(&record[outcome_col]) {
            Some(i) => i,
            None => {
                problems.push(format!("unknown outcome label `{}`", &record[outcome_col]));
                0
            }
        };
        let road_class = record[road_col].parse::<RoadClass>().unwrap_or_else(|e| {
            problems.push(e.to_string());
            RoadClass::Other
        });
        let location = record[location_col].parse::<Location>().unwrap_or_else(|e| {
            problems.push(e.to_string());
            Location::Other
        });
        let accident_type = record[type_col].parse::<AccidentType>().unwrap_or_else(|e| {
            problems.push(e.to_string());
            AccidentType::Other
        });
        let period = period_col
            .map(|c| record[c].to_string())
            .filter(|p| !p.is_empty());
        let weight = match weight_col.map(|c| &record[c]) {
            None | Some("") => 1.0,
            Some(w) => match w.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => v,
                _ => {
                    problems.push(format!("weight `{w}` is not a positive number"));
                    1.0
                }
            },
        };
        let mut covariates = BTreeMap::new();
        for (c, name) in &covariate_cols {
            let cell = &record[*c];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    covariates.insert(name.clone(), v);
                }
                _ if cell.is_empty() => problems.push(format!("missing value for `{name}`")),
                _ => problems.push(format!("non-numeric value `{cell}` for `{name}`")),
            }
        }
        if problems.is_empty() {
            observations.push(Observation {
                covariates,
                outcome,
                segment: SegmentKey::new(road_class, location, accident_type),
                period,
                weight,
            });
        } else {
            errors.push(LineError {
                line,
                message: problems.join("; "),
            });
        }
    }
    if !errors.is_empty() {
        return Err(Error::Ingestion(errors));
    }
    Dataset::new(
        outcome_set.clone(),
        covariate_cols.into_iter().map(|(_, n)| n).collect(),
        observations,
    )
}

/// Writes a dataset in the ingestion schema. `period` and `weight` columns
/// appear only when some observation needs them. Each `comments` entry
/// becomes a leading `# ` line.
pub fn write_csv<W: Write>(dataset: &Dataset, mut out: W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let with_period = dataset.observations().iter().any(|o| o.period.is_some());
    let with_weight = dataset.observations().iter().any(|o| o.weight != 1.0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = REQUIRED.to_vec();
    if with_period {
        header.push("period");
    }
    if with_weight {
        header.push("weight");
    }
    header.extend(dataset.variable_names().iter().map(String::as_str));
    w.write_record(&header).map_err(csv_io)?;
    let labels = dataset.outcome_set();
    for obs in dataset.observations() {
        let mut row: Vec<String> = vec![
            labels.label(obs.outcome).to_string(),
            obs.segment.road_class.to_string(),
            obs.segment.location.to_string(),
            obs.segment.accident_type.to_string(),
        ];
        if with_period {
            row.push(obs.period.clone().unwrap_or_default());
        }
        if with_weight {
            row.push(obs.weight.to_string());
        }
        row.extend(dataset.variable_names().iter().map(|v| obs.covariates[v].to_string()));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

//! Accident records, segment keys and datasets.
//!
//! A [`Dataset`] is immutable once built: constructors validate every
//! invariant up front so the estimation code never has to.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered outcome labels. Index 0 is the base outcome whose utility is
/// normalized to zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct OutcomeSet {
    labels: Vec<String>,
}

impl OutcomeSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an outcome set needs at least 2 outcomes, got {}",
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(Error::InvalidArgument("empty outcome label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate outcome label `{label}`"
                )));
            }
        }
        Ok(Self { labels })
    }

    /// Property damage only (base), injury, fatality.
    pub fn severity() -> Self {
        Self {
            labels: vec!["pdo".into(), "injury".into(), "fatality".into()],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Human-readable column heading for an outcome.
    pub fn display_label(&self, index: usize) -> String {
        display_outcome(&self.labels[index])
    }
}

impl Default for OutcomeSet {
    fn default() -> Self {
        Self::severity()
    }
}

impl TryFrom<Vec<String>> for OutcomeSet {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<OutcomeSet> for Vec<String> {
    fn from(set: OutcomeSet) -> Self {
        set.labels
    }
}

pub(crate) fn display_outcome(label: &str) -> String {
    if label.eq_ignore_ascii_case("pdo") {
        return "Property Damage Only".into();
    }
    label
        .split(['_', ' '])
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<String>>()
        .join(" ")
}

macro_rules! categorical {
    (
        $(#[$meta:meta])*
        $name:ident, $what:literal {
            $($variant:ident => $canon:literal, $display:literal, [$($alias:literal),*];)+
        }
    ) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub enum $name {
            $($variant,)+
            #[default]
            Other,
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant,)+ $name::Other];

            /// Canonical token used in CSV files and structured output.
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $canon,)+
                    $name::Other => "other",
                }
            }

            /// Label used in printed tables.
            pub fn display_name(self) -> &'static str {
                match self {
                    $($name::$variant => $display,)+
                    $name::Other => "other",
                }
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let t = s.trim();
                $(
                    if t.eq_ignore_ascii_case($canon) $(|| t.eq_ignore_ascii_case($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                if t.eq_ignore_ascii_case("other") {
                    return Ok($name::Other);
                }
                Err(Error::InvalidArgument(format!("unknown {} `{}`", $what, s)))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

categorical! {
    /// Roadway class of the accident location.
    RoadClass, "road class" {
        CountyRoad => "county_road", "County road", ["county road", "county"];
        CityStreet => "city_street", "City street", ["city street", "street"];
        StateRoute => "state_route", "State route", ["state route", "state"];
        UsRoute => "us_route", "US route", ["us route", "us"];
        Interstate => "interstate", "Interstate", [];
    }
}

categorical! {
    Location, "location" {
        Rural => "rural", "Rural", [];
        Urban => "urban", "Urban", [];
    }
}

categorical! {
    /// Number and types of vehicles involved (C = car, LT = light truck,
    /// HT = heavy truck).
    AccidentType, "accident type" {
        OneVehicle => "one_vehicle", "one vehicle", ["one-vehicle", "one vehicle", "single"];
        CarCar => "c_c", "(C)+(C)", ["C+C", "(C)+(C)"];
        CarLightTruck => "c_lt", "(C)+(LT)", ["C+LT", "(C)+(LT)"];
        LightTruckLightTruck => "lt_lt", "(LT)+(LT)", ["LT+LT", "(LT)+(LT)"];
        PassengerPassenger => "clt_clt", "(C/LT)+(C/LT)", ["C/LT+C/LT", "(C/LT)+(C/LT)"];
        PassengerHeavyTruck => "clt_ht", "(C/LT)+(HT)", ["C/LT+HT", "(C/LT)+(HT)"];
    }
}

/// Segmentation coordinates of one accident.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentKey {
    pub road_class: RoadClass,
    pub location: Location,
    pub accident_type: AccidentType,
}

impl SegmentKey {
    pub fn new(road_class: RoadClass, location: Location, accident_type: AccidentType) -> Self {
        Self {
            road_class,
            location,
            accident_type,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub covariates: BTreeMap<String, f64>,
    pub outcome: usize,
    pub segment: SegmentKey,
    pub period: Option<String>,
    pub weight: f64,
}

impl Observation {
    pub fn new(covariates: BTreeMap<String, f64>, outcome: usize) -> Self {
        Self {
            covariates,
            outcome,
            segment: SegmentKey::default(),
            period: None,
            weight: 1.0,
        }
    }

    pub fn with_segment(mut self, segment: SegmentKey) -> Self {
        self.segment = segment;
        self
    }

    pub fn with_period(mut self, period: impl Into<String>) -> Self {
        self.period = Some(period.into());
        self
    }

    pub fn covariate(&self, name: &str) -> Result<f64> {
        self.covariates
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("observation has no covariate `{name}`")))
    }
}

/// Column names reserved by the CSV schema; they cannot be covariates.
pub const RESERVED_COLUMNS: &[&str] = &[
    "outcome",
    "road_class",
    "location",
    "accident_type",
    "period",
    "weight",
    crate::spec::CONSTANT,
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset {
    outcome_set: OutcomeSet,
    variable_names: Vec<String>,
    observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(
        outcome_set: OutcomeSet,
        variable_names: Vec<String>,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        let mut declared = BTreeSet::new();
        for name in &variable_names {
            if name.trim().is_empty() {
                return Err(Error::InvalidArgument("empty variable name".into()));
            }
            if RESERVED_COLUMNS.contains(&name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "`{name}` is reserved and cannot be a covariate"
                )));
            }
            if !declared.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate variable name `{name}`"
                )));
            }
        }
        for (n, obs) in observations.iter().enumerate() {
            if obs.outcome >= outcome_set.len() {
                return Err(Error::InvalidArgument(format!(
                    "observation {n}: outcome index {} out of range for {} outcomes",
                    obs.outcome,
                    outcome_set.len()
                )));
            }
            if !(obs.weight > 0.0 && obs.weight.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "observation {n}: weight must be positive and finite, got {}",
                    obs.weight
                )));
            }
            if obs.covariates.len() != declared.len()
                || !obs.covariates.keys().all(|k| declared.contains(k.as_str()))
            {
                return Err(Error::Schema(format!(
                    "observation {n}: covariates {:?} do not match declared variables {:?}",
                    obs.covariates.keys().collect::<Vec<_>>(),
                    variable_names
                )));
            }
            if let Some((name, value)) = obs.covariates.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "observation {n}: covariate `{name}` is not finite ({value})"
                )));
            }
        }
        Ok(Self {
            outcome_set,
            variable_names,
            observations,
        })
    }

    pub fn outcome_set(&self) -> &OutcomeSet {
        &self.outcome_set
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.variable_names.iter().any(|v| v == name)
    }

    /// Unweighted number of observations per outcome.
    pub fn outcome_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.outcome_set.len()];
        for obs in &self.observations {
            counts[obs.outcome] += 1;
        }
        counts
    }

    pub fn weighted_outcome_counts(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.outcome_set.len()];
        for obs in &self.observations {
            counts[obs.outcome] += obs.weight;
        }
        counts
    }

    /// Distinct period labels in first-seen order.
    pub fn periods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in self.observations.iter().filter_map(|o| o.period.as_ref()) {
            if !out.contains(p) {
                out.push(p.clone());
            }
        }
        out
    }

    /// Sub-dataset sharing this dataset's schema.
    pub fn select<'a>(&self, observations: impl IntoIterator<Item = &'a Observation>) -> Dataset {
        Dataset {
            outcome_set: self.outcome_set.clone(),
            variable_names: self.variable_names.clone(),
            observations: observations.into_iter().cloned().collect(),
        }
    }

    /// Concatenates datasets with identical schemas.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut parts = parts.into_iter();
        let first = parts
            .next()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut out = first.clone();
        for part in parts {
            if part.outcome_set != out.outcome_set || part.variable_names != out.variable_names {
                return Err(Error::Schema(
                    "cannot concatenate datasets with different outcomes or variables".into(),
                ));
            }
            out.observations.extend(part.observations.iter().cloned());
        }
        Ok(out)
    }

    /// Copy of the dataset with one covariate multiplied by `factor`.
    pub fn rescale_covariate(&self, name: &str, factor: f64) -> Result<Dataset> {
        if !self.has_variable(name) {
            return Err(Error::Schema(format!("no covariate `{name}`")));
        }
        if !(factor.is_finite() && factor != 0.0) {
            return Err(Error::InvalidArgument(format!("bad scale factor {factor}")));
        }
        let mut out = self.clone();
        for obs in &mut out.observations {
            if let Some(v) = obs.covariates.get_mut(name) {
                *v *= factor;
            }
        }
        Ok(out)
    }
}

/// A segmentation dimension usable by [`partition`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    RoadClass,
    Location,
    AccidentType,
    Period,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::RoadClass => "road_class",
            Dimension::Location => "location",
            Dimension::AccidentType => "accident_type",
            Dimension::Period => "period",
        }
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "road_class" => Ok(Dimension::RoadClass),
            "location" => Ok(Dimension::Location),
            "accident_type" => Ok(Dimension::AccidentType),
            "period" => Ok(Dimension::Period),
            other => Err(Error::InvalidArgument(format!("unknown dimension `{other}`"))),
        }
    }
}

/// Projection of an observation onto the selected dimensions; unselected
/// dimensions are `None`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub road_class: Option<RoadClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accident_type: Option<AccidentType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<String>,
}

impl CellKey {
    fn project(obs: &Observation, dims: &BTreeSet<Dimension>) -> Result<CellKey> {
        let period = if dims.contains(&Dimension::Period) {
            Some(obs.period.clone().ok_or_else(|| {
                Error::InvalidArgument(
                    "partitioning by period requires every observation to carry a period".into(),
                )
            })?)
        } else {
            None
        };
        Ok(CellKey {
            road_class: dims
                .contains(&Dimension::RoadClass)
                .then_some(obs.segment.road_class),
            location: dims
                .contains(&Dimension::Location)
                .then_some(obs.segment.location),
            accident_type: dims
                .contains(&Dimension::AccidentType)
                .then_some(obs.segment.accident_type),
            period,
        })
    }

    /// Row label in printed tables, e.g. `County road / Rural / (C/LT)+(HT)`.
    pub fn display_name(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(p) = &self.period {
            parts.push(p.clone());
        }
        if let Some(r) = self.road_class {
            parts.push(r.display_name().into());
        }
        if let Some(l) = self.location {
            parts.push(l.display_name().into());
        }
        if let Some(a) = self.accident_type {
            parts.push(a.display_name().into());
        }
        if parts.is_empty() {
            "all".into()
        } else {
            parts.join(" / ")
        }
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if let Some(r) = self.road_class {
            parts.push(format!("road_class={r}"));
        }
        if let Some(l) = self.location {
            parts.push(format!("location={l}"));
        }
        if let Some(a) = self.accident_type {
            parts.push(format!("accident_type={a}"));
        }
        if let Some(p) = &self.period {
            parts.push(format!("period={p}"));
        }
        if parts.is_empty() {
            f.write_str("all")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

/// Splits a dataset into disjoint cells keyed by the selected dimensions.
/// Observation order is preserved within each cell.
pub fn partition(dataset: &Dataset, dims: &[Dimension]) -> Result<BTreeMap<CellKey, Dataset>> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument(
            "partition needs at least one dimension".into(),
        ));
    }
    let dims: BTreeSet<Dimension> = dims.iter().copied().collect();
    let mut groups: BTreeMap<CellKey, Vec<&Observation>> = BTreeMap::new();
    for obs in &dataset.observations {
        groups
            .entry(CellKey::project(obs, &dims)?)
            .or_default()
            .push(obs);
    }
    Ok(groups
        .into_iter()
        .map(|(key, members)| (key, dataset.select(members)))
        .collect())
}

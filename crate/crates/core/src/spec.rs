//! Which covariates enter which outcome utility, and the flat parameter
//! layout derived from that.
//!
//! Slots are assigned content-addressed: every slot is keyed by its
//! variable and the outcomes it covers, keys are sorted (constants first),
//! and indices follow that order. Reordering terms in a spec therefore
//! never moves a parameter.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Observation, OutcomeSet};
use crate::error::{Error, Result};

/// Variable name of the implicit all-ones covariate.
pub const CONSTANT: &str = "constant";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpec {
    pub variable: String,
    /// Non-base outcome indices this term enters.
    pub outcomes: Vec<usize>,
    /// One coefficient for all listed outcomes instead of one each.
    #[serde(default)]
    pub shared: bool,
}

impl TermSpec {
    pub fn new(variable: impl Into<String>, outcomes: impl Into<Vec<usize>>, shared: bool) -> Self {
        Self {
            variable: variable.into(),
            outcomes: outcomes.into(),
            shared,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.variable == CONSTANT
    }
}

/// One estimable coefficient.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub variable: String,
    /// Sorted outcome indices sharing this coefficient.
    pub outcomes: Vec<usize>,
}

impl Slot {
    pub fn is_constant(&self) -> bool {
        self.variable == CONSTANT
    }

    pub fn is_shared(&self) -> bool {
        self.outcomes.len() > 1
    }

    fn sort_key(&self) -> (bool, &str, &[usize]) {
        (!self.is_constant(), &self.variable, &self.outcomes)
    }

    /// `variable[outcome,...]`, e.g. `speed_limit[injury,fatality]`.
    pub fn label(&self, outcomes: &OutcomeSet) -> String {
        let names: Vec<&str> = self.outcomes.iter().map(|&i| outcomes.label(i)).collect();
        format!("{}[{}]", self.variable, names.join(","))
    }
}

/// Mapping from (term, outcome) to slot, plus per-outcome utility recipes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamLayout {
    slots: Vec<Slot>,
    labels: Vec<String>,
    /// `term_slots[t]` lists `(outcome, slot)` for term `t`.
    term_slots: Vec<Vec<(usize, usize)>>,
    /// `outcome_terms[i]` lists `(variable, slot)` entering outcome `i`.
    outcome_terms: Vec<Vec<(String, usize)>>,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, index: usize) -> &Slot {
        &self.slots[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn slot_by_label(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn slot_of(&self, term: usize, outcome: usize) -> Option<usize> {
        self.term_slots
            .get(term)?
            .iter()
            .find(|(o, _)| *o == outcome)
            .map(|&(_, s)| s)
    }

    /// Slot of `variable` in `outcome`'s utility, if it enters.
    pub fn slot_for(&self, variable: &str, outcome: usize) -> Option<usize> {
        self.outcome_terms
            .get(outcome)?
            .iter()
            .find(|(v, _)| v == variable)
            .map(|&(_, s)| s)
    }

    pub fn outcome_terms(&self, outcome: usize) -> &[(String, usize)] {
        &self.outcome_terms[outcome]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    outcome_set: OutcomeSet,
    terms: Vec<TermSpec>,
    #[serde(skip)]
    layout: ParamLayout,
}

impl ModelSpec {
    pub fn new(outcome_set: OutcomeSet, terms: Vec<TermSpec>) -> Result<Self> {
        let layout = build_layout_for(&outcome_set, &terms)?;
        Ok(Self {
            outcome_set,
            terms,
            layout,
        })
    }

    /// Alternative-specific constants for every non-base outcome.
    pub fn constants_only(outcome_set: OutcomeSet) -> Self {
        let outcomes: Vec<usize> = (1..outcome_set.len()).collect();
        Self::new(outcome_set, vec![TermSpec::new(CONSTANT, outcomes, false)])
            .expect("constants-only spec is always valid")
    }

    pub fn outcome_set(&self) -> &OutcomeSet {
        &self.outcome_set
    }

    pub fn terms(&self) -> &[TermSpec] {
        &self.terms
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Number of estimable parameters.
    pub fn k(&self) -> usize {
        self.layout.len()
    }

    /// Covariates referenced by the spec (the constant excluded), sorted.
    pub fn variables(&self) -> Vec<String> {
        self.terms
            .iter()
            .filter(|t| !t.is_constant())
            .map(|t| t.variable.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Whether every non-base outcome carries its own constant.
    pub fn has_full_constants(&self) -> bool {
        (1..self.outcome_set.len()).all(|i| {
            self.layout
                .slot_for(CONSTANT, i)
                .is_some_and(|s| !self.layout.slot(s).is_shared())
        })
    }

    /// Non-base outcomes whose utility has at least one term.
    pub fn referenced_outcomes(&self) -> Vec<usize> {
        (1..self.outcome_set.len())
            .filter(|&i| !self.layout.outcome_terms(i).is_empty())
            .collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SpecFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("model spec: {e}")))?;
        file.into_spec()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&SpecFile::from_spec(self)).expect("spec serializes")
    }
}

/// On-disk model spec. Outcomes are referenced by label.
///
/// ```toml
/// outcomes = ["pdo", "injury", "fatality"]
///
/// [[terms]]
/// variable = "constant"
/// outcomes = ["injury", "fatality"]
///
/// [[terms]]
/// variable = "speed_limit"
/// outcomes = ["injury", "fatality"]
/// shared = true
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub outcomes: Vec<String>,
    #[serde(default)]
    pub terms: Vec<TermFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub variable: String,
    pub outcomes: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub shared: bool,
}

impl SpecFile {
    pub fn into_spec(self) -> Result<ModelSpec> {
        let outcome_set = OutcomeSet::new(self.outcomes).map_err(|e| Error::Spec(e.to_string()))?;
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            let outcomes = t
                .outcomes
                .iter()
                .map(|label| {
                    outcome_set.index_of(label).ok_or_else(|| {
                        Error::Spec(format!(
                            "term `{}` names unknown outcome `{label}`",
                            t.variable
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            terms.push(TermSpec::new(t.variable, outcomes, t.shared));
        }
        ModelSpec::new(outcome_set, terms)
    }

    pub fn from_spec(spec: &ModelSpec) -> Self {
        Self {
            outcomes: spec.outcome_set.labels().to_vec(),
            terms: spec
                .terms
                .iter()
                .map(|t| TermFile {
                    variable: t.variable.clone(),
                    outcomes: t
                        .outcomes
                        .iter()
                        .map(|&i| spec.outcome_set.label(i).to_string())
                        .collect(),
                    shared: t.shared,
                })
                .collect(),
        }
    }
}

/// Derives the slot layout of a spec. Returns the layout; `K` is its length.
pub fn build_layout(spec: &ModelSpec) -> ParamLayout {
    spec.layout.clone()
}

fn build_layout_for(outcome_set: &OutcomeSet, terms: &[TermSpec]) -> Result<ParamLayout> {
    let n_out = outcome_set.len();
    let mut seen: BTreeSet<(&str, usize)> = BTreeSet::new();
    let mut keyed: Vec<(Slot, usize)> = Vec::new();
    for (t, term) in terms.iter().enumerate() {
        if term.variable.trim().is_empty() {
            return Err(Error::Spec(format!("term {t} has an empty variable name")));
        }
        if term.outcomes.is_empty() {
            return Err(Error::Spec(format!(
                "term `{}` lists no outcomes",
                term.variable
            )));
        }
        for &i in &term.outcomes {
            if i == 0 {
                return Err(Error::Spec(format!(
                    "term `{}` enters the base outcome `{}`, whose utility is fixed at zero",
                    term.variable,
                    outcome_set.label(0)
                )));
            }
            if i >= n_out {
                return Err(Error::Spec(format!(
                    "term `{}` references outcome index {i} (only {n_out} outcomes)",
                    term.variable
                )));
            }
            if !seen.insert((term.variable.as_str(), i)) {
                return Err(Error::Spec(format!(
                    "variable `{}` enters outcome `{}` more than once",
                    term.variable,
                    outcome_set.label(i)
                )));
            }
        }
        if term.shared {
            if term.outcomes.len() < 2 {
                return Err(Error::Spec(format!(
                    "shared term `{}` must list at least two outcomes",
                    term.variable
                )));
            }
            let mut outcomes = term.outcomes.clone();
            outcomes.sort_unstable();
            keyed.push((
                Slot {
                    variable: term.variable.clone(),
                    outcomes,
                },
                t,
            ));
        } else {
            for &i in &term.outcomes {
                keyed.push((
                    Slot {
                        variable: term.variable.clone(),
                        outcomes: vec![i],
                    },
                    t,
                ));
            }
        }
    }
    if keyed.is_empty() {
        return Err(Error::Spec("a model needs at least one parameter".into()));
    }
    keyed.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()));

    let mut term_slots = vec![Vec::new(); terms.len()];
    let mut outcome_terms = vec![Vec::new(); n_out];
    let mut slots = Vec::with_capacity(keyed.len());
    for (index, (slot, term)) in keyed.into_iter().enumerate() {
        for &i in &slot.outcomes {
            term_slots[term].push((i, index));
            outcome_terms[i].push((slot.variable.clone(), index));
        }
        slots.push(slot);
    }
    let labels = slots.iter().map(|s| s.label(outcome_set)).collect();
    Ok(ParamLayout {
        slots,
        labels,
        term_slots,
        outcome_terms,
    })
}

/// Flat coefficient vector together with the layout that names its slots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    #[serde(skip)]
    layout: ParamLayout,
}

impl ParameterVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            values: vec![0.0; spec.k()],
            layout: spec.layout.clone(),
        }
    }

    pub fn from_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.k() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                spec.k(),
                values.len()
            )));
        }
        Ok(Self {
            values,
            layout: spec.layout.clone(),
        })
    }

    /// Builds a vector from `(slot label, value)` pairs; every slot must be given.
    pub fn from_labeled<'a>(
        spec: &ModelSpec,
        pairs: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let mut values = vec![None; spec.k()];
        for (label, value) in pairs {
            let slot = spec.layout.slot_by_label(label).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown parameter `{label}` (known: {})",
                    spec.layout.labels().join(", ")
                ))
            })?;
            values[slot] = Some(value);
        }
        let missing: Vec<&str> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(s, _)| spec.layout.labels()[s].as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "missing parameters: {}",
                missing.join(", ")
            )));
        }
        Self::from_values(spec, values.into_iter().map(Option::unwrap).collect())
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.layout.slot_by_label(label).map(|s| self.values[s])
    }

    pub fn labeled(&self) -> impl Iterator<Item = (&str, f64)> {
        self.layout
            .labels()
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }
}

impl fmt::Display for ParameterVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.labeled().map(|(l, v)| format!("{l}={v}")).collect();
        f.write_str(&parts.join(", "))
    }
}

fn check_theta(spec: &ModelSpec, theta: &ParameterVector) -> Result<()> {
    if theta.layout != spec.layout {
        return Err(Error::InvalidArgument(
            "parameter vector was built for a different model spec".into(),
        ));
    }
    Ok(())
}

/// Deterministic utility of `outcome` for one observation. The base outcome
/// is exactly zero.
pub fn utility(
    spec: &ModelSpec,
    theta: &ParameterVector,
    obs: &Observation,
    outcome: usize,
) -> Result<f64> {
    check_theta(spec, theta)?;
    if outcome >= spec.outcome_set.len() {
        return Err(Error::InvalidArgument(format!(
            "outcome index {outcome} out of range"
        )));
    }
    let mut u = 0.0;
    for (variable, slot) in spec.layout.outcome_terms(outcome) {
        let x = if variable == CONSTANT {
            1.0
        } else {
            obs.covariate(variable)?
        };
        u += theta.values[*slot] * x;
    }
    Ok(u)
}

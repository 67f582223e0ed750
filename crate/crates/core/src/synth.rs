//! Synthetic datasets drawn from a known multinomial-logit process.
//!
//! Draws come from ChaCha20 seeded with a 64-bit seed; uniforms are built
//! directly from the top 53 bits of each output word so a dataset depends
//! only on the seed and the config. Per observation the stream is consumed
//! in a fixed order: segment (when a mixture is given), covariates in
//! declaration order, then the outcome by inverse CDF over outcome indices.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation, SegmentKey};
use crate::error::{Error, Result};
use crate::likelihood::softmax;
use crate::spec::{ModelSpec, ParameterVector, SpecFile};

/// Name of the generator written into emitted dataset headers.
pub const GENERATOR_ALGORITHM: &str = "chacha20";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateDistribution {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    Categorical { values: Vec<f64>, probabilities: Vec<f64> },
    Indicator { p: f64 },
}

impl CovariateDistribution {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("covariate `{name}`: {msg}")));
        match self {
            Self::Constant { value } if !value.is_finite() => bad("constant must be finite".into()),
            Self::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => {
                bad(format!("uniform needs finite low < high, got ({low}, {high})"))
            }
            Self::Categorical { values, probabilities } => {
                if values.is_empty() || values.len() != probabilities.len() {
                    return bad("categorical needs equally many values and probabilities".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("categorical values must be finite".into());
                }
                check_probabilities(probabilities).or_else(bad)
            }
            Self::Indicator { p } if !(0.0..=1.0).contains(p) => {
                bad(format!("indicator probability {p} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, u: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Uniform { low, high } => low + (high - low) * u,
            Self::Categorical { values, probabilities } => values[inverse_cdf(probabilities, u)],
            Self::Indicator { p } => {
                if u < *p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn check_probabilities(p: &[f64]) -> std::result::Result<(), String> {
    if p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err("probabilities must be positive".into());
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("probabilities sum to {sum}, not 1"));
    }
    Ok(())
}

/// First index whose cumulative probability exceeds `u`; the last index
/// absorbs rounding.
fn inverse_cdf(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariateSpec {
    pub name: String,
    pub distribution: CovariateDistribution,
}

/// One mixture component: observations in `segment` with an optional
/// parameter override.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentComponent {
    pub segment: SegmentKey,
    pub weight: f64,
    pub theta: Option<ParameterVector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub spec: ModelSpec,
    pub true_theta: ParameterVector,
    pub n: usize,
    pub covariates: Vec<CovariateSpec>,
    pub segments: Vec<SegmentComponent>,
    pub period: Option<String>,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(spec: ModelSpec, true_theta: ParameterVector, n: usize, seed: u64) -> Self {
        Self {
            spec,
            true_theta,
            n,
            covariates: Vec::new(),
            segments: Vec::new(),
            period: None,
            seed,
        }
    }

    pub fn covariate(mut self, name: impl Into<String>, distribution: CovariateDistribution) -> Self {
        self.covariates.push(CovariateSpec {
            name: name.into(),
            distribution,
        });
        self
    }

    pub fn segment(mut self, segment: SegmentKey, weight: f64, theta: Option<ParameterVector>) -> Self {
        self.segments.push(SegmentComponent { segment, weight, theta });
        self
    }

    pub fn period(mut self, period: impl Into<String>) -> Self {
        self.period = Some(period.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.true_theta.len() != self.spec.k() || self.true_theta.layout() != self.spec.layout() {
            return Err(Error::Config("true_theta does not match the spec layout".into()));
        }
        for c in &self.covariates {
            c.distribution.validate(&c.name)?;
        }
        for v in self.spec.variables() {
            if !self.covariates.iter().any(|c| c.name == v) {
                return Err(Error::Config(format!("no distribution given for spec variable `{v}`")));
            }
        }
        if !self.segments.is_empty() {
            let weights: Vec<f64> = self.segments.iter().map(|s| s.weight).collect();
            check_probabilities(&weights).map_err(|m| Error::Config(format!("segment weights: {m}")))?;
            for s in &self.segments {
                if let Some(t) = &s.theta {
                    if t.layout() != self.spec.layout() {
                        return Err(Error::Config("segment theta does not match the spec layout".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads the TOML generator description (see the README for the layout).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GeneratorFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("generator config: {e}")))?;
        file.into_config()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Comment lines describing how a dataset was generated.
    pub fn header_lines(&self) -> Vec<String> {
        vec![
            format!("generator={GENERATOR_ALGORITHM} seed={} n={}", self.seed, self.n),
            format!("true_theta: {}", self.true_theta),
        ]
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorFile {
    n: usize,
    seed: u64,
    #[serde(default)]
    period: Option<String>,
    spec: SpecFile,
    true_theta: BTreeMap<String, f64>,
    #[serde(default)]
    covariates: Vec<CovariateFile>,
    #[serde(default)]
    segments: Vec<SegmentFile>,
}

#[derive(Debug, Deserialize)]
struct CovariateFile {
    name: String,
    #[serde(flatten)]
    distribution: CovariateDistribution,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentFile {
    #[serde(default)]
    road_class: crate::data::RoadClass,
    #[serde(default)]
    location: crate::data::Location,
    #[serde(default)]
    accident_type: crate::data::AccidentType,
    weight: f64,
    #[serde(default)]
    theta: Option<BTreeMap<String, f64>>,
}

impl GeneratorFile {
    fn into_config(self) -> Result<GeneratorConfig> {
        let spec = self.spec.into_spec()?;
        let labeled = |m: &BTreeMap<String, f64>| {
            ParameterVector::from_labeled(&spec, m.iter().map(|(k, v)| (k.as_str(), *v)))
                .map_err(|e| Error::Config(e.to_string()))
        };
        let true_theta = labeled(&self.true_theta)?;
        let segments = self
            .segments
            .iter()
            .map(|s| {
                Ok(SegmentComponent {
                    segment: SegmentKey::new(s.road_class, s.location, s.accident_type),
                    weight: s.weight,
                    theta: s.theta.as_ref().map(labeled).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let config = GeneratorConfig {
            spec,
            true_theta,
            n: self.n,
            covariates: self
                .covariates
                .into_iter()
                .map(|c| CovariateSpec {
                    name: c.name,
                    distribution: c.distribution,
                })
                .collect(),
            segments,
            period: self.period,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

struct Uniforms(ChaCha20Rng);

impl Uniforms {
    fn next(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

pub fn simulate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let spec = &config.spec;
    let mut rng = Uniforms(ChaCha20Rng::seed_from_u64(config.seed));
    let weights: Vec<f64> = config.segments.iter().map(|s| s.weight).collect();
    let n_out = spec.outcome_set().len();
    let mut observations = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let (segment, theta) = if config.segments.is_empty() {
            (SegmentKey::default(), &config.true_theta)
        } else {
            let c = &config.segments[inverse_cdf(&weights, rng.next())];
            (c.segment, c.theta.as_ref().unwrap_or(&config.true_theta))
        };
        let covariates: BTreeMap<String, f64> = config
            .covariates
            .iter()
            .map(|c| (c.name.clone(), c.distribution.draw(rng.next())))
            .collect();
        let mut obs = Observation::new(covariates, 0).with_segment(segment);
        obs.period = config.period.clone();
        let u = (0..n_out)
            .map(|i| crate::spec::utility(spec, theta, &obs, i))
            .collect::<Result<Vec<_>>>()?;
        obs.outcome = inverse_cdf(&softmax(&u)?, rng.next());
        observations.push(obs);
    }
    Dataset::new(
        spec.outcome_set().clone(),
        config.covariates.iter().map(|c| c.name.clone()).collect(),
        observations,
    )
}

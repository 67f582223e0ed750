//! Multinomial-logit models of accident injury severity.
//!
//! The crate covers the full analysis loop: ingest accident records,
//! declare which covariates enter which outcome utility (optionally tying
//! a coefficient across outcomes), estimate by maximum likelihood, compute
//! elasticities, and decide with likelihood-ratio tests whether data should
//! be split by roadway/accident segment or pooled across periods.
//!
//! ```
//! use severity_core::{estimate, simulate, EstimateOptions, GeneratorConfig, ModelSpec,
//!     OutcomeSet, ParameterVector};
//!
//! let spec = ModelSpec::constants_only(OutcomeSet::severity());
//! let theta = ParameterVector::from_values(&spec, vec![-1.0, -3.0]).unwrap();
//! let data = simulate(&GeneratorConfig::new(spec.clone(), theta, 5_000, 1)).unwrap();
//! let fit = estimate(&spec, &data, &EstimateOptions::default()).unwrap();
//! assert!((fit.theta_hat.values[0] + 1.0).abs() < 0.1);
//! ```

pub mod data;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod spec;
pub mod summary;
pub mod synth;

pub use data::{
    partition, AccidentType, CellKey, Dataset, Dimension, Location, Observation, OutcomeSet,
    RoadClass, SegmentKey,
};
pub use error::{Error, LineError, Result};
pub use estimator::{estimate, fit_statistics, EstimateOptions, EstimationResult, FitStatistics};
pub use inference::{
    chi_square_sf, elasticity_point, elasticity_report, evaluate_partition, lr_split_test,
    lr_temporal_test, Aggregation, ElasticityOptions, ElasticityReport, ElasticityTable,
    LrTestResult, PartitionOptions, PartitionReport,
};
pub use io::{ingest_csv, read_csv, write_csv};
pub use likelihood::{
    fitted_probabilities, gradient_hessian, log_likelihood, probabilities, softmax,
    LikelihoodEvaluation,
};
pub use spec::{build_layout, utility, ModelSpec, ParamLayout, ParameterVector, TermSpec, CONSTANT};
pub use summary::{summarize, SeverityTable, SpeedBins};
pub use synth::{simulate, CovariateDistribution, GeneratorConfig};

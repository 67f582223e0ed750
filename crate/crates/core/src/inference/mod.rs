//! Elasticities, the chi-square survival function, likelihood-ratio
//! segmentation and temporal-stability tests, and partition evaluation.

mod chisq;
mod elasticity;
mod lr;
mod partition;
mod table;

pub use chisq::chi_square_sf;
pub use elasticity::{
    elasticity_point, elasticity_report, finite_difference_elasticity, is_indicator, Aggregation,
    ElasticityEntry, ElasticityKind, ElasticityOptions, ElasticityReport,
};
pub use lr::{
    lr_split_test, lr_temporal_test, Decision, LrTestKind, LrTestResult, SPLIT_CONFIDENCE,
    TEMPORAL_CONFIDENCE,
};
pub use partition::{evaluate_partition, CellReport, CellStatus, PartitionOptions, PartitionReport};
pub use table::{format_elasticity, format_estimate, ElasticityTable, ElasticityTableRow};

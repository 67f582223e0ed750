//! `severity`: command-line front end for injury-severity model estimation.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use severity_core::{Aggregation, Error};

#[derive(Parser, Debug)]
#[command(name = "severity", version, about = "Multinomial-logit injury-severity models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Flags {
    /// Gradient max-norm at which the optimizer stops.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 200)]
    pub max_iter: usize,
    /// Confidence level for test decisions, e.g. 0.95.
    #[arg(long, global = true, default_value_t = 0.95)]
    pub confidence: f64,
    /// Minimum observations per partition cell (default 30 x parameters).
    #[arg(long, global = true)]
    pub min_cell_size: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = AggregationArg::Mean)]
    pub aggregation: AggregationArg,
    /// Elasticities are reported only for slots with |t| above this.
    #[arg(long, global = true, default_value_t = 1.96)]
    pub sig_threshold: f64,
    /// Overrides the seed of a generator config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write the report here (atomically) instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationArg {
    Mean,
    ProbWeighted,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::ProbWeighted => Aggregation::ProbWeighted,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// Human-readable tab-separated tables.
    Table,
    /// One JSON object per line, each embedding the resolved configuration.
    Records,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate one model and print its parameter table.
    Estimate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Elasticities of significant slots, optionally per segment.
    Elasticities {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Restrict to these variables (repeatable).
        #[arg(long = "variable")]
        variables: Vec<String>,
        /// Segment dimensions, e.g. road_class,location.
        #[arg(long, value_delimiter = ',')]
        by: Vec<String>,
    },
    /// Pooled model versus one model per data file.
    SplitTest {
        #[arg(long)]
        spec: PathBuf,
        /// One file per subset; at least two.
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
    },
    /// Model on both periods versus one model per period.
    TemporalTest {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Spec for the first period (defaults to --spec).
        #[arg(long)]
        spec_a: Option<PathBuf>,
        /// Spec for the second period (defaults to --spec).
        #[arg(long)]
        spec_b: Option<PathBuf>,
        /// The two period labels to compare; defaults to the two in the data.
        #[arg(long, value_delimiter = ',')]
        periods: Vec<String>,
    },
    /// Per-cell models over a segmentation plus the split test.
    Partition {
        /// Spec applied as a template to every cell.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        by: Vec<String>,
    },
    /// Draw a synthetic dataset from a generator config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the number of observations in the config.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Outcome distribution by speed-limit band.
    Summarize {
        #[arg(long)]
        data: PathBuf,
        /// Upper band edges, strictly increasing.
        #[arg(long, value_delimiter = ',', default_value = "30,50,60")]
        edges: Vec<f64>,
        #[arg(long)]
        by_period: bool,
        #[arg(long, default_value = "speed_limit")]
        variable: String,
        /// Outcome labels, base first.
        #[arg(long, value_delimiter = ',', default_value = "pdo,injury,fatality")]
        outcomes: Vec<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Spec(_) | Error::InvalidArgument(_) => 2,
        Error::Ingestion(_) | Error::Schema(_) | Error::Io(_) => 3,
        Error::NonConvergence { .. } => 4,
        Error::NonIdentification { .. } => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate { spec, data } => commands::estimate(&cli.flags, &spec, &data),
        Command::Elasticities {
            spec,
            data,
            variables,
            by,
        } => commands::elasticities(&cli.flags, &spec, &data, &variables, &by),
        Command::SplitTest { spec, data } => commands::split_test(&cli.flags, &spec, &data),
        Command::TemporalTest {
            spec,
            data,
            spec_a,
            spec_b,
            periods,
        } => commands::temporal_test(&cli.flags, &spec, &data, spec_a.as_deref(), spec_b.as_deref(), &periods),
        Command::Partition { spec, data, by } => commands::partition(&cli.flags, &spec, &data, &by),
        Command::Simulate { config, n } => commands::simulate(&cli.flags, &config, n),
        Command::Summarize {
            data,
            edges,
            by_period,
            variable,
            outcomes,
        } => commands::summarize(&cli.flags, &data, edges, by_period, &variable, &outcomes),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Ingestion(lines) => {
                    eprintln!("error: ingestion failed with {} problem(s)", lines.len());
                    for line in lines {
                        eprintln!("  {line}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::Path;

use serde_json::json;
use severity_core::inference::{format_estimate, CellStatus};
use severity_core::{
    elasticity_report, estimate as fit, evaluate_partition, fit_statistics, ingest_csv,
    lr_split_test, lr_temporal_test, partition as split_cells, simulate as draw, summarize as tabulate,
    write_csv, CellKey, Dataset, Dimension, ElasticityOptions, ElasticityReport, ElasticityTable,
    Error, EstimationResult, GeneratorConfig, LrTestResult, ModelSpec, OutcomeSet, PartitionOptions,
    Result, SpeedBins,
};

use crate::output::{estimate_options, write_output, Report, RunConfig};
use crate::Flags;

/// Fails before any work when an input is missing or the flags are unusable.
fn preflight(flags: &Flags, inputs: &[&Path]) -> Result<()> {
    for path in inputs {
        if !path.is_file() {
            return Err(Error::Config(format!("input file `{}` does not exist", path.display())));
        }
    }
    if let Some(out) = &flags.output {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            if !dir.is_dir() {
                return Err(Error::Config(format!("output directory `{}` does not exist", dir.display())));
            }
        }
    }
    if !(flags.confidence > 0.0 && flags.confidence < 1.0) {
        return Err(Error::Config(format!("--confidence must lie in (0, 1), got {}", flags.confidence)));
    }
    if !(flags.tol > 0.0) || flags.max_iter == 0 {
        return Err(Error::Config("--tol must be positive and --max-iter at least 1".into()));
    }
    if !(flags.sig_threshold >= 0.0) {
        return Err(Error::Config("--sig-threshold must be non-negative".into()));
    }
    Ok(())
}

fn load(spec: &Path, data: &Path) -> Result<(ModelSpec, Dataset)> {
    let spec = ModelSpec::from_path(spec)?;
    let data = ingest_csv(data, spec.outcome_set())?;
    Ok((spec, data))
}

fn parse_dims(by: &[String]) -> Result<Vec<Dimension>> {
    by.iter().map(|d| d.parse()).collect()
}

fn elasticity_options(flags: &Flags, variables: &[String]) -> ElasticityOptions {
    ElasticityOptions {
        aggregation: flags.aggregation.into(),
        significance_threshold: flags.sig_threshold,
        variables: (!variables.is_empty()).then(|| variables.to_vec()),
        keep_per_observation: false,
    }
}

fn parameter_table(r: &EstimationResult) -> String {
    let mut out = String::from("Parameter\tEstimate\tStd. error\tt-ratio\n");
    for (s, label) in r.labels.iter().enumerate() {
        out.push_str(&format!(
            "{label}\t{}\t{}\t{:.2}\n",
            format_estimate(r.theta_hat.values[s]),
            format_estimate(r.std_errors[s]),
            r.t_ratios[s]
        ));
    }
    out
}

fn fit_summary(r: &EstimationResult) -> String {
    let mut out = format!(
        "Observations\t{}\nLog-likelihood at zero\t{:.3}\nLog-likelihood, constants only\t{:.3}\nLog-likelihood at convergence\t{:.3}\n",
        r.n_obs, r.ll_zero, r.ll_null, r.ll_converged
    );
    if let Ok(s) = fit_statistics(r) {
        out.push_str(&format!(
            "rho-squared\t{:.4}\nadjusted rho-squared\t{:.4}\n",
            s.rho_squared, s.adjusted_rho_squared
        ));
    }
    out.push_str(&format!("Iterations\t{}\n", r.iterations));
    for d in &r.diagnostics {
        out.push_str(&format!("note: {d}\n"));
    }
    out
}

/// `0.95` as `95`, `0.975` as `97.5`.
fn percent(level: f64) -> String {
    let s = format!("{:.4}", 100.0 * level);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn test_table(t: &LrTestResult, confidence: f64) -> String {
    let mut out = format!(
        "LR statistic\t{:.4}\nDegrees of freedom\t{}\np-value\t{:.6}\n",
        t.statistic, t.df, t.p_value
    );
    for d in &t.decisions {
        out.push_str(&format!(
            "Reject at {}%\t{}\n",
            percent(d.confidence),
            if d.reject { "yes" } else { "no" }
        ));
    }
    out.push_str(&format!(
        "Decision at {}%\t{}\n",
        percent(confidence),
        if t.rejects_at(confidence) { "reject" } else { "retain" }
    ));
    out
}

pub fn estimate(flags: &Flags, spec_path: &Path, data_path: &Path) -> Result<()> {
    preflight(flags, &[spec_path, data_path])?;
    let (spec, data) = load(spec_path, data_path)?;
    let result = fit(&spec, &data, &estimate_options(flags))?;
    let mut report = Report::new(RunConfig::new("estimate", flags, &[spec_path, data_path]).spec(&spec), flags.format);
    if report.is_table() {
        report.text(&parameter_table(&result));
        report.text(&fit_summary(&result));
    } else {
        let stats = fit_statistics(&result).ok();
        report.record("estimate", json!({ "result": result, "fit": stats }));
    }
    report.finish(flags.output.as_deref())
}

pub fn elasticities(
    flags: &Flags,
    spec_path: &Path,
    data_path: &Path,
    variables: &[String],
    by: &[String],
) -> Result<()> {
    preflight(flags, &[spec_path, data_path])?;
    let (spec, data) = load(spec_path, data_path)?;
    let dims = parse_dims(by)?;
    let options = elasticity_options(flags, variables);

    // (row name, cell key, result, report); the whole dataset forms one row without --by.
    let mut rows: Vec<(String, CellKey, EstimationResult, ElasticityReport)> = Vec::new();
    let mut notes = Vec::new();
    if dims.is_empty() {
        let r = fit(&spec, &data, &estimate_options(flags))?;
        let e = elasticity_report(&spec, &r, &data, &options)?;
        rows.push(("All".into(), CellKey::default(), r, e));
    } else {
        let cells = split_cells(&data, &dims)?;
        let partition_options = PartitionOptions {
            estimate: estimate_options(flags),
            min_cell_size: flags.min_cell_size,
            ..PartitionOptions::default()
        };
        let evaluated = evaluate_partition(&spec, &data, &dims, &partition_options)?;
        for cell in evaluated.cells {
            match cell.status {
                CellStatus::Estimated { result } => {
                    let e = elasticity_report(&spec, &result, &cells[&cell.key], &options)?;
                    rows.push((cell.key.display_name(), cell.key, *result, e));
                }
                CellStatus::Skipped { reason } => notes.push(format!("{}: skipped, {reason}", cell.key.display_name())),
                CellStatus::Failed { error } => notes.push(format!("{}: failed, {error}", cell.key.display_name())),
            }
        }
    }

    let config = RunConfig::new("elasticities", flags, &[spec_path, data_path])
        .spec(&spec)
        .option("by", &dims)
        .option("variables", variables);
    let mut report = Report::new(config, flags.format);
    if report.is_table() {
        let mut shown = if variables.is_empty() { spec.variables() } else { variables.to_vec() };
        shown.retain(|v| v != severity_core::CONSTANT);
        for (n, variable) in shown.iter().enumerate() {
            let mut table = ElasticityTable::new(variable.clone(), spec.outcome_set());
            for (name, _, result, e) in &rows {
                table.push_row(name.clone(), &spec, result, e);
            }
            if n > 0 {
                report.text("");
            }
            report.text(&table.to_text());
        }
        for note in &notes {
            report.text(&format!("note: {note}"));
        }
    } else {
        for (name, key, result, e) in &rows {
            report.record(
                "elasticities",
                json!({ "cell": key, "cell_name": name, "result": result, "elasticities": e }),
            );
        }
        for note in &notes {
            report.record("note", json!({ "message": note }));
        }
    }
    report.finish(flags.output.as_deref())
}

pub fn split_test(flags: &Flags, spec_path: &Path, data_paths: &[std::path::PathBuf]) -> Result<()> {
    let mut inputs: Vec<&Path> = vec![spec_path];
    inputs.extend(data_paths.iter().map(|p| p.as_path()));
    preflight(flags, &inputs)?;
    if data_paths.len() < 2 {
        return Err(Error::Config("split-test needs at least two --data files".into()));
    }
    let spec = ModelSpec::from_path(spec_path)?;
    let subsets = data_paths
        .iter()
        .map(|p| ingest_csv(p, spec.outcome_set()))
        .collect::<Result<Vec<_>>>()?;
    let pooled_data = Dataset::concat(&subsets)?;
    let options = estimate_options(flags);
    let pooled = fit(&spec, &pooled_data, &options)?;
    let fits = subsets
        .iter()
        .map(|d| fit(&spec, d, &options))
        .collect::<Result<Vec<_>>>()?;
    let components: Vec<(f64, usize)> = fits.iter().map(|r| (r.ll_converged, r.k())).collect();
    let test = lr_split_test(pooled.ll_converged, pooled.k(), &components)?;

    let mut report = Report::new(RunConfig::new("split-test", flags, &inputs).spec(&spec), flags.format);
    if report.is_table() {
        report.text("Subset\tObservations\tLog-likelihood\tParameters");
        report.text(&format!("pooled\t{}\t{:.3}\t{}", pooled.n_obs, pooled.ll_converged, pooled.k()));
        for (path, r) in data_paths.iter().zip(&fits) {
            report.text(&format!("{}\t{}\t{:.3}\t{}", path.display(), r.n_obs, r.ll_converged, r.k()));
        }
        report.text("");
        report.text(&test_table(&test, flags.confidence));
    } else {
        report.record(
            "split_test",
            json!({
                "test": test,
                "decision": { "confidence": flags.confidence, "split_recommended": test.rejects_at(flags.confidence) },
                "pooled": pooled,
                "subsets": fits,
            }),
        );
    }
    report.finish(flags.output.as_deref())
}

pub fn temporal_test(
    flags: &Flags,
    spec_path: &Path,
    data_path: &Path,
    spec_a: Option<&Path>,
    spec_b: Option<&Path>,
    periods: &[String],
) -> Result<()> {
    let mut inputs: Vec<&Path> = vec![spec_path, data_path];
    inputs.extend(spec_a);
    inputs.extend(spec_b);
    preflight(flags, &inputs)?;
    let (spec, data) = load(spec_path, data_path)?;
    let spec_a = spec_a.map(ModelSpec::from_path).transpose()?.unwrap_or_else(|| spec.clone());
    let spec_b = spec_b.map(ModelSpec::from_path).transpose()?.unwrap_or_else(|| spec.clone());
    if spec_a.outcome_set() != spec.outcome_set() || spec_b.outcome_set() != spec.outcome_set() {
        return Err(Error::Spec("period specs must use the same outcome labels as --spec".into()));
    }
    let labels: Vec<String> = if periods.is_empty() { data.periods() } else { periods.to_vec() };
    if labels.len() != 2 || labels[0] == labels[1] {
        return Err(Error::Config(format!(
            "temporal-test compares exactly two periods, found {:?}",
            labels
        )));
    }
    let pick = |label: &str| -> Result<Dataset> {
        let rows: Vec<_> = data
            .observations()
            .iter()
            .filter(|o| o.period.as_deref() == Some(label))
            .collect();
        if rows.is_empty() {
            return Err(Error::Config(format!("no observations for period `{label}`")));
        }
        Ok(data.select(rows))
    };
    let (a, b) = (pick(&labels[0])?, pick(&labels[1])?);
    let both = Dataset::concat([&a, &b])?;
    let options = estimate_options(flags);
    let fit_all = fit(&spec, &both, &options)?;
    let fit_a = fit(&spec_a, &a, &options)?;
    let fit_b = fit(&spec_b, &b, &options)?;
    let test = lr_temporal_test(
        fit_all.ll_converged,
        fit_a.ll_converged,
        fit_b.ll_converged,
        fit_all.k(),
        fit_a.k(),
        fit_b.k(),
    )?;

    let config = RunConfig::new("temporal-test", flags, &inputs)
        .spec(&spec)
        .spec(&spec_a)
        .spec(&spec_b)
        .option("periods", &labels);
    let mut report = Report::new(config, flags.format);
    if report.is_table() {
        report.text("Model\tObservations\tLog-likelihood\tParameters");
        report.text(&format!("all\t{}\t{:.3}\t{}", fit_all.n_obs, fit_all.ll_converged, fit_all.k()));
        for (label, r) in labels.iter().zip([&fit_a, &fit_b]) {
            report.text(&format!("{label}\t{}\t{:.3}\t{}", r.n_obs, r.ll_converged, r.k()));
        }
        report.text("");
        report.text(&test_table(&test, flags.confidence));
    } else {
        report.record(
            "temporal_test",
            json!({
                "test": test,
                "decision": { "confidence": flags.confidence, "parameters_shifted": test.rejects_at(flags.confidence) },
                "periods": labels,
                "all": fit_all,
                "period_a": fit_a,
                "period_b": fit_b,
            }),
        );
    }
    report.finish(flags.output.as_deref())
}

pub fn partition(flags: &Flags, spec_path: &Path, data_path: &Path, by: &[String]) -> Result<()> {
    preflight(flags, &[spec_path, data_path])?;
    let (spec, data) = load(spec_path, data_path)?;
    let dims = parse_dims(by)?;
    let options = PartitionOptions {
        estimate: estimate_options(flags),
        min_cell_size: flags.min_cell_size,
        ..PartitionOptions::default()
    };
    let result = evaluate_partition(&spec, &data, &dims, &options)?;

    let config = RunConfig::new("partition", flags, &[spec_path, data_path])
        .spec(&spec)
        .option("by", &dims);
    let mut report = Report::new(config, flags.format);
    if report.is_table() {
        report.text("Cell\tObservations\tStatus\tLog-likelihood\tParameters");
        report.text(&format!(
            "pooled\t{}\testimated\t{:.3}\t{}",
            result.pooled.n_obs,
            result.pooled.ll_converged,
            result.pooled.k()
        ));
        for cell in &result.cells {
            let name = cell.key.display_name();
            match &cell.status {
                CellStatus::Estimated { result } => report.text(&format!(
                    "{name}\t{}\testimated\t{:.3}\t{}",
                    cell.n_obs,
                    result.ll_converged,
                    result.k()
                )),
                CellStatus::Skipped { reason } => report.text(&format!("{name}\t{}\tskipped: {reason}\t\t", cell.n_obs)),
                CellStatus::Failed { error } => report.text(&format!("{name}\t{}\tfailed: {error}\t\t", cell.n_obs)),
            }
        }
        report.text("");
        match (&result.split_test, &result.test_unavailable) {
            (Some(test), _) => {
                report.text(&test_table(test, flags.confidence));
                report.text(&format!(
                    "Separate models warranted\t{}",
                    if test.rejects_at(flags.confidence) { "yes" } else { "no" }
                ));
            }
            (None, reason) => report.text(&format!(
                "Split test unavailable: {}",
                reason.as_deref().unwrap_or("unknown reason")
            )),
        }
    } else {
        report.record("pooled", json!({ "result": result.pooled }));
        for cell in &result.cells {
            report.record("cell", json!({ "cell_name": cell.key.display_name(), "cell": cell }));
        }
        report.record(
            "split_test",
            json!({
                "test": result.split_test,
                "unavailable": result.test_unavailable,
                "min_cell_size": result.min_cell_size,
                "decision": {
                    "confidence": flags.confidence,
                    "split_recommended": result.split_recommended(flags.confidence),
                },
            }),
        );
    }
    report.finish(flags.output.as_deref())
}

pub fn simulate(flags: &Flags, config_path: &Path, n: Option<usize>) -> Result<()> {
    preflight(flags, &[config_path])?;
    let Some(output) = flags.output.as_deref() else {
        return Err(Error::Config("simulate needs --output for the generated CSV".into()));
    };
    let mut config = GeneratorConfig::from_path(config_path)?;
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    if let Some(n) = n {
        config.n = n;
    }
    let data = draw(&config)?;
    let mut bytes = Vec::new();
    write_csv(&data, &mut bytes, &config.header_lines())?;
    write_output(Some(output), &bytes)?;
    if flags.format == crate::Format::Records {
        let run = RunConfig::new("simulate", flags, &[config_path])
            .spec(&config.spec)
            .option("seed", config.seed)
            .option("n", config.n);
        let mut report = Report::new(run, flags.format);
        report.record(
            "simulate",
            json!({ "output": output.display().to_string(), "observations": data.len(), "outcome_counts": data.outcome_counts() }),
        );
        report.finish(None)?;
    } else {
        eprintln!("wrote {} observations to {}", data.len(), output.display());
    }
    Ok(())
}

pub fn summarize(
    flags: &Flags,
    data_path: &Path,
    edges: Vec<f64>,
    by_period: bool,
    variable: &str,
    outcomes: &[String],
) -> Result<()> {
    preflight(flags, &[data_path])?;
    let outcome_set = OutcomeSet::new(outcomes.iter().cloned()).map_err(|e| Error::Config(e.to_string()))?;
    let bins = SpeedBins::new(edges)
        .map_err(|e| Error::Config(e.to_string()))?
        .by_period(by_period)
        .variable(variable);
    let data = ingest_csv(data_path, &outcome_set)?;
    let table = tabulate(&data, &bins)?;
    let config = RunConfig::new("summarize", flags, &[data_path])
        .option("bins", &bins)
        .option("outcomes", outcomes);
    let mut report = Report::new(config, flags.format);
    if report.is_table() {
        report.text(&table.to_text());
    } else {
        report.record("summary", json!({ "table": table }));
    }
    report.finish(flags.output.as_deref())
}

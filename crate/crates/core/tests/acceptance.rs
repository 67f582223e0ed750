//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails. Set `UPDATE_GOLDEN=1` to rewrite the golden files.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;
use severity_core::{
    chi_square_sf, elasticity_report, estimate, evaluate_partition, fitted_probabilities,
    gradient_hessian, log_likelihood, lr_split_test, lr_temporal_test, partition, simulate,
    summarize, write_csv, Dataset, Dimension, ElasticityOptions, ElasticityTable, EstimateOptions,
    EstimationResult, GeneratorConfig, ModelSpec, Observation, OutcomeSet, ParameterVector,
    PartitionOptions, SpeedBins, TermSpec, CONSTANT,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fit(spec: &ModelSpec, data: &Dataset) -> EstimationResult {
    estimate(spec, data, &EstimateOptions::default()).expect("estimation failed")
}

fn split_by_segment(data: &Dataset) -> Vec<Dataset> {
    partition(data, &[Dimension::RoadClass])
        .unwrap()
        .into_values()
        .collect()
}

fn parameter_recovery() -> Outcome {
    let start = Instant::now();
    let spec = recovery_spec();
    let truth = recovery_theta(&spec);
    let per_seed: Vec<(usize, usize)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let data = simulate(&recovery_config(50_000, seed)).unwrap();
            let r = fit(&spec, &data);
            let covered = (0..spec.k())
                .filter(|&s| (r.theta_hat.values[s] - truth.values[s]).abs() <= 3.0 * r.std_errors[s])
                .count();
            (covered, spec.k())
        })
        .collect();
    let covered: usize = per_seed.iter().map(|p| p.0).sum();
    let total: usize = per_seed.iter().map(|p| p.1).sum();
    let secs = start.elapsed().as_secs_f64();
    let rate = covered as f64 / total as f64;
    verdict(
        rate >= 0.95 && secs < 60.0 && spec.k() == 6,
        format!("{covered}/{total} (slot, seed) pairs within 3 SE ({:.1}%), {secs:.1} s", 100.0 * rate),
    )
}

fn saturated_constants() -> Outcome {
    let counts = [7903usize, 2056, 41];
    let observations: Vec<Observation> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| (0..c).map(move |_| obs(&[], i)))
        .collect();
    let data = Dataset::new(OutcomeSet::severity(), vec![], observations).unwrap();
    let spec = ModelSpec::constants_only(OutcomeSet::severity());
    let r = fit(&spec, &data);
    let shares = [0.7903, 0.2056, 0.0041];
    let fitted = &fitted_probabilities(&spec, &r.theta_hat, &data).unwrap()[0];
    let prob_err = fitted
        .iter()
        .zip(&shares)
        .map(|(p, s)| (p - s).abs())
        .fold(0.0, f64::max);
    let b_inj = r.theta_hat.get("constant[injury]").unwrap();
    let b_fat = r.theta_hat.get("constant[fatality]").unwrap();
    let const_err = (b_inj - (0.2056f64 / 0.7903).ln())
        .abs()
        .max((b_fat - (0.0041f64 / 0.7903).ln()).abs());
    verdict(
        prob_err < 1e-6 && const_err < 1e-6,
        format!("max share error {prob_err:.2e}, max constant error {const_err:.2e}"),
    )
}

fn derivative_correctness() -> Outcome {
    let spec = recovery_spec();
    let data = simulate(&recovery_config(400, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let ranges: Vec<(f64, f64)> = spec
        .layout()
        .slots()
        .iter()
        .map(|s| match s.variable.as_str() {
            CONSTANT => (-3.0, 1.0),
            "alcohol" => (-1.0, 1.0),
            _ => (-0.04, 0.04),
        })
        .collect();
    // Steps scaled to each column's magnitude.
    let steps: Vec<f64> = spec
        .layout()
        .slots()
        .iter()
        .map(|s| {
            if s.variable == CONSTANT {
                return 1e-5;
            }
            let ms = data
                .observations()
                .iter()
                .map(|o| o.covariates[&s.variable].powi(2))
                .sum::<f64>()
                / data.len() as f64;
            1e-5 / ms.sqrt().max(1.0)
        })
        .collect();
    let mut worst_g = 0.0f64;
    let mut worst_h = 0.0f64;
    for _ in 0..50 {
        let values: Vec<f64> = ranges.iter().map(|&(lo, hi)| uniform(lo, hi)).collect();
        let theta = ParameterVector::from_values(&spec, values.clone()).unwrap();
        let eval = gradient_hessian(&spec, &theta, &data).unwrap();
        let ll = |v: &[f64]| {
            log_likelihood(&spec, &ParameterVector::from_values(&spec, v.to_vec()).unwrap(), &data).unwrap()
        };
        let g_fd = fd_gradient(&ll, &values, &steps);
        worst_g = worst_g.max(max_rel_error(eval.gradient.as_slice(), &g_fd));

        let k = spec.k();
        let mut h_fd = vec![0.0; k * k];
        for j in 0..k {
            let grad_at = |delta: f64| {
                let mut v = values.clone();
                v[j] += delta;
                gradient_hessian(&spec, &ParameterVector::from_values(&spec, v).unwrap(), &data)
                    .unwrap()
                    .gradient
            };
            let col = (grad_at(steps[j]) - grad_at(-steps[j])) / (2.0 * steps[j]);
            for i in 0..k {
                h_fd[i * k + j] = col[i];
            }
        }
        let h: Vec<f64> = (0..k * k).map(|n| eval.hessian[(n / k, n % k)]).collect();
        worst_h = worst_h.max(max_rel_error(&h, &h_fd));
    }
    verdict(
        worst_g < 1e-6 && worst_h < 1e-4,
        format!("50 draws: worst gradient rel error {worst_g:.2e}, worst Hessian rel error {worst_h:.2e}"),
    )
}

fn elasticity_consistency() -> Outcome {
    // Each covariate enters exactly one utility, so perturbing the
    // covariate perturbs only that outcome's copy of it.
    let spec = ModelSpec::new(
        OutcomeSet::severity(),
        vec![
            TermSpec::new(CONSTANT, [INJURY, FATALITY], false),
            TermSpec::new("speed_limit", [INJURY], false),
            TermSpec::new("age", [FATALITY], false),
        ],
    )
    .unwrap();
    let truth = ParameterVector::from_labeled(
        &spec,
        [
            ("constant[injury]", -2.0),
            ("constant[fatality]", -2.5),
            ("speed_limit[injury]", 0.025),
            ("age[fatality]", -0.02),
        ],
    )
    .unwrap();
    let config = GeneratorConfig::new(spec.clone(), truth, 1_000, 4)
        .covariate("speed_limit", speed_values())
        .covariate("age", severity_core::CovariateDistribution::Uniform { low: 16.0, high: 80.0 });
    let data = simulate(&config).unwrap();
    let r = fit(&spec, &data);
    let options = ElasticityOptions {
        significance_threshold: 0.0,
        keep_per_observation: true,
        ..ElasticityOptions::default()
    };
    let report = elasticity_report(&spec, &r, &data, &options).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (variable, outcome) in [("speed_limit", INJURY), ("age", FATALITY)] {
        let entry = report.get(variable, outcome).expect("entry present");
        let analytic = entry.per_observation.as_ref().unwrap();
        for (o, &a) in data.observations().iter().zip(analytic) {
            let x = o.covariates[variable];
            let p_at = |scale: f64| {
                let mut moved = o.clone();
                moved.covariates.insert(variable.to_string(), x * scale);
                brute_probabilities(&brute_utilities(&spec, &r.theta_hat, &moved))[outcome]
            };
            let p = p_at(1.0);
            let fd = (p_at(1.0 + h) - p_at(1.0 - h)) / (2.0 * h * p);
            worst = worst.max((a - fd).abs() / fd.abs().max(1e-300));
            checked += 1;
        }
    }
    verdict(
        worst < 1e-6 && checked == 2 * data.len(),
        format!("{checked} per-observation values, worst relative error {worst:.2e}"),
    )
}

fn chi_square_kernel() -> Outcome {
    let mut worst = 0.0f64;
    for df in [1u32, 2, 5, 20] {
        for x in [0.001, 1.0, 3.841, 10.0, 50.0] {
            let err = (chi_square_sf(x, df).unwrap() - chi_square_sf_quadrature(x, df)).abs();
            worst = worst.max(err);
        }
    }
    let mut worst_closed = 0.0f64;
    for x in [0.001, 0.5, 1.0, 3.841, 10.0, 25.0, 50.0, 100.0] {
        worst_closed = worst_closed.max((chi_square_sf(x, 2).unwrap() - (-x / 2.0f64).exp()).abs());
    }
    verdict(
        worst < 1e-10 && worst_closed < 1e-12,
        format!("quadrature grid max error {worst:.2e}, df=2 closed form max error {worst_closed:.2e}"),
    )
}

fn split_statistic(spec: &ModelSpec, data: &Dataset) -> severity_core::LrTestResult {
    let pooled = fit(spec, data);
    let parts: Vec<(f64, usize)> = split_by_segment(data)
        .iter()
        .map(|d| {
            let r = fit(spec, d);
            (r.ll_converged, r.k())
        })
        .collect();
    lr_split_test(pooled.ll_converged, pooled.k(), &parts).unwrap()
}

fn lr_null_calibration() -> Outcome {
    let start = Instant::now();
    let spec = calibration_spec();
    let reps = 200u64;
    let null_rejections = (0..reps)
        .into_par_iter()
        .filter(|&r| {
            let data = simulate(&two_segment_config(5_000, r, None)).unwrap();
            split_statistic(&spec, &data).rejects_at(0.95)
        })
        .count();

    // Size the shift from the standard error of the between-segment
    // difference in a pilot sample drawn under the null.
    let shifted_slot = "speed_limit[fatality]";
    let pilot = simulate(&two_segment_config(5_000, 1_000_000, None)).unwrap();
    let se_diff = split_by_segment(&pilot)
        .iter()
        .map(|d| {
            let r = fit(&spec, d);
            let s = spec.layout().slot_by_label(shifted_slot).unwrap();
            r.std_errors[s].powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let mut theta_b = calibration_theta(&spec);
    let s = spec.layout().slot_by_label(shifted_slot).unwrap();
    theta_b.values[s] += 5.0 * se_diff;
    let alt_rejections = (0..reps)
        .into_par_iter()
        .filter(|&r| {
            let data = simulate(&two_segment_config(5_000, 10_000 + r, Some(theta_b.clone()))).unwrap();
            split_statistic(&spec, &data).rejects_at(0.95)
        })
        .count();
    let secs = start.elapsed().as_secs_f64();
    let size = null_rejections as f64 / reps as f64;
    let power = alt_rejections as f64 / reps as f64;
    verdict(
        (0.02..=0.08).contains(&size) && power >= 0.90 && secs < 600.0,
        format!(
            "null rejection {:.1}%, power {:.1}% at shift {:.4} (5 x contrast SE), {secs:.1} s",
            100.0 * size,
            100.0 * power,
            5.0 * se_diff
        ),
    )
}

fn temporal_retention() -> Outcome {
    let spec = calibration_spec();
    let retained = (0..100u64)
        .into_par_iter()
        .filter(|&r| {
            let a = simulate(&single_config(5_000, 2 * r, "2004")).unwrap();
            let b = simulate(&single_config(5_000, 2 * r + 1, "2006")).unwrap();
            let all = Dataset::concat([&a, &b]).unwrap();
            let (fa, fb, fall) = (fit(&spec, &a), fit(&spec, &b), fit(&spec, &all));
            let t = lr_temporal_test(fall.ll_converged, fa.ll_converged, fb.ll_converged, fall.k(), fa.k(), fb.k())
                .unwrap();
            !t.rejects_at(0.70)
        })
        .count();
    verdict(
        retained >= 60,
        format!("null retained at 70% confidence in {retained}/100 replications"),
    )
}

fn scale_equivariance() -> Outcome {
    let spec = recovery_spec();
    let data = simulate(&recovery_config(5_000, 8)).unwrap();
    let scaled = data.rescale_covariate("speed_limit", 10.0).unwrap();
    let (a, b) = (fit(&spec, &data), fit(&spec, &scaled));
    let s = spec.layout().slot_by_label("speed_limit[injury,fatality]").unwrap();
    let coef_err = (b.theta_hat.values[s] * 10.0 - a.theta_hat.values[s]).abs() / a.theta_hat.values[s].abs();
    let ll_err = (a.ll_converged - b.ll_converged).abs();
    let t_err = a
        .t_ratios
        .iter()
        .zip(&b.t_ratios)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let pa = fitted_probabilities(&spec, &a.theta_hat, &data).unwrap();
    let pb = fitted_probabilities(&spec, &b.theta_hat, &scaled).unwrap();
    let p_err = pa
        .iter()
        .flatten()
        .zip(pb.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);

    let cal = calibration_spec();
    let seg = simulate(&two_segment_config(5_000, 21, None)).unwrap();
    let seg_scaled = seg.rescale_covariate("speed_limit", 10.0).unwrap();
    let lr_err = (split_statistic(&cal, &seg).statistic - split_statistic(&cal, &seg_scaled).statistic).abs();
    let worst = coef_err.max(ll_err).max(t_err).max(p_err).max(lr_err);
    verdict(
        worst < 1e-6,
        format!(
            "coef rel {coef_err:.1e}, ll {ll_err:.1e}, t {t_err:.1e}, prob {p_err:.1e}, LR {lr_err:.1e}"
        ),
    )
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = fixture("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs from golden:\n{actual}"))
    }
}

pub fn table2_text() -> String {
    let config = GeneratorConfig::from_path(&fixture("fixtures/table2_config.toml")).unwrap();
    let spec = config.spec.clone();
    let data = simulate(&config).unwrap();
    let cells = partition(&data, &[Dimension::RoadClass]).unwrap();
    let mut speed = ElasticityTable::new("speed_limit", spec.outcome_set());
    let mut alcohol = ElasticityTable::new("alcohol", spec.outcome_set());
    for (key, cell) in &cells {
        let r = fit(&spec, cell);
        let report = elasticity_report(&spec, &r, cell, &ElasticityOptions::default()).unwrap();
        speed.push_row(key.display_name(), &spec, &r, &report);
        alcohol.push_row(key.display_name(), &spec, &r, &report);
    }
    format!("{}\n{}", speed.to_text(), alcohol.to_text())
}

fn report_shape() -> Outcome {
    let mut problems = Vec::new();

    let outcomes = OutcomeSet::severity();
    let data = severity_core::ingest_csv(&fixture("fixtures/table1.csv"), &outcomes).unwrap();
    let pooled = summarize(&data, &SpeedBins::indiana()).unwrap().to_text();
    let by_year = summarize(&data, &SpeedBins::indiana().by_period(true)).unwrap().to_text();
    let table1 = format!("{pooled}\n{by_year}");
    let lines: Vec<&str> = pooled.lines().collect();
    if lines.len() != 6 || !lines[2].starts_with("posted over 60 mi/h") || !lines[5].starts_with("posted 30 mi/h or less") {
        problems.push("severity table rows are not four speed bands, highest first".to_string());
    }
    if let Err(e) = check_golden("table1.txt", &table1) {
        problems.push(e);
    }

    let table2 = table2_text();
    let header: Vec<&str> = table2.lines().next().unwrap().split('\t').collect();
    let expected_header = [
        "Model",
        "Speed limit parameter estimate (t-ratio)",
        "",
        "Fatality Elasticity",
        "Injury Elasticity",
    ];
    if header != expected_header {
        problems.push(format!("elasticity header {header:?}"));
    }
    let body: Vec<Vec<&str>> = table2.lines().skip(2).take(3).map(|l| l.split('\t').collect()).collect();
    if body.iter().any(|r| r.len() != 5) {
        problems.push("elasticity rows do not have five columns".into());
    }
    if !body.iter().any(|r| r[3].is_empty()) {
        problems.push("no blank cell for an insignificant slot".into());
    }
    if let Err(e) = check_golden("table2.txt", &table2) {
        problems.push(e);
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            "severity table and elasticity table match golden layouts".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn pipeline_bytes() -> Vec<u8> {
    let spec = recovery_spec();
    let data = simulate(&recovery_config(20_000, 11)).unwrap();
    let mut out = Vec::new();
    write_csv(&data, &mut out, &recovery_config(20_000, 11).header_lines()).unwrap();
    let r = fit(&spec, &data);
    out.extend(serde_json::to_vec(&r).unwrap());
    let report = elasticity_report(&spec, &r, &data, &ElasticityOptions::default()).unwrap();
    out.extend(serde_json::to_vec(&report).unwrap());
    let seg = simulate(&two_segment_config(6_000, 12, None)).unwrap();
    let p = evaluate_partition(&calibration_spec(), &seg, &[Dimension::RoadClass], &PartitionOptions::default())
        .unwrap();
    out.extend(serde_json::to_vec(&p).unwrap());
    out
}

fn determinism() -> Outcome {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(pipeline_bytes)
    };
    let first = run(1);
    let second = run(4);
    let third = run(4);
    verdict(
        first == second && second == third,
        format!("{} bytes identical across three runs (1 and 4 threads)", first.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("parameter recovery", parameter_recovery),
        ("saturated-constants identity", saturated_constants),
        ("derivative correctness", derivative_correctness),
        ("elasticity consistency", elasticity_consistency),
        ("chi-square kernel", chi_square_kernel),
        ("LR null calibration and power", lr_null_calibration),
        ("temporal stability retention", temporal_retention),
        ("scale equivariance", scale_equivariance),
        ("report shape", report_shape),
        ("determinism", determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failures = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {status} {name}: {} [{:.1}s]",
            n + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criterion(s) failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

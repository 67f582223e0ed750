use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use severity_core::{
    chi_square_sf, estimate, gradient_hessian, log_likelihood, simulate, CovariateDistribution, Dataset,
    EstimateOptions, GeneratorConfig, ModelSpec, OutcomeSet, ParameterVector, TermSpec, CONSTANT,
};

fn workload(n: usize) -> (ModelSpec, ParameterVector, Dataset) {
    let spec = ModelSpec::new(
        OutcomeSet::severity(),
        vec![
            TermSpec::new(CONSTANT, [1, 2], false),
            TermSpec::new("speed_limit", [1, 2], false),
            TermSpec::new("alcohol", [1, 2], true),
            TermSpec::new("age", [1], false),
        ],
    )
    .unwrap();
    let theta = ParameterVector::from_labeled(
        &spec,
        [
            ("constant[injury]", -2.0),
            ("constant[fatality]", -6.0),
            ("speed_limit[injury]", 0.03),
            ("speed_limit[fatality]", 0.05),
            ("alcohol[injury,fatality]", 1.2),
            ("age[injury]", 0.01),
        ],
    )
    .unwrap();
    let config = GeneratorConfig::new(spec.clone(), theta.clone(), n, 7)
        .covariate(
            "speed_limit",
            CovariateDistribution::Categorical {
                values: (5..=14).map(|k| 5.0 * f64::from(k)).collect(),
                probabilities: vec![0.1; 10],
            },
        )
        .covariate("alcohol", CovariateDistribution::Indicator { p: 0.1 })
        .covariate("age", CovariateDistribution::Uniform { low: 16.0, high: 80.0 });
    let data = simulate(&config).unwrap();
    (spec, theta, data)
}

fn likelihood(c: &mut Criterion) {
    let (spec, theta, data) = workload(50_000);
    let mut group = c.benchmark_group("likelihood_50k");
    group.bench_function("value", |b| b.iter(|| log_likelihood(&spec, black_box(&theta), &data).unwrap()));
    group.bench_function("gradient_hessian", |b| {
        b.iter(|| gradient_hessian(&spec, black_box(&theta), &data).unwrap())
    });
    group.finish();
}

fn estimation(c: &mut Criterion) {
    let (spec, _, data) = workload(50_000);
    let options = EstimateOptions::default();
    let mut group = c.benchmark_group("estimate_50k");
    group.sample_size(10);
    group.bench_function("newton", |b| {
        b.iter_batched(|| data.clone(), |d| estimate(&spec, &d, &options).unwrap(), BatchSize::LargeInput)
    });
    group.finish();
}

fn chi_square(c: &mut Criterion) {
    c.bench_function("chi_square_sf", |b| {
        b.iter(|| {
            (1..=40u32)
                .map(|df| chi_square_sf(black_box(f64::from(df) * 1.3), df).unwrap())
                .sum::<f64>()
        })
    });
}

criterion_group!(benches, likelihood, estimation, chi_square);
criterion_main!(benches);

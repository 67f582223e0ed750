//! Fixtures and independent oracles shared by the integration tests.
//! Nothing here calls into the likelihood or inference code paths it is
//! used to check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use severity_core::synth::CovariateDistribution;
use severity_core::{
    AccidentType, Dataset, GeneratorConfig, Location, ModelSpec, Observation, OutcomeSet,
    ParameterVector, RoadClass, SegmentKey, TermSpec, CONSTANT,
};

pub const INJURY: usize = 1;
pub const FATALITY: usize = 2;

pub fn speed_values() -> CovariateDistribution {
    CovariateDistribution::Categorical {
        values: vec![25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0],
        probabilities: vec![0.1; 10],
    }
}

/// Six slots: two constants, a speed coefficient tied across injury and
/// fatality, an alcohol indicator per outcome, and driver age on injury.
pub fn recovery_spec() -> ModelSpec {
    ModelSpec::new(
        OutcomeSet::severity(),
        vec![
            TermSpec::new(CONSTANT, [INJURY, FATALITY], false),
            TermSpec::new("speed_limit", [INJURY, FATALITY], true),
            TermSpec::new("alcohol", [INJURY, FATALITY], false),
            TermSpec::new("age", [INJURY], false),
        ],
    )
    .unwrap()
}

pub fn recovery_theta(spec: &ModelSpec) -> ParameterVector {
    ParameterVector::from_labeled(
        spec,
        [
            ("constant[injury]", -2.0),
            ("constant[fatality]", -6.0),
            ("speed_limit[injury,fatality]", 0.03),
            ("alcohol[injury]", 0.5),
            ("alcohol[fatality]", 1.2),
            ("age[injury]", 0.01),
        ],
    )
    .unwrap()
}

pub fn recovery_config(n: usize, seed: u64) -> GeneratorConfig {
    let spec = recovery_spec();
    let theta = recovery_theta(&spec);
    GeneratorConfig::new(spec, theta, n, seed)
        .covariate("speed_limit", speed_values())
        .covariate("alcohol", CovariateDistribution::Indicator { p: 0.1 })
        .covariate("age", CovariateDistribution::Uniform { low: 16.0, high: 80.0 })
}

/// Constants plus an alternative-specific speed coefficient per outcome.
pub fn calibration_spec() -> ModelSpec {
    ModelSpec::new(
        OutcomeSet::severity(),
        vec![
            TermSpec::new(CONSTANT, [INJURY, FATALITY], false),
            TermSpec::new("speed_limit", [INJURY, FATALITY], false),
        ],
    )
    .unwrap()
}

pub fn calibration_theta(spec: &ModelSpec) -> ParameterVector {
    ParameterVector::from_labeled(
        spec,
        [
            ("constant[injury]", -2.0),
            ("constant[fatality]", -3.0),
            ("speed_limit[injury]", 0.02),
            ("speed_limit[fatality]", 0.03),
        ],
    )
    .unwrap()
}

pub fn segment_a() -> SegmentKey {
    SegmentKey::new(RoadClass::CountyRoad, Location::Rural, AccidentType::PassengerPassenger)
}

pub fn segment_b() -> SegmentKey {
    SegmentKey::new(RoadClass::StateRoute, Location::Rural, AccidentType::PassengerPassenger)
}

/// Two equally likely segments; segment B optionally uses its own theta.
pub fn two_segment_config(n: usize, seed: u64, theta_b: Option<ParameterVector>) -> GeneratorConfig {
    let spec = calibration_spec();
    let theta = calibration_theta(&spec);
    GeneratorConfig::new(spec, theta, n, seed)
        .covariate("speed_limit", speed_values())
        .segment(segment_a(), 0.5, None)
        .segment(segment_b(), 0.5, theta_b)
}

pub fn single_config(n: usize, seed: u64, period: &str) -> GeneratorConfig {
    let spec = calibration_spec();
    let theta = calibration_theta(&spec);
    GeneratorConfig::new(spec, theta, n, seed)
        .covariate("speed_limit", speed_values())
        .period(period)
}

pub fn obs(covariates: &[(&str, f64)], outcome: usize) -> Observation {
    Observation::new(
        covariates.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        outcome,
    )
}

/// Utilities evaluated term by term from the spec's terms (not its layout
/// helpers), base outcome zero.
pub fn brute_utilities(spec: &ModelSpec, theta: &ParameterVector, o: &Observation) -> Vec<f64> {
    let mut u = vec![0.0; spec.outcome_set().len()];
    for (t, term) in spec.terms().iter().enumerate() {
        let x = if term.variable == CONSTANT { 1.0 } else { o.covariates[&term.variable] };
        for &i in &term.outcomes {
            let slot = spec.layout().slot_of(t, i).unwrap();
            u[i] += theta.values[slot] * x;
        }
    }
    u
}

/// Plain `exp(u_i) / sum exp(u_j)` with no stabilization.
pub fn brute_probabilities(u: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = u.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn brute_log_likelihood(spec: &ModelSpec, theta: &ParameterVector, d: &Dataset) -> f64 {
    d.observations()
        .iter()
        .map(|o| o.weight * brute_probabilities(&brute_utilities(spec, theta, o))[o.outcome].ln())
        .sum()
}

/// Gamma(df / 2) for integer df, from the factorial recurrences.
pub fn half_integer_gamma(df: u32) -> f64 {
    if df.is_multiple_of(2) {
        (1..df / 2).map(f64::from).product()
    } else {
        // Gamma(n + 1/2) = sqrt(pi) * prod_{j=1..n} (j - 1/2)
        let n = (df - 1) / 2;
        std::f64::consts::PI.sqrt() * (1..=n).map(|j| f64::from(j) - 0.5).product::<f64>()
    }
}

pub fn chi_square_pdf(t: f64, df: u32) -> f64 {
    let k = f64::from(df) / 2.0;
    if t <= 0.0 {
        return 0.0;
    }
    t.powf(k - 1.0) * (-t / 2.0).exp() / (2f64.powf(k) * half_integer_gamma(df))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k15 = 0.0;
    let mut g7 = 0.0;
    for (j, (&x, &w)) in GK_NODES.iter().zip(&K15_WEIGHTS).enumerate() {
        if x == 0.0 {
            let fc = f(c);
            k15 += w * fc;
            g7 += G7_WEIGHTS[3] * fc;
        } else {
            let pair = f(c - h * x) + f(c + h * x);
            k15 += w * pair;
            if j % 2 == 1 {
                g7 += G7_WEIGHTS[j / 2] * pair;
            }
        }
    }
    (k15 * h, ((k15 - g7) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth > 60 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, tol / 2.0, depth + 1) + recurse(f, m, b, tol / 2.0, depth + 1)
    }
    recurse(f, a, b, tol, 0)
}

/// Chi-square survival function by quadrature of the density over
/// `[x, x + span]`; the neglected tail is below 1e-40.
pub fn chi_square_sf_quadrature(x: f64, df: u32) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let upper = x.max(f64::from(df)) + 400.0;
    integrate(&|t| chi_square_pdf(t, df), x, upper, 1e-15)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, at: &[f64], steps: &[f64]) -> Vec<f64> {
    (0..at.len())
        .map(|k| {
            let mut up = at.to_vec();
            let mut down = at.to_vec();
            up[k] += steps[k];
            down[k] -= steps[k];
            (f(&up) - f(&down)) / (2.0 * steps[k])
        })
        .collect()
}

/// Largest absolute deviation relative to the reference's max-norm (floored at 1).
pub fn max_rel_error(reference: &[f64], approx: &[f64]) -> f64 {
    let scale = reference.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    reference
        .iter()
        .zip(approx)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

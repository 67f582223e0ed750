//! Multinomial-logit probabilities and the log-likelihood with analytic
//! gradient and Hessian.
//!
//! All probabilities go through a max-subtracted log-sum-exp, so finite
//! utilities of any magnitude are safe. The per-observation sum runs in
//! fixed-size chunks (possibly in parallel) that are reduced in chunk
//! order, which keeps results bit-identical regardless of thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::spec::{utility, ModelSpec, ParameterVector, CONSTANT};

const CHUNK: usize = 2048;

/// Logs of probabilities below the smallest positive normal are floored there.
pub const LN_PROBABILITY_FLOOR: f64 = -708.396_418_532_264_1; // ln(f64::MIN_POSITIVE)

/// Value, gradient and Hessian of the log-likelihood at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodEvaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// Observations whose log-probability hit the floor. Non-zero values
    /// signal (quasi-)separation.
    pub floored: usize,
}

/// Softmax with max subtraction. Fails on non-finite utilities.
pub fn softmax(utilities: &[f64]) -> Result<Vec<f64>> {
    if let Some(u) = utilities.iter().find(|u| !u.is_finite()) {
        return Err(Error::Numeric(format!("non-finite utility {u}")));
    }
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    Ok(p)
}

/// Outcome probabilities for one observation.
pub fn probabilities(spec: &ModelSpec, theta: &ParameterVector, obs: &Observation) -> Result<Vec<f64>> {
    let u = (0..spec.outcome_set().len())
        .map(|i| utility(spec, theta, obs, i))
        .collect::<Result<Vec<_>>>()?;
    softmax(&u)
}

/// Fitted probability vectors, one per observation.
pub fn fitted_probabilities(
    spec: &ModelSpec,
    theta: &ParameterVector,
    dataset: &Dataset,
) -> Result<Vec<Vec<f64>>> {
    dataset
        .observations()
        .iter()
        .map(|o| probabilities(spec, theta, o))
        .collect()
}

/// Weighted sum of log-probabilities of the observed outcomes.
pub fn log_likelihood(spec: &ModelSpec, theta: &ParameterVector, dataset: &Dataset) -> Result<f64> {
    let design = Design::new(spec, dataset)?;
    Ok(design.evaluate(&theta.values, Order::Value)?.value)
}

pub fn gradient_hessian(
    spec: &ModelSpec,
    theta: &ParameterVector,
    dataset: &Dataset,
) -> Result<LikelihoodEvaluation> {
    let design = Design::new(spec, dataset)?;
    design.evaluate(&theta.values, Order::Hessian)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Dense per-observation design: for every observation and non-base
/// outcome, the K-vector whose inner product with theta is the utility.
#[derive(Clone, Debug)]
pub struct Design {
    k: usize,
    n_alt: usize,
    rows: Vec<f64>,
    outcomes: Vec<usize>,
    weights: Vec<f64>,
    slot_outcome: Vec<usize>,
}

impl Design {
    pub fn new(spec: &ModelSpec, dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if spec.outcome_set() != dataset.outcome_set() {
            return Err(Error::Schema(format!(
                "spec outcomes {:?} differ from dataset outcomes {:?}",
                spec.outcome_set().labels(),
                dataset.outcome_set().labels()
            )));
        }
        for v in spec.variables() {
            if !dataset.has_variable(&v) {
                return Err(Error::Schema(format!(
                    "spec variable `{v}` is not a dataset column"
                )));
            }
        }
        let k = spec.k();
        let n_alt = spec.outcome_set().len() - 1;
        let layout = spec.layout();
        let n = dataset.len();
        let mut rows = vec![0.0; n * n_alt * k];
        for (row, obs) in dataset.observations().iter().enumerate() {
            for i in 1..=n_alt {
                let base = (row * n_alt + i - 1) * k;
                for (variable, slot) in layout.outcome_terms(i) {
                    rows[base + slot] = if variable == CONSTANT {
                        1.0
                    } else {
                        obs.covariate(variable)?
                    };
                }
            }
        }
        Ok(Self {
            k,
            n_alt,
            rows,
            outcomes: dataset.observations().iter().map(|o| o.outcome).collect(),
            weights: dataset.observations().iter().map(|o| o.weight).collect(),
            slot_outcome: layout.slots().iter().map(|s| s.outcomes[0]).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_obs(&self) -> usize {
        self.outcomes.len()
    }

    fn x(&self, row: usize, outcome: usize) -> &[f64] {
        let base = (row * self.n_alt + outcome - 1) * self.k;
        &self.rows[base..base + self.k]
    }

    /// Root-mean-square of each slot's design column; zero for a column
    /// with no variation away from zero.
    pub fn column_scales(&self) -> Vec<f64> {
        (0..self.k)
            .map(|s| {
                let i = self.slot_outcome[s];
                let ss: f64 = (0..self.n_obs()).map(|r| self.x(r, i)[s].powi(2)).sum();
                (ss / self.n_obs() as f64).sqrt()
            })
            .collect()
    }

    pub fn evaluate(&self, theta: &[f64], order: Order) -> Result<LikelihoodEvaluation> {
        if theta.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.k,
                theta.len()
            )));
        }
        let n = self.n_obs();
        let chunks: Vec<(usize, usize)> = (0..n)
            .step_by(CHUNK)
            .map(|start| (start, (start + CHUNK).min(n)))
            .collect();
        let partials: Vec<Result<Partial>> = chunks
            .par_iter()
            .map(|&(lo, hi)| self.accumulate(theta, order, lo, hi))
            .collect();

        let k = self.k;
        let mut total = Partial::new(k, order);
        for p in partials {
            total.add(&p?);
        }
        let gradient = DVector::from_vec(total.gradient);
        let mut hessian = DMatrix::zeros(k, k);
        if order >= Order::Hessian {
            hessian = DMatrix::from_vec(k, k, total.hessian);
            for a in 0..k {
                for b in 0..a {
                    hessian[(a, b)] = hessian[(b, a)];
                }
            }
        }
        Ok(LikelihoodEvaluation {
            value: total.value,
            gradient,
            hessian,
            floored: total.floored,
        })
    }

    fn accumulate(&self, theta: &[f64], order: Order, lo: usize, hi: usize) -> Result<Partial> {
        let k = self.k;
        let n_out = self.n_alt + 1;
        let mut acc = Partial::new(k, order);
        let mut u = vec![0.0; n_out];
        let mut p = vec![0.0; n_out];
        let mut xbar = vec![0.0; k];
        for row in lo..hi {
            for i in 1..n_out {
                u[i] = dot(self.x(row, i), theta);
                if !u[i].is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite utility for observation {row}, outcome {i}"
                    )));
                }
            }
            let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for i in 0..n_out {
                p[i] = (u[i] - max).exp();
                sum += p[i];
            }
            let y = self.outcomes[row];
            let w = self.weights[row];
            let mut ln_p = u[y] - max - sum.ln();
            if ln_p < LN_PROBABILITY_FLOOR {
                ln_p = LN_PROBABILITY_FLOOR;
                acc.floored += 1;
            }
            acc.value += w * ln_p;
            if order == Order::Value {
                continue;
            }
            for v in p.iter_mut() {
                *v /= sum;
            }
            xbar.iter_mut().for_each(|v| *v = 0.0);
            for i in 1..n_out {
                let xi = self.x(row, i);
                for s in 0..k {
                    xbar[s] += p[i] * xi[s];
                }
            }
            if y > 0 {
                let xy = self.x(row, y);
                for s in 0..k {
                    acc.gradient[s] += w * (xy[s] - xbar[s]);
                }
            } else {
                for s in 0..k {
                    acc.gradient[s] -= w * xbar[s];
                }
            }
            if order < Order::Hessian {
                continue;
            }
            // upper triangle of -w (sum_i p_i x_i x_i' - xbar xbar'), column-major
            for i in 1..n_out {
                let xi = self.x(row, i);
                let wp = w * p[i];
                for b in 0..k {
                    if xi[b] == 0.0 {
                        continue;
                    }
                    let col = &mut acc.hessian[b * k..b * k + b + 1];
                    for a in 0..=b {
                        col[a] -= wp * xi[a] * xi[b];
                    }
                }
            }
            for b in 0..k {
                let col = &mut acc.hessian[b * k..b * k + b + 1];
                for a in 0..=b {
                    col[a] += w * xbar[a] * xbar[b];
                }
            }
        }
        Ok(acc)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Partial {
    value: f64,
    gradient: Vec<f64>,
    hessian: Vec<f64>,
    floored: usize,
}

impl Partial {
    fn new(k: usize, order: Order) -> Self {
        Self {
            value: 0.0,
            gradient: vec![0.0; k],
            hessian: vec![0.0; if order >= Order::Hessian { k * k } else { 0 }],
            floored: 0,
        }
    }

    fn add(&mut self, other: &Partial) {
        self.value += other.value;
        self.floored += other.floored;
        for (a, b) in self.gradient.iter_mut().zip(&other.gradient) {
            *a += b;
        }
        for (a, b) in self.hessian.iter_mut().zip(&other.hessian) {
            *a += b;
        }
    }
}

//! Accuracy as a shifted, scaled sigmoid of a benchmark loss:
//! Acc(L) = c1 / (1 + exp(−k (L − L0))) + c2.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::loss_law::{LossLawFit, ParamInterval};
use crate::scaling::optim::{bfgs, BfgsOptions};
use crate::scaling::records::RunRecord;
use crate::scaling::stats::{interval95, linear_fit};

/// Appended to every fit: zero loss means perfect accuracy.
pub const ANCHOR: (f64, f64) = (0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    pub c1: f64,
    pub c2: f64,
    pub k: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SigmoidParams {
    pub fn predict(&self, loss: f64) -> f64 {
        self.c1 * logistic(self.k * (loss - self.l0)) + self.c2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub benchmark: String,
    pub params: SigmoidParams,
    pub n_points: usize,
    /// Mean absolute accuracy error on the observed points (anchor excluded).
    pub fit_mae: f64,
    pub bootstrap_seed: u64,
    pub bootstrap: Vec<SigmoidParams>,
    pub bootstrap_failures: usize,
    pub intervals: Vec<ParamInterval>,
}

impl SigmoidFit {
    pub fn predict(&self, loss: f64) -> f64 {
        self.params.predict(loss)
    }
}

fn sse(points: &[(f64, f64)], x: &[f64], grad: &mut [f64]) -> f64 {
    let (c1, c2, k, l0) = (x[0], x[1], x[2], x[3]);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for &(l, acc) in points {
        let s = logistic(k * (l - l0));
        let r = c1 * s + c2 - acc;
        total += r * r;
        let ds = s * (1.0 - s);
        grad[0] += 2.0 * r * s;
        grad[1] += 2.0 * r;
        grad[2] += 2.0 * r * c1 * ds * (l - l0);
        grad[3] -= 2.0 * r * c1 * ds * k;
    }
    total
}

/// Least-squares fit to `points`, which already include the anchor.
/// Starts cover a grid of (k, L0); c1 and c2 start at their exact
/// least-squares values for each pair.
fn fit_raw(points: &[(f64, f64)]) -> Option<SigmoidParams> {
    let mut ls: Vec<f64> = points.iter().map(|p| p.0).collect();
    ls.sort_by(f64::total_cmp);
    let observed_min = ls.iter().copied().find(|&l| l > 0.0).unwrap_or(1.0);
    let q = |f: f64| ls[((ls.len() - 1) as f64 * f).round() as usize];
    let centers = [observed_min / 2.0, q(0.25), q(0.5), q(0.75)];
    let slopes = [-30.0, -10.0, -3.0, 3.0, 10.0, 30.0];
    let opts = BfgsOptions {
        max_iter: 3000,
        ..Default::default()
    };
    let accs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut best: Option<(f64, SigmoidParams)> = None;
    for &l0 in &centers {
        for &k in &slopes {
            let s: Vec<f64> = points.iter().map(|p| logistic(k * (p.0 - l0))).collect();
            let (c2, c1) = linear_fit(&s, &accs)
                .unwrap_or((accs.iter().sum::<f64>() / accs.len() as f64, 0.0));
            let m = bfgs(|x, g| sse(points, x, g), &[c1, c2, k, l0], &opts);
            if !m.f.is_finite() || m.x.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let cand = SigmoidParams {
                c1: m.x[0],
                c2: m.x[1],
                k: m.x[2],
                l0: m.x[3],
            };
            if best.as_ref().map_or(true, |(f, _)| m.f < *f) {
                best = Some((m.f, cand));
            }
        }
    }
    best.map(|(_, p)| p)
}

fn with_anchor(points: impl IntoIterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = points.into_iter().collect();
    v.push(ANCHOR);
    v
}

/// The datasets each bootstrap refit sees: a resample with replacement of
/// the observed points plus the anchor, appended once.
pub fn bootstrap_datasets(points: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<(f64, f64)>> {
    (0..n).map(|k| resample(points, seed, k)).collect()
}

fn resample(points: &[(f64, f64)], seed: u64, k: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    with_anchor((0..points.len()).map(|_| points[rng.gen_range(0..points.len())]))
}

/// Fits the sigmoid to observed `(loss, accuracy)` points plus the anchor.
pub fn fit_sigmoid(
    benchmark: &str,
    points: &[(f64, f64)],
    bootstrap_n: usize,
    seed: u64,
) -> Result<SigmoidFit> {
    if points.len() + 1 < 4 {
        return Err(Error::invalid(format!(
            "sigmoid fit for {benchmark:?} needs at least 3 observed points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|(l, a)| !(l.is_finite() && *l >= 0.0 && (0.0..=1.0).contains(a)))
    {
        return Err(Error::invalid(format!("bad (loss, accuracy) point {p:?}")));
    }
    let params = fit_raw(&with_anchor(points.iter().copied())).ok_or_else(|| {
        Error::Optimization(format!(
            "sigmoid fit for {benchmark:?} failed from every start"
        ))
    })?;
    let refits: Vec<Option<SigmoidParams>> = (0..bootstrap_n)
        .into_par_iter()
        .map(|k| fit_raw(&resample(points, seed, k)))
        .collect();
    let bootstrap_failures = refits.iter().filter(|r| r.is_none()).count();
    let bootstrap: Vec<SigmoidParams> = refits.into_iter().flatten().collect();
    let fit_mae = points
        .iter()
        .map(|&(l, a)| (params.predict(l) - a).abs())
        .sum::<f64>()
        / points.len() as f64;

    let named: [(&str, fn(&SigmoidParams) -> f64); 4] = [
        ("c1", |p| p.c1),
        ("c2", |p| p.c2),
        ("k", |p| p.k),
        ("L0", |p| p.l0),
    ];
    let intervals = named
        .iter()
        .filter_map(|(name, get)| {
            interval95(bootstrap.iter().map(get)).map(|(lo95, hi95)| ParamInterval {
                name: name.to_string(),
                estimate: get(&params),
                lo95,
                hi95,
            })
        })
        .collect();
    Ok(SigmoidFit {
        benchmark: benchmark.to_string(),
        params,
        n_points: points.len(),
        fit_mae,
        bootstrap_seed: seed,
        bootstrap,
        bootstrap_failures,
        intervals,
    })
}

/// `(loss, accuracy)` pairs from runs reporting both a loss and an accuracy
/// under the benchmark's name.
pub fn accuracy_points(runs: &[RunRecord], benchmark: &str) -> Vec<(f64, f64)> {
    runs.iter()
        .filter_map(|r| Some((*r.losses.get(benchmark)?, *r.accuracies.get(benchmark)?)))
        .collect()
}

/// The two fitted stages for one benchmark: its loss law and its
/// loss-to-accuracy sigmoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkModel {
    pub loss: LossLawFit,
    pub sigmoid: SigmoidFit,
}

impl BenchmarkModel {
    pub fn predict(&self, n: f64, d: f64) -> f64 {
        self.sigmoid.predict(self.loss.predict(n, d))
    }

    /// Prediction of the k-th bootstrap pair (loss member k with sigmoid
    /// member k).
    pub fn predict_member(&self, k: usize, n: f64, d: f64) -> Option<f64> {
        let loss = self.loss.bootstrap.get(k)?.predict(n, d);
        Some(self.sigmoid.bootstrap.get(k)?.predict(loss))
    }

    pub fn members(&self) -> usize {
        self.loss.bootstrap.len().min(self.sigmoid.bootstrap.len())
    }
}

pub fn predict_accuracy(loss_fit: &LossLawFit, sigmoid_fit: &SigmoidFit, n: f64, d: f64) -> f64 {
    sigmoid_fit.predict(loss_fit.predict(n, d))
}

/// Unweighted mean of per-benchmark predicted accuracies.
pub fn mean_accuracy(
    models: &BTreeMap<String, BenchmarkModel>,
    benchmarks: &[String],
    n: f64,
    d: f64,
) -> Result<f64> {
    if benchmarks.is_empty() {
        return Err(Error::invalid("no benchmarks to average"));
    }
    let mut total = 0.0;
    for b in benchmarks {
        let m = models
            .get(b)
            .ok_or_else(|| Error::invalid(format!("no fit for benchmark {b:?}")))?;
        total += m.predict(n, d);
    }
    Ok(total / benchmarks.len() as f64)
}

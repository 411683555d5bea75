//! Loss as a function of model size and data: L(N, D) = E + A/N^α + B/D^β,
//! fitted in log space with a Huber loss on log-sum-exp residuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::optim::{bfgs, golden_section, BfgsOptions};
use crate::scaling::records::RunRecord;
use crate::scaling::stats::interval95;

/// Log-space parameters: `A = exp(a)`, `B = exp(b)`, `E = exp(e)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossLawParams {
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LossLawParams {
    /// From linear-space coefficients.
    pub fn from_linear(a: f64, b: f64, e: f64, alpha: f64, beta: f64) -> Self {
        LossLawParams {
            a: a.ln(),
            b: b.ln(),
            e: e.ln(),
            alpha,
            beta,
        }
    }

    pub fn coef_a(&self) -> f64 {
        self.a.exp()
    }

    pub fn coef_b(&self) -> f64 {
        self.b.exp()
    }

    pub fn coef_e(&self) -> f64 {
        self.e.exp()
    }

    pub fn predict(&self, n: f64, d: f64) -> f64 {
        self.coef_e() + self.coef_a() * n.powf(-self.alpha) + self.coef_b() * d.powf(-self.beta)
    }

    /// Loss-minimizing model size at compute `c` under `c = 6ND`.
    pub fn n_opt(&self, c: f64) -> f64 {
        let (alpha, beta) = (self.alpha, self.beta);
        let g = (alpha * self.coef_a() / (beta * self.coef_b())).powf(1.0 / (alpha + beta));
        g * (c / 6.0).powf(beta / (alpha + beta))
    }

    pub fn d_opt(&self, c: f64) -> f64 {
        c / (6.0 * self.n_opt(c))
    }

    /// Numeric counterpart of [`n_opt`](Self::n_opt): golden-section search
    /// over log N with D = c / 6N.
    pub fn n_opt_numeric(&self, c: f64) -> f64 {
        let budget = c / 6.0;
        let loss = |u: f64| {
            let n = u.exp();
            self.predict(n, budget / n)
        };
        golden_section(loss, 0.0, budget.ln(), 1e-12).exp()
    }

    fn to_array(self) -> [f64; 5] {
        [self.a, self.b, self.e, self.alpha, self.beta]
    }

    fn from_slice(x: &[f64]) -> Self {
        LossLawParams {
            a: x[0],
            b: x[1],
            e: x[2],
            alpha: x[3],
            beta: x[4],
        }
    }
}

/// One (N, D, loss) observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub n: f64,
    pub d: f64,
    pub loss: f64,
}

fn huber(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        0.5 * r * r
    } else {
        delta * (r.abs() - 0.5 * delta)
    }
}

fn huber_deriv(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

/// `Σ wᵢ · Huber_δ(LSE(a − α log Nᵢ, b − β log Dᵢ, e) − log Lᵢ)`.
pub fn huber_lse_objective(
    params: &LossLawParams,
    points: &[LossPoint],
    weights: &[f64],
    delta: f64,
) -> Result<f64> {
    if weights.len() != points.len() {
        return Err(Error::invalid("one weight per point is required"));
    }
    let finite = params.to_array().iter().all(|v| v.is_finite())
        && delta.is_finite()
        && delta > 0.0
        && weights.iter().all(|w| w.is_finite() && *w >= 0.0);
    if !finite {
        return Err(Error::invalid(
            "objective inputs must be finite, weights non-negative",
        ));
    }
    validate_points(points)?;
    let data = Prepared::new(points, weights);
    Ok(data.objective(&params.to_array(), delta, None))
}

fn validate_points(points: &[LossPoint]) -> Result<()> {
    for p in points {
        if !(p.n > 0.0 && p.d > 0.0 && p.loss > 0.0)
            || !(p.n.is_finite() && p.d.is_finite() && p.loss.is_finite())
        {
            return Err(Error::invalid(format!(
                "loss points need positive finite N, D and loss, got {p:?}"
            )));
        }
    }
    Ok(())
}

struct Prepared {
    ln_n: Vec<f64>,
    ln_d: Vec<f64>,
    ln_l: Vec<f64>,
    w: Vec<f64>,
}

impl Prepared {
    fn new(points: &[LossPoint], weights: &[f64]) -> Self {
        Prepared {
            ln_n: points.iter().map(|p| p.n.ln()).collect(),
            ln_d: points.iter().map(|p| p.d.ln()).collect(),
            ln_l: points.iter().map(|p| p.loss.ln()).collect(),
            w: weights.to_vec(),
        }
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Prepared {
            ln_n: idx.iter().map(|&i| self.ln_n[i]).collect(),
            ln_d: idx.iter().map(|&i| self.ln_d[i]).collect(),
            ln_l: idx.iter().map(|&i| self.ln_l[i]).collect(),
            w: idx.iter().map(|&i| self.w[i]).collect(),
        }
    }

    /// Objective value, with the gradient written to `grad` when given.
    fn objective(&self, x: &[f64], delta: f64, mut grad: Option<&mut [f64]>) -> f64 {
        let (a, b, e, alpha, beta) = (x[0], x[1], x[2], x[3], x[4]);
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut total = 0.0;
        for i in 0..self.ln_l.len() {
            let t = [a - alpha * self.ln_n[i], b - beta * self.ln_d[i], e];
            let m = t[0].max(t[1]).max(t[2]);
            let ex = [(t[0] - m).exp(), (t[1] - m).exp(), (t[2] - m).exp()];
            let z = ex[0] + ex[1] + ex[2];
            let r = m + z.ln() - self.ln_l[i];
            total += self.w[i] * huber(r, delta);
            if let Some(g) = grad.as_deref_mut() {
                let hd = self.w[i] * huber_deriv(r, delta) / z;
                g[0] += hd * ex[0];
                g[1] += hd * ex[1];
                g[2] += hd * ex[2];
                g[3] -= hd * ex[0] * self.ln_n[i];
                g[4] -= hd * ex[1] * self.ln_d[i];
            }
        }
        total
    }
}

/// Start values tried before quasi-Newton refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitGrid {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

impl Default for InitGrid {
    fn default() -> Self {
        InitGrid {
            a: steps(0.0, 10.0, 2.5),
            b: steps(0.0, 10.0, 2.5),
            e: steps(-1.0, 1.0, 0.5),
            alpha: steps(0.1, 0.6, 0.1),
            beta: steps(0.1, 0.6, 0.1),
        }
    }
}

impl InitGrid {
    pub fn len(&self) -> usize {
        self.a.len() * self.b.len() * self.e.len() * self.alpha.len() * self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `top` grid points with the lowest objective, best first.
    fn best_starts(&self, data: &Prepared, delta: f64, top: usize) -> Vec<[f64; 5]> {
        let rows = data.ln_l.len();
        // exp(a − α log N) and exp(b − β log D) per (coefficient, exponent)
        // pair, so each grid point costs one log per observation.
        let table = |coefs: &[f64], exps: &[f64], ln_x: &[f64]| -> Vec<Vec<f64>> {
            coefs
                .iter()
                .flat_map(|&c| exps.iter().map(move |&k| (c, k)))
                .map(|(c, k)| ln_x.iter().map(|&lx| (c - k * lx).exp()).collect())
                .collect()
        };
        let n_terms = table(&self.a, &self.alpha, &data.ln_n);
        let d_terms = table(&self.b, &self.beta, &data.ln_d);
        let mut scored: Vec<(f64, [f64; 5])> = Vec::with_capacity(self.len());
        for (ia, &a) in self.a.iter().enumerate() {
            for (ix, &alpha) in self.alpha.iter().enumerate() {
                let nt = &n_terms[ia * self.alpha.len() + ix];
                for (ib, &b) in self.b.iter().enumerate() {
                    for (iy, &beta) in self.beta.iter().enumerate() {
                        let dt = &d_terms[ib * self.beta.len() + iy];
                        for &e in &self.e {
                            let ee = e.exp();
                            let mut f = 0.0;
                            for i in 0..rows {
                                let r = (nt[i] + dt[i] + ee).ln() - data.ln_l[i];
                                f += data.w[i] * huber(r, delta);
                            }
                            if f.is_finite() {
                                scored.push((f, [a, b, e, alpha, beta]));
                            }
                        }
                    }
                }
            }
        }
        scored.sort_by(|x, y| x.0.total_cmp(&y.0));
        scored.into_iter().take(top).map(|(_, x)| x).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossFitOptions {
    pub huber_delta: f64,
    pub bootstrap_n: usize,
    pub seed: u64,
    /// Log10-FLOPs bins per decade for inverse-density weights; 0 disables
    /// weighting.
    pub bins_per_decade: u32,
    /// Grid starts refined with BFGS.
    pub top_starts: usize,
    pub grid: InitGrid,
}

impl Default for LossFitOptions {
    fn default() -> Self {
        LossFitOptions {
            huber_delta: 1e-3,
            bootstrap_n: 4000,
            seed: 0,
            bins_per_decade: 4,
            top_starts: 5,
            grid: InitGrid::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamInterval {
    pub name: String,
    pub estimate: f64,
    pub lo95: f64,
    pub hi95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossLawFit {
    pub metric: String,
    pub params: LossLawParams,
    #[serde(rename = "A")]
    pub coef_a: f64,
    #[serde(rename = "B")]
    pub coef_b: f64,
    #[serde(rename = "E")]
    pub coef_e: f64,
    pub huber_delta: f64,
    pub objective: f64,
    pub n_points: usize,
    /// Mean absolute residual in log-loss, the space the objective works in.
    pub fit_mae: f64,
    /// Mean absolute residual in loss units.
    pub fit_mae_loss: f64,
    pub bootstrap_seed: u64,
    pub bootstrap: Vec<LossLawParams>,
    pub bootstrap_failures: usize,
    pub intervals: Vec<ParamInterval>,
    pub warnings: Vec<String>,
}

impl LossLawFit {
    pub fn predict(&self, n: f64, d: f64) -> f64 {
        self.params.predict(n, d)
    }
}

pub fn predict_loss(fit: &LossLawFit, n: f64, d: f64) -> Result<f64> {
    if !(n > 0.0 && d > 0.0) {
        return Err(Error::invalid("N and D must be positive"));
    }
    Ok(fit.predict(n, d))
}

/// `1 / count(bin)` with bins of width `1 / bins_per_decade` in log10 FLOPs.
pub fn inverse_density_weights(flops: &[f64], bins_per_decade: u32) -> Result<Vec<f64>> {
    if flops.is_empty() {
        return Err(Error::invalid("no runs to weight"));
    }
    if bins_per_decade == 0 {
        return Ok(vec![1.0; flops.len()]);
    }
    if let Some(c) = flops.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::invalid(format!("flops must be positive, got {c}")));
    }
    let bins: Vec<i64> = flops
        .iter()
        .map(|c| (c.log10() * f64::from(bins_per_decade) + 1e-9).floor() as i64)
        .collect();
    let mut counts = std::collections::HashMap::new();
    for &b in &bins {
        *counts.entry(b).or_insert(0usize) += 1;
    }
    Ok(bins.iter().map(|b| 1.0 / counts[b] as f64).collect())
}

fn fit_once(data: &Prepared, opts: &LossFitOptions) -> Option<(LossLawParams, f64)> {
    let bopts = BfgsOptions {
        max_iter: 2000,
        ..Default::default()
    };
    let delta = opts.huber_delta;
    opts.grid
        .best_starts(data, delta, opts.top_starts.max(1))
        .into_iter()
        .map(|x0| bfgs(|x, g| data.objective(x, delta, Some(g)), &x0, &bopts))
        .filter(|m| m.converged && m.f.is_finite())
        .min_by(|p, q| p.f.total_cmp(&q.f))
        .map(|m| (LossLawParams::from_slice(&m.x), m.f))
}

/// Fits the law to explicit points with explicit weights.
pub fn fit_points(
    metric: &str,
    points: &[LossPoint],
    weights: &[f64],
    opts: &LossFitOptions,
) -> Result<LossLawFit> {
    if points.is_empty() {
        return Err(Error::invalid(format!(
            "no observations for metric {metric:?}"
        )));
    }
    if weights.len() != points.len() {
        return Err(Error::invalid("one weight per point is required"));
    }
    if !(opts.huber_delta > 0.0) {
        return Err(Error::invalid("huber delta must be positive"));
    }
    validate_points(points)?;
    let mut warnings = Vec::new();
    let span = |f: fn(&LossPoint) -> f64| {
        let (lo, hi) = points
            .iter()
            .map(f)
            .fold((f64::INFINITY, 0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi / lo
    };
    if points.len() < 6 {
        warnings.push(format!(
            "only {} runs; at least 6 recommended",
            points.len()
        ));
    }
    if span(|p| p.n) <= 10.0 || span(|p| p.d) <= 10.0 {
        warnings.push("runs span at most one decade in N or D".to_string());
    }

    let data = Prepared::new(points, weights);
    let (params, objective) = fit_once(&data, opts)
        .ok_or_else(|| Error::Optimization(format!("no start converged for metric {metric:?}")))?;

    let n = points.len();
    let refits: Vec<Option<LossLawParams>> = (0..opts.bootstrap_n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64 + 1);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            fit_once(&data.subset(&idx), opts).map(|(p, _)| p)
        })
        .collect();
    let bootstrap_failures = refits.iter().filter(|r| r.is_none()).count();
    let bootstrap: Vec<LossLawParams> = refits.into_iter().flatten().collect();
    if bootstrap_failures > 0 {
        warnings.push(format!(
            "{bootstrap_failures} bootstrap refits did not converge"
        ));
    }

    let fit_mae = points
        .iter()
        .map(|p| (params.predict(p.n, p.d).ln() - p.loss.ln()).abs())
        .sum::<f64>()
        / n as f64;
    let fit_mae_loss = points
        .iter()
        .map(|p| (params.predict(p.n, p.d) - p.loss).abs())
        .sum::<f64>()
        / n as f64;

    let named: [(&str, fn(&LossLawParams) -> f64); 8] = [
        ("a", |p| p.a),
        ("b", |p| p.b),
        ("e", |p| p.e),
        ("alpha", |p| p.alpha),
        ("beta", |p| p.beta),
        ("A", |p| p.coef_a()),
        ("B", |p| p.coef_b()),
        ("E", |p| p.coef_e()),
    ];
    let intervals = if bootstrap.is_empty() {
        Vec::new()
    } else {
        named
            .iter()
            .filter_map(|(name, get)| {
                interval95(bootstrap.iter().map(get)).map(|(lo95, hi95)| ParamInterval {
                    name: name.to_string(),
                    estimate: get(&params),
                    lo95,
                    hi95,
                })
            })
            .collect()
    };

    Ok(LossLawFit {
        metric: metric.to_string(),
        params,
        coef_a: params.coef_a(),
        coef_b: params.coef_b(),
        coef_e: params.coef_e(),
        huber_delta: opts.huber_delta,
        objective,
        n_points: n,
        fit_mae,
        fit_mae_loss,
        bootstrap_seed: opts.seed,
        bootstrap,
        bootstrap_failures,
        intervals,
        warnings,
    })
}

/// Fits the law to the runs that report `metric`, weighting runs by inverse
/// density in log-FLOPs.
pub fn fit_loss_law(runs: &[RunRecord], metric: &str, opts: &LossFitOptions) -> Result<LossLawFit> {
    let used: Vec<&RunRecord> = runs
        .iter()
        .filter(|r| r.losses.contains_key(metric))
        .collect();
    if used.is_empty() {
        return Err(Error::invalid(format!(
            "no run reports loss metric {metric:?}"
        )));
    }
    let points: Vec<LossPoint> = used
        .iter()
        .map(|r| LossPoint {
            n: r.n_params,
            d: r.tokens,
            loss: r.losses[metric],
        })
        .collect();
    let flops: Vec<f64> = used.iter().map(|r| r.flops).collect();
    let weights = inverse_density_weights(&flops, opts.bins_per_decade)?;
    fit_points(metric, &points, &weights, opts)
}

//! Optimal filtering rate as a power law of compute (or tokens), fitted to
//! the per-compute argmax over filtering-rate curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::curve::ComputeOptimalCurve;
use crate::scaling::stats::linear_fit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerLawDomain {
    Flops,
    Tokens,
}

/// `coefficient · x^exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    pub domain: PowerLawDomain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficient * x.powf(self.exponent)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterLawFit {
    pub law: PowerLawFit,
    /// Filtering rates, ascending, in percent of tokens retained.
    pub fractions: Vec<f64>,
    pub compute: Vec<f64>,
    /// `probabilities[j][i]`: share of ensemble members in which fraction i
    /// is best at grid point j.
    pub probabilities: Vec<Vec<f64>>,
    /// Most probable fraction per grid point; the law is fitted to these.
    pub optimal: Vec<f64>,
    /// Argmax of the point-estimate curves per grid point.
    pub central_optimal: Vec<f64>,
    pub members: usize,
}

/// Index of the largest value; ties go to the earliest (smallest fraction).
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Fits F_opt from `(fraction percent, curve)` pairs that share one compute
/// grid. Ensemble member k of every curve forms one joint draw; curves
/// without members count as a single draw of their point estimate.
pub fn fit_optimal_filter_law(
    curves: &[(f64, ComputeOptimalCurve)],
    domain: PowerLawDomain,
) -> Result<FilterLawFit> {
    if curves.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 filtering rates, got {}",
            curves.len()
        )));
    }
    let mut curves: Vec<&(f64, ComputeOptimalCurve)> = curves.iter().collect();
    curves.sort_by(|a, b| a.0.total_cmp(&b.0));
    if curves.windows(2).any(|w| w[0].0 == w[1].0) || curves.iter().any(|c| !(c.0 > 0.0)) {
        return Err(Error::invalid(
            "filtering rates must be positive and distinct",
        ));
    }
    let compute = curves[0].1.compute();
    for (f, c) in &curves {
        let same = c.points.len() == compute.len()
            && c.points
                .iter()
                .zip(&compute)
                .all(|(p, &x)| (p.compute - x).abs() <= 1e-9 * x);
        if !same {
            return Err(Error::invalid(format!(
                "curve for rate {f} does not share the compute grid"
            )));
        }
    }
    let fractions: Vec<f64> = curves.iter().map(|c| c.0).collect();
    let members = curves.iter().map(|c| c.1.members.len()).min().unwrap_or(0);

    let central_optimal: Vec<f64> = (0..compute.len())
        .map(|j| fractions[argmax(curves.iter().map(|c| c.1.points[j].value))])
        .collect();
    let mut probabilities = Vec::with_capacity(compute.len());
    let mut optimal = Vec::with_capacity(compute.len());
    for j in 0..compute.len() {
        let mut counts = vec![0usize; fractions.len()];
        if members == 0 {
            counts[argmax(curves.iter().map(|c| c.1.points[j].value))] += 1;
        } else {
            for k in 0..members {
                counts[argmax(curves.iter().map(|c| c.1.members[k][j]))] += 1;
            }
        }
        let draws = members.max(1) as f64;
        let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws).collect();
        optimal.push(fractions[argmax(probs.iter().copied())]);
        probabilities.push(probs);
    }

    let mut distinct = optimal.clone();
    distinct.dedup();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let law = if distinct.len() < 2 {
        PowerLawFit {
            coefficient: distinct[0],
            exponent: 0.0,
            domain,
            warning: Some(format!(
                "rate {} is optimal everywhere; exponent is not identifiable",
                distinct[0]
            )),
        }
    } else {
        let x: Vec<f64> = compute.iter().map(|c| c.log10()).collect();
        let y: Vec<f64> = optimal.iter().map(|f| f.log10()).collect();
        let (c0, slope) = linear_fit(&x, &y)
            .ok_or_else(|| Error::invalid("compute grid has a single distinct value"))?;
        PowerLawFit {
            coefficient: 10f64.powf(c0),
            exponent: slope,
            domain,
            warning: None,
        }
    };
    Ok(FilterLawFit {
        law,
        fractions,
        compute,
        probabilities,
        optimal,
        central_optimal,
        members,
    })
}

/// Best observed rate at each compute value that several rates were trained
/// at: `observations` holds `(rate, compute, accuracy)`. Compute values
/// within a relative 1e-9 are treated as equal.
pub fn best_observed(observations: &[(f64, f64, f64)]) -> Vec<(f64, f64)> {
    let mut obs: Vec<(f64, f64, f64)> = observations.to_vec();
    obs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let mut out = Vec::new();
    let mut i = 0;
    while i < obs.len() {
        let c = obs[i].1;
        let mut j = i;
        let mut best = obs[i];
        while j < obs.len() && (obs[j].1 - c).abs() <= 1e-9 * c {
            if obs[j].2 > best.2 {
                best = obs[j];
            }
            j += 1;
        }
        out.push((c, best.0));
        i = j;
    }
    out
}

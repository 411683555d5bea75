//! Compute multipliers: how much more compute a baseline needs to match a
//! method's predicted accuracy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::curve::ComputeOptimalCurve;

/// Default accuracy bin width: a quarter of an accuracy point.
pub const DEFAULT_BIN_WIDTH: f64 = 0.0025;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierBin {
    pub acc_lo: f64,
    pub acc_hi: f64,
    pub method_flops: f64,
    pub baseline_flops: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComputeMultiplier {
    pub method: String,
    pub baseline: String,
    pub bin_width: f64,
    pub multiplier: f64,
    pub bins: Vec<MultiplierBin>,
}

/// Geometric-mean compute of each accuracy bin.
fn binned(curve: &ComputeOptimalCurve, width: f64) -> BTreeMap<i64, f64> {
    let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for p in &curve.points {
        if p.value.is_finite() && p.compute > 0.0 {
            let e = acc.entry((p.value / width).floor() as i64).or_default();
            e.0 += p.compute.ln();
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(b, (s, n))| (b, (s / n as f64).exp()))
        .collect()
}

/// Mean over shared accuracy bins of baseline FLOPs / method FLOPs, where a
/// bin's FLOPs is the geometric mean over the curve's points falling in it.
pub fn compute_multiplier(
    method: &ComputeOptimalCurve,
    baseline: &ComputeOptimalCurve,
    bin_width: f64,
) -> Result<ComputeMultiplier> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::invalid("bin width must be positive"));
    }
    let m = binned(method, bin_width);
    let b = binned(baseline, bin_width);
    let bins: Vec<MultiplierBin> = m
        .iter()
        .filter_map(|(k, &mf)| {
            let bf = *b.get(k)?;
            Some(MultiplierBin {
                acc_lo: *k as f64 * bin_width,
                acc_hi: (*k + 1) as f64 * bin_width,
                method_flops: mf,
                baseline_flops: bf,
                ratio: bf / mf,
            })
        })
        .collect();
    if bins.len() < 3 {
        return Err(Error::invalid(format!(
            "curves {:?} and {:?} share {} accuracy bins, need at least 3",
            method.name,
            baseline.name,
            bins.len()
        )));
    }
    let multiplier = bins.iter().map(|b| b.ratio).sum::<f64>() / bins.len() as f64;
    Ok(ComputeMultiplier {
        method: method.name.clone(),
        baseline: baseline.name.clone(),
        bin_width,
        multiplier,
        bins,
    })
}

/// `matrix[i][j]` = multiplier of curve i against baseline j; `None` where
/// the curves do not overlap enough.
pub fn multiplier_matrix(curves: &[ComputeOptimalCurve], bin_width: f64) -> Vec<Vec<Option<f64>>> {
    curves
        .iter()
        .map(|m| {
            curves
                .iter()
                .map(|b| {
                    compute_multiplier(m, b, bin_width)
                        .ok()
                        .map(|r| r.multiplier)
                })
                .collect()
        })
        .collect()
}

//! Compute-optimal curves: loss or mean accuracy along N_opt(C), D = C/6N,
//! with bootstrap bands.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::loss_law::LossLawFit;
use crate::scaling::sigmoid::{mean_accuracy, BenchmarkModel};
use crate::scaling::stats::interval95;

/// `points` values log-spaced over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && points >= 1) {
        return Err(Error::invalid(format!(
            "bad log grid [{lo}, {hi}] x {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect())
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Loss,
    Accuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub compute: f64,
    /// NaN when the curve was built from bare samples; stored as null.
    #[serde(with = "nan_as_null")]
    pub n_opt: f64,
    #[serde(with = "nan_as_null")]
    pub d_opt: f64,
    #[serde(with = "nan_as_null")]
    pub value: f64,
    pub lo95: Option<f64>,
    pub hi95: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComputeOptimalCurve {
    pub name: String,
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
    /// `members[k][j]`: bootstrap member k's value at grid point j.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<Vec<f64>>,
}

impl ComputeOptimalCurve {
    /// A curve from bare `(compute, value)` samples, without N/D detail.
    pub fn from_samples(name: &str, kind: CurveKind, samples: &[(f64, f64)]) -> Self {
        ComputeOptimalCurve {
            name: name.to_string(),
            kind,
            points: samples
                .iter()
                .map(|&(compute, value)| CurvePoint {
                    compute,
                    n_opt: f64::NAN,
                    d_opt: f64::NAN,
                    value,
                    lo95: None,
                    hi95: None,
                })
                .collect(),
            members: Vec::new(),
        }
    }

    pub fn compute(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.compute).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    fn attach_members(&mut self, members: Vec<Vec<f64>>) {
        for (j, p) in self.points.iter_mut().enumerate() {
            if let Some((lo, hi)) = interval95(members.iter().map(|m| m[j])) {
                p.lo95 = Some(lo);
                p.hi95 = Some(hi);
            }
        }
        self.members = members;
    }

    /// Plot-ready CSV: compute, value, lo95, hi95, n_opt, d_opt.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["compute", "value", "lo95", "hi95", "n_opt", "d_opt"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let num = |x: f64| {
            if x.is_finite() {
                x.to_string()
            } else {
                String::new()
            }
        };
        for p in &self.points {
            w.write_record([
                p.compute.to_string(),
                p.value.to_string(),
                opt(p.lo95),
                opt(p.hi95),
                num(p.n_opt),
                num(p.d_opt),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loss along the compute-optimal path of `fit`.
pub fn loss_curve(fit: &LossLawFit, grid: &[f64]) -> Result<ComputeOptimalCurve> {
    check_grid(grid)?;
    let points = grid
        .iter()
        .map(|&c| {
            let n = fit.params.n_opt(c);
            let d = c / (6.0 * n);
            CurvePoint {
                compute: c,
                n_opt: n,
                d_opt: d,
                value: fit.params.predict(n, d),
                lo95: None,
                hi95: None,
            }
        })
        .collect();
    let members = fit
        .bootstrap
        .iter()
        .map(|p| {
            grid.iter()
                .map(|&c| {
                    let n = p.n_opt(c);
                    p.predict(n, c / (6.0 * n))
                })
                .collect()
        })
        .collect();
    let mut curve = ComputeOptimalCurve {
        name: fit.metric.clone(),
        kind: CurveKind::Loss,
        points,
        members: Vec::new(),
    };
    curve.attach_members(members);
    Ok(curve)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::invalid(
            "compute grid must be non-empty and positive",
        ));
    }
    Ok(())
}

/// Mean accuracy over `benchmarks` along the compute-optimal path of the
/// `reference` loss law. Bootstrap member k pairs member k of every fit.
pub fn accuracy_curve(
    name: &str,
    reference: &LossLawFit,
    models: &BTreeMap<String, BenchmarkModel>,
    benchmarks: &[String],
    grid: &[f64],
) -> Result<ComputeOptimalCurve> {
    check_grid(grid)?;
    let mut points = Vec::with_capacity(grid.len());
    for &c in grid {
        let n = reference.params.n_opt(c);
        let d = c / (6.0 * n);
        points.push(CurvePoint {
            compute: c,
            n_opt: n,
            d_opt: d,
            value: mean_accuracy(models, benchmarks, n, d)?,
            lo95: None,
            hi95: None,
        });
    }
    let members_n = benchmarks
        .iter()
        .map(|b| models[b].members())
        .min()
        .unwrap_or(0)
        .min(reference.bootstrap.len());
    let members = (0..members_n)
        .map(|k| {
            let p = &reference.bootstrap[k];
            grid.iter()
                .map(|&c| {
                    let n = p.n_opt(c);
                    let d = c / (6.0 * n);
                    benchmarks
                        .iter()
                        .map(|b| models[b].predict_member(k, n, d).unwrap_or(f64::NAN))
                        .sum::<f64>()
                        / benchmarks.len() as f64
                })
                .collect()
        })
        .collect();
    let mut curve = ComputeOptimalCurve {
        name: name.to_string(),
        kind: CurveKind::Accuracy,
        points,
        members: Vec::new(),
    };
    curve.attach_members(members);
    Ok(curve)
}

//! Evaluation metrics for ordinal predictions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textmodel::{label_to_score, LabelSpec, Prediction, TaskKind};

/// Metric names in reporting order.
pub const METRIC_NAMES: [&str; 9] = [
    "accuracy",
    "precision_micro",
    "recall_micro",
    "f1_micro",
    "precision_macro",
    "recall_macro",
    "f1_macro",
    "pearson",
    "qwk",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_lengths(preds: usize, golds: usize) -> Result<()> {
    if preds != golds {
        return Err(Error::LengthMismatch { preds, golds });
    }
    if preds == 0 {
        return Err(Error::EmptyEval);
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(preds: &[i64], golds: &[i64]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(ratio(hits, preds.len()))
}

/// Precision, recall and F1. Macro averaging runs over the classes present in
/// either sequence; a per-class score with a zero denominator counts as 0.
pub fn prf1(preds: &[i64], golds: &[i64], averaging: Averaging) -> Result<Prf1> {
    check_lengths(preds.len(), golds.len())?;
    let classes: BTreeSet<i64> = preds.iter().chain(golds).copied().collect();
    let mut tp = BTreeMap::<i64, usize>::new();
    let mut fp = BTreeMap::<i64, usize>::new();
    let mut fneg = BTreeMap::<i64, usize>::new();
    for (&p, &g) in preds.iter().zip(golds) {
        if p == g {
            *tp.entry(p).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fneg.entry(g).or_default() += 1;
        }
    }
    let get = |m: &BTreeMap<i64, usize>, c: i64| m.get(&c).copied().unwrap_or(0);
    match averaging {
        Averaging::Micro => {
            let t: usize = tp.values().sum();
            let f: usize = fp.values().sum();
            let n: usize = fneg.values().sum();
            Ok(Prf1 {
                precision: ratio(t, t + f),
                recall: ratio(t, t + n),
                f1: ratio(2 * t, 2 * t + f + n),
            })
        }
        Averaging::Macro => {
            let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
            for &c in &classes {
                let (t, f, n) = (get(&tp, c), get(&fp, c), get(&fneg, c));
                let p = ratio(t, t + f);
                let r = ratio(t, t + n);
                ps += p;
                rs += r;
                fs += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            }
            let k = classes.len() as f64;
            Ok(Prf1 {
                precision: ps / k,
                recall: rs / k,
                f1: fs / k,
            })
        }
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            preds: xs.len(),
            golds: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::EmptyEval);
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::ZeroVariance);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Quadratic weighted kappa over the labels of `spec`, with gold labels on the
/// rows of the observed matrix. Returns 1 when the expected disagreement is 0.
pub fn qwk(preds: &[i64], golds: &[i64], spec: LabelSpec) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    let k = spec.len();
    let mut observed = vec![vec![0.0f64; k]; k];
    for (&p, &g) in preds.iter().zip(golds) {
        observed[spec.index_of(g)?][spec.index_of(p)?] += 1.0;
    }
    let rows: Vec<f64> = observed.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..k).map(|j| observed.iter().map(|r| r[j]).sum()).collect();
    let n = preds.len() as f64;
    // The 1/(K-1)^2 weight normalization cancels in the ratio; integer squared
    // distances keep both sums exact for realistic sizes.
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = (i as f64 - j as f64).powi(2);
            num += w * observed[i][j];
            den += w * rows[i] * cols[j];
        }
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - num * n / den)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Present metrics in [`METRIC_NAMES`] order.
    pub fn ordered(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        METRIC_NAMES
            .iter()
            .filter_map(|&name| self.get(name).map(|v| (name, v)))
    }
}

/// All metrics for a set of predictions. Labels come from the converted
/// predictions; Pearson uses raw scores for regression and the embedded labels
/// for classification. An undefined Pearson is dropped with a warning.
pub fn evaluate_all(
    preds: &[Prediction],
    golds: &[i64],
    task: TaskKind,
    spec: LabelSpec,
) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    let labels: Vec<i64> = preds.iter().map(|p| p.label).collect();
    let mut report = MetricReport {
        n: preds.len(),
        ..MetricReport::default()
    };
    let mut put = |name: &str, v: f64| {
        report.metrics.insert(name.to_string(), v);
    };
    put("accuracy", accuracy(&labels, golds)?);
    let micro = prf1(&labels, golds, Averaging::Micro)?;
    put("precision_micro", micro.precision);
    put("recall_micro", micro.recall);
    put("f1_micro", micro.f1);
    let mac = prf1(&labels, golds, Averaging::Macro)?;
    put("precision_macro", mac.precision);
    put("recall_macro", mac.recall);
    put("f1_macro", mac.f1);
    put("qwk", qwk(&labels, golds, spec)?);

    let pred_scores: Vec<f64> = match task {
        TaskKind::Regression => preds.iter().map(|p| p.score).collect(),
        TaskKind::Classification => labels
            .iter()
            .map(|&l| label_to_score(l, spec))
            .collect::<Result<_>>()?,
    };
    let gold_scores: Vec<f64> = golds.iter().map(|&g| g as f64).collect();
    match pearson(&pred_scores, &gold_scores) {
        Ok(r) => {
            report.metrics.insert("pearson".into(), r);
        }
        Err(e @ (Error::ZeroVariance | Error::EmptyEval)) => {
            report.warnings.push(format!("pearson omitted: {e}"));
        }
        Err(e) => return Err(e),
    }
    Ok(report)
}

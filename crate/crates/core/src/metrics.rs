//! Classification and calibration metrics.
//!
//! Calibration bins cover the confidence interval `[0.5, 1]` of a binary
//! classifier with `M` equal-width bins; the last bin is closed on the right.
//! A sample's predicted label is 1 iff `p ≥ 0.5` and its confidence is
//! `max(p, 1 − p)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_KDE_BANDWIDTH: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mut m = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == 1, p == 1) {
            (true, true) => m.tp += 1,
            (false, true) => m.fp += 1,
            (true, false) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn class_prf(tp: usize, fp: usize, fn_: usize) -> Prf {
    let (tp, fp, fn_) = (tp as f64, fp as f64, fn_ as f64);
    let precision = safe_div(tp, tp + fp);
    let recall = safe_div(tp, tp + fn_);
    Prf {
        precision,
        recall,
        f1: safe_div(2.0 * precision * recall, precision + recall),
    }
}

/// Precision, recall and F1 for each class, from a confusion matrix:
/// `(negative class, positive class)`.
pub fn per_class(m: &ConfusionMatrix) -> (Prf, Prf) {
    (class_prf(m.tn, m.fn_, m.fp), class_prf(m.tp, m.fp, m.fn_))
}

pub fn prf_from_confusion(m: &ConfusionMatrix) -> Prf {
    let (neg, pos) = per_class(m);
    Prf {
        precision: (neg.precision + pos.precision) / 2.0,
        recall: (neg.recall + pos.recall) / 2.0,
        f1: (neg.f1 + pos.f1) / 2.0,
    }
}

/// Macro average over the two classes.
pub fn prf_macro(y_true: &[u8], y_pred: &[u8]) -> Result<Prf> {
    if y_true.is_empty() {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    Ok(prf_from_confusion(&confusion(y_true, y_pred)?))
}

pub fn to_confidence(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.max(1.0 - p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub edge_lo: f64,
    pub edge_hi: f64,
    pub count: usize,
    /// 0 for an empty bin.
    pub accuracy: f64,
    /// Mean confidence; 0 for an empty bin.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub total: usize,
    pub ece: f64,
    pub mce: f64,
}

/// Lower edge of bin `m` (and upper edge of bin `m − 1`).
pub fn bin_edge(m: usize, bins: usize) -> f64 {
    if m == bins {
        1.0
    } else {
        0.5 + 0.5 * m as f64 / bins as f64
    }
}

/// Bin holding confidence `c ∈ [0.5, 1]`: the last bin whose lower edge is ≤ c.
pub fn bin_index(c: f64, bins: usize) -> usize {
    let guess = (((c - 0.5) / 0.5) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
    let mut m = guess;
    while m + 1 < bins && c >= bin_edge(m + 1, bins) {
        m += 1;
    }
    while m > 0 && c < bin_edge(m, bins) {
        m -= 1;
    }
    m
}

pub fn calibration(probs: &[f64], y_true: &[u8], bins: usize) -> Result<CalibrationReport> {
    check_lengths(probs.len(), y_true.len())?;
    if bins == 0 {
        return Err(Error::invalid("number of calibration bins must be at least 1"));
    }
    if probs.is_empty() {
        return Err(Error::invalid("calibration needs at least one sample"));
    }
    let mut count = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    for (&p, &y) in probs.iter().zip(y_true) {
        let c = to_confidence(p)?;
        let m = bin_index(c, bins);
        count[m] += 1;
        conf_sum[m] += c;
        if u8::from(p >= 0.5) == y {
            correct[m] += 1;
        }
    }
    let n = probs.len() as f64;
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    let mut out = Vec::with_capacity(bins);
    for m in 0..bins {
        let (accuracy, confidence) = if count[m] == 0 {
            (0.0, 0.0)
        } else {
            let k = count[m] as f64;
            let gap_acc = correct[m] as f64 / k;
            let gap_conf = conf_sum[m] / k;
            let gap = (gap_acc - gap_conf).abs();
            ece += k / n * gap;
            mce = mce.max(gap);
            (gap_acc, gap_conf)
        };
        out.push(CalibrationBin {
            edge_lo: bin_edge(m, bins),
            edge_hi: bin_edge(m + 1, bins),
            count: count[m],
            accuracy,
            confidence,
        });
    }
    Ok(CalibrationReport {
        bins: out,
        total: probs.len(),
        ece,
        mce,
    })
}

/// Writes `edge_lo,edge_hi,count,accuracy,confidence,empty` rows in bin order,
/// prefixed by `subtask` when given.
pub fn reliability_export(
    report: &CalibrationReport,
    subtask: Option<&str>,
    writer: &mut csv::Writer<impl Write>,
    with_header: bool,
) -> Result<()> {
    let wrap = |e: csv::Error| Error::invalid(e.to_string());
    if with_header {
        let mut header = Vec::new();
        if subtask.is_some() {
            header.push("subtask");
        }
        header.extend(["edge_lo", "edge_hi", "count", "accuracy", "confidence", "empty"]);
        writer.write_record(&header).map_err(wrap)?;
    }
    for b in &report.bins {
        let mut rec: Vec<String> = Vec::new();
        if let Some(s) = subtask {
            rec.push(s.to_string());
        }
        rec.extend([
            b.edge_lo.to_string(),
            b.edge_hi.to_string(),
            b.count.to_string(),
            b.accuracy.to_string(),
            b.confidence.to_string(),
            u8::from(b.count == 0).to_string(),
        ]);
        writer.write_record(&rec).map_err(wrap)?;
    }
    Ok(())
}

/// Gaussian kernel density estimate at each query point.
pub fn kde_gaussian(samples: &[f64], bandwidth: f64, queries: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::invalid("kernel density estimate needs at least one sample"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let two_h2 = 2.0 * bandwidth * bandwidth;
    Ok(queries
        .iter()
        .map(|q| {
            norm * samples
                .iter()
                .map(|s| (-(q - s) * (q - s) / two_h2).exp())
                .sum::<f64>()
        })
        .collect())
}

/// `lo, lo + step, …` up to and including `hi` (within rounding).
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prf_cases() {
        let perfect = prf_macro(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

        let y_true = [1u8, 0, 1, 0];
        let y_pred = [1u8, 1, 0, 0];
        let m = confusion(&y_true, &y_pred).unwrap();
        assert_eq!(m, ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let (neg, pos) = per_class(&m);
        for c in [neg, pos] {
            assert_eq!((c.precision, c.recall, c.f1), (0.5, 0.5, 0.5));
        }
        assert_eq!(prf_macro(&y_true, &y_pred).unwrap().f1, 0.5);

        // all negative predictions: positive F1 is 0 by convention
        let y_true = [1u8, 0, 0, 0];
        let r = prf_macro(&y_true, &[0, 0, 0, 0]).unwrap();
        let neg_f1 = 2.0 * 0.75 * 1.0 / 1.75;
        assert!((r.f1 - neg_f1 / 2.0).abs() < 1e-15);

        assert!(prf_macro(&[1], &[1, 0]).is_err());
        assert!(prf_macro(&[], &[]).is_err());
    }

    #[test]
    fn confusion_cases() {
        let m = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((m.fp, m.fn_), (0, 0));
        let m = confusion(&[1, 0, 1, 0], &[1, 1, 1, 1]).unwrap();
        assert_eq!((m.fn_, m.tn), (0, 0));
        assert_eq!(m.total(), 4);
    }

    #[test]
    fn confidence_transform() {
        assert_eq!(to_confidence(0.5).unwrap(), 0.5);
        assert_eq!(to_confidence(0.2).unwrap(), 0.8);
        assert_eq!(to_confidence(0.9).unwrap(), 0.9);
        assert!(to_confidence(1.1).is_err());
        assert!(to_confidence(-0.1).is_err());
    }

    #[test]
    fn hand_calibration_case() {
        // (p, correct) = (0.6,yes) (0.7,no) (0.9,yes) (0.8,yes)
        let probs = [0.6, 0.7, 0.9, 0.8];
        let y = [1u8, 0, 1, 1];
        let r = calibration(&probs, &y, 2).unwrap();
        assert_eq!(r.bins[0].count, 2);
        assert_eq!(r.bins[0].accuracy, 0.5);
        assert!((r.bins[0].confidence - 0.65).abs() < 1e-15);
        assert_eq!(r.bins[1].accuracy, 1.0);
        assert!((r.bins[1].confidence - 0.85).abs() < 1e-15);
        assert!((r.ece - 0.15).abs() < 1e-15);
        assert!((r.mce - 0.15).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_single_sample() {
        let r = calibration(&[1.0, 1.0, 0.0], &[1, 1, 0], 10).unwrap();
        assert_eq!((r.ece, r.mce), (0.0, 0.0));
        let r = calibration(&[0.99, 1.0, 0.995], &[1, 1, 1], 10).unwrap();
        assert!(r.ece <= 0.01 && r.mce <= 0.01);
        let r = calibration(&[0.9], &[0], 10).unwrap();
        assert!((r.ece - 0.9).abs() < 1e-15);
        assert!((r.mce - 0.9).abs() < 1e-15);
        assert!(calibration(&[0.5], &[1], 0).is_err());
        assert!(calibration(&[0.5, 0.2], &[1], 3).is_err());
    }

    #[test]
    fn bin_edges_and_export() {
        let r = calibration(&[0.5, 0.52, 1.0, 0.74], &[1, 1, 1, 0], 10).unwrap();
        assert_eq!(r.bins.len(), 10);
        let expected: Vec<f64> = (0..=10).map(|i| 0.5 + 0.05 * i as f64).collect();
        for (m, b) in r.bins.iter().enumerate() {
            assert!((b.edge_lo - expected[m]).abs() < 1e-12);
            assert!((b.edge_hi - expected[m + 1]).abs() < 1e-12);
        }
        assert_eq!(r.bins[9].count, 1);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 4);

        let mut w = csv::Writer::from_writer(Vec::new());
        reliability_export(&r, None, &mut w, true).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "edge_lo,edge_hi,count,accuracy,confidence,empty");
        assert!(lines[2].ends_with(",0,0,0,1"));
    }

    #[test]
    fn bin_index_is_edge_consistent() {
        for bins in 1..=20 {
            for m in 0..bins {
                let lo = bin_edge(m, bins);
                assert_eq!(bin_index(lo, bins), m);
            }
            assert_eq!(bin_index(1.0, bins), bins - 1);
            assert_eq!(bin_index(0.5, bins), 0);
        }
    }

    #[test]
    fn kde_cases() {
        let d = kde_gaussian(&[0.5], 0.08, &[0.5]).unwrap();
        assert!((d[0] - 1.0 / (0.08 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-12);
        assert!((d[0] - 4.98677).abs() < 1e-5);
        let far = kde_gaussian(&[0.0, 0.1], 0.08, &[0.1 + 0.81]).unwrap();
        assert!(far[0] < 1e-20);
        assert!(kde_gaussian(&[], 0.1, &[0.0]).is_err());
        assert!(kde_gaussian(&[0.0], 0.0, &[0.0]).is_err());

        let samples = [0.05, 0.1, 0.12, 0.4, 0.93];
        let xs = grid(-1.0, 2.0, 0.001);
        let ys = kde_gaussian(&samples, 0.08, &xs).unwrap();
        let integral: f64 = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum();
        assert!((integral - 1.0).abs() < 1e-3);
        assert_eq!(grid(0.0, 1.0, 0.005).len(), 201);
    }

    proptest! {
        #[test]
        fn ece_bounded_by_mce(
            data in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200),
            bins in 1usize..=20,
        ) {
            let probs: Vec<f64> = data.iter().map(|d| d.0).collect();
            let y: Vec<u8> = data.iter().map(|d| u8::from(d.1)).collect();
            let r = calibration(&probs, &y, bins).unwrap();
            prop_assert!(r.ece <= r.mce + 1e-15);
            prop_assert!(r.mce <= 1.0);
            prop_assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), probs.len());
        }

        #[test]
        fn prf_matches_confusion_and_is_permutation_invariant(
            data in proptest::collection::vec((any::<bool>(), any::<bool>(), 0.0f64..=1.0), 1..100),
            rot in 0usize..100,
        ) {
            let t: Vec<u8> = data.iter().map(|d| u8::from(d.0)).collect();
            let p: Vec<u8> = data.iter().map(|d| u8::from(d.1)).collect();
            let pr: Vec<f64> = data.iter().map(|d| d.2).collect();
            let a = prf_macro(&t, &p).unwrap();
            prop_assert_eq!(a, prf_from_confusion(&confusion(&t, &p).unwrap()));
            let k = rot % t.len();
            let (mut t2, mut p2, mut pr2) = (t.clone(), p.clone(), pr.clone());
            t2.rotate_left(k);
            p2.rotate_left(k);
            pr2.rotate_left(k);
            prop_assert_eq!(confusion(&t, &p).unwrap(), confusion(&t2, &p2).unwrap());
            let c1 = calibration(&pr, &t, 7).unwrap();
            let c2 = calibration(&pr2, &t2, 7).unwrap();
            prop_assert_eq!(c1.bins.iter().map(|b| b.count).collect::<Vec<_>>(), c2.bins.iter().map(|b| b.count).collect::<Vec<_>>());
            prop_assert!((c1.ece - c2.ece).abs() < 1e-12);
            prop_assert!((c1.mce - c2.mce).abs() < 1e-12);
        }
    }
}

//! Multiclass evaluation metrics from a confusion matrix: accuracy, macro
//! precision/recall/F1, misclassification-indicator MAE/MSE/RMSE, Matthews
//! correlation, Cohen's kappa and the classification success index, plus an
//! independent direct-counting oracle used by the test suites.
//!
//! Conventions, applied identically in the main path and the oracle:
//! per-class values with an undefined (0/0) denominator contribute 0 to
//! macro averages and raise a structured warning; degenerate multiclass
//! MCC/kappa likewise report 0 with a warning inside [`full_report`], while
//! the direct [`kappa`] call surfaces `DegenerateMarginals` as an error.

use crate::error::MetricsError;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

/// K x K count matrix; rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    k: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Self, MetricsError> {
        if y_true.len() != y_pred.len() {
            return Err(MetricsError::LengthMismatch { true_len: y_true.len(), pred_len: y_pred.len() });
        }
        let mut counts = vec![vec![0u64; k]; k];
        for (i, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
            if t >= k {
                return Err(MetricsError::LabelOutOfRange { index: i, label: t, k });
            }
            if p >= k {
                return Err(MetricsError::LabelOutOfRange { index: i, label: p, k });
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { counts, k })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let k = counts.len();
        for row in &counts {
            if row.len() != k {
                return Err(MetricsError::RaggedMatrix(k));
            }
        }
        Ok(ConfusionMatrix { counts, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.counts[i][j]).sum()
    }
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// Per-class TP/FP/FN/TN by one-vs-rest reduction.
pub fn class_stats(cm: &ConfusionMatrix) -> Vec<ClassStats> {
    let total = cm.total();
    (0..cm.k())
        .map(|k| {
            let tp = cm.count(k, k);
            let fp = cm.col_sum(k) - tp;
            let fn_ = cm.row_sum(k) - tp;
            let tn = total - tp - fp - fn_;
            ClassStats { tp, fp, fn_, tn }
        })
        .collect()
}

/// A structured note that a per-class or aggregate value was undefined and
/// defaulted to 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricWarning {
    pub metric: String,
    pub class_index: Option<usize>,
    pub message: String,
}

fn warn(metric: &str, class_index: Option<usize>, message: &str) -> MetricWarning {
    MetricWarning { metric: metric.into(), class_index, message: message.into() }
}

/// Which aggregation produced a headline MCC/kappa value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Unweighted mean of the per-class binary formula.
    MacroBinary,
    /// Generalized multiclass form over the full matrix.
    Multiclass,
}

/// trace / total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

pub fn per_class_precision(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    class_stats(cm).iter().map(|s| ratio(s.tp, s.tp + s.fp)).collect()
}

pub fn per_class_recall(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    class_stats(cm).iter().map(|s| ratio(s.tp, s.tp + s.fn_)).collect()
}

pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    per_class_precision(cm)
        .iter()
        .zip(per_class_recall(cm))
        .map(|(p, r)| match (p, r) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        })
        .collect()
}

fn macro_of(values: &[Option<f64>], metric: &str, warnings: &mut Vec<MetricWarning>) -> f64 {
    let mut sum = 0.0;
    for (k, v) in values.iter().enumerate() {
        match v {
            Some(v) => sum += v,
            None => warnings.push(warn(metric, Some(k), "undefined (0/0); counted as 0")),
        }
    }
    sum / values.len() as f64
}

/// Unweighted macro average of per-class precision.
pub fn macro_precision(cm: &ConfusionMatrix, warnings: &mut Vec<MetricWarning>) -> f64 {
    macro_of(&per_class_precision(cm), "precision", warnings)
}

/// Unweighted macro average of per-class recall.
pub fn macro_recall(cm: &ConfusionMatrix, warnings: &mut Vec<MetricWarning>) -> f64 {
    macro_of(&per_class_recall(cm), "recall", warnings)
}

/// Mean of per-class F1 (not the F1 of mean precision/recall).
pub fn macro_f1(cm: &ConfusionMatrix, warnings: &mut Vec<MetricWarning>) -> f64 {
    macro_of(&per_class_f1(cm), "f1", warnings)
}

/// MAE/MSE/RMSE on the misclassification indicator e_i = [pred_i != true_i]:
/// mae = mse = mean(e), rmse = sqrt(mean(e)).
pub fn error_metrics(y_true: &[usize], y_pred: &[usize]) -> Result<(f64, f64, f64), MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch { true_len: y_true.len(), pred_len: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let errors = y_true.iter().zip(y_pred).filter(|(t, p)| t != p).count();
    let rate = errors as f64 / y_true.len() as f64;
    Ok((rate, rate, rate.sqrt()))
}

fn binary_mcc(s: &ClassStats) -> Option<f64> {
    let den = (s.tp + s.fp) as f64 * (s.tp + s.fn_) as f64 * (s.tn + s.fp) as f64 * (s.tn + s.fn_) as f64;
    if den == 0.0 {
        return None;
    }
    Some((s.tp as f64 * s.tn as f64 - s.fp as f64 * s.fn_ as f64) / den.sqrt())
}

fn binary_kappa(s: &ClassStats) -> Option<f64> {
    let n = (s.tp + s.fp + s.fn_ + s.tn) as f64;
    if n == 0.0 {
        return None;
    }
    let po = (s.tp + s.tn) as f64 / n;
    let pe = ((s.tp + s.fp) as f64 * (s.tp + s.fn_) as f64 + (s.tn + s.fp) as f64 * (s.tn + s.fn_) as f64) / (n * n);
    if (1.0 - pe).abs() < f64::EPSILON {
        return None;
    }
    Some((po - pe) / (1.0 - pe))
}

/// Matthews correlation coefficient under the chosen aggregation.
/// Undefined denominators yield 0 plus a warning.
pub fn mcc(cm: &ConfusionMatrix, variant: Aggregation, warnings: &mut Vec<MetricWarning>) -> f64 {
    match variant {
        Aggregation::MacroBinary => {
            let vals: Vec<Option<f64>> = class_stats(cm).iter().map(binary_mcc).collect();
            macro_of(&vals, "mcc_macro_binary", warnings)
        }
        Aggregation::Multiclass => {
            let n = cm.total() as f64;
            let c = cm.trace() as f64;
            let mut tp_sum = 0.0;
            let mut pp = 0.0;
            let mut tt = 0.0;
            for k in 0..cm.k() {
                let t = cm.row_sum(k) as f64;
                let p = cm.col_sum(k) as f64;
                tp_sum += t * p;
                pp += p * p;
                tt += t * t;
            }
            let den = ((n * n - pp) * (n * n - tt)).sqrt();
            if den == 0.0 {
                warnings.push(warn("mcc_multiclass", None, "degenerate marginals; counted as 0"));
                return 0.0;
            }
            (c * n - tp_sum) / den
        }
    }
}

/// Cohen's kappa under the chosen aggregation. The multiclass form errors
/// with `DegenerateMarginals` when expected agreement is 1.
pub fn kappa(cm: &ConfusionMatrix, variant: Aggregation, warnings: &mut Vec<MetricWarning>) -> Result<f64, MetricsError> {
    match variant {
        Aggregation::MacroBinary => {
            let vals: Vec<Option<f64>> = class_stats(cm).iter().map(binary_kappa).collect();
            Ok(macro_of(&vals, "kappa_macro_binary", warnings))
        }
        Aggregation::Multiclass => {
            let n = cm.total() as f64;
            if n == 0.0 {
                return Err(MetricsError::EmptyMatrix);
            }
            let po = cm.trace() as f64 / n;
            let pe: f64 = (0..cm.k()).map(|k| cm.row_sum(k) as f64 * cm.col_sum(k) as f64).sum::<f64>() / (n * n);
            if (1.0 - pe).abs() < f64::EPSILON {
                return Err(MetricsError::DegenerateMarginals);
            }
            Ok((po - pe) / (1.0 - pe))
        }
    }
}

/// Macro classification success index: mean of per-class TP/(TP+FP+FN).
pub fn csi(cm: &ConfusionMatrix, warnings: &mut Vec<MetricWarning>) -> f64 {
    let vals: Vec<Option<f64>> = class_stats(cm).iter().map(|s| ratio(s.tp, s.tp + s.fp + s.fn_)).collect();
    macro_of(&vals, "csi", warnings)
}

/// Argmax with lowest-index tie break.
pub fn argmax_row(row: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Per-class block of the serialized report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerClassReport {
    pub class: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub csi: f64,
    pub mcc_binary: f64,
    pub kappa_binary: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VariantPair {
    pub macro_binary: f64,
    pub multiclass: f64,
}

/// Which aggregation each headline number uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantInfo {
    pub mcc: Aggregation,
    pub kappa: Aggregation,
    pub csi: String,
}

/// Machine-readable comparison of the chance-corrected metrics against
/// accuracy. Some published summaries print MCC/kappa/CSI values that simply
/// track accuracy; these booleans let a consumer detect mechanically that the
/// standard formulas here do not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceFlags {
    pub mcc_tracks_accuracy: bool,
    pub kappa_tracks_accuracy: bool,
    pub csi_tracks_accuracy: bool,
}

/// The full serialized metric report (`metrics.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub class_order: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mcc: VariantPair,
    pub kappa: VariantPair,
    pub csi_macro: f64,
    pub per_class: Vec<PerClassReport>,
    pub variants: VariantInfo,
    pub divergence: DivergenceFlags,
    pub flags: Vec<String>,
    pub warnings: Vec<MetricWarning>,
}

/// Tolerance under which a chance-corrected metric is said to track accuracy
/// (half of one printed 0.01-percent unit).
const TRACKS_ACCURACY_TOL: f64 = 5e-5;

/// Assemble every metric from probability rows. Predictions are the argmax
/// with lowest-index tie break; headline MCC/kappa use the multiclass forms.
pub fn full_report(y_true: &[usize], y_prob: ArrayView2<f32>, class_names: &[String]) -> Result<MetricReport, MetricsError> {
    let k = y_prob.ncols();
    assert_eq!(class_names.len(), k, "class name count must match probability columns");
    if y_true.len() != y_prob.nrows() {
        return Err(MetricsError::LengthMismatch { true_len: y_true.len(), pred_len: y_prob.nrows() });
    }
    if y_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let y_pred: Vec<usize> = y_prob
        .rows()
        .into_iter()
        .map(|row| argmax_row(row.as_slice().expect("contiguous probability rows")))
        .collect();
    report_from_labels(y_true, &y_pred, k, class_names)
}

/// Same as [`full_report`] but starting from hard predictions.
pub fn report_from_labels(
    y_true: &[usize],
    y_pred: &[usize],
    k: usize,
    class_names: &[String],
) -> Result<MetricReport, MetricsError> {
    let cm = ConfusionMatrix::from_labels(y_true, y_pred, k)?;
    let mut warnings = Vec::new();
    let acc = accuracy(&cm)?;
    let precision_macro = macro_precision(&cm, &mut warnings);
    let recall_macro = macro_recall(&cm, &mut warnings);
    let f1_macro = macro_f1(&cm, &mut warnings);
    let (mae, mse, rmse) = error_metrics(y_true, y_pred)?;
    let mcc_pair = VariantPair {
        macro_binary: mcc(&cm, Aggregation::MacroBinary, &mut warnings),
        multiclass: mcc(&cm, Aggregation::Multiclass, &mut warnings),
    };
    let kappa_pair = VariantPair {
        macro_binary: kappa(&cm, Aggregation::MacroBinary, &mut warnings)?,
        multiclass: match kappa(&cm, Aggregation::Multiclass, &mut warnings) {
            Ok(v) => v,
            Err(MetricsError::DegenerateMarginals) => {
                warnings.push(warn("kappa_multiclass", None, "degenerate marginals; counted as 0"));
                0.0
            }
            Err(e) => return Err(e),
        },
    };
    let csi_macro = csi(&cm, &mut warnings);

    let stats = class_stats(&cm);
    let pcp = per_class_precision(&cm);
    let pcr = per_class_recall(&cm);
    let pcf = per_class_f1(&cm);
    let per_class = (0..k)
        .map(|c| PerClassReport {
            class: class_names[c].clone(),
            tp: stats[c].tp,
            fp: stats[c].fp,
            fn_: stats[c].fn_,
            tn: stats[c].tn,
            precision: pcp[c].unwrap_or(0.0),
            recall: pcr[c].unwrap_or(0.0),
            f1: pcf[c].unwrap_or(0.0),
            csi: ratio(stats[c].tp, stats[c].tp + stats[c].fp + stats[c].fn_).unwrap_or(0.0),
            mcc_binary: binary_mcc(&stats[c]).unwrap_or(0.0),
            kappa_binary: binary_kappa(&stats[c]).unwrap_or(0.0),
        })
        .collect();

    let divergence = DivergenceFlags {
        mcc_tracks_accuracy: (mcc_pair.multiclass - acc).abs() <= TRACKS_ACCURACY_TOL,
        kappa_tracks_accuracy: (kappa_pair.multiclass - acc).abs() <= TRACKS_ACCURACY_TOL,
        csi_tracks_accuracy: (csi_macro - acc).abs() <= TRACKS_ACCURACY_TOL,
    };
    let mut flags = Vec::new();
    if !(divergence.mcc_tracks_accuracy && divergence.kappa_tracks_accuracy && divergence.csi_tracks_accuracy) {
        flags.push("mcc_kappa_csi_differ_from_accuracy".to_string());
    }

    Ok(MetricReport {
        n: y_true.len(),
        class_order: class_names.to_vec(),
        confusion: cm.counts().to_vec(),
        accuracy: acc,
        precision_macro,
        recall_macro,
        f1_macro,
        mae,
        mse,
        rmse,
        mcc: mcc_pair,
        kappa: kappa_pair,
        csi_macro,
        per_class,
        variants: VariantInfo {
            mcc: Aggregation::Multiclass,
            kappa: Aggregation::Multiclass,
            csi: "macro_one_vs_rest".into(),
        },
        divergence,
        flags,
        warnings,
    })
}

/// Independent direct-counting implementations over raw label lists, kept
/// free of [`ConfusionMatrix`] so the two routes can check each other.
pub mod oracle {
    /// Everything the equivalence tests compare, computed by scanning the
    /// label lists directly.
    #[derive(Debug, Clone, PartialEq)]
    pub struct OracleMetrics {
        pub accuracy: f64,
        pub precision_macro: f64,
        pub recall_macro: f64,
        pub f1_macro: f64,
        pub mae: f64,
        pub mse: f64,
        pub rmse: f64,
        pub mcc_macro_binary: f64,
        pub mcc_multiclass: f64,
        pub kappa_macro_binary: f64,
        pub kappa_multiclass: f64,
        pub csi_macro: f64,
    }

    /// Compute all metrics by brute force. Undefined per-class values count
    /// as 0 in macro averages, matching the main path's convention.
    pub fn compute(y_true: &[usize], y_pred: &[usize], k: usize) -> OracleMetrics {
        let n = y_true.len();
        assert_eq!(n, y_pred.len());
        assert!(n > 0);
        let matches = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
        let accuracy = matches as f64 / n as f64;
        let err_rate = 1.0 - accuracy;

        let mut precision_sum = 0.0;
        let mut recall_sum = 0.0;
        let mut f1_sum = 0.0;
        let mut csi_sum = 0.0;
        let mut mcc_b_sum = 0.0;
        let mut kappa_b_sum = 0.0;
        for c in 0..k {
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            let mut tn = 0u64;
            for (&t, &p) in y_true.iter().zip(y_pred) {
                match (t == c, p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            let prec = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            let rec = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
            precision_sum += prec;
            recall_sum += rec;
            if tp + fp > 0 && tp + fn_ > 0 && prec + rec > 0.0 {
                f1_sum += 2.0 * prec * rec / (prec + rec);
            }
            if tp + fp + fn_ > 0 {
                csi_sum += tp as f64 / (tp + fp + fn_) as f64;
            }
            let den = (tp + fp) as f64 * (tp + fn_) as f64 * (tn + fp) as f64 * (tn + fn_) as f64;
            if den > 0.0 {
                mcc_b_sum += (tp as f64 * tn as f64 - fp as f64 * fn_ as f64) / den.sqrt();
            }
            let nn = n as f64;
            let po = (tp + tn) as f64 / nn;
            let pe = ((tp + fp) as f64 * (tp + fn_) as f64 + (tn + fp) as f64 * (tn + fn_) as f64) / (nn * nn);
            if (1.0 - pe).abs() >= f64::EPSILON {
                kappa_b_sum += (po - pe) / (1.0 - pe);
            }
        }

        // multiclass MCC via the one-hot covariance route
        let mut diag = vec![0u64; k];
        let mut tcount = vec![0u64; k];
        let mut pcount = vec![0u64; k];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            tcount[t] += 1;
            pcount[p] += 1;
            if t == p {
                diag[t] += 1;
            }
        }
        let nn = n as f64;
        let mut cov_xy = 0.0;
        let mut cov_xx = 0.0;
        let mut cov_yy = 0.0;
        for c in 0..k {
            cov_xy += diag[c] as f64 - pcount[c] as f64 * tcount[c] as f64 / nn;
            cov_xx += pcount[c] as f64 - pcount[c] as f64 * pcount[c] as f64 / nn;
            cov_yy += tcount[c] as f64 - tcount[c] as f64 * tcount[c] as f64 / nn;
        }
        let mcc_multiclass = if cov_xx > 0.0 && cov_yy > 0.0 { cov_xy / (cov_xx * cov_yy).sqrt() } else { 0.0 };

        let po = accuracy;
        let pe: f64 = (0..k).map(|c| tcount[c] as f64 * pcount[c] as f64 / (nn * nn)).sum();
        let kappa_multiclass = if (1.0 - pe).abs() >= f64::EPSILON { (po - pe) / (1.0 - pe) } else { 0.0 };

        OracleMetrics {
            accuracy,
            precision_macro: precision_sum / k as f64,
            recall_macro: recall_sum / k as f64,
            f1_macro: f1_sum / k as f64,
            mae: err_rate,
            mse: err_rate,
            rmse: err_rate.sqrt(),
            mcc_macro_binary: mcc_b_sum / k as f64,
            mcc_multiclass,
            kappa_macro_binary: kappa_b_sum / k as f64,
            kappa_multiclass,
            csi_macro: csi_sum / k as f64,
        }
    }
}

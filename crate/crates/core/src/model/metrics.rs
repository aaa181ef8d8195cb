use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Macro-averaged ROC on a fixed threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Thresholds in descending order, aligned with `fpr` and `tpr`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
    pub roc: RocCurve,
    pub loss: f64,
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; classes]; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        m[t][p] += 1;
    }
    m
}

/// Per-class scores and their unweighted means over the classes that occur
/// either as a true label or as a prediction.
pub fn macro_scores(confusion: &[Vec<u64>]) -> (f64, f64, f64, Vec<ClassScores>) {
    let k = confusion.len();
    let mut per = Vec::with_capacity(k);
    let (mut sp, mut sr, mut sf, mut n) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        let precision = if predicted > 0 {
            tp / predicted as f64
        } else {
            0.0
        };
        let recall = if support > 0 {
            tp / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support > 0 || predicted > 0 {
            sp += precision;
            sr += recall;
            sf += f1;
            n += 1;
        }
        per.push(ClassScores {
            precision,
            recall,
            f1,
            support,
        });
    }
    let n = n.max(1) as f64;
    (sp / n, sr / n, sf / n, per)
}

/// One-vs-rest TPR/FPR per class on `grid` evenly spaced thresholds in
/// [0, 1], averaged pointwise over classes with both positives and negatives.
pub fn macro_roc(probs: &[Vec<f64>], y_true: &[usize], classes: usize, grid: usize) -> RocCurve {
    let grid = grid.max(2);
    let thresholds: Vec<f64> = (0..grid)
        .rev()
        .map(|i| i as f64 / (grid - 1) as f64)
        .collect();
    let mut fpr = vec![0.0; grid];
    let mut tpr = vec![0.0; grid];
    let mut used = 0usize;
    for c in 0..classes {
        let pos = y_true.iter().filter(|&&y| y == c).count();
        let neg = y_true.len() - pos;
        if pos == 0 || neg == 0 {
            continue;
        }
        used += 1;
        for (j, &th) in thresholds.iter().enumerate() {
            let (mut tp, mut fp) = (0usize, 0usize);
            for (p, &y) in probs.iter().zip(y_true) {
                if p[c] >= th {
                    if y == c {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            tpr[j] += tp as f64 / pos as f64;
            fpr[j] += fp as f64 / neg as f64;
        }
    }
    if used > 0 {
        fpr.iter_mut()
            .chain(tpr.iter_mut())
            .for_each(|v| *v /= used as f64);
    }
    let auc = trapezoid(&fpr, &tpr);
    RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    }
}

/// Area under a curve whose points are ordered by non-decreasing `x`,
/// starting from the origin.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let (mut px, mut py) = (0.0, 0.0);
    let mut area = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        area += (a - px) * (b + py) / 2.0;
        px = a;
        py = b;
    }
    area
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Full metric set from predicted class probabilities.
pub fn compute_metrics(probs: &[Vec<f64>], y_true: &[usize], classes: usize) -> Metrics {
    let y_pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let confusion = confusion_matrix(y_true, &y_pred, classes);
    let (macro_precision, macro_recall, macro_f1, per_class) = macro_scores(&confusion);
    let correct = y_true.iter().zip(&y_pred).filter(|(a, b)| a == b).count();
    let n = y_true.len().max(1) as f64;
    let loss = probs
        .iter()
        .zip(y_true)
        .map(|(p, &y)| -p[y].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / n;
    Metrics {
        accuracy: correct as f64 / n,
        macro_precision,
        macro_recall,
        macro_f1,
        per_class,
        confusion,
        roc: macro_roc(probs, y_true, classes, 101),
        loss,
    }
}

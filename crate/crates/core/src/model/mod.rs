//! Classifiers over either representation, training and evaluation.

mod cnn;
mod data;
mod logreg;
pub mod metrics;
mod optim;
mod train;

pub use cnn::{Checkpoint, Cnn, CnnConfig, InputMode, ParamSpec, CHECKPOINT_VERSION};
pub use data::{
    knowledge_dataset, nlp_dataset, ClassMap, Dataset, Inputs, SampleInput, DATASET_VERSION,
};
pub use logreg::{fit_logreg, LogReg, LogRegConfig};
pub use metrics::{compute_metrics, Metrics, RocCurve};
pub use optim::AdamW;
pub use train::{evaluate, train, EpochRecord, TrainConfig, TrainOutcome};

/// Anything that maps a dataset sample to class probabilities.
pub trait Classifier {
    fn num_classes(&self) -> usize;

    fn predict_proba(&self, data: &Dataset, index: usize) -> Vec<f64>;

    fn predict_all(&self, data: &Dataset) -> Vec<Vec<f64>> {
        (0..data.len())
            .map(|i| self.predict_proba(data, i))
            .collect()
    }
}

/// Dot product with eight independent accumulators so it vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}

pub(crate) fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

//! Reconstruction similarity metrics (0–255 scale), classification accuracy
//! and experiment report records.

mod report;
mod similarity;

pub use report::{
    append_csv, append_jsonl, delta, fmt_num, format_table, inf_as_string, read_jsonl, Bounds, ExperimentReport,
    CSV_COLUMNS,
};
pub use similarity::{
    ms_ssim, ms_ssim_scales, ms_ssim_weights, mse_l1, psnr, psnr_from_mse, ssim, SimilarityReport, MAX_PIXEL,
    MS_SSIM_WEIGHTS,
};

use crate::error::{dim_err, Result};
use crate::tensor::{Real, Tensor};

/// Row-wise argmax of `[N, K]` logits; ties go to the lowest index.
pub fn predictions<T: Real>(logits: &Tensor<T>) -> Result<Vec<usize>> {
    let [_, k] = logits.shape() else {
        return dim_err(format!("logits must be [N, K], got {:?}", logits.shape()));
    };
    Ok(logits
        .data()
        .chunks_exact(*k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// Top-1 accuracy in percent.
pub fn accuracy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let pred = predictions(logits)?;
    accuracy_of(&pred, labels)
}

pub fn accuracy_of(pred: &[usize], labels: &[usize]) -> Result<f64> {
    if pred.len() != labels.len() {
        return dim_err(format!("{} predictions for {} labels", pred.len(), labels.len()));
    }
    if pred.is_empty() {
        return dim_err("accuracy of an empty set");
    }
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

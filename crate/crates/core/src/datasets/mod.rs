//! Desk-scale datasets: a synthetic generator whose utility and privacy
//! attributes live in disjoint frequency bands, an IDX loader, seeded
//! batching, and a plain directory export format.

mod batch;
mod export;
mod idx;
mod synth;

use crate::tensor::Tensor;

pub use batch::{batches, epoch_order, Batch};
pub use export::{export_dir, import_dir, MANIFEST_NAME};
pub use idx::{derive_tasks, load_idx, parse_idx, RawDataset, TaskScheme};
pub use synth::{gen_synthetic, mean_color_oracle, stripe_orientation_oracle, OracleReport, SynthConfig};

/// One image with its utility and privacy labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    /// `C × H × W`, values in `[0, 1]`.
    pub image: Tensor<f32>,
    pub y_t: usize,
    pub y_p: usize,
}

/// A train/test partition with declared class counts.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub k_t: usize,
    pub k_p: usize,
    pub seed: u64,
}

impl DatasetSplit {
    /// `[C, H, W]` of the first example.
    pub fn image_shape(&self) -> &[usize] {
        self.train
            .first()
            .or(self.test.first())
            .map(|e| e.image.shape())
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest absolute gap between any class frequency and `1/K`, over both
    /// label kinds and both partitions.
    pub fn max_marginal_gap(&self) -> f64 {
        let mut worst = 0.0f64;
        for part in [&self.train, &self.test] {
            worst = worst.max(marginal_gap(part.iter().map(|e| e.y_t), self.k_t, part.len()));
            worst = worst.max(marginal_gap(part.iter().map(|e| e.y_p), self.k_p, part.len()));
        }
        worst
    }
}

/// Class frequencies of `labels` over `k` classes.
pub fn class_frequencies(labels: impl Iterator<Item = usize>, k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    let mut n = 0usize;
    for y in labels {
        counts[y] += 1;
        n += 1;
    }
    counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
}

fn marginal_gap(labels: impl Iterator<Item = usize>, k: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    class_frequencies(labels, k)
        .iter()
        .map(|f| (f - 1.0 / k as f64).abs())
        .fold(0.0, f64::max)
}

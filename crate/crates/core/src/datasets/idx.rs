use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, LabeledExample};
use crate::error::{Error, Result};
use crate::spectral::pad_to_pow2;
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const DIGITS: usize = 10;

/// Grayscale images and their raw class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    /// `1 × H × W` images in `[0, 1]`.
    pub images: Vec<Tensor<f32>>,
    pub labels: Vec<u8>,
}

/// How raw labels map to (utility, privacy) tasks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskScheme {
    /// Utility is the label's parity, privacy is the label itself.
    #[default]
    ParityVsDigit,
}

fn parse_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        offset,
        message: message.into(),
    })
}

fn be_u32(buf: &[u8], offset: usize, what: &str) -> Result<u32> {
    match buf.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes(b.try_into().expect("4 bytes"))),
        None => parse_err(offset, format!("file ends before the {what} field")),
    }
}

/// Parses in-memory IDX image and label files. Images are scaled to
/// `[0, 1]` and zero-padded to power-of-two sides.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<RawDataset> {
    let magic = be_u32(images, 0, "magic")?;
    if magic != IMAGES_MAGIC {
        return parse_err(0, format!("images magic is {magic:#010x}, expected {IMAGES_MAGIC:#010x}"));
    }
    let n = be_u32(images, 4, "image count")? as usize;
    let rows = be_u32(images, 8, "row count")? as usize;
    let cols = be_u32(images, 12, "column count")? as usize;
    if rows == 0 || cols == 0 {
        return parse_err(8, format!("image size {rows}x{cols} has a zero side"));
    }
    let area = rows * cols;
    let need = 16 + n * area;
    if images.len() < need {
        return parse_err(
            images.len(),
            format!("images file truncated: {n} images of {rows}x{cols} need {need} bytes"),
        );
    }

    let magic = be_u32(labels, 0, "magic")?;
    if magic != LABELS_MAGIC {
        return parse_err(0, format!("labels magic is {magic:#010x}, expected {LABELS_MAGIC:#010x}"));
    }
    let n_labels = be_u32(labels, 4, "label count")? as usize;
    if n_labels != n {
        return parse_err(4, format!("labels file declares {n_labels} labels for {n} images"));
    }
    if labels.len() < 8 + n {
        return parse_err(labels.len(), format!("labels file truncated: {n} labels need {} bytes", 8 + n));
    }

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let px = &images[16 + i * area..16 + (i + 1) * area];
        let t = Tensor::new(vec![1, rows, cols], px.iter().map(|&b| b as f32 / 255.0).collect())?;
        out.push(pad_to_pow2(&t)?.0);
    }
    Ok(RawDataset {
        images: out,
        labels: labels[8..8 + n].to_vec(),
    })
}

/// Reads an IDX image file and its label file.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawDataset> {
    parse_idx(&fs::read(images_path)?, &fs::read(labels_path)?)
}

/// Assigns task labels and makes a stratified 80/20 split.
pub fn derive_tasks(raw: &RawDataset, scheme: TaskScheme, seed: u64) -> Result<DatasetSplit> {
    let TaskScheme::ParityVsDigit = scheme;
    if let Some(&bad) = raw.labels.iter().find(|&&l| l as usize >= DIGITS) {
        return Err(Error::Config(format!(
            "parity_vs_digit needs {DIGITS} classes, found label {bad}"
        )));
    }
    if raw.images.len() != raw.labels.len() {
        return Err(Error::Config(format!(
            "{} images but {} labels",
            raw.images.len(),
            raw.labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); DIGITS];
    for (i, &l) in raw.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * 0.2).round() as usize;
        for (j, &i) in idx.iter().enumerate() {
            let label = raw.labels[i] as usize;
            let e = LabeledExample {
                image: raw.images[i].clone(),
                y_t: label % 2,
                y_p: label,
            };
            if j < n_test {
                test.push(e);
            } else {
                train.push(e);
            }
        }
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(DatasetSplit {
        train,
        test,
        k_t: 2,
        k_p: DIGITS,
        seed,
    })
}

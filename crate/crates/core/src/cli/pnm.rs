use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encodes a `[C, H, W]` image in `[0, 1]` as binary PGM (`C = 1`) or PPM
/// (`C = 3`).
pub fn encode(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = image.shape();
    let (magic, c) = match s {
        [1, _, _] => ("P5", 1),
        [3, _, _] => ("P6", 3),
        _ => {
            return Err(Error::Dimension(format!(
                "PGM/PPM needs a [1, H, W] or [3, H, W] image, got {s:?}"
            )))
        }
    };
    let (h, w) = (s[1], s[2]);
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    for i in 0..h * w {
        for ch in 0..c {
            out.push((d[ch * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn write(image: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(image)?)?;
    Ok(())
}

/// File extension matching [`encode`]'s format.
pub fn extension(image: &Tensor<f32>) -> &'static str {
    if image.shape().first() == Some(&1) {
        "pgm"
    } else {
        "ppm"
    }
}

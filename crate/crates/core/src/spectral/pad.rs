use crate::error::{dim_err, Result};
use crate::tensor::{Real, Tensor};

/// Spatial extent of an image before padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Extent {
    pub height: usize,
    pub width: usize,
}

fn split_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [h, w] => Ok((1, *h, *w)),
        [lead @ .., h, w] => Ok((lead.iter().product(), *h, *w)),
        _ => dim_err(format!("expected at least H×W, got {shape:?}")),
    }
}

/// Zero-pads the last two axes at the bottom and right up to the next power
/// of two.
pub fn pad_to_pow2<T: Real>(image: &Tensor<T>) -> Result<(Tensor<T>, Extent)> {
    let (planes, h, w) = split_dims(image.shape())?;
    let extent = Extent {
        height: h,
        width: w,
    };
    let (ph, pw) = (h.next_power_of_two(), w.next_power_of_two());
    if (ph, pw) == (h, w) {
        return Ok((image.detached(), extent));
    }
    let mut data = vec![T::zero(); planes * ph * pw];
    for p in 0..planes {
        for y in 0..h {
            let src = &image.data()[(p * h + y) * w..][..w];
            data[(p * ph + y) * pw..][..w].copy_from_slice(src);
        }
    }
    let mut shape = image.shape().to_vec();
    let n = shape.len();
    shape[n - 2] = ph;
    shape[n - 1] = pw;
    Ok((Tensor::new(shape, data)?, extent))
}

/// Crops the last two axes back to `extent` (top-left corner).
pub fn crop_to<T: Real>(image: &Tensor<T>, extent: Extent) -> Result<Tensor<T>> {
    let (planes, h, w) = split_dims(image.shape())?;
    if extent.height > h || extent.width > w {
        return dim_err(format!(
            "cannot crop {h}x{w} to larger extent {}x{}",
            extent.height, extent.width
        ));
    }
    let mut data = Vec::with_capacity(planes * extent.height * extent.width);
    for p in 0..planes {
        for y in 0..extent.height {
            data.extend_from_slice(&image.data()[(p * h + y) * w..][..extent.width]);
        }
    }
    let mut shape = image.shape().to_vec();
    let n = shape.len();
    shape[n - 2] = extent.height;
    shape[n - 1] = extent.width;
    Tensor::new(shape, data)
}

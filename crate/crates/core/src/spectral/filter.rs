use std::sync::Arc;

use num_complex::Complex;

use super::fft::{shift, Fft2Plan};
use super::mask::{make_mask, FilterSpec};
use crate::error::{dim_err, Result};
use crate::tensor::{Graph, Real, Tensor, Var};

/// A filter prepared for repeated application: FFT plan plus the mask
/// rearranged into natural (uncentered) layout.
#[derive(Clone, Debug)]
pub struct SpectralFilter<T: Real = f32> {
    spec: FilterSpec,
    plan: Fft2Plan<T>,
    mask: Vec<T>,
}

impl<T: Real> SpectralFilter<T> {
    pub fn new(spec: FilterSpec) -> Result<Self> {
        let (h, w) = spec.shape();
        let plan = Fft2Plan::new(h, w)?;
        let centered = make_mask(&spec);
        let mut mask = vec![T::zero(); h * w];
        for y in 0..h {
            for x in 0..w {
                mask[y * w + x] = T::of(centered.get(shift(y, h), shift(x, w)));
            }
        }
        Ok(Self { spec, plan, mask })
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    /// Filters consecutive `H × W` planes. Returns the filtered planes and
    /// the largest imaginary residual that was discarded.
    pub fn apply_planes(&self, data: &[T]) -> (Vec<T>, f64) {
        let (h, w) = self.spec.shape();
        let area = h * w;
        debug_assert_eq!(data.len() % area, 0);
        let norm = T::one() / T::of(area as f64);
        let mut out = Vec::with_capacity(data.len());
        let mut residual = 0.0f64;
        let mut buf = vec![Complex::new(T::zero(), T::zero()); area];
        for plane in data.chunks_exact(area) {
            for (b, &x) in buf.iter_mut().zip(plane) {
                *b = Complex::new(x, T::zero());
            }
            self.plan.transform(&mut buf, false);
            for (b, &m) in buf.iter_mut().zip(&self.mask) {
                *b = *b * m;
            }
            self.plan.transform(&mut buf, true);
            for b in &buf {
                residual = residual.max((b.im * norm).abs().as_f64());
                out.push(b.re * norm);
            }
        }
        (out, residual)
    }

    fn check_shape(&self, shape: &[usize]) -> Result<()> {
        let (h, w) = self.spec.shape();
        let n = shape.len();
        if n < 2 || shape[n - 2] != h || shape[n - 1] != w {
            return dim_err(format!(
                "filter prepared for {h}x{w} cannot be applied to shape {shape:?}"
            ));
        }
        Ok(())
    }

    /// Filters every channel of a `[..., H, W]` tensor independently.
    pub fn apply(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.apply_with_residual(image)?.0)
    }

    pub fn apply_with_residual(&self, image: &Tensor<T>) -> Result<(Tensor<T>, f64)> {
        self.check_shape(image.shape())?;
        let (data, residual) = self.apply_planes(image.data());
        Ok((Tensor::new(image.shape().to_vec(), data)?, residual))
    }

    /// Records the filter on a graph. The map is linear and self-adjoint, so
    /// its backward pass is the same filter applied to the upstream gradient.
    pub fn apply_var(self: &Arc<Self>, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.check_shape(g.shape(x))?;
        let (data, _) = self.apply_planes(g.value(x));
        let out = Tensor::new(g.shape(x).to_vec(), data)?;
        let this = Arc::clone(self);
        Ok(g.custom_unary(x, out, move |grad| this.apply_planes(grad).0))
    }
}

/// Applies `spec` to each channel of a `[C, H, W]` (or `[N, C, H, W]`) image.
pub fn apply_filter<T: Real>(image: &Tensor<T>, spec: &FilterSpec) -> Result<Tensor<T>> {
    let (h, w) = match image.shape() {
        [.., h, w] => (*h, *w),
        s => return dim_err(format!("expected an image tensor, got shape {s:?}")),
    };
    SpectralFilter::new(spec.with_shape((h, w))?)?.apply(image)
}

/// Fraction of the image energy that survives `spec`.
pub fn band_energy_ratio<T: Real>(image: &Tensor<T>, spec: &FilterSpec) -> Result<f64> {
    let total: f64 = image.data().iter().map(|x| x.as_f64().powi(2)).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let kept = apply_filter(image, spec)?;
    let part: f64 = kept.data().iter().map(|x| x.as_f64().powi(2)).sum();
    Ok(part / total)
}

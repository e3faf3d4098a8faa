use super::ParamCursor;
use crate::error::Result;
use crate::tensor::{Graph, Real, Tensor, Var};

/// `k × k` convolution with per-channel bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T: Real> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]).with_grad(),
            bias: Tensor::zeros(&[out_channels]).with_grad(),
            stride,
            padding,
        }
    }

    /// 3×3, stride 1, same padding.
    pub fn same3(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 3, 1, 1)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub(crate) fn forward(&self, g: &mut Graph<T>, p: &mut ParamCursor<'_>, x: Var) -> Result<Var> {
        let (w, b) = (p.take()?, p.take()?);
        let y = g.conv2d(x, w, self.stride, self.padding)?;
        g.bias_add(y, b)
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Fully connected layer `y = x·Wᵀ + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T: Real> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]).with_grad(),
            bias: Tensor::zeros(&[outputs]).with_grad(),
        }
    }

    pub(crate) fn forward(&self, g: &mut Graph<T>, p: &mut ParamCursor<'_>, x: Var) -> Result<Var> {
        let (w, b) = (p.take()?, p.take()?);
        let y = g.linear(x, w)?;
        g.bias_add(y, b)
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

use super::{Binding, Conv2d, Module};
use crate::error::{dim_err, Result};
use crate::tensor::{Graph, PoolMode, Real, Tensor, Var};

/// Two 3×3 conv + ReLU layers.
#[derive(Clone, Debug, PartialEq)]
struct DoubleConv<T: Real> {
    first: Conv2d<T>,
    second: Conv2d<T>,
}

impl<T: Real> DoubleConv<T> {
    fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            first: Conv2d::same3(inputs, outputs),
            second: Conv2d::same3(outputs, outputs),
        }
    }

    fn forward(&self, g: &mut Graph<T>, p: &mut super::ParamCursor<'_>, x: Var) -> Result<Var> {
        let h = self.first.forward(g, p, x)?;
        let h = g.relu(h);
        let h = self.second.forward(g, p, h)?;
        Ok(g.relu(h))
    }
}

/// Mini U-Net: two down blocks, a bottleneck, two up blocks with channel
/// concatenation skips, and a 1×1 head followed by a sigmoid. Channel
/// widths are `w, 2w, 4w` for base width `w`.
///
/// Output has the input's shape with values in `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UNet<T: Real = f32> {
    in_channels: usize,
    width: usize,
    down1: DoubleConv<T>,
    down2: DoubleConv<T>,
    bottleneck: DoubleConv<T>,
    up1: DoubleConv<T>,
    up2: DoubleConv<T>,
    head: Conv2d<T>,
}

impl<T: Real> UNet<T> {
    pub const DEFAULT_WIDTH: usize = 8;

    pub fn new(in_channels: usize, width: usize) -> Self {
        let w = width;
        Self {
            in_channels,
            width,
            down1: DoubleConv::new(in_channels, w),
            down2: DoubleConv::new(w, 2 * w),
            bottleneck: DoubleConv::new(2 * w, 4 * w),
            up1: DoubleConv::new(4 * w + 2 * w, 2 * w),
            up2: DoubleConv::new(2 * w + w, w),
            head: Conv2d::new(w, in_channels, 1, 1, 0),
        }
    }

    /// Randomly initialized network.
    pub fn seeded(in_channels: usize, width: usize, seed: u64) -> Self {
        let mut m = Self::new(in_channels, width);
        m.init_params(seed);
        m
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward(&self, g: &mut Graph<T>, params: &Binding, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != self.in_channels {
            return dim_err(format!(
                "U-Net expects [N, {}, H, W], got {s:?}",
                self.in_channels
            ));
        }
        if s[2] % 4 != 0 || s[3] % 4 != 0 {
            return dim_err(format!(
                "U-Net needs H and W divisible by 4, got {}x{}",
                s[2], s[3]
            ));
        }
        let mut p = params.cursor();
        let d1 = self.down1.forward(g, &mut p, x)?;
        let h = g.pool(d1, PoolMode::MaxPool2)?;
        let d2 = self.down2.forward(g, &mut p, h)?;
        let h = g.pool(d2, PoolMode::MaxPool2)?;
        let h = self.bottleneck.forward(g, &mut p, h)?;
        let h = g.pool(h, PoolMode::NearestUpsample2)?;
        let h = g.concat_channels(h, d2)?;
        let h = self.up1.forward(g, &mut p, h)?;
        let h = g.pool(h, PoolMode::NearestUpsample2)?;
        let h = g.concat_channels(h, d1)?;
        let h = self.up2.forward(g, &mut p, h)?;
        let h = self.head.forward(g, &mut p, h)?;
        Ok(g.sigmoid(h))
    }

    /// Inference without gradient tracking.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, false);
        let xv = g.constant(x);
        let y = self.forward(&mut g, &b, xv)?;
        Ok(g.tensor(y))
    }
}

impl<T: Real> Module<T> for UNet<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (name, block) in [
            ("down1", &self.down1),
            ("down2", &self.down2),
            ("bottleneck", &self.bottleneck),
            ("up1", &self.up1),
            ("up2", &self.up2),
        ] {
            block.first.params(&format!("{name}.0"), &mut out);
            block.second.params(&format!("{name}.1"), &mut out);
        }
        self.head.params("head", &mut out);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for block in [
            &mut self.down1,
            &mut self.down2,
            &mut self.bottleneck,
            &mut self.up1,
            &mut self.up2,
        ] {
            block.first.params_mut(&mut out);
            block.second.params_mut(&mut out);
        }
        self.head.params_mut(&mut out);
        out
    }
}

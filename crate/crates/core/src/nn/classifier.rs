use super::{Binding, Conv2d, Linear, Module};
use crate::error::{dim_err, Result};
use crate::tensor::{Graph, PoolMode, Real, Tensor, Var};

/// Plain CNN: four (3×3 conv, ReLU, 2×2 max-pool) blocks, global average
/// pooling and a linear head. Used for the task model, the proxy adversary
/// and every post-hoc attacker.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel<T: Real = f32> {
    in_channels: usize,
    classes: usize,
    blocks: Vec<Conv2d<T>>,
    head: Linear<T>,
}

impl<T: Real> ClassifierModel<T> {
    pub const WIDTHS: [usize; 4] = [16, 32, 64, 64];

    pub fn new(in_channels: usize, classes: usize) -> Self {
        Self::with_widths(in_channels, Self::WIDTHS, classes)
    }

    pub fn with_widths(in_channels: usize, widths: [usize; 4], classes: usize) -> Self {
        let mut blocks = Vec::with_capacity(4);
        let mut c = in_channels;
        for w in widths {
            blocks.push(Conv2d::same3(c, w));
            c = w;
        }
        Self {
            in_channels,
            classes,
            blocks,
            head: Linear::new(c, classes),
        }
    }

    pub fn seeded(in_channels: usize, classes: usize, seed: u64) -> Self {
        let mut m = Self::new(in_channels, classes);
        m.init_params(seed);
        m
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn widths(&self) -> [usize; 4] {
        let mut w = [0; 4];
        for (slot, b) in w.iter_mut().zip(&self.blocks) {
            *slot = b.out_channels();
        }
        w
    }

    /// `N × K` logits.
    pub fn forward(&self, g: &mut Graph<T>, params: &Binding, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != self.in_channels {
            return dim_err(format!(
                "classifier expects [N, {}, H, W], got {s:?}",
                self.in_channels
            ));
        }
        if s[2] < 16 || s[3] < 16 {
            return dim_err(format!(
                "classifier needs spatial dims of at least 16, got {}x{}",
                s[2], s[3]
            ));
        }
        let mut p = params.cursor();
        let mut h = x;
        for block in &self.blocks {
            h = block.forward(g, &mut p, h)?;
            h = g.relu(h);
            h = g.pool(h, PoolMode::MaxPool2)?;
        }
        let h = g.pool(h, PoolMode::GlobalAvg)?;
        self.head.forward(g, &mut p, h)
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, false);
        let xv = g.constant(x);
        let y = self.forward(&mut g, &b, xv)?;
        Ok(g.tensor(y))
    }
}

impl<T: Real> Module<T> for ClassifierModel<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            b.params(&format!("block{i}"), &mut out);
        }
        self.head.params("head", &mut out);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            b.params_mut(&mut out);
        }
        self.head.params_mut(&mut out);
        out
    }
}

//! Desk-scale architectures: the mini U-Net used as encoder and
//! reconstructor, the plain CNN classifier, and the obfuscator that composes
//! an encoder with a spectral filter.

mod checkpoint;
mod classifier;
mod layers;
mod obfuscator;
mod unet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Graph, Real, Tensor, Var};

pub use checkpoint::{Checkpoint, ModelKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use classifier::ClassifierModel;
pub use layers::{Conv2d, Linear};
pub use obfuscator::{ObfuscationMode, Obfuscator};
pub use unet::UNet;

/// The encoder `e` of the obfuscator.
pub type EncoderModel<T = f32> = UNet<T>;
/// The reconstruction attacker `f_r`; same topology as the encoder.
pub type ReconstructorModel<T = f32> = UNet<T>;

/// Graph handles for a model's parameters, in [`Module::parameters`] order.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub(crate) fn cursor(&self) -> ParamCursor<'_> {
        ParamCursor {
            vars: &self.vars,
            next: 0,
        }
    }
}

pub(crate) struct ParamCursor<'a> {
    vars: &'a [Var],
    next: usize,
}

impl ParamCursor<'_> {
    pub(crate) fn take(&mut self) -> Result<Var> {
        let v = self
            .vars
            .get(self.next)
            .copied()
            .ok_or_else(|| Error::Usage("binding has fewer parameters than the model".into()))?;
        self.next += 1;
        Ok(v)
    }
}

/// A model with an ordered, named parameter list.
pub trait Module<T: Real> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn param_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Records every parameter on `g`; with `trainable = false` they are
    /// recorded as constants and receive no gradient.
    fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Binding {
        let vars = self
            .parameters()
            .into_iter()
            .map(|(_, t)| if trainable { g.param(t) } else { g.constant(t) })
            .collect();
        Binding { vars }
    }

    /// Adds the gradients for this model's bound parameters.
    fn accumulate_grads(&mut self, binding: &Binding, grads: &Gradients<T>) -> Result<()> {
        let params = self.parameters_mut();
        if params.len() != binding.vars.len() {
            return Err(Error::Usage("binding does not belong to this model".into()));
        }
        for (p, &v) in params.into_iter().zip(&binding.vars) {
            if let Some(g) = grads.get(v) {
                p.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Kaiming-uniform fan-in initialization of weights, zero biases.
    fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = self.parameters().into_iter().map(|(n, _)| n).collect();
        for (name, p) in names.iter().zip(self.parameters_mut()) {
            if name.ends_with("weight") {
                let fan_in = p.numel() / p.shape()[0];
                let bound = (6.0 / fan_in as f64).sqrt();
                for w in p.data_mut() {
                    *w = T::of(rng.gen_range(-bound..bound));
                }
            } else {
                p.data_mut().iter_mut().for_each(|b| *b = T::zero());
            }
        }
    }

    fn set_trainable(&mut self, on: bool) {
        for p in self.parameters_mut() {
            p.set_requires_grad(on);
        }
    }

    /// Combined bit-level hash of all parameters.
    fn checksum(&self) -> u64 {
        self.parameters()
            .iter()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, (_, t)| {
                (h ^ t.checksum()).wrapping_mul(0x0100_0000_01b3)
            })
    }
}

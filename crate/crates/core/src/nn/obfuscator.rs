use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Binding, Module, UNet};
use crate::error::{Error, Result};
use crate::spectral::{FilterSpec, SpectralFilter};
use crate::tensor::{Graph, Real, Tensor, Var};

/// The compared obfuscation methods.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObfuscationMode {
    /// `LP(e(x))`: trained encoder followed by the low-pass filter.
    Learned,
    /// `clamp(x + N(0, variance), 0, 1)`.
    Noise { variance: f64 },
    /// `LP(x)` without an encoder.
    LpOnly,
    /// `e(x)` without a filter.
    UnetOnly,
    Identity,
}

impl ObfuscationMode {
    pub fn name(&self) -> &'static str {
        match self {
            ObfuscationMode::Learned => "learned",
            ObfuscationMode::Noise { .. } => "noise",
            ObfuscationMode::LpOnly => "lp_only",
            ObfuscationMode::UnetOnly => "unet_only",
            ObfuscationMode::Identity => "identity",
        }
    }

    pub fn uses_encoder(&self) -> bool {
        matches!(self, ObfuscationMode::Learned | ObfuscationMode::UnetOnly)
    }

    pub fn uses_filter(&self) -> bool {
        matches!(self, ObfuscationMode::Learned | ObfuscationMode::LpOnly)
    }
}

/// Client-side transform producing the released representation.
#[derive(Clone, Debug)]
pub struct Obfuscator<T: Real = f32> {
    mode: ObfuscationMode,
    encoder: Option<UNet<T>>,
    filter: Option<Arc<SpectralFilter<T>>>,
}

impl<T: Real> Obfuscator<T> {
    pub fn new(mode: ObfuscationMode, encoder: Option<UNet<T>>, filter: Option<FilterSpec>) -> Result<Self> {
        if mode.uses_encoder() != encoder.is_some() {
            return Err(Error::Config(format!(
                "mode {} {} an encoder",
                mode.name(),
                if mode.uses_encoder() { "requires" } else { "does not take" }
            )));
        }
        if mode.uses_filter() != filter.is_some() {
            return Err(Error::Config(format!(
                "mode {} {} a filter",
                mode.name(),
                if mode.uses_filter() { "requires" } else { "does not take" }
            )));
        }
        if let ObfuscationMode::Noise { variance } = mode {
            if !(variance >= 0.0 && variance.is_finite()) {
                return Err(Error::Config(format!("noise variance must be >= 0, got {variance}")));
            }
        }
        let filter = filter.map(SpectralFilter::new).transpose()?.map(Arc::new);
        Ok(Self {
            mode,
            encoder,
            filter,
        })
    }

    pub fn learned(encoder: UNet<T>, filter: FilterSpec) -> Result<Self> {
        Self::new(ObfuscationMode::Learned, Some(encoder), Some(filter))
    }

    pub fn unet_only(encoder: UNet<T>) -> Self {
        Self::new(ObfuscationMode::UnetOnly, Some(encoder), None).expect("valid combination")
    }

    pub fn lp_only(filter: FilterSpec) -> Result<Self> {
        Self::new(ObfuscationMode::LpOnly, None, Some(filter))
    }

    pub fn noise(variance: f64) -> Result<Self> {
        Self::new(ObfuscationMode::Noise { variance }, None, None)
    }

    pub fn identity() -> Self {
        Self::new(ObfuscationMode::Identity, None, None).expect("valid combination")
    }

    pub fn mode(&self) -> ObfuscationMode {
        self.mode
    }

    pub fn encoder(&self) -> Option<&UNet<T>> {
        self.encoder.as_ref()
    }

    pub fn encoder_mut(&mut self) -> Option<&mut UNet<T>> {
        self.encoder.as_mut()
    }

    pub fn filter_spec(&self) -> Option<&FilterSpec> {
        self.filter.as_deref().map(SpectralFilter::spec)
    }

    /// Records the obfuscation of `x` on `g`. `encoder_params` must come from
    /// binding this obfuscator's encoder; when `None` the encoder is recorded
    /// as frozen.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        encoder_params: Option<&Binding>,
        x: Var,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        match self.mode {
            ObfuscationMode::Identity => Ok(x),
            ObfuscationMode::Noise { variance } => {
                let noisy = add_clamped_noise(&g.tensor(x), variance, rng)?;
                Ok(g.constant_owned(noisy))
            }
            ObfuscationMode::LpOnly => self.filter.as_ref().expect("lp_only has a filter").apply_var(g, x),
            ObfuscationMode::UnetOnly | ObfuscationMode::Learned => {
                let encoder = self.encoder.as_ref().expect("mode has an encoder");
                let frozen;
                let params = match encoder_params {
                    Some(b) => b,
                    None => {
                        frozen = encoder.bind(g, false);
                        &frozen
                    }
                };
                let e = encoder.forward(g, params, x)?;
                match &self.filter {
                    Some(f) => f.apply_var(g, e),
                    None => Ok(e),
                }
            }
        }
    }

    /// `o(x)` for a batch, without gradient tracking.
    pub fn obfuscate(&self, x: &Tensor<T>, rng: &mut impl Rng) -> Result<Tensor<T>> {
        match self.mode {
            ObfuscationMode::Identity => Ok(x.detached()),
            ObfuscationMode::Noise { variance } => add_clamped_noise(x, variance, rng),
            _ => {
                let mut g = Graph::new();
                let xv = g.constant(x);
                let y = self.forward(&mut g, None, xv, rng)?;
                Ok(g.tensor(y))
            }
        }
    }
}

fn add_clamped_noise<T: Real>(x: &Tensor<T>, variance: f64, rng: &mut impl Rng) -> Result<Tensor<T>> {
    if variance == 0.0 {
        return Ok(x.detached());
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let data = x
        .data()
        .iter()
        .map(|&v| (v + T::of(normal.sample(rng))).max(T::zero()).min(T::one()))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

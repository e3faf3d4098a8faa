use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ObfuscationMode, UNet};

/// Which obfuscator a run trains and evaluates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Encoder followed by the low-pass filter, trained adversarially.
    #[default]
    Learned,
    /// Additive Gaussian noise, no training of the obfuscator.
    Noise,
    /// Low-pass filter on raw images, no encoder.
    LpOnly,
    /// Encoder trained adversarially, no filter.
    UnetOnly,
    /// Raw images.
    Identity,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Learned,
        Method::Noise,
        Method::LpOnly,
        Method::UnetOnly,
        Method::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Learned => "learned",
            Method::Noise => "noise",
            Method::LpOnly => "lp_only",
            Method::UnetOnly => "unet_only",
            Method::Identity => "identity",
        }
    }

    pub fn mode(self, noise_variance: f64) -> ObfuscationMode {
        match self {
            Method::Learned => ObfuscationMode::Learned,
            Method::Noise => ObfuscationMode::Noise {
                variance: noise_variance,
            },
            Method::LpOnly => ObfuscationMode::LpOnly,
            Method::UnetOnly => ObfuscationMode::UnetOnly,
            Method::Identity => ObfuscationMode::Identity,
        }
    }

    pub fn uses_filter(self) -> bool {
        matches!(self, Method::Learned | Method::LpOnly)
    }

    pub fn uses_encoder(self) -> bool {
        matches!(self, Method::Learned | Method::UnetOnly)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}; expected one of learned, noise, lp_only, unet_only, identity")))
    }
}

/// Optimizer steps per player per batch, run in the order adversary, task,
/// obfuscator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub adversary: usize,
    pub task: usize,
    pub obfuscator: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            adversary: 1,
            task: 1,
            obfuscator: 1,
        }
    }
}

/// Hyper-parameters of one adversarial training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArlConfig {
    pub method: Method,
    /// Normalized low-pass radius, used by `learned` and `lp_only`.
    pub radius: f64,
    /// Weight of the adversary term in `l_t - lambda_p * l_p`.
    pub lambda_p: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_encoder: f64,
    pub lr_classifiers: f64,
    /// Base channel width of the encoder U-Net.
    pub encoder_width: usize,
    /// Variance of the `noise` baseline.
    pub noise_variance: f64,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for ArlConfig {
    fn default() -> Self {
        Self {
            method: Method::Learned,
            radius: 0.05,
            lambda_p: 1.0,
            epochs: 6,
            batch_size: 32,
            lr_encoder: 1e-4,
            lr_classifiers: 1e-3,
            encoder_width: UNet::<f32>::DEFAULT_WIDTH,
            noise_variance: 0.64,
            schedule: Schedule::default(),
            seed: 42,
        }
    }
}

impl ArlConfig {
    /// Settings calibrated for the 32×32 synthetic data with an eight-epoch
    /// budget: smaller batches and a faster encoder than the defaults.
    pub fn desk_scale() -> Self {
        Self {
            epochs: 8,
            batch_size: 16,
            lr_encoder: 3e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.radius) {
            return bad(format!("radius must lie in [0, 1], got {}", self.radius));
        }
        if !(self.lambda_p >= 0.0 && self.lambda_p.is_finite()) {
            return bad(format!("lambda_p must be >= 0, got {}", self.lambda_p));
        }
        for (name, lr) in [("lr_encoder", self.lr_encoder), ("lr_classifiers", self.lr_classifiers)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be > 0, got {lr}"));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.encoder_width == 0 {
            return bad("epochs, batch_size and encoder_width must be positive".into());
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad(format!("noise_variance must be >= 0, got {}", self.noise_variance));
        }
        let s = self.schedule;
        if s.adversary == 0 || s.task == 0 || s.obfuscator == 0 {
            return bad("every schedule entry must be at least 1".into());
        }
        Ok(())
    }
}

/// Budget of the post-hoc attackers, trained against a frozen obfuscator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_classifier: f64,
    pub lr_reconstructor: f64,
    pub reconstructor_width: usize,
    /// Number of (original, obfuscated, reconstructed) triplets to dump.
    pub samples: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            batch_size: 32,
            lr_classifier: 1e-3,
            lr_reconstructor: 1e-3,
            reconstructor_width: UNet::<f32>::DEFAULT_WIDTH,
            samples: 4,
        }
    }
}

impl AttackConfig {
    /// Same epoch and batch budget as the main training run.
    pub fn matching(arl: &ArlConfig) -> Self {
        Self {
            epochs: arl.epochs,
            batch_size: arl.batch_size,
            lr_classifier: arl.lr_classifiers,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.reconstructor_width == 0 {
            return Err(Error::Config("attack epochs, batch_size and reconstructor_width must be positive".into()));
        }
        for (name, lr) in [("lr_classifier", self.lr_classifier), ("lr_reconstructor", self.lr_reconstructor)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {lr}")));
            }
        }
        Ok(())
    }
}

/// Deterministic child seed for one component of a run.
pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

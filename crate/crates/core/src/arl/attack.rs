use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{sub_seed, ArlConfig, AttackConfig, Method};
use super::train::{classifier_accuracy, obfuscate_examples, train_arl, EVAL_CHUNK, SEED_EVAL, SEED_NOISE};
use crate::datasets::{batches, DatasetSplit, LabeledExample};
use crate::error::{Error, Result};
use crate::metrics::{Bounds, SimilarityReport};
use crate::nn::{ClassifierModel, Module, Obfuscator, UNet};
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

const SEED_ATTACKER: u64 = 11;
const SEED_ATTACK_SHUFFLE: u64 = 12;
const SEED_RECONSTRUCTOR: u64 = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    InformationLeakage,
    Reconstruction,
}

/// A fresh classifier trained on frozen obfuscations to predict `y_p`.
#[derive(Clone, Debug)]
pub struct LeakageResult {
    /// Test accuracy in percent.
    pub privacy: f64,
    pub attacker: ClassifierModel<f32>,
    pub losses: Vec<f64>,
}

/// One test image, its obfuscation and the attacker's reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTriplet {
    pub original: Tensor<f32>,
    pub obfuscated: Tensor<f32>,
    pub reconstructed: Tensor<f32>,
}

/// A fresh U-Net trained to invert frozen obfuscations.
#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub similarity: SimilarityReport,
    pub reconstructor: UNet<f32>,
    pub losses: Vec<f64>,
    pub samples: Vec<SampleTriplet>,
}

#[derive(Clone, Debug)]
pub enum AttackResult {
    Leakage(LeakageResult),
    Reconstruction(ReconstructionResult),
}

impl AttackResult {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackResult::Leakage(_) => AttackKind::InformationLeakage,
            AttackResult::Reconstruction(_) => AttackKind::Reconstruction,
        }
    }
}

/// Train and test splits passed once through a frozen obfuscator. Noise is
/// drawn once per example, so every attacker sees the same release.
#[derive(Clone, Debug)]
pub struct ObfuscatedSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl ObfuscatedSplit {
    pub fn new(obfuscator: &Obfuscator<f32>, data: &DatasetSplit, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, SEED_NOISE ^ 0x100));
        let train = obfuscate_examples(obfuscator, &data.train, &mut rng)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, SEED_EVAL));
        let test = obfuscate_examples(obfuscator, &data.test, &mut rng)?;
        Ok(Self { train, test })
    }
}

/// Trains a fresh classifier on `(x̂, label(x))` pairs.
pub fn train_classifier(
    examples: &[LabeledExample],
    classes: usize,
    label: impl Fn(&LabeledExample) -> usize,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<(ClassifierModel<f32>, Vec<f64>)> {
    let channels = examples
        .first()
        .ok_or_else(|| Error::Config("cannot train on an empty split".into()))?
        .image
        .shape()[0];
    let mut model = ClassifierModel::seeded(channels, classes, sub_seed(seed, SEED_ATTACKER));
    model.set_trainable(true);
    let mut opt = Adam::new(AdamConfig::with_lr(lr));
    let mut losses = Vec::new();
    for epoch in 0..epochs {
        for batch in batches(examples, batch_size, Some(sub_seed(seed, SEED_ATTACK_SHUFFLE)), epoch as u64)? {
            let batch = batch?;
            let labels: Vec<usize> = batch.indices.iter().map(|&i| label(&examples[i])).collect();
            let mut g = Graph::new();
            let b = model.bind(&mut g, true);
            let x = g.constant(&batch.images);
            let logits = model.forward(&mut g, &b, x)?;
            let loss = g.softmax_cross_entropy(logits, &labels)?;
            let value = g.scalar(loss)? as f64;
            if !value.is_finite() {
                return Err(Error::Diverged {
                    step: losses.len(),
                    player: "attacker",
                });
            }
            let grads = g.backward(loss)?;
            model.accumulate_grads(&b, &grads)?;
            opt.step(&mut model.parameters_mut())?;
            losses.push(value);
        }
    }
    model.set_trainable(false);
    Ok((model, losses))
}

/// Information-leakage attack on already obfuscated data.
pub fn leakage_attack(split: &ObfuscatedSplit, k_p: usize, cfg: &AttackConfig, seed: u64) -> Result<LeakageResult> {
    cfg.validate()?;
    let (attacker, losses) =
        train_classifier(&split.train, k_p, |e| e.y_p, cfg.epochs, cfg.batch_size, cfg.lr_classifier, seed)?;
    let privacy = classifier_accuracy(&attacker, &split.test, |e| e.y_p)?;
    Ok(LeakageResult {
        privacy,
        attacker,
        losses,
    })
}

/// Freezes `obfuscator` and trains a fresh adversary on its outputs for a
/// fixed epoch budget; reports the adversary's test accuracy as privacy.
pub fn train_frozen_adversary(
    obfuscator: &Obfuscator<f32>,
    data: &DatasetSplit,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<LeakageResult> {
    leakage_attack(&ObfuscatedSplit::new(obfuscator, data, seed)?, data.k_p, cfg, seed)
}

/// Reconstruction attack on already obfuscated data. `originals` are the
/// unobfuscated counterparts of `split`, in the same order.
pub fn reconstruction_attack(
    split: &ObfuscatedSplit,
    originals: &DatasetSplit,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    let shape = originals.image_shape().to_vec();
    let mut model = UNet::seeded(shape[0], cfg.reconstructor_width, sub_seed(seed, SEED_RECONSTRUCTOR));
    model.set_trainable(true);
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr_reconstructor));
    let mut losses = Vec::new();
    for epoch in 0..cfg.epochs {
        for batch in batches(&split.train, cfg.batch_size, Some(sub_seed(seed, SEED_ATTACK_SHUFFLE)), epoch as u64)? {
            let batch = batch?;
            let target = crate::datasets::Batch::gather(&originals.train, &batch.indices)?;
            let mut g = Graph::new();
            let b = model.bind(&mut g, true);
            let x = g.constant(&batch.images);
            let t = g.constant(&target.images);
            let y = model.forward(&mut g, &b, x)?;
            let loss = g.mse(y, t)?;
            let value = g.scalar(loss)? as f64;
            if !value.is_finite() {
                return Err(Error::Diverged {
                    step: losses.len(),
                    player: "reconstructor",
                });
            }
            let grads = g.backward(loss)?;
            model.accumulate_grads(&b, &grads)?;
            opt.step(&mut model.parameters_mut())?;
            losses.push(value);
        }
    }
    model.set_trainable(false);

    let mut reconstructed = Vec::with_capacity(split.test.len());
    for batch in batches(&split.test, EVAL_CHUNK, None, 0)? {
        let y = model.predict(&batch?.images)?;
        for j in 0..y.shape()[0] {
            reconstructed.push(y.index_outer(j)?);
        }
    }
    let originals_test: Vec<Tensor<f32>> = originals.test.iter().map(|e| e.image.clone()).collect();
    let similarity = SimilarityReport::evaluate(&originals_test, &reconstructed)?;
    let samples = (0..cfg.samples.min(reconstructed.len()))
        .map(|i| SampleTriplet {
            original: originals_test[i].clone(),
            obfuscated: split.test[i].image.clone(),
            reconstructed: reconstructed[i].clone(),
        })
        .collect();
    Ok(ReconstructionResult {
        similarity,
        reconstructor: model,
        losses,
        samples,
    })
}

/// Freezes `obfuscator` and trains a fresh U-Net to recover the original
/// images; reports similarity between originals and reconstructions.
pub fn train_reconstructor(
    obfuscator: &Obfuscator<f32>,
    data: &DatasetSplit,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<ReconstructionResult> {
    reconstruction_attack(&ObfuscatedSplit::new(obfuscator, data, seed)?, data, cfg, seed)
}

/// Chance level of the privacy task: `100 / K_p` when the test labels are
/// balanced, otherwise the majority-class share.
pub fn privacy_lower_bound(data: &DatasetSplit) -> f64 {
    let mut counts = vec![0usize; data.k_p];
    for e in &data.test {
        counts[e.y_p] += 1;
    }
    if counts.iter().all(|&c| c == counts[0]) {
        100.0 / data.k_p as f64
    } else {
        100.0 * *counts.iter().max().unwrap_or(&0) as f64 / data.test.len().max(1) as f64
    }
}

/// Utility upper bound (task model trained on raw images, same procedure as
/// the `identity` method) and privacy lower bound (chance).
pub fn compute_bounds(cfg: &ArlConfig, data: &DatasetSplit) -> Result<Bounds> {
    let system = train_arl(
        &ArlConfig {
            method: Method::Identity,
            ..cfg.clone()
        },
        data,
    )?;
    Ok(Bounds {
        utility_upper: system.utility_accuracy(data)?,
        privacy_lower: privacy_lower_bound(data),
    })
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{sub_seed, ArlConfig, Method};
use crate::datasets::{batches, Batch, DatasetSplit, LabeledExample};
use crate::error::{Error, Result};
use crate::metrics::accuracy_of;
use crate::metrics::predictions;
use crate::nn::{ClassifierModel, Module, Obfuscator, UNet};
use crate::spectral::FilterSpec;
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

pub(crate) const SEED_ENCODER: u64 = 1;
pub(crate) const SEED_TASK: u64 = 2;
pub(crate) const SEED_ADVERSARY: u64 = 3;
pub(crate) const SEED_NOISE: u64 = 4;
pub(crate) const SEED_EVAL: u64 = 5;
pub(crate) const SEED_SHUFFLE: u64 = 6;

/// Images per forward pass when evaluating without gradients.
pub(crate) const EVAL_CHUNK: usize = 64;

/// Per-step losses of each player.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory {
    /// Proxy adversary `l_p`.
    pub adversary: Vec<f64>,
    /// Task model `l_t`.
    pub task: Vec<f64>,
    /// Obfuscator `l_t - lambda_p * l_p`.
    pub obfuscator: Vec<f64>,
}

impl LossHistory {
    /// Mean task loss of each epoch, given the number of task steps per epoch.
    pub fn epoch_means(values: &[f64], per_epoch: usize) -> Vec<f64> {
        values
            .chunks(per_epoch.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// Result of [`train_arl`]: the obfuscator and both classifiers after
/// training.
#[derive(Clone, Debug)]
pub struct TrainedSystem {
    pub config: ArlConfig,
    pub obfuscator: Obfuscator<f32>,
    pub task_model: ClassifierModel<f32>,
    pub adversary: ClassifierModel<f32>,
    pub history: LossHistory,
    /// Batches processed.
    pub batches: usize,
}

/// Builds the obfuscator for `cfg.method` on `[C, H, W]` images.
pub fn build_obfuscator(cfg: &ArlConfig, image_shape: &[usize]) -> Result<Obfuscator<f32>> {
    let [c, h, w] = image_shape else {
        return Err(Error::Dimension(format!("expected [C, H, W] images, got {image_shape:?}")));
    };
    let encoder = cfg
        .method
        .uses_encoder()
        .then(|| UNet::seeded(*c, cfg.encoder_width, sub_seed(cfg.seed, SEED_ENCODER)));
    let filter = if cfg.method.uses_filter() {
        Some(FilterSpec::low_pass(cfg.radius, (*h, *w))?)
    } else {
        None
    };
    Obfuscator::new(cfg.method.mode(cfg.noise_variance), encoder, filter)
}

fn check_finite(loss: f64, step: usize, player: &'static str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged { step, player })
    }
}

/// One supervised step of `model` on fixed inputs.
fn classifier_step(
    model: &mut ClassifierModel<f32>,
    opt: &mut Adam<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    step: usize,
    player: &'static str,
) -> Result<f64> {
    let mut g = Graph::new();
    let b = model.bind(&mut g, true);
    let xv = g.constant(x);
    let logits = model.forward(&mut g, &b, xv)?;
    let loss = g.softmax_cross_entropy(logits, labels)?;
    let value = check_finite(g.scalar(loss)? as f64, step, player)?;
    let grads = g.backward(loss)?;
    model.accumulate_grads(&b, &grads)?;
    opt.step(&mut model.parameters_mut())?;
    Ok(value)
}

/// Stepwise driver of the three-player loop. [`train_arl`] is the usual
/// entry point; the individual steps are public so that player isolation
/// can be observed.
pub struct ArlTrainer {
    cfg: ArlConfig,
    obfuscator: Obfuscator<f32>,
    task_model: ClassifierModel<f32>,
    adversary: ClassifierModel<f32>,
    opt_encoder: Adam<f32>,
    opt_task: Adam<f32>,
    opt_adversary: Adam<f32>,
    noise_rng: ChaCha8Rng,
    history: LossHistory,
    batches: usize,
}

impl ArlTrainer {
    pub fn new(cfg: &ArlConfig, data: &DatasetSplit) -> Result<Self> {
        cfg.validate()?;
        if data.train.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let shape = data.image_shape().to_vec();
        let mut obfuscator = build_obfuscator(cfg, &shape)?;
        if let Some(e) = obfuscator.encoder_mut() {
            e.set_trainable(true);
        }
        let mut task_model = ClassifierModel::seeded(shape[0], data.k_t, sub_seed(cfg.seed, SEED_TASK));
        let mut adversary = ClassifierModel::seeded(shape[0], data.k_p, sub_seed(cfg.seed, SEED_ADVERSARY));
        task_model.set_trainable(true);
        adversary.set_trainable(true);
        Ok(Self {
            cfg: cfg.clone(),
            obfuscator,
            task_model,
            adversary,
            opt_encoder: Adam::new(AdamConfig::with_lr(cfg.lr_encoder)),
            opt_task: Adam::new(AdamConfig::with_lr(cfg.lr_classifiers)),
            opt_adversary: Adam::new(AdamConfig::with_lr(cfg.lr_classifiers)),
            noise_rng: ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, SEED_NOISE)),
            history: LossHistory::default(),
            batches: 0,
        })
    }

    pub fn obfuscator(&self) -> &Obfuscator<f32> {
        &self.obfuscator
    }

    pub fn task_model(&self) -> &ClassifierModel<f32> {
        &self.task_model
    }

    pub fn adversary(&self) -> &ClassifierModel<f32> {
        &self.adversary
    }

    /// Whether the proxy adversary and obfuscator steps run at all. Methods
    /// without an encoder have nothing for the adversary to inform.
    fn adversarial(&self) -> bool {
        self.cfg.method.uses_encoder()
    }

    /// `o(x)` with the current, frozen encoder.
    pub fn obfuscate(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.obfuscator.obfuscate(x, &mut self.noise_rng)
    }

    /// Step (1): minimize `l_p` with respect to the proxy adversary only.
    pub fn adversary_step(&mut self, x_hat: &Tensor<f32>, y_p: &[usize]) -> Result<f64> {
        let l = classifier_step(&mut self.adversary, &mut self.opt_adversary, x_hat, y_p, self.batches, "adversary")?;
        self.history.adversary.push(l);
        Ok(l)
    }

    /// Step (2): minimize `l_t` with respect to the task model only.
    pub fn task_step(&mut self, x_hat: &Tensor<f32>, y_t: &[usize]) -> Result<f64> {
        let l = classifier_step(&mut self.task_model, &mut self.opt_task, x_hat, y_t, self.batches, "task")?;
        self.history.task.push(l);
        Ok(l)
    }

    /// Step (3): minimize `l_t - lambda_p * l_p` with respect to the encoder
    /// only, through the filter and both frozen classifiers.
    pub fn obfuscator_step(&mut self, x: &Tensor<f32>, y_t: &[usize], y_p: &[usize]) -> Result<f64> {
        let Some(encoder) = self.obfuscator.encoder() else {
            return Err(Error::Usage(format!("method {} has no encoder to train", self.cfg.method)));
        };
        let mut g = Graph::new();
        let eb = encoder.bind(&mut g, true);
        let tb = self.task_model.bind(&mut g, false);
        let ab = self.adversary.bind(&mut g, false);
        let xv = g.constant(x);
        let xh = self.obfuscator.forward(&mut g, Some(&eb), xv, &mut self.noise_rng)?;
        let lt = self.task_model.forward(&mut g, &tb, xh)?;
        let lt = g.softmax_cross_entropy(lt, y_t)?;
        let lp = self.adversary.forward(&mut g, &ab, xh)?;
        let lp = g.softmax_cross_entropy(lp, y_p)?;
        let weighted = g.mul_scalar(lp, self.cfg.lambda_p as f32);
        let lo = g.sub(lt, weighted)?;
        let value = check_finite(g.scalar(lo)? as f64, self.batches, "obfuscator")?;
        let grads = g.backward(lo)?;
        let encoder = self.obfuscator.encoder_mut().expect("checked above");
        encoder.accumulate_grads(&eb, &grads)?;
        self.opt_encoder.step(&mut encoder.parameters_mut())?;
        self.history.obfuscator.push(value);
        Ok(value)
    }

    /// Runs the full schedule on one batch.
    pub fn train_batch(&mut self, batch: &Batch) -> Result<()> {
        let x_hat = self.obfuscate(&batch.images)?;
        let s = self.cfg.schedule;
        if self.adversarial() {
            for _ in 0..s.adversary {
                self.adversary_step(&x_hat, &batch.y_p)?;
            }
        }
        for _ in 0..s.task {
            self.task_step(&x_hat, &batch.y_t)?;
        }
        if self.adversarial() {
            for _ in 0..s.obfuscator {
                self.obfuscator_step(&batch.images, &batch.y_t, &batch.y_p)?;
            }
        }
        self.batches += 1;
        Ok(())
    }

    pub fn train_epoch(&mut self, data: &[LabeledExample], epoch: usize) -> Result<()> {
        let seed = sub_seed(self.cfg.seed, SEED_SHUFFLE);
        for batch in batches(data, self.cfg.batch_size, Some(seed), epoch as u64)? {
            self.train_batch(&batch?)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> TrainedSystem {
        for m in [&mut self.task_model, &mut self.adversary] {
            m.set_trainable(false);
        }
        if let Some(e) = self.obfuscator.encoder_mut() {
            e.set_trainable(false);
        }
        TrainedSystem {
            config: self.cfg,
            obfuscator: self.obfuscator,
            task_model: self.task_model,
            adversary: self.adversary,
            history: self.history,
            batches: self.batches,
        }
    }
}

/// Adversarial training of obfuscator, task model and proxy adversary.
/// Per batch, in order: adversary step, task step, obfuscator step. Methods
/// without an encoder only train the task model.
pub fn train_arl(cfg: &ArlConfig, data: &DatasetSplit) -> Result<TrainedSystem> {
    let mut trainer = ArlTrainer::new(cfg, data)?;
    for epoch in 0..cfg.epochs {
        trainer.train_epoch(&data.train, epoch)?;
        let per_epoch = data.train.len().div_ceil(cfg.batch_size) * cfg.schedule.task;
        let recent = &trainer.history.task[trainer.history.task.len() - per_epoch..];
        log::info!(
            "{} epoch {}/{}: task loss {:.4}",
            cfg.method,
            epoch + 1,
            cfg.epochs,
            recent.iter().sum::<f64>() / recent.len() as f64
        );
    }
    Ok(trainer.finish())
}

/// Obfuscates every example (frozen obfuscator), keeping labels.
pub fn obfuscate_examples(
    obfuscator: &Obfuscator<f32>,
    examples: &[LabeledExample],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::with_capacity(examples.len());
    for batch in batches(examples, EVAL_CHUNK, None, 0)? {
        let batch = batch?;
        let xh = obfuscator.obfuscate(&batch.images, rng)?;
        for (j, &i) in batch.indices.iter().enumerate() {
            out.push(LabeledExample {
                image: xh.index_outer(j)?,
                y_t: examples[i].y_t,
                y_p: examples[i].y_p,
            });
        }
    }
    Ok(out)
}

/// Top-1 accuracy (percent) of `model` on already-obfuscated examples.
pub fn classifier_accuracy(
    model: &ClassifierModel<f32>,
    examples: &[LabeledExample],
    label: impl Fn(&LabeledExample) -> usize,
) -> Result<f64> {
    let mut pred = Vec::with_capacity(examples.len());
    for batch in batches(examples, EVAL_CHUNK, None, 0)? {
        pred.extend(predictions(&model.logits(&batch?.images)?)?);
    }
    let labels: Vec<usize> = examples.iter().map(label).collect();
    accuracy_of(&pred, &labels)
}

impl TrainedSystem {
    /// The test set as released by this system's obfuscator.
    pub fn obfuscate_test(&self, data: &DatasetSplit) -> Result<Vec<LabeledExample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.config.seed, SEED_EVAL));
        obfuscate_examples(&self.obfuscator, &data.test, &mut rng)
    }

    /// Utility accuracy (percent) of the task model on obfuscated test images.
    pub fn utility_accuracy(&self, data: &DatasetSplit) -> Result<f64> {
        classifier_accuracy(&self.task_model, &self.obfuscate_test(data)?, |e| e.y_t)
    }

    /// Privacy accuracy (percent) of the proxy adversary on obfuscated test
    /// images. This is not the reported privacy, which comes from a fresh
    /// post-hoc attacker.
    pub fn proxy_privacy_accuracy(&self, data: &DatasetSplit) -> Result<f64> {
        classifier_accuracy(&self.adversary, &self.obfuscate_test(data)?, |e| e.y_p)
    }
}

/// Convenience for code that names the method explicitly.
pub fn config_for(base: &ArlConfig, method: Method) -> ArlConfig {
    ArlConfig {
        method,
        ..base.clone()
    }
}

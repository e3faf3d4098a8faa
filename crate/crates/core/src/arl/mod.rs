//! The three-player adversarial training loop, the frozen-obfuscator
//! evaluation protocol, the two post-hoc attacks and the radius sweep.

mod attack;
mod config;
mod train;

pub use attack::{
    compute_bounds, leakage_attack, privacy_lower_bound, reconstruction_attack, train_classifier,
    train_frozen_adversary, train_reconstructor, AttackKind, AttackResult, LeakageResult, ObfuscatedSplit,
    ReconstructionResult, SampleTriplet,
};
pub use config::{ArlConfig, AttackConfig, Method, Schedule};
pub use train::{
    build_obfuscator, classifier_accuracy, config_for, obfuscate_examples, train_arl, ArlTrainer, LossHistory,
    TrainedSystem,
};

use crate::datasets::DatasetSplit;
use crate::error::{Error, Result};
use crate::metrics::{Bounds, ExperimentReport};

/// What [`run_pipeline`] should evaluate beyond utility and leakage.
#[derive(Clone, Copy, Debug, Default)]
pub struct PipelineOptions {
    pub reconstruction: bool,
    pub bounds: Option<Bounds>,
}

/// Everything produced by one method on one dataset.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub system: TrainedSystem,
    pub leakage: LeakageResult,
    pub reconstruction: Option<ReconstructionResult>,
    pub report: ExperimentReport,
}

/// Trains `cfg.method`, measures utility with its task model, then attacks
/// the frozen obfuscator with a fresh adversary (and optionally a
/// reconstructor). The report's privacy is the fresh adversary's accuracy.
pub fn run_pipeline(
    cfg: &ArlConfig,
    attack: &AttackConfig,
    data: &DatasetSplit,
    dataset: &str,
    opts: PipelineOptions,
) -> Result<RunOutcome> {
    let system = train_arl(cfg, data)?;
    let split = ObfuscatedSplit::new(&system.obfuscator, data, cfg.seed)?;
    let utility = classifier_accuracy(&system.task_model, &split.test, |e| e.y_t)?;
    let leakage = leakage_attack(&split, data.k_p, attack, cfg.seed)?;
    let reconstruction = if opts.reconstruction {
        Some(reconstruction_attack(&split, data, attack, cfg.seed)?)
    } else {
        None
    };
    let mut report = ExperimentReport::new(cfg.method.name(), dataset, utility, leakage.privacy, cfg.seed)?
        .with_radius(cfg.method.uses_filter().then_some(cfg.radius))
        .with_config(serde_json::json!({ "arl": cfg, "attack": attack }));
    if let Some(b) = opts.bounds {
        report = report.with_bounds(b);
    }
    if let Some(r) = &reconstruction {
        report = report.with_similarity(r.similarity);
    }
    Ok(RunOutcome {
        system,
        leakage,
        reconstruction,
        report,
    })
}

/// Removes repeated radii (keeping first occurrences) with a warning and
/// rejects lists with fewer than two distinct values.
pub fn dedup_radii(radii: &[f64]) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(radii.len());
    for &r in radii {
        if out.iter().any(|&x| x == r) {
            log::warn!("radius {r} listed more than once; running it once");
        } else {
            out.push(r);
        }
    }
    if out.len() < 2 {
        return Err(Error::Config(format!(
            "a sweep needs at least two distinct radii, got {radii:?}"
        )));
    }
    Ok(out)
}

/// Runs training plus the leakage attack for every radius with identical
/// seeds. `on_row` sees each report as soon as its radius finishes.
pub fn radius_sweep(
    base: &ArlConfig,
    radii: &[f64],
    attack: &AttackConfig,
    data: &DatasetSplit,
    dataset: &str,
    mut on_row: impl FnMut(&ExperimentReport) -> Result<()>,
) -> Result<Vec<ExperimentReport>> {
    let radii = dedup_radii(radii)?;
    let mut rows = Vec::with_capacity(radii.len());
    for r in radii {
        let cfg = ArlConfig {
            radius: r,
            ..base.clone()
        };
        let out = run_pipeline(&cfg, attack, data, dataset, PipelineOptions::default())?;
        on_row(&out.report)?;
        rows.push(out.report);
    }
    Ok(rows)
}

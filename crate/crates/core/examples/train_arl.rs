//! Trains the three-player game (encoder + low-pass filter against a task
//! classifier and an adversary) and then attacks the frozen obfuscator
//! with a fresh adversary.
//!
//! ```bash
//! cargo run --release --example train_arl
//! ```

use freqshield::arl::{run_pipeline, ArlConfig, AttackConfig, LossHistory, Method, PipelineOptions};
use freqshield::datasets::{gen_synthetic, SynthConfig};

fn main() -> freqshield::Result<()> {
    env_logger::init();
    let data = gen_synthetic(&SynthConfig {
        n_examples: 800,
        ..SynthConfig::default()
    })?;
    let cfg = ArlConfig {
        method: Method::Learned,
        epochs: 4,
        ..ArlConfig::desk_scale()
    };
    let out = run_pipeline(&cfg, &AttackConfig::matching(&cfg), &data, "synthetic", PipelineOptions::default())?;

    let per_epoch = data.train.len().div_ceil(cfg.batch_size);
    let fmt = |v: &[f64]| {
        LossHistory::epoch_means(v, per_epoch)
            .iter()
            .map(|l| format!("{l:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("task loss per epoch:      {}", fmt(&out.system.history.task));
    println!("adversary loss per epoch: {}", fmt(&out.system.history.adversary));
    println!("fresh attacker loss:      {}", fmt(&out.leakage.losses));
    let r = &out.report;
    println!(
        "{}: utility {:.2}%, privacy (attacker accuracy) {:.2}%, delta {:.2}",
        r.method, r.utility, r.privacy, r.delta
    );
    Ok(())
}

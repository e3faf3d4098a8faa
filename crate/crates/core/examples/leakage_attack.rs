//! Compares how much private information leaks through each obfuscation
//! method by training a fresh classifier on frozen obfuscator outputs.
//!
//! ```bash
//! cargo run --release --example leakage_attack
//! ```

use freqshield::arl::{
    leakage_attack, privacy_lower_bound, train_arl, ArlConfig, AttackConfig, Method, ObfuscatedSplit,
};
use freqshield::datasets::{gen_synthetic, SynthConfig};

fn main() -> freqshield::Result<()> {
    let data = gen_synthetic(&SynthConfig {
        n_examples: 400,
        size: 16,
        ..SynthConfig::default()
    })?;
    println!("chance level for the private task: {:.2}%", privacy_lower_bound(&data));
    for method in [Method::Identity, Method::Noise, Method::LpOnly, Method::Learned] {
        let cfg = ArlConfig {
            method,
            epochs: 3,
            ..ArlConfig::desk_scale()
        };
        let system = train_arl(&cfg, &data)?;
        let split = ObfuscatedSplit::new(&system.obfuscator, &data, cfg.seed)?;
        let leak = leakage_attack(&split, data.k_p, &AttackConfig::matching(&cfg), cfg.seed)?;
        println!("{:>9}: attacker accuracy {:.2}%", method.name(), leak.privacy);
    }
    Ok(())
}

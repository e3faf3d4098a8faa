//! Trains the learned obfuscator at several low-pass radii and prints the
//! utility and privacy of each.
//!
//! ```bash
//! cargo run --release --example radius_sweep
//! ```

use freqshield::arl::{radius_sweep, ArlConfig, AttackConfig, Method};
use freqshield::datasets::{gen_synthetic, SynthConfig};
use freqshield::metrics::format_table;

fn main() -> freqshield::Result<()> {
    let data = gen_synthetic(&SynthConfig {
        n_examples: 800,
        ..SynthConfig::default()
    })?;
    let base = ArlConfig {
        method: Method::Learned,
        epochs: 4,
        ..ArlConfig::desk_scale()
    };
    let rows = radius_sweep(
        &base,
        &[0.02, 0.05, 0.15, 0.4],
        &AttackConfig::matching(&base),
        &data,
        "synthetic",
        |row| {
            println!("r = {}: utility {:.2}, privacy {:.2}", row.r.unwrap_or(f64::NAN), row.utility, row.privacy);
            Ok(())
        },
    )?;
    println!("\n{}", format_table(&rows));
    Ok(())
}

//! Trains a U-Net to invert a frozen obfuscator and reports how close its
//! reconstructions get to the originals. Writes sample triplets as PPM
//! files when given a directory.
//!
//! ```bash
//! cargo run --release --example reconstruction_attack -- /tmp/recon
//! ```

use freqshield::arl::{reconstruction_attack, train_arl, ArlConfig, AttackConfig, Method, ObfuscatedSplit};
use freqshield::cli::pnm;
use freqshield::datasets::{gen_synthetic, SynthConfig};

fn main() -> freqshield::Result<()> {
    let data = gen_synthetic(&SynthConfig {
        n_examples: 400,
        size: 16,
        ..SynthConfig::default()
    })?;
    let out_dir = std::env::args().nth(1);
    for method in [Method::Identity, Method::LpOnly, Method::Learned] {
        let cfg = ArlConfig {
            method,
            epochs: 3,
            ..ArlConfig::desk_scale()
        };
        let system = train_arl(&cfg, &data)?;
        let split = ObfuscatedSplit::new(&system.obfuscator, &data, cfg.seed)?;
        let rec = reconstruction_attack(&split, &data, &AttackConfig::matching(&cfg), cfg.seed)?;
        let s = rec.similarity;
        println!(
            "{:>8}: mse {:>8.2}  l1 {:>6.2}  psnr {:>6.2} dB  ssim {:.3}  ms-ssim {:.3}",
            method.name(),
            s.mse,
            s.l1,
            s.psnr,
            s.ssim,
            s.ms_ssim
        );
        if let Some(dir) = &out_dir {
            let dir = std::path::Path::new(dir).join(method.name());
            std::fs::create_dir_all(&dir)?;
            for (i, t) in rec.samples.iter().enumerate() {
                for (tag, img) in [("original", &t.original), ("obfuscated", &t.obfuscated), ("reconstructed", &t.reconstructed)] {
                    pnm::write(img, dir.join(format!("{i}_{tag}.{}", pnm::extension(img))))?;
                }
            }
        }
    }
    Ok(())
}

//! Image similarity metrics on the 0-255 scale and experiment report rows.
//!
//! ```bash
//! cargo run --example metrics
//! ```

use freqshield::metrics::{format_table, ms_ssim, psnr, ssim, ExperimentReport, SimilarityReport};
use freqshield::Tensor;

fn main() -> freqshield::Result<()> {
    let original = Tensor::<f64>::from_fn(&[3, 32, 32], |i| ((i % 32) as f64 / 31.0 + (i / 1024) as f64 * 0.1).min(1.0));
    let noisy = Tensor::<f64>::from_fn(&[3, 32, 32], |i| (original.data()[i] + if i % 2 == 0 { 0.05 } else { -0.05 }).clamp(0.0, 1.0));
    let flat = Tensor::<f64>::from_fn(&[3, 32, 32], |_| 0.5);

    for (name, img) in [("identical", &original), ("noisy", &noisy), ("flat grey", &flat)] {
        println!(
            "{name:>10}: psnr {:>7.2} dB  ssim {:.4}  ms-ssim {:.4}",
            psnr(&original, img)?,
            ssim(&original, img)?,
            ms_ssim(&original, img)?
        );
    }
    let near = SimilarityReport::evaluate(&[original.clone()], &[noisy.clone()])?;
    let far = SimilarityReport::evaluate(&[original.clone()], &[flat])?;
    println!("flat grey is a worse reconstruction on {}/5 metrics", far.worse_count(&near));

    let rows = vec![
        ExperimentReport::new("learned", "synthetic", 99.7, 27.8, 0)?.with_radius(Some(0.05)),
        ExperimentReport::new("unet_only", "synthetic", 93.4, 50.3, 0)?,
        ExperimentReport::new("noise", "synthetic", 87.5, 27.2, 0)?,
    ];
    println!("\n{}", format_table(&rows));
    println!("{}", rows[0].to_json_line());
    Ok(())
}

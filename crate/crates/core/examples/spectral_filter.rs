//! Low-pass and high-pass filtering of a striped image in the centred
//! Fourier domain.
//!
//! ```bash
//! cargo run --example spectral_filter
//! ```

use freqshield::spectral::{band_energy_ratio, fft2, make_mask, FilterSpec, SpectralFilter};
use freqshield::Tensor;

fn main() -> freqshield::Result<()> {
    let (h, w) = (32, 32);
    // smooth ramp plus a fine vertical stripe pattern
    let image = Tensor::<f64>::from_fn(&[1, h, w], |i| {
        let (y, x) = (i / w, i % w);
        0.5 + 0.3 * (y as f64 / h as f64) + 0.2 * if x % 4 < 2 { 1.0 } else { -1.0 }
    });

    let plane = image.clone().reshape(&[h, w])?;
    let spectrum = fft2(&plane)?;
    let (cu, cv) = spectrum.center();
    println!("DC coefficient {:.2}, total energy {:.2}", spectrum.get(cu, cv).re, spectrum.energy());

    for r in [0.0, 0.05, 0.15, 0.4, 1.0] {
        let spec = FilterSpec::low_pass(r, (h, w))?;
        let mask = make_mask(&spec);
        let out = SpectralFilter::new(spec)?.apply(&image)?;
        let stripe = (out.data()[0] - out.data()[2]).abs();
        println!(
            "low-pass r={r:<4}: keeps {:>4} bins, {:>6.2}% of energy, stripe contrast {stripe:.3}",
            mask.kept(),
            100.0 * band_energy_ratio(&image, &spec)?
        );
    }

    let hp = SpectralFilter::new(FilterSpec::high_pass(0.05, (h, w))?)?.apply(&image)?;
    let mean = hp.data().iter().sum::<f64>() / hp.numel() as f64;
    println!("high-pass r=0.05 removes the mean: {mean:.2e}");
    Ok(())
}

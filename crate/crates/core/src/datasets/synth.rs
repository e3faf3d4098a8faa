use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, LabeledExample};
use crate::error::{Error, Result};
use crate::spectral::{fft2, normalized_distance, FilterSpec, SpectralFilter};
use crate::tensor::Tensor;

/// Utility classes: warm (hue 0°..60°) vs cool (hue 180°..240°) background.
pub const K_T: usize = 2;
/// Privacy classes: horizontal, vertical, diagonal, anti-diagonal stripes.
pub const K_P: usize = 4;

const TEST_FRACTION: f64 = 0.2;
const ORACLE_RADIUS: f64 = 0.05;
const ORACLE_FLOOR: f64 = 0.95;
/// Stripe energy is searched only above this normalized radius.
const STRIPE_BAND: f64 = 0.3;

/// Parameters of the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_examples: usize,
    /// Square side length; a power of two, at least 16.
    pub size: usize,
    /// Standard deviation of the additive Gaussian pixel noise.
    pub noise: f64,
    /// Stripe amplitude is drawn uniformly from this range.
    pub stripe_amplitude: (f64, f64),
    /// Background saturation range; small values give a faint colour tint.
    pub saturation: (f64, f64),
    /// Background brightness range.
    pub value: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_examples: 1600,
            size: 32,
            noise: 0.03,
            stripe_amplitude: (0.15, 0.25),
            saturation: (0.04, 0.15),
            value: (0.45, 0.65),
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let min = 8 * K_T * K_P;
        if self.n_examples < min {
            return Err(Error::Config(format!(
                "n_examples must be at least {min} for a balanced split, got {}",
                self.n_examples
            )));
        }
        if self.size < 16 || !self.size.is_power_of_two() {
            return Err(Error::Config(format!(
                "image size must be a power of two >= 16, got {}",
                self.size
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        let (lo, hi) = self.stripe_amplitude;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return Err(Error::Config(format!(
                "stripe amplitude range must satisfy 0 < lo <= hi <= 0.5, got ({lo}, {hi})"
            )));
        }
        for (name, (lo, hi)) in [("saturation", self.saturation), ("value", self.value)] {
            if !(0.0 < lo && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!(
                    "{name} range must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Accuracies of the two closed-form oracles on a set of examples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Mean-colour threshold on low-pass filtered images.
    pub utility_accuracy: f64,
    /// Spectral-peak orientation on unfiltered images.
    pub privacy_accuracy: f64,
}

impl OracleReport {
    pub fn evaluate(examples: &[LabeledExample]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Usage("oracles need at least one example".into()));
        }
        let shape = examples[0].image.shape();
        let filter = SpectralFilter::new(FilterSpec::low_pass(ORACLE_RADIUS, (shape[1], shape[2]))?)?;
        let (mut ut, mut pr) = (0usize, 0usize);
        for e in examples {
            let lp = filter.apply(&e.image)?;
            ut += usize::from(mean_color_oracle(&lp)? == e.y_t);
            pr += usize::from(stripe_orientation_oracle(&e.image)? == e.y_p);
        }
        let n = examples.len() as f64;
        Ok(Self {
            utility_accuracy: ut as f64 / n,
            privacy_accuracy: pr as f64 / n,
        })
    }
}

fn channel_mean(image: &Tensor<f32>, c: usize) -> f64 {
    let area = image.shape()[1] * image.shape()[2];
    image.data()[c * area..(c + 1) * area].iter().map(|&v| v as f64).sum::<f64>() / area as f64
}

/// Predicts the background class from the sign of `mean(B) - mean(R)`.
pub fn mean_color_oracle(image: &Tensor<f32>) -> Result<usize> {
    if image.shape().len() != 3 || image.shape()[0] != 3 {
        return Err(Error::Dimension(format!(
            "mean-colour oracle needs a [3, H, W] image, got {:?}",
            image.shape()
        )));
    }
    Ok(usize::from(channel_mean(image, 2) > channel_mean(image, 0)))
}

/// Predicts the stripe orientation from the strongest high-frequency bin of
/// the grayscale spectrum.
pub fn stripe_orientation_oracle(image: &Tensor<f32>) -> Result<usize> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::Dimension(format!("expected a [C, H, W] image, got {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let area = h * w;
    let mut gray = vec![0.0f64; area];
    for ch in 0..c {
        for (g, &v) in gray.iter_mut().zip(&image.data()[ch * area..(ch + 1) * area]) {
            *g += v as f64 / c as f64;
        }
    }
    let spectrum = fft2(&Tensor::new(vec![h, w], gray)?)?;
    let (cy, cx) = spectrum.center();
    let mut best = (0.0f64, 0isize, 0isize);
    for u in 0..h {
        for v in 0..w {
            if normalized_distance(u, v, h, w) <= STRIPE_BAND {
                continue;
            }
            let m = spectrum.get(u, v).norm_sqr();
            if m > best.0 {
                best = (m, u as isize - cy as isize, v as isize - cx as isize);
            }
        }
    }
    let (_, du, dv) = best;
    Ok(match (du, dv) {
        (_, 0) => 0,
        (0, _) => 1,
        _ if du.signum() == dv.signum() => 2,
        _ => 3,
    })
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Integer frequency vector `(ky, kx)` of a stripe of class `y_p`.
fn stripe_frequency(y_p: usize, size: usize, rng: &mut impl Rng) -> (isize, isize) {
    let n = size as f64;
    let axis = rng.gen_range((n / 4.0).ceil() as isize..=(size / 2 - 1) as isize);
    let diag = rng.gen_range((n / (4.0 * 2f64.sqrt())).ceil() as isize..=(n / (2.0 * 2f64.sqrt())).floor() as isize);
    match y_p {
        0 => (axis, 0),
        1 => (0, axis),
        2 => (diag, diag),
        _ => (diag, -diag),
    }
}

fn render(cfg: &SynthConfig, y_t: usize, y_p: usize, rng: &mut ChaCha8Rng) -> Result<Tensor<f32>> {
    let n = cfg.size;
    let hue = if y_t == 0 {
        rng.gen_range(0.0..60.0)
    } else {
        rng.gen_range(180.0..240.0)
    };
    let s = draw(rng, cfg.saturation);
    let rgb = hsv_to_rgb(hue, s, draw(rng, cfg.value));

    // Lowest-frequency shading keeps the background from being perfectly flat.
    let shade_amp = rng.gen_range(0.0..0.08);
    let shade_phase = rng.gen_range(0.0..2.0 * PI);
    let shade_vertical = rng.gen_bool(0.5);

    let (ky, kx) = stripe_frequency(y_p, n, rng);
    let amp = draw(rng, cfg.stripe_amplitude);
    let phase = rng.gen_range(0.0..2.0 * PI);

    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
    let step = 2.0 * PI / n as f64;
    let mut data = vec![0.0f32; 3 * n * n];
    for c in 0..3 {
        for y in 0..n {
            for x in 0..n {
                let t = if shade_vertical { y } else { x };
                let shade = 1.0 + shade_amp * (step * t as f64 + shade_phase).cos();
                let stripe = amp * (step * (ky * y as isize + kx * x as isize) as f64 + phase).cos();
                let v = rgb[c] * shade + stripe + noise.sample(rng);
                data[(c * n + y) * n + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Tensor::new(vec![3, n, n], data)
}

/// Generates a stratified 80/20 split and verifies both oracles on the test
/// partition.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<DatasetSplit> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cells = K_T * K_P;
    let (base, extra) = (cfg.n_examples / cells, cfg.n_examples % cells);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for cell in 0..cells {
        let (y_t, y_p) = (cell / K_P, cell % K_P);
        let count = base + usize::from(cell < extra);
        let n_test = (count as f64 * TEST_FRACTION).round() as usize;
        for i in 0..count {
            let image = render(cfg, y_t, y_p, &mut rng)?;
            let e = LabeledExample { image, y_t, y_p };
            if i < n_test {
                test.push(e);
            } else {
                train.push(e);
            }
        }
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    let split = DatasetSplit {
        train,
        test,
        k_t: K_T,
        k_p: K_P,
        seed: cfg.seed,
    };
    let gap = split.max_marginal_gap();
    if gap > 0.05 {
        return Err(Error::Config(format!(
            "{} examples cannot be split with label marginals within 5% of balanced (gap {gap:.3})",
            cfg.n_examples
        )));
    }
    let report = OracleReport::evaluate(&split.test)?;
    if report.utility_accuracy < ORACLE_FLOOR || report.privacy_accuracy < ORACLE_FLOOR {
        return Err(Error::Config(format!(
            "generated data is not separable: mean-colour oracle {:.3}, stripe oracle {:.3} (need {ORACLE_FLOOR})",
            report.utility_accuracy, report.privacy_accuracy
        )));
    }
    Ok(split)
}

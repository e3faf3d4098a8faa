use crate::error::{dim_err, Error, Result};
use crate::tensor::{Real, Tensor};

/// Peak value on the reporting scale.
pub const MAX_PIXEL: f64 = 255.0;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
/// Standard five-scale MS-SSIM weights, finest scale first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn check_pair<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return dim_err(format!("shapes {:?} and {:?} differ", a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean squared and mean absolute error on the 0–255 scale, for inputs
/// stored in `[0, 1]`.
pub fn mse_l1<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(f64, f64)> {
    check_pair(a, b)?;
    let (mut se, mut ae) = (0.0, 0.0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = (x.as_f64() - y.as_f64()) * MAX_PIXEL;
        se += d * d;
        ae += d.abs();
    }
    let n = a.numel() as f64;
    Ok((se / n, ae / n))
}

/// PSNR in dB for an MSE on the 0–255 scale; zero error gives `+inf`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (MAX_PIXEL * MAX_PIXEL / mse).log10()
    }
}

pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    Ok(psnr_from_mse(mse_l1(a, b)?.0))
}

/// Grayscale plane on the 0–255 scale: the channel mean of `[C, H, W]`, or
/// the plane itself for `[H, W]`.
#[derive(Clone, Debug)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn gray<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let (c, h, w) = match t.shape() {
            [h, w] => (1, *h, *w),
            [c, h, w] => (*c, *h, *w),
            s => return dim_err(format!("expected [C, H, W] or [H, W], got {s:?}")),
        };
        let area = h * w;
        let mut v = vec![0.0; area];
        for ch in 0..c {
            for (g, x) in v.iter_mut().zip(&t.data()[ch * area..(ch + 1) * area]) {
                *g += x.as_f64() * MAX_PIXEL;
            }
        }
        v.iter_mut().for_each(|g| *g /= c as f64);
        Ok(Self { h, w, v })
    }

    fn map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            v: self.v.iter().zip(&other.v).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// 2×2 average pooling (odd trailing row/column dropped).
    fn downsample(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let at = |dy, dx| self.v[(2 * y + dy) * self.w + 2 * x + dx];
                v.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
            }
        }
        Plane { h, w, v }
    }

    /// Valid-mode separable filtering with a normalized 1-D kernel.
    fn filter(&self, k: &[f64]) -> Plane {
        let n = k.len();
        let (oh, ow) = (self.h - n + 1, self.w - n + 1);
        let mut rows = vec![0.0; self.h * ow];
        for y in 0..self.h {
            for x in 0..ow {
                rows[y * ow + x] = (0..n).map(|i| k[i] * self.v[y * self.w + x + i]).sum();
            }
        }
        let mut v = vec![0.0; oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                v[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
            }
        }
        Plane { h: oh, w: ow, v }
    }
}

fn gaussian(size: usize) -> Vec<f64> {
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

/// Mean luminance term and mean contrast-structure term over all window
/// positions.
fn ssim_terms(a: &Plane, b: &Plane, window: usize) -> (f64, f64) {
    let k = gaussian(window);
    let c1 = (K1 * MAX_PIXEL).powi(2);
    let c2 = (K2 * MAX_PIXEL).powi(2);
    let mu_a = a.filter(&k);
    let mu_b = b.filter(&k);
    let aa = a.map(a, |x, y| x * y).filter(&k);
    let bb = b.map(b, |x, y| x * y).filter(&k);
    let ab = a.map(b, |x, y| x * y).filter(&k);
    let n = mu_a.v.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.v.len() {
        let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
        let va = aa.v[i] - ma * ma;
        let vb = bb.v[i] - mb * mb;
        let cov = ab.v[i] - ma * mb;
        let contrast = (2.0 * cov + c2) / (va + vb + c2);
        let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim += lum * contrast;
        cs += contrast;
    }
    (ssim / n, cs / n)
}

/// Single-scale SSIM of the grayscale (channel-mean) images with an 11×11
/// Gaussian window, `σ = 1.5`.
pub fn ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check_pair(a, b)?;
    let (pa, pb) = (Plane::gray(a)?, Plane::gray(b)?);
    if pa.h < WINDOW || pa.w < WINDOW {
        return dim_err(format!("SSIM needs at least {WINDOW}x{WINDOW}, got {}x{}", pa.h, pa.w));
    }
    Ok(ssim_terms(&pa, &pb, WINDOW).0)
}

/// Number of dyadic scales used for a shortest side of `side` pixels:
/// five at 176 px and above, fewer for small images (three at 32 px).
pub fn ms_ssim_scales(side: usize) -> usize {
    if side < 8 {
        return 0;
    }
    ((side / 8).ilog2() as usize + 1).min(MS_SSIM_WEIGHTS.len())
}

/// The leading `scales` weights renormalized to sum to one.
pub fn ms_ssim_weights(scales: usize) -> Vec<f64> {
    let w = &MS_SSIM_WEIGHTS[..scales.min(MS_SSIM_WEIGHTS.len())];
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Multi-scale SSIM. Contrast-structure is taken at every scale and
/// luminance only at the coarsest. Images smaller than 176 px use fewer
/// scales with renormalized weights; the window shrinks to the largest odd
/// size that fits at coarse scales. Negative terms are clamped to zero.
pub fn ms_ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check_pair(a, b)?;
    let (mut pa, mut pb) = (Plane::gray(a)?, Plane::gray(b)?);
    let scales = ms_ssim_scales(pa.h.min(pa.w));
    if scales == 0 {
        return Err(Error::Dimension(format!(
            "MS-SSIM needs at least 8x8, got {}x{}",
            pa.h, pa.w
        )));
    }
    let weights = ms_ssim_weights(scales);
    let mut out = 1.0;
    for (i, &wt) in weights.iter().enumerate() {
        let side = pa.h.min(pa.w);
        let window = WINDOW.min(side - (1 - side % 2));
        let (s, cs) = ssim_terms(&pa, &pb, window);
        let term = if i + 1 == scales { s } else { cs };
        out *= term.max(0.0).powf(wt);
        if i + 1 < scales {
            pa = pa.downsample();
            pb = pb.downsample();
        }
    }
    Ok(out)
}

/// Test-set averages of the similarity metrics between originals and
/// reconstructions.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimilarityReport {
    pub mse: f64,
    pub l1: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    #[serde(with = "super::report::inf_as_string")]
    pub psnr: f64,
}

impl SimilarityReport {
    /// Averages every metric over image pairs (`[C, H, W]` each). PSNR is the
    /// mean of per-image PSNR, so a single perfect copy makes it `+inf`.
    pub fn evaluate<T: Real>(originals: &[Tensor<T>], reconstructions: &[Tensor<T>]) -> Result<Self> {
        if originals.len() != reconstructions.len() || originals.is_empty() {
            return Err(Error::Dimension(format!(
                "{} originals vs {} reconstructions",
                originals.len(),
                reconstructions.len()
            )));
        }
        let mut acc = [0.0f64; 5];
        for (a, b) in originals.iter().zip(reconstructions) {
            let (mse, l1) = mse_l1(a, b)?;
            acc[0] += mse;
            acc[1] += l1;
            acc[2] += ssim(a, b)?;
            acc[3] += ms_ssim(a, b)?;
            acc[4] += psnr_from_mse(mse);
        }
        let n = originals.len() as f64;
        Ok(Self {
            mse: acc[0] / n,
            l1: acc[1] / n,
            ssim: acc[2] / n,
            ms_ssim: acc[3] / n,
            psnr: acc[4] / n,
        })
    }

    /// Number of metrics on which `self` is a strictly worse reconstruction
    /// than `other` (higher MSE/L1, lower SSIM/MS-SSIM/PSNR).
    pub fn worse_count(&self, other: &SimilarityReport) -> usize {
        [
            self.mse > other.mse,
            self.l1 > other.l1,
            self.ssim < other.ssim,
            self.ms_ssim < other.ms_ssim,
            self.psnr < other.psnr,
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }
}

use num_complex::Complex;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{Real, Tensor};

/// Iterative radix-2 plan for one transform length.
#[derive(Clone, Debug)]
struct Radix2<T> {
    n: usize,
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<usize>,
}

impl<T: Real> Radix2<T> {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| {
                let theta = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex::new(T::of(theta.cos()), T::of(theta.sin()))
            })
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    /// Unnormalized transform of `buf`, forward (`e^{-i…}`) or inverse.
    fn run(&self, buf: &mut [Complex<T>], inverse: bool) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Reusable plan for `H × W` transforms.
#[derive(Clone, Debug)]
pub struct Fft2Plan<T> {
    height: usize,
    width: usize,
    rows: Radix2<T>,
    cols: Radix2<T>,
}

impl<T: Real> Fft2Plan<T> {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || !height.is_power_of_two() || !width.is_power_of_two() {
            return Err(Error::UnsupportedSize { height, width });
        }
        Ok(Self {
            height,
            width,
            rows: Radix2::new(width),
            cols: Radix2::new(height),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// In-place unnormalized 2D transform in natural (uncentered) layout.
    pub fn transform(&self, buf: &mut [Complex<T>], inverse: bool) {
        let (h, w) = (self.height, self.width);
        assert_eq!(buf.len(), h * w);
        for row in buf.chunks_exact_mut(w) {
            self.rows.run(row, inverse);
        }
        let mut column = vec![Complex::new(T::zero(), T::zero()); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = buf[y * w + x];
            }
            self.cols.run(&mut column, inverse);
            for y in 0..h {
                buf[y * w + x] = column[y];
            }
        }
    }
}

/// Complex `H × W` spectrum with zero frequency at `(H/2, W/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn center(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    pub fn get(&self, u: usize, v: usize) -> Complex<T> {
        self.data[u * self.width + v]
    }

    /// Total energy `Σ |S|²`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr().as_f64()).sum()
    }
}

fn plane_dims<T: Real>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] => Ok((*h, *w)),
        [1, h, w] => Ok((*h, *w)),
        s => dim_err(format!("expected a single H×W channel, got shape {s:?}")),
    }
}

/// Moves index `i` of an axis of length `n` between natural and centered layout.
pub(crate) fn shift(i: usize, n: usize) -> usize {
    (i + n / 2) % n
}

/// Forward unnormalized DFT of one real channel, center-shifted.
pub fn fft2<T: Real>(channel: &Tensor<T>) -> Result<Spectrum<T>> {
    let (h, w) = plane_dims(channel)?;
    let plan = Fft2Plan::new(h, w)?;
    let mut buf: Vec<Complex<T>> = channel
        .data()
        .iter()
        .map(|&x| Complex::new(x, T::zero()))
        .collect();
    plan.transform(&mut buf, false);
    let mut data = vec![Complex::new(T::zero(), T::zero()); h * w];
    for y in 0..h {
        for x in 0..w {
            data[shift(y, h) * w + shift(x, w)] = buf[y * w + x];
        }
    }
    Ok(Spectrum {
        height: h,
        width: w,
        data,
    })
}

/// Inverse of [`fft2`]: un-shifts, applies the `1/(HW)` inverse DFT and
/// returns the real part with the largest discarded imaginary magnitude.
pub fn ifft2<T: Real>(spectrum: &Spectrum<T>) -> Result<(Tensor<T>, f64)> {
    let (h, w) = (spectrum.height, spectrum.width);
    if spectrum.data.len() != h * w {
        return dim_err(format!(
            "spectrum holds {} bins but claims {h}x{w}",
            spectrum.data.len()
        ));
    }
    let plan = Fft2Plan::new(h, w)?;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
    for y in 0..h {
        for x in 0..w {
            buf[y * w + x] = spectrum.data[shift(y, h) * w + shift(x, w)];
        }
    }
    plan.transform(&mut buf, true);
    let norm = T::one() / T::of((h * w) as f64);
    let mut residual = 0.0f64;
    let real = buf
        .iter()
        .map(|c| {
            residual = residual.max((c.im * norm).abs().as_f64());
            c.re * norm
        })
        .collect();
    Ok((Tensor::new(vec![h, w], real)?, residual))
}

use super::Real;
use crate::error::{dim_err, Result};

/// Shape bookkeeping for an NCHW × OIKK cross-correlation.
#[derive(Clone, Copy, Debug)]
pub(super) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], k: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if x.len() != 4 || k.len() != 4 {
            return dim_err(format!(
                "conv2d expects NCHW input and OIKK kernel, got {x:?} and {k:?}"
            ));
        }
        if stride == 0 {
            return dim_err("conv2d stride must be positive");
        }
        let (n, c, h, w) = (x[0], x[1], x[2], x[3]);
        let (o, ci, kh, kw) = (k[0], k[1], k[2], k[3]);
        if c != ci {
            return dim_err(format!(
                "conv2d input has {c} channels but kernel expects {ci}"
            ));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return dim_err(format!(
                "conv2d output size is not positive: input {h}x{w}, pad {pad}, kernel {kh}x{kw}"
            ));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.o, self.ho, self.wo]
    }
}

fn im2col<T: Real>(img: &[T], g: &ConvGeom, col: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &img[(c * g.h + iy as usize) * g.w..][..g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(col: &[T], g: &ConvGeom, img: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut img[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(super) fn forward<T: Real>(x: &[T], k: &[T], g: &ConvGeom) -> Vec<T> {
    let in_img = g.c * g.h * g.w;
    let out_img = g.o * g.out_plane();
    let patch = g.patch();
    let plane = g.out_plane();
    let mut out = vec![T::zero(); g.n * out_img];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); patch * plane]
    };
    for i in 0..g.n {
        let img = &x[i * in_img..(i + 1) * in_img];
        let cols: &[T] = if g.is_pointwise() {
            img
        } else {
            im2col(img, g, &mut col);
            &col
        };
        T::gemm_raw(
            g.o,
            patch,
            plane,
            k,
            patch as isize,
            1,
            cols,
            plane as isize,
            1,
            T::zero(),
            &mut out[i * out_img..(i + 1) * out_img],
            plane as isize,
            1,
        );
    }
    out
}

/// Returns `(d input, d kernel)`, each only when requested.
pub(super) fn backward<T: Real>(
    x: &[T],
    k: &[T],
    gout: &[T],
    g: &ConvGeom,
    need_dx: bool,
    need_dk: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let in_img = g.c * g.h * g.w;
    let out_img = g.o * g.out_plane();
    let patch = g.patch();
    let plane = g.out_plane();
    let mut dx = need_dx.then(|| vec![T::zero(); x.len()]);
    let mut dk = need_dk.then(|| vec![T::zero(); k.len()]);
    let mut col = vec![T::zero(); patch * plane];
    let mut dcol = vec![T::zero(); patch * plane];
    for i in 0..g.n {
        let img = &x[i * in_img..(i + 1) * in_img];
        let go = &gout[i * out_img..(i + 1) * out_img];
        if let Some(dk) = dk.as_mut() {
            let cols: &[T] = if g.is_pointwise() {
                img
            } else {
                im2col(img, g, &mut col);
                &col
            };
            // dK (O×P) += dOut (O×L) · colsᵀ (L×P)
            T::gemm_raw(
                g.o,
                plane,
                patch,
                go,
                plane as isize,
                1,
                cols,
                1,
                plane as isize,
                T::one(),
                dk,
                patch as isize,
                1,
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dimg = &mut dx[i * in_img..(i + 1) * in_img];
            // dcol (P×L) = Kᵀ (P×O) · dOut (O×L)
            if g.is_pointwise() {
                T::gemm_raw(
                    patch,
                    g.o,
                    plane,
                    k,
                    1,
                    patch as isize,
                    go,
                    plane as isize,
                    1,
                    T::one(),
                    dimg,
                    plane as isize,
                    1,
                );
            } else {
                T::gemm_raw(
                    patch,
                    g.o,
                    plane,
                    k,
                    1,
                    patch as isize,
                    go,
                    plane as isize,
                    1,
                    T::zero(),
                    &mut dcol,
                    plane as isize,
                    1,
                );
                col2im_add(&dcol, g, dimg);
            }
        }
    }
    (dx, dk)
}

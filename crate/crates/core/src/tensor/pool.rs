use super::Real;

/// 2×2 max pooling over every plane of an NCHW buffer. Returns the pooled
/// values and, for each output, the flat input index that won (first max on
/// ties).
pub(super) fn maxpool2<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub(super) fn avgpool2<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut out = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let i = base + 2 * oy * w + 2 * ox;
                out.push((x[i] + x[i + 1] + x[i + w] + x[i + w + 1]) * quarter);
            }
        }
    }
    out
}

pub(super) fn avgpool2_backward<T: Real>(g: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for oy in 0..ho {
            for ox in 0..wo {
                let v = g[(p * ho + oy) * wo + ox] * quarter;
                let i = p * h * w + 2 * oy * w + 2 * ox;
                dx[i] = v;
                dx[i + 1] = v;
                dx[i + w] = v;
                dx[i + w + 1] = v;
            }
        }
    }
    dx
}

pub(super) fn upsample2<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * ho * wo];
    for p in 0..planes {
        for y in 0..ho {
            let src = &x[(p * h + y / 2) * w..][..w];
            let dst = &mut out[(p * ho + y) * wo..][..wo];
            for (xo, v) in dst.iter_mut().enumerate() {
                *v = src[xo / 2];
            }
        }
    }
    out
}

pub(super) fn upsample2_backward<T: Real>(g: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for y in 0..ho {
            let src = &g[(p * ho + y) * wo..][..wo];
            let dst = &mut dx[(p * h + y / 2) * w..][..w];
            for (xo, &v) in src.iter().enumerate() {
                dst[xo / 2] += v;
            }
        }
    }
    dx
}

pub(super) fn global_avg<T: Real>(x: &[T], planes: usize, area: usize) -> Vec<T> {
    let inv = T::one() / T::of(area as f64);
    x.chunks_exact(area)
        .take(planes)
        .map(|c| c.iter().copied().sum::<T>() * inv)
        .collect()
}

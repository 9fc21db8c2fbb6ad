//! Numeric kernels behind the graph ops. Layout is NCHW throughout.
//!
//! None of these spawn threads; every reduction runs in a fixed order so results
//! are bit-reproducible.

use crate::real::Real;

/// Geometry of a 2D convolution from the "wide" side (`h`×`w`, `c_wide`
/// channels) to the "narrow" side (`ho`×`wo`, `c_narrow` channels).
///
/// A transposed convolution is the adjoint of the same geometry, so one struct
/// serves both layer kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_wide: usize,
    pub c_narrow: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// Output size and top/left padding for TensorFlow-style `same` padding.
    pub fn same(c_wide: usize, c_narrow: usize, k: usize, stride: usize, h: usize, w: usize) -> Self {
        let ho = h.div_ceil(stride);
        let wo = w.div_ceil(stride);
        let pad_total = ((ho - 1) * stride + k).saturating_sub(h);
        Self {
            c_wide,
            c_narrow,
            k,
            stride,
            pad: pad_total / 2,
            h,
            w,
            ho,
            wo,
        }
    }

    pub fn valid(c_wide: usize, c_narrow: usize, k: usize, stride: usize, h: usize, w: usize) -> Self {
        Self {
            c_wide,
            c_narrow,
            k,
            stride,
            pad: 0,
            h,
            w,
            ho: (h - k) / stride + 1,
            wo: (w - k) / stride + 1,
        }
    }

    pub fn patch_len(&self) -> usize {
        self.c_wide * self.k * self.k
    }

    pub fn wide_len(&self) -> usize {
        self.c_wide * self.h * self.w
    }

    pub fn narrow_len(&self) -> usize {
        self.c_narrow * self.ho * self.wo
    }

    pub fn weight_len(&self) -> usize {
        self.c_narrow * self.patch_len()
    }

    fn src(&self, o: usize, kk: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + kk) as isize - self.pad as isize;
        if pos >= 0 && (pos as usize) < extent {
            Some(pos as usize)
        } else {
            None
        }
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let spatial = self.ho * self.wo;
        for c in 0..self.c_wide {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let out = &mut cols[row * spatial..(row + 1) * spatial];
                    for i in 0..self.ho {
                        let dst = &mut out[i * self.wo..(i + 1) * self.wo];
                        match self.src(i, ki, self.h) {
                            None => dst.fill(T::zero()),
                            Some(si) => {
                                let src_row = &plane[si * self.w..(si + 1) * self.w];
                                for (j, d) in dst.iter_mut().enumerate() {
                                    *d = match self.src(j, kj, self.w) {
                                        Some(sj) => src_row[sj],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add<T: Real>(&self, cols: &[T], x: &mut [T]) {
        let spatial = self.ho * self.wo;
        for c in 0..self.c_wide {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let src = &cols[row * spatial..(row + 1) * spatial];
                    for i in 0..self.ho {
                        let Some(si) = self.src(i, ki, self.h) else {
                            continue;
                        };
                        for j in 0..self.wo {
                            if let Some(sj) = self.src(j, kj, self.w) {
                                plane[si * self.w + sj] += src[i * self.wo + j];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Wide → narrow convolution: `y = conv(x, w)`.
pub fn conv_forward<T: Real>(g: &ConvGeom, n: usize, x: &[T], w: &[T]) -> Vec<T> {
    let spatial = g.ho * g.wo;
    let p = g.patch_len();
    let mut cols = vec![T::zero(); p * spatial];
    let mut y = vec![T::zero(); n * g.narrow_len()];
    for b in 0..n {
        g.im2col(&x[b * g.wide_len()..(b + 1) * g.wide_len()], &mut cols);
        let out = &mut y[b * g.narrow_len()..(b + 1) * g.narrow_len()];
        T::gemm(
            g.c_narrow, p, spatial, w, p as isize, 1, &cols, spatial as isize, 1, T::zero(), out,
            spatial as isize, 1,
        );
    }
    y
}

/// Adjoint of [`conv_forward`] with respect to its input (narrow → wide).
pub fn conv_data<T: Real>(g: &ConvGeom, n: usize, gy: &[T], w: &[T]) -> Vec<T> {
    let spatial = g.ho * g.wo;
    let p = g.patch_len();
    let mut cols = vec![T::zero(); p * spatial];
    let mut gx = vec![T::zero(); n * g.wide_len()];
    for b in 0..n {
        let src = &gy[b * g.narrow_len()..(b + 1) * g.narrow_len()];
        // cols = wᵀ · gy
        T::gemm(
            p, g.c_narrow, spatial, w, 1, p as isize, src, spatial as isize, 1, T::zero(),
            &mut cols, spatial as isize, 1,
        );
        g.col2im_add(&cols, &mut gx[b * g.wide_len()..(b + 1) * g.wide_len()]);
    }
    gx
}

/// Gradient of [`conv_forward`] with respect to its filter.
pub fn conv_filter<T: Real>(g: &ConvGeom, n: usize, x: &[T], gy: &[T]) -> Vec<T> {
    let spatial = g.ho * g.wo;
    let p = g.patch_len();
    let mut cols = vec![T::zero(); p * spatial];
    let mut gw = vec![T::zero(); g.weight_len()];
    for b in 0..n {
        g.im2col(&x[b * g.wide_len()..(b + 1) * g.wide_len()], &mut cols);
        let src = &gy[b * g.narrow_len()..(b + 1) * g.narrow_len()];
        // gw += gy · colsᵀ
        T::gemm(
            g.c_narrow, spatial, p, src, spatial as isize, 1, &cols, 1, spatial as isize,
            T::one(), &mut gw, p as isize, 1,
        );
    }
    gw
}

/// `C = op(A)·op(B)` for row-major matrices, `A` is `m×k` after transposition.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(
    a: &[T],
    a_rows: usize,
    a_cols: usize,
    ta: bool,
    b: &[T],
    b_rows: usize,
    b_cols: usize,
    tb: bool,
) -> (Vec<T>, usize, usize) {
    let (m, k) = if ta { (a_cols, a_rows) } else { (a_rows, a_cols) };
    let (k2, n) = if tb { (b_cols, b_rows) } else { (b_rows, b_cols) };
    debug_assert_eq!(k, k2);
    let (rsa, csa) = if ta { (1, a_cols as isize) } else { (a_cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b_cols as isize) } else { (b_cols as isize, 1) };
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, a, rsa, csa, b, rsb, csb, T::zero(), &mut c, n as isize, 1);
    (c, m, n)
}

/// Mean over non-overlapping `k×k` windows; trailing rows/cols that do not fill
/// a window are dropped.
pub fn avg_pool<T: Real>(x: &[T], nc: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let (ho, wo) = (h / k, w / k);
    let scale = T::from_f64_lossy(1.0 / (k * k) as f64);
    let mut y = vec![T::zero(); nc * ho * wo];
    for p in 0..nc {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut y[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = T::zero();
                for a in 0..k {
                    for b in 0..k {
                        acc += src[(i * k + a) * w + j * k + b];
                    }
                }
                dst[i * wo + j] = acc * scale;
            }
        }
    }
    y
}

/// Adjoint of [`avg_pool`].
pub fn avg_pool_adjoint<T: Real>(gy: &[T], nc: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let (ho, wo) = (h / k, w / k);
    let scale = T::from_f64_lossy(1.0 / (k * k) as f64);
    let mut gx = vec![T::zero(); nc * h * w];
    for p in 0..nc {
        let src = &gy[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut gx[p * h * w..(p + 1) * h * w];
        for i in 0..ho * k {
            for j in 0..wo * k {
                dst[i * w + j] = src[(i / k) * wo + j / k] * scale;
            }
        }
    }
    gx
}

fn nearest_src(o: usize, from: usize, to: usize) -> usize {
    (o * from) / to
}

/// Nearest-neighbour resize of each plane from `h×w` to `ho×wo`.
pub fn resize_nearest<T: Real>(x: &[T], nc: usize, h: usize, w: usize, ho: usize, wo: usize) -> Vec<T> {
    let mut y = vec![T::zero(); nc * ho * wo];
    for p in 0..nc {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut y[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            let si = nearest_src(i, h, ho);
            for j in 0..wo {
                dst[i * wo + j] = src[si * w + nearest_src(j, w, wo)];
            }
        }
    }
    y
}

/// Adjoint of [`resize_nearest`]: sums every output cell back onto its source.
pub fn resize_nearest_adjoint<T: Real>(
    gy: &[T],
    nc: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let mut gx = vec![T::zero(); nc * h * w];
    for p in 0..nc {
        let src = &gy[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut gx[p * h * w..(p + 1) * h * w];
        for i in 0..ho {
            let si = nearest_src(i, h, ho);
            for j in 0..wo {
                dst[si * w + nearest_src(j, w, wo)] += src[i * wo + j];
            }
        }
    }
    gx
}

/// Sums `[N, C, S]` over N and S, accumulating in f64.
pub fn channel_sum<T: Real>(x: &[T], n: usize, c: usize, s: usize) -> Vec<T> {
    let mut acc = vec![0.0f64; c];
    for b in 0..n {
        for (ch, a) in acc.iter_mut().enumerate() {
            let base = (b * c + ch) * s;
            *a += x[base..base + s].iter().map(|v| v.as_f64()).sum::<f64>();
        }
    }
    acc.into_iter().map(T::from_f64_lossy).collect()
}

pub fn channel_broadcast<T: Real>(v: &[T], n: usize, c: usize, s: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * c * s);
    for _ in 0..n {
        for &val in v.iter().take(c) {
            out.extend(std::iter::repeat_n(val, s));
        }
    }
    out
}

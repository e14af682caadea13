//! Layer kernels on channel-major batches: a tensor of `c` channels over
//! `n` images of `h×w` is stored as `[c][n][h][w]`, so a convolution over
//! the whole batch is a single matrix product against an im2col buffer.

use super::real::{gemm, Real};

/// Geometry of one square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvShape {
    pub fn new(cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize, h: usize, w: usize) -> Self {
        let ho = (h + 2 * pad - kernel) / stride + 1;
        let wo = (w + 2 * pad - kernel) / stride + 1;
        ConvShape {
            cin,
            cout,
            kernel,
            stride,
            pad,
            h,
            w,
            ho,
            wo,
        }
    }

    /// Columns of the weight matrix (`cin·k·k`).
    pub fn patch(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.patch()
    }

    pub fn in_len(&self, n: usize) -> usize {
        self.cin * n * self.h * self.w
    }

    pub fn out_len(&self, n: usize) -> usize {
        self.cout * n * self.ho * self.wo
    }
}

/// Unfolds `x` into `col[patch][n·ho·wo]`, zero padding outside the image.
pub fn im2col<T: Real>(x: &[T], n: usize, s: &ConvShape, col: &mut [T]) {
    let cols = n * s.ho * s.wo;
    let k = s.kernel;
    for c in 0..s.cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for img in 0..n {
                    let src = &x[(c * n + img) * s.h * s.w..(c * n + img + 1) * s.h * s.w];
                    for oy in 0..s.ho {
                        let out = &mut dst[(img * s.ho + oy) * s.wo..(img * s.ho + oy + 1) * s.wo];
                        let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                        if iy < 0 || iy >= s.h as isize {
                            out.fill(T::zero());
                            continue;
                        }
                        let line = &src[iy as usize * s.w..(iy as usize + 1) * s.w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                            *o = if ix < 0 || ix >= s.w as isize {
                                T::zero()
                            } else {
                                line[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `col` back, accumulating into `dx`.
pub fn col2im<T: Real>(col: &[T], n: usize, s: &ConvShape, dx: &mut [T]) {
    let cols = n * s.ho * s.wo;
    let k = s.kernel;
    for c in 0..s.cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for img in 0..n {
                    let dst = &mut dx[(c * n + img) * s.h * s.w..(c * n + img + 1) * s.h * s.w];
                    for oy in 0..s.ho {
                        let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        let g = &src[(img * s.ho + oy) * s.wo..(img * s.ho + oy + 1) * s.wo];
                        let line = &mut dst[iy as usize * s.w..(iy as usize + 1) * s.w];
                        for (ox, &v) in g.iter().enumerate() {
                            let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                            if ix >= 0 && ix < s.w as isize {
                                line[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out = W·im2col(x) + b`, with `W` as `[cout][patch]`.
pub fn conv_forward<T: Real>(x: &[T], n: usize, s: &ConvShape, w: &[T], b: &[T], out: &mut [T], col: &mut Vec<T>) {
    let cols = n * s.ho * s.wo;
    col.resize(s.patch() * cols, T::zero());
    im2col(x, n, s, col);
    gemm(false, false, s.cout, cols, s.patch(), T::one(), w, col, T::zero(), out);
    for (o, &bias) in b.iter().enumerate() {
        for v in &mut out[o * cols..(o + 1) * cols] {
            *v += bias;
        }
    }
}

/// Accumulates weight and bias gradients and, if requested, the input
/// gradient of a convolution given the output gradient `dout`.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    x: &[T],
    n: usize,
    s: &ConvShape,
    w: &[T],
    dout: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
    col: &mut Vec<T>,
) {
    let cols = n * s.ho * s.wo;
    col.resize(s.patch() * cols, T::zero());
    im2col(x, n, s, col);
    gemm(false, true, s.cout, s.patch(), cols, T::one(), dout, col, T::one(), dw);
    for (o, g) in db.iter_mut().enumerate() {
        *g += dout[o * cols..(o + 1) * cols].iter().copied().sum::<T>();
    }
    if let Some(dx) = dx {
        gemm(true, false, s.patch(), cols, s.cout, T::one(), w, dout, T::zero(), col);
        col2im(col, n, s, dx);
    }
}

/// Mean over non-overlapping `f×f` windows of `[n][h][w]` images; trailing
/// rows and columns that do not fill a window are dropped.
pub fn avg_pool<T: Real>(x: &[T], n: usize, h: usize, w: usize, f: usize) -> Vec<T> {
    let (ho, wo) = (h / f, w / f);
    let scale = T::cast(1.0 / (f * f) as f64);
    let mut out = vec![T::zero(); n * ho * wo];
    for img in 0..n {
        let src = &x[img * h * w..(img + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = T::zero();
                for dy in 0..f {
                    for dx in 0..f {
                        acc += src[(oy * f + dy) * w + ox * f + dx];
                    }
                }
                out[(img * ho + oy) * wo + ox] = acc * scale;
            }
        }
    }
    out
}

pub fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the post-activation output was not positive.
pub fn relu_backward<T: Real>(out: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

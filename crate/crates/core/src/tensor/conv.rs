use std::borrow::Cow;

use super::Tensor;
use crate::error::{Error, Result};

/// Gradients of a conv2d call with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
}

impl Geometry {
    fn check(input: &Tensor, weights: &Tensor, stride: usize, padding: usize) -> Result<Self> {
        let (c_in, h, w) = input.dims3()?;
        let (c_out, wc_in, k) = match weights.shape() {
            &[co, ci, kh, kw] => {
                if kh != kw {
                    return Err(Error::ShapeMismatch { op: "conv2d", dim: "kernel width", expected: kh, actual: kw });
                }
                (co, ci, kh)
            }
            s => {
                return Err(Error::InvalidShape {
                    op: "conv2d",
                    shape: s.to_vec(),
                    reason: "weights must be [C_out, C_in, k, k]".into(),
                })
            }
        };
        if wc_in != c_in {
            return Err(Error::ShapeMismatch { op: "conv2d", dim: "input channels", expected: wc_in, actual: c_in });
        }
        if k % 2 == 0 {
            return Err(Error::InvalidArgument(format!("conv2d kernel size {k} must be odd")));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
        }
        if h + 2 * padding < k || w + 2 * padding < k {
            return Err(Error::InvalidShape {
                op: "conv2d",
                shape: input.shape().to_vec(),
                reason: format!("padded input smaller than kernel {k}"),
            });
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            k,
            stride,
            padding,
            h_out: (h + 2 * padding - k) / stride + 1,
            w_out: (w + 2 * padding - k) / stride + 1,
        })
    }

    fn rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.h_out * self.w_out
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.padding == 0
    }

    /// Source coordinate for output position `o` and kernel tap `t`, if inside.
    #[inline]
    fn src(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + t) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    fn im2col<'a>(&self, x: &'a [f64]) -> Cow<'a, [f64]> {
        if self.is_pointwise() {
            return Cow::Borrowed(x);
        }
        let n = self.cols();
        let mut cols = vec![0.0; self.rows() * n];
        for ci in 0..self.c_in {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..self.h_out {
                        let Some(sy) = self.src(oy, ky, self.h) else { continue };
                        let src_row = &plane[sy * self.w..(sy + 1) * self.w];
                        for ox in 0..self.w_out {
                            if let Some(sx) = self.src(ox, kx, self.w) {
                                dst[oy * self.w_out + ox] = src_row[sx];
                            }
                        }
                    }
                }
            }
        }
        Cow::Owned(cols)
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        if self.is_pointwise() {
            return cols.to_vec();
        }
        let n = self.cols();
        let mut x = vec![0.0; self.c_in * self.h * self.w];
        for ci in 0..self.c_in {
            let plane = &mut x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..self.h_out {
                        let Some(sy) = self.src(oy, ky, self.h) else { continue };
                        for ox in 0..self.w_out {
                            if let Some(sx) = self.src(ox, kx, self.w) {
                                plane[sy * self.w + sx] += src[oy * self.w_out + ox];
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

/// `c = a · b` for row-major contiguous or strided operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the callers size every buffer to cover the full index range
    // implied by (m, k, n) and the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 2-D cross-correlation plus bias.
///
/// `input` is `[C_in, H, W]`, `weights` `[C_out, C_in, k, k]`, `bias` `[C_out]`.
/// Output is `[C_out, H', W']` with `H' = (H + 2p - k) / stride + 1`.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = Geometry::check(input, weights, stride, padding)?;
    if bias.len() != g.c_out {
        return Err(Error::ShapeMismatch { op: "conv2d", dim: "bias length", expected: g.c_out, actual: bias.len() });
    }
    let cols = g.im2col(input.data());
    let n = g.cols();
    let r = g.rows();
    let mut out = vec![0.0; g.c_out * n];
    gemm(g.c_out, r, n, weights.data(), (r, 1), &cols, (n, 1), &mut out);
    for (co, &b) in bias.data().iter().enumerate() {
        out[co * n..(co + 1) * n].iter_mut().for_each(|v| *v += b);
    }
    Tensor::new(vec![g.c_out, g.h_out, g.w_out], out)
}

/// Backward pass of [`conv2d`] given the upstream gradient `grad_out`.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads> {
    let g = Geometry::check(input, weights, stride, padding)?;
    let expected = [g.c_out, g.h_out, g.w_out];
    if grad_out.shape() != expected {
        return Err(Error::InvalidShape {
            op: "conv2d_backward",
            shape: grad_out.shape().to_vec(),
            reason: format!("upstream gradient must be {expected:?}"),
        });
    }
    let n = g.cols();
    let r = g.rows();
    let dy = grad_out.data();
    let cols = g.im2col(input.data());

    let mut dw = vec![0.0; g.c_out * r];
    gemm(g.c_out, n, r, dy, (n, 1), &cols, (1, n), &mut dw);

    let mut dcols = vec![0.0; r * n];
    gemm(r, g.c_out, n, weights.data(), (1, r), dy, (n, 1), &mut dcols);
    let dx = g.col2im(&dcols);

    let db: Vec<f64> = dy.chunks_exact(n).map(|c| c.iter().sum()).collect();

    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        weights: Tensor::new(weights.shape().to_vec(), dw)?,
        bias: Tensor::new(vec![g.c_out], db)?,
    })
}

use super::Tensor;
use crate::error::{Error, Result};

fn check_grad_shape(grad: &Tensor, expected: &[usize], op: &'static str) -> Result<()> {
    if grad.shape() != expected {
        return Err(Error::InvalidShape {
            op,
            shape: grad.shape().to_vec(),
            reason: format!("upstream gradient must be {expected:?}"),
        });
    }
    Ok(())
}

/// Channel index holding the max of each group, ties to the lowest index.
fn maxout_argmax(input: &Tensor, group: usize) -> Result<(Vec<usize>, usize, usize, usize)> {
    let (c, h, w) = input.dims3()?;
    if group == 0 || c % group != 0 {
        return Err(Error::InvalidArgument(format!("maxout group size {group} does not divide {c} channels")));
    }
    let plane = h * w;
    let out_c = c / group;
    let x = input.data();
    let mut arg = vec![0usize; out_c * plane];
    for o in 0..out_c {
        for p in 0..plane {
            let mut best = o * group;
            for ch in o * group + 1..(o + 1) * group {
                if x[ch * plane + p] > x[best * plane + p] {
                    best = ch;
                }
            }
            arg[o * plane + p] = best;
        }
    }
    Ok((arg, out_c, h, w))
}

/// Max over each run of `group` consecutive channels: `[C, H, W] -> [C/group, H, W]`.
pub fn maxout(input: &Tensor, group: usize) -> Result<Tensor> {
    let (arg, out_c, h, w) = maxout_argmax(input, group)?;
    let plane = h * w;
    let x = input.data();
    let data = arg.iter().enumerate().map(|(i, &ch)| x[ch * plane + i % plane]).collect();
    Tensor::new(vec![out_c, h, w], data)
}

pub fn maxout_backward(input: &Tensor, group: usize, grad_out: &Tensor) -> Result<Tensor> {
    let (arg, out_c, h, w) = maxout_argmax(input, group)?;
    check_grad_shape(grad_out, &[out_c, h, w], "maxout_backward")?;
    let plane = h * w;
    let mut dx = Tensor::zeros(input.shape());
    for (i, &ch) in arg.iter().enumerate() {
        dx.data_mut()[ch * plane + i % plane] += grad_out.data()[i];
    }
    Ok(dx)
}

/// Flat source index of the window max for every output pixel.
fn maxpool_same_argmax(input: &Tensor, k: usize) -> Result<Vec<usize>> {
    let (c, h, w) = input.dims3()?;
    if k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("maxpool window {k} must be odd")));
    }
    let r = (k / 2) as isize;
    let x = input.data();
    let mut arg = vec![0usize; x.len()];
    for ch in 0..c {
        let base = ch * h * w;
        // Separable: rows first, then columns; replication clamps indices.
        let mut row_arg = vec![0usize; h * w];
        for y in 0..h {
            for xx in 0..w {
                let mut best = base + y * w + xx.saturating_sub(r as usize);
                for dx in -r..=r {
                    let sx = (xx as isize + dx).clamp(0, w as isize - 1) as usize;
                    let idx = base + y * w + sx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                row_arg[y * w + xx] = best;
            }
        }
        for y in 0..h {
            for xx in 0..w {
                let mut best = row_arg[y.saturating_sub(r as usize) * w + xx];
                for dy in -r..=r {
                    let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    let cand = row_arg[sy * w + xx];
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                arg[base + y * w + xx] = best;
            }
        }
    }
    Ok(arg)
}

/// Stride-1 `k×k` max filter with edge replication; output shape equals input.
pub fn maxpool_same(input: &Tensor, k: usize) -> Result<Tensor> {
    let arg = maxpool_same_argmax(input, k)?;
    let x = input.data();
    Tensor::new(input.shape().to_vec(), arg.iter().map(|&i| x[i]).collect())
}

pub fn maxpool_same_backward(input: &Tensor, k: usize, grad_out: &Tensor) -> Result<Tensor> {
    let arg = maxpool_same_argmax(input, k)?;
    check_grad_shape(grad_out, input.shape(), "maxpool_same_backward")?;
    let mut dx = Tensor::zeros(input.shape());
    for (i, &src) in arg.iter().enumerate() {
        dx.data_mut()[src] += grad_out.data()[i];
    }
    Ok(dx)
}

fn maxpool2_argmax(input: &Tensor) -> Result<(Vec<usize>, [usize; 3])> {
    let (c, h, w) = input.dims3()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidShape {
            op: "maxpool2",
            shape: input.shape().to_vec(),
            reason: "spatial size must be even".into(),
        });
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let base = ch * h * w + 2 * oy * w + 2 * ox;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                arg.push(best);
            }
        }
    }
    Ok((arg, [c, ho, wo]))
}

/// 2×2 max pooling with stride 2.
pub fn maxpool2(input: &Tensor) -> Result<Tensor> {
    let (arg, shape) = maxpool2_argmax(input)?;
    let x = input.data();
    Tensor::new(shape.to_vec(), arg.iter().map(|&i| x[i]).collect())
}

pub fn maxpool2_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (arg, shape) = maxpool2_argmax(input)?;
    check_grad_shape(grad_out, &shape, "maxpool2_backward")?;
    let mut dx = Tensor::zeros(input.shape());
    for (i, &src) in arg.iter().enumerate() {
        dx.data_mut()[src] += grad_out.data()[i];
    }
    Ok(dx)
}

/// Source taps `(i0, i1, frac)` for one output coordinate of a 2× upsample
/// with half-pixel centers (align-corners false).
#[inline]
fn taps(o: usize, extent: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) * 0.5 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(extent - 1);
    let i1 = if i0 + 1 < extent { i0 + 1 } else { i0 };
    (i0, i1, src - i0 as f64)
}

/// Bilinear 2× upsampling, `[C, H, W] -> [C, 2H, 2W]`.
pub fn bilinear_up2(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    let mut out = Tensor::zeros(&[c, 2 * h, 2 * w]);
    let x = input.data();
    let ow = 2 * w;
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..2 * h {
            let (y0, y1, ly) = taps(oy, h);
            for ox in 0..ow {
                let (x0, x1, lx) = taps(ox, w);
                let top = src[y0 * w + x0] * (1.0 - lx) + src[y0 * w + x1] * lx;
                let bot = src[y1 * w + x0] * (1.0 - lx) + src[y1 * w + x1] * lx;
                out.data_mut()[(ch * 2 * h + oy) * ow + ox] = top * (1.0 - ly) + bot * ly;
            }
        }
    }
    Ok(out)
}

pub fn bilinear_up2_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let [c, h, w] = input_shape else {
        return Err(Error::InvalidShape {
            op: "bilinear_up2_backward",
            shape: input_shape.to_vec(),
            reason: "expected [C, H, W]".into(),
        });
    };
    let (c, h, w) = (*c, *h, *w);
    check_grad_shape(grad_out, &[c, 2 * h, 2 * w], "bilinear_up2_backward")?;
    let mut dx = Tensor::zeros(input_shape);
    let g = grad_out.data();
    let ow = 2 * w;
    for ch in 0..c {
        let dst = &mut dx.data_mut()[ch * h * w..(ch + 1) * h * w];
        for oy in 0..2 * h {
            let (y0, y1, ly) = taps(oy, h);
            for ox in 0..ow {
                let (x0, x1, lx) = taps(ox, w);
                let v = g[(ch * 2 * h + oy) * ow + ox];
                dst[y0 * w + x0] += v * (1.0 - ly) * (1.0 - lx);
                dst[y0 * w + x1] += v * (1.0 - ly) * lx;
                dst[y1 * w + x0] += v * ly * (1.0 - lx);
                dst[y1 * w + x1] += v * ly * lx;
            }
        }
    }
    Ok(dx)
}

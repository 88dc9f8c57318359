use super::Tensor;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

/// Running per-channel statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        Self { mean: Tensor::zeros(&[channels]), var: Tensor::full(&[channels], 1.0) }
    }
}

/// Values kept from the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    mode: BatchNormMode,
    normalized: Tensor,
    inv_std: Vec<f64>,
}

/// Per-image batch normalization over the spatial positions of each channel.
///
/// In train mode the image's own statistics normalize it and the returned
/// stats are the momentum-updated running values; in eval mode `running`
/// is used as is and returned unchanged.
pub fn batchnorm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mode: BatchNormMode,
    running: &BatchNormStats,
) -> Result<(Tensor, BatchNormStats, BatchNormCache)> {
    let (c, h, w) = input.dims3()?;
    for (t, dim) in [
        (gamma, "gamma length"),
        (beta, "beta length"),
        (&running.mean, "running mean length"),
        (&running.var, "running var length"),
    ] {
        if t.len() != c {
            return Err(Error::ShapeMismatch { op: "batchnorm", dim, expected: c, actual: t.len() });
        }
    }
    let n = (h * w) as f64;
    let mut out = Tensor::zeros(input.shape());
    let mut normalized = Tensor::zeros(input.shape());
    let mut inv_std = Vec::with_capacity(c);
    let mut updated = running.clone();
    for ch in 0..c {
        let x = input.channel(ch);
        let (mean, var) = match mode {
            BatchNormMode::Train => {
                let mean = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let rm = &mut updated.mean.data_mut()[ch];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean;
                let rv = &mut updated.var.data_mut()[ch];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var;
                (mean, var)
            }
            BatchNormMode::Eval => (running.mean.data()[ch], running.var.data()[ch]),
        };
        let is = 1.0 / (var + BN_EPS).sqrt();
        inv_std.push(is);
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        let plane = h * w;
        for (i, &v) in x.iter().enumerate() {
            let xh = (v - mean) * is;
            normalized.data_mut()[ch * plane + i] = xh;
            out.data_mut()[ch * plane + i] = g * xh + b;
        }
    }
    Ok((out, updated, BatchNormCache { mode, normalized, inv_std }))
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    cache.normalized.expect_same_shape(grad_out, "batchnorm_backward")?;
    let (c, h, w) = grad_out.dims3()?;
    let plane = h * w;
    let n = plane as f64;
    let mut dx = Tensor::zeros(grad_out.shape());
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let dy = grad_out.channel(ch);
        let xh = cache.normalized.channel(ch);
        let sum_dy: f64 = dy.iter().sum();
        let sum_dy_xh: f64 = dy.iter().zip(xh).map(|(a, b)| a * b).sum();
        dgamma.data_mut()[ch] = sum_dy_xh;
        dbeta.data_mut()[ch] = sum_dy;
        let scale = gamma.data()[ch] * cache.inv_std[ch];
        let dst = &mut dx.data_mut()[ch * plane..(ch + 1) * plane];
        match cache.mode {
            BatchNormMode::Train => {
                let (mdy, mdyxh) = (sum_dy / n, sum_dy_xh / n);
                for i in 0..plane {
                    dst[i] = scale * (dy[i] - mdy - xh[i] * mdyxh);
                }
            }
            BatchNormMode::Eval => {
                for i in 0..plane {
                    dst[i] = scale * dy[i];
                }
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

use serde::{Deserialize, Serialize};

use super::{
    batchnorm, batchnorm_backward, conv2d, conv2d_backward, BatchNormCache, BatchNormMode, BatchNormStats, Tensor,
    TensorMap,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Layer kinds with their hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, same_padding: bool },
    Relu,
    Sigmoid,
    Brelu,
    Maxout { group: usize },
    MaxpoolSame { kernel: usize },
    BilinearUp,
    Concat,
    Batchnorm { channels: usize },
}

impl LayerSpec {
    pub fn validate(&self, input_channels: usize) -> Result<()> {
        match *self {
            LayerSpec::Conv2d { in_channels, kernel, stride, .. } => {
                if kernel % 2 == 0 {
                    return Err(Error::InvalidArgument(format!("kernel size {kernel} must be odd")));
                }
                if stride == 0 {
                    return Err(Error::InvalidArgument("stride must be positive".into()));
                }
                if in_channels != input_channels {
                    return Err(Error::ShapeMismatch {
                        op: "LayerSpec::Conv2d",
                        dim: "input channels",
                        expected: in_channels,
                        actual: input_channels,
                    });
                }
            }
            LayerSpec::Maxout { group } => {
                if group == 0 || !input_channels.is_multiple_of(group) {
                    return Err(Error::InvalidArgument(format!(
                        "maxout group {group} does not divide {input_channels} channels"
                    )));
                }
            }
            LayerSpec::MaxpoolSame { kernel } if kernel % 2 == 0 => {
                return Err(Error::InvalidArgument(format!("maxpool window {kernel} must be odd")));
            }
            LayerSpec::Batchnorm { channels } if channels != input_channels => {
                return Err(Error::ShapeMismatch {
                    op: "LayerSpec::Batchnorm",
                    dim: "channels",
                    expected: channels,
                    actual: input_channels,
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// Padding implied by "same" padding for conv layers, else 0.
    pub fn padding(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { kernel, same_padding: true, .. } => (kernel - 1) / 2,
            _ => 0,
        }
    }
}

/// He-uniform initialization: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}

/// A named conv layer whose weights live in a [`TensorMap`] as
/// `<name>.weight` and `<name>.bias`.
#[derive(Clone, Debug)]
pub(crate) struct Conv {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl Conv {
    /// Stride-1 conv with "same" padding.
    pub fn same(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self { name: name.into(), in_channels, out_channels, kernel, stride: 1, padding: (kernel - 1) / 2, bias: true }
    }

    pub fn strided(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + if self.bias { self.out_channels } else { 0 }
    }

    pub fn init(&self, params: &mut TensorMap, rng: &mut Rng) {
        let fan_in = self.in_channels * self.kernel * self.kernel;
        let shape = [self.out_channels, self.in_channels, self.kernel, self.kernel];
        params.insert(self.weight_name(), he_uniform(&shape, fan_in, rng));
        if self.bias {
            params.insert(self.bias_name(), Tensor::zeros(&[self.out_channels]));
        }
    }

    pub fn forward(&self, params: &TensorMap, x: &Tensor) -> Result<Tensor> {
        let w = params.require(&self.weight_name())?;
        let zero;
        let b = if self.bias {
            params.require(&self.bias_name())?
        } else {
            zero = Tensor::zeros(&[self.out_channels]);
            &zero
        };
        conv2d(x, w, b, self.stride, self.padding)
    }

    /// Accumulates parameter gradients into `grads` and returns d input.
    pub fn backward(&self, params: &TensorMap, x: &Tensor, dy: &Tensor, grads: &mut TensorMap) -> Result<Tensor> {
        let w = params.require(&self.weight_name())?;
        let g = conv2d_backward(x, w, dy, self.stride, self.padding)?;
        grads.accumulate(&self.weight_name(), g.weights)?;
        if self.bias {
            grads.accumulate(&self.bias_name(), g.bias)?;
        }
        Ok(g.input)
    }
}

/// A named batchnorm layer: `<name>.gamma`, `<name>.beta` (trainable) and
/// `<name>.running_mean`, `<name>.running_var` (state).
#[derive(Clone, Debug)]
pub(crate) struct Norm {
    pub name: String,
    pub channels: usize,
}

impl Norm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self { name: name.into(), channels }
    }

    fn key(&self, part: &str) -> String {
        format!("{}.{part}", self.name)
    }

    pub fn init(&self, params: &mut TensorMap) {
        let s = BatchNormStats::new(self.channels);
        params.insert(self.key("gamma"), Tensor::full(&[self.channels], 1.0));
        params.insert(self.key("beta"), Tensor::zeros(&[self.channels]));
        params.insert(self.key("running_mean"), s.mean);
        params.insert(self.key("running_var"), s.var);
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn forward(
        &self,
        params: &TensorMap,
        x: &Tensor,
        mode: BatchNormMode,
    ) -> Result<(Tensor, BatchNormStats, BatchNormCache)> {
        let stats = BatchNormStats {
            mean: params.require(&self.key("running_mean"))?.clone(),
            var: params.require(&self.key("running_var"))?.clone(),
        };
        batchnorm(x, params.require(&self.key("gamma"))?, params.require(&self.key("beta"))?, mode, &stats)
    }

    pub fn backward(
        &self,
        params: &TensorMap,
        cache: &BatchNormCache,
        dy: &Tensor,
        grads: &mut TensorMap,
    ) -> Result<Tensor> {
        let (dx, dg, db) = batchnorm_backward(cache, params.require(&self.key("gamma"))?, dy)?;
        grads.accumulate(&self.key("gamma"), dg)?;
        grads.accumulate(&self.key("beta"), db)?;
        Ok(dx)
    }

    /// Writes updated running statistics back into `params`.
    pub fn store_stats(&self, params: &mut TensorMap, stats: BatchNormStats) {
        params.insert(self.key("running_mean"), stats.mean);
        params.insert(self.key("running_var"), stats.var);
    }
}

//! Grid detector network: stride-2 conv stack and a 1×1 prediction head.
//!
//! Parameter names: `backbone.<i>.weight`/`.bias` for each conv and
//! `head.weight`/`head.bias`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::layer::Conv;
use crate::tensor::margin::Kinks;
use crate::tensor::{activation, activation_backward, Activation, Tensor, TensorMap};

/// Total downsampling of the backbone.
pub const STRIDE: usize = 8;
/// Per-cell channels before the class logits: objectness, x, y, w, h.
pub const BOX_CHANNELS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorWidth {
    Light,
    Heavy,
}

impl DetectorWidth {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorWidth::Light => "light",
            DetectorWidth::Heavy => "heavy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDetectorConfig {
    pub width: DetectorWidth,
    pub num_classes: usize,
    /// Anchor `(w, h)` in pixels.
    pub anchor: [f64; 2],
}

impl GridDetectorConfig {
    pub fn light() -> Self {
        Self { width: DetectorWidth::Light, num_classes: 3, anchor: [16.0, 16.0] }
    }

    pub fn heavy() -> Self {
        Self { width: DetectorWidth::Heavy, ..Self::light() }
    }

    pub fn for_width(width: DetectorWidth) -> Self {
        Self { width, ..Self::light() }
    }

    pub fn base_channels(&self) -> usize {
        match self.width {
            DetectorWidth::Light => 8,
            DetectorWidth::Heavy => 32,
        }
    }

    /// Channels of the raw grid: `5 + C`.
    pub fn grid_channels(&self) -> usize {
        BOX_CHANNELS + self.num_classes
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Config("detector needs at least one class".into()));
        }
        if !(self.anchor[0] > 0.0 && self.anchor[1] > 0.0) {
            return Err(Error::Config(format!("anchor {:?} must be positive", self.anchor)));
        }
        Ok(())
    }
}

pub(crate) struct GridCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    features: Tensor,
}

#[derive(Clone, Debug)]
pub struct GridDetector {
    pub config: GridDetectorConfig,
    backbone: Vec<Conv>,
    head: Conv,
}

impl GridDetector {
    pub fn new(config: GridDetectorConfig) -> Result<Self> {
        config.validate()?;
        let b = config.base_channels();
        let mut backbone = vec![
            Conv::same("backbone.0", 3, b, 3).strided(2),
            Conv::same("backbone.1", b, 2 * b, 3).strided(2),
            Conv::same("backbone.2", 2 * b, 4 * b, 3).strided(2),
        ];
        if config.width == DetectorWidth::Heavy {
            backbone.push(Conv::same("backbone.3", 4 * b, 4 * b, 3));
        }
        let head = Conv::same("head", 4 * b, config.grid_channels(), 1);
        Ok(Self { config, backbone, head })
    }

    pub fn param_count(&self) -> usize {
        self.backbone.iter().map(Conv::param_count).sum::<usize>() + self.head.param_count()
    }

    /// He-uniform convs; the head starts small with objectness biased low,
    /// since most cells are empty.
    pub fn init_params(&self, rng: &mut Rng) -> TensorMap {
        let mut p = TensorMap::new();
        for c in &self.backbone {
            c.init(&mut p, rng);
        }
        self.head.init(&mut p, rng);
        p.get_mut(&self.head.weight_name()).unwrap().scale(0.1);
        let mut bias = Tensor::zeros(&[self.config.grid_channels()]);
        bias.data_mut()[0] = -2.0;
        p.insert(self.head.bias_name(), bias);
        p
    }

    /// Errors unless `params` has exactly this detector's tensors.
    pub fn check_params(&self, params: &TensorMap) -> Result<()> {
        params.check_layout(&self.init_params(&mut Rng::new(0)))
    }

    /// Grid size for a square input whose side is a multiple of [`STRIDE`].
    pub fn grid_size(&self, image: &Tensor) -> Result<usize> {
        let (c, h, w) = image.dims3()?;
        if c != 3 || h != w || h % STRIDE != 0 {
            return Err(Error::InvalidShape {
                op: "detector_forward",
                shape: image.shape().to_vec(),
                reason: format!("expected [3, N, N] with N a multiple of {STRIDE}"),
            });
        }
        Ok(h / STRIDE)
    }

    pub(crate) fn forward_cached(&self, params: &TensorMap, image: &Tensor) -> Result<(Tensor, GridCache)> {
        self.grid_size(image)?;
        let mut x = image.clone();
        let mut inputs = Vec::with_capacity(self.backbone.len());
        let mut pre = Vec::with_capacity(self.backbone.len());
        for c in &self.backbone {
            let z = c.forward(params, &x)?;
            inputs.push(x);
            x = activation(&z, Activation::Relu);
            pre.push(z);
        }
        let raw = self.head.forward(params, &x)?;
        Ok((raw, GridCache { inputs, pre, features: x }))
    }

    /// Raw grid `[5 + C, S, S]` with `S = H / 8`.
    pub fn forward(&self, params: &TensorMap, image: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(params, image)?.0)
    }

    /// Parameter gradients and input gradient for upstream `d_raw`.
    pub(crate) fn backward(
        &self,
        params: &TensorMap,
        cache: &GridCache,
        d_raw: &Tensor,
    ) -> Result<(TensorMap, Tensor)> {
        let mut grads = TensorMap::new();
        let mut d = self.head.backward(params, &cache.features, d_raw, &mut grads)?;
        for (i, c) in self.backbone.iter().enumerate().rev() {
            let dz = activation_backward(&cache.pre[i], &cache.pre[i], &d, Activation::Relu)?;
            d = c.backward(params, &cache.inputs[i], &dz, &mut grads)?;
        }
        Ok((grads, d))
    }

    /// ReLU pre-activations of the forward pass.
    pub fn kinks(&self, params: &TensorMap, image: &Tensor) -> Result<Kinks> {
        let (_, cache) = self.forward_cached(params, image)?;
        let mut k = Kinks::new();
        cache.pre.iter().for_each(|z| _ = k.relu(z));
        Ok(k)
    }
}

//! Micro dehazing networks: AOD-Net, AOD-NetX, a small U-Net and DehazeNet.

mod aod;
mod dehazenet;
mod train;
mod unet;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boxes::{BBox, Detection};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::margin::Kinks;
use crate::tensor::{Tensor, TensorMap};

pub use aod::{recover, AodNet, AodNetX, AodNetXOutput, AodOutput};
pub use dehazenet::{
    estimate_airlight, recover_with_transmission, DehazeNet, DehazeNetOutput, AIRLIGHT_FRACTION, T_FLOOR,
};
pub use train::{dehaze_table_markdown, eval_dehazer, train_dehazer, DehazeEval, DehazeTableRow, DehazeTrainConfig};
pub use unet::UNet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "aod-net")]
    AodNet,
    #[serde(rename = "aod-netx")]
    AodNetX,
    #[serde(rename = "unet")]
    Unet,
    #[serde(rename = "dehazenet")]
    DehazeNet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::AodNet, ModelKind::AodNetX, ModelKind::Unet, ModelKind::DehazeNet];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::AodNet => "aod-net",
            ModelKind::AodNetX => "aod-netx",
            ModelKind::Unet => "unet",
            ModelKind::DehazeNet => "dehazenet",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::AodNet => "AOD-Net",
            ModelKind::AodNetX => "AOD-NetX",
            ModelKind::Unet => "Dehaze-UNet",
            ModelKind::DehazeNet => "DehazeNet",
        }
    }

    pub fn model(self) -> Box<dyn Dehazer> {
        match self {
            ModelKind::AodNet => Box::new(AodNet::new()),
            ModelKind::AodNetX => Box::new(AodNetX::new()),
            ModelKind::Unet => Box::new(UNet::new()),
            ModelKind::DehazeNet => Box::new(DehazeNet::new()),
        }
    }

    pub fn uses_mask(self) -> bool {
        self == ModelKind::AodNetX
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dehazing model {s:?}")))
    }
}

/// One forward/backward pass of `mse(J, target)` in training mode.
#[derive(Clone, Debug)]
pub struct TrainStep {
    pub loss: f64,
    /// Unclamped training-mode output.
    pub output: Tensor,
    pub grads: TensorMap,
    pub input_grad: Tensor,
    /// Non-trainable state to write back, e.g. batchnorm running statistics.
    pub state: TensorMap,
}

pub trait Dehazer: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn init(&self, rng: &mut Rng) -> TensorMap;

    fn param_count(&self) -> usize;

    /// Unclamped restoration in inference mode. `mask` is the `[1, H, W]`
    /// RoI mask; models without attention ignore it.
    fn restore(&self, params: &TensorMap, image: &Tensor, mask: Option<&Tensor>) -> Result<Tensor>;

    fn train_step(
        &self,
        params: &TensorMap,
        image: &Tensor,
        mask: Option<&Tensor>,
        target: &Tensor,
    ) -> Result<TrainStep>;

    /// Kinks of the training-mode forward pass (ReLU at 0, max-selection
    /// ties, clamps). Used to place gradient-check probes.
    fn kinks(&self, params: &TensorMap, image: &Tensor, mask: Option<&Tensor>) -> Result<Kinks>;

    /// Restoration clamped to `[0, 1]`.
    fn dehaze(&self, params: &TensorMap, image: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        Ok(self.restore(params, image, mask)?.clamp01())
    }
}

/// `[1, H, W]` map holding, per pixel, the highest score among the boxes
/// whose area contains the pixel centre; 0 elsewhere.
pub fn roi_mask(detections: &[Detection], h: usize, w: usize) -> Tensor {
    let mut m = Tensor::zeros(&[1, h, w]);
    for d in detections {
        let BBox { x, y, w: bw, h: bh } = d.bbox;
        // pixel i is covered when x <= i + 0.5 < x + w
        let span = |lo: f64, len: f64, n: usize| {
            let a = (lo - 0.5).ceil().max(0.0) as usize;
            let b = ((lo + len - 0.5).ceil().max(0.0) as usize).min(n);
            a..b.max(a)
        };
        for py in span(y, bh, h) {
            for px in span(x, bw, w) {
                let v = &mut m.data_mut()[py * w + px];
                *v = v.max(d.score);
            }
        }
    }
    m
}

/// Mask from ground-truth boxes, each with score 1.
pub fn gt_mask(boxes: &[crate::boxes::GroundTruth], h: usize, w: usize) -> Tensor {
    let dets: Vec<Detection> =
        boxes.iter().map(|g| Detection { class_id: g.class_id, score: 1.0, bbox: g.bbox }).collect();
    roi_mask(&dets, h, w)
}

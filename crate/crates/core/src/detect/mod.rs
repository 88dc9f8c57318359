//! Single-anchor grid detector in light and heavy widths, with decoding,
//! suppression, loss, training and ingestion of external detection files.

mod decode;
mod grid;
mod loss;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use decode::{assign_cells, decode_grid, encode_box, encode_grid, nms, EncodedBox};
pub use grid::{DetectorWidth, GridDetector, GridDetectorConfig, BOX_CHANNELS, STRIDE};
pub use loss::{detector_loss, DetectorLoss, NO_OBJECT_WEIGHT};

use crate::boxes::Detection;
use crate::dataset::{Condition, ImagePair, TrainOutcome};
use crate::error::{Error, Result};
use crate::imageio::{read_detections, DetectionRecord};
use crate::metrics::{mean_average_precision, EvalImage, MapResult};
use crate::rng::Rng;
use crate::tensor::{Adam, Optimizer, Tensor, TensorMap};

pub const NMS_IOU: f64 = 0.45;
/// Threshold for preliminary detections that feed the RoI mask.
pub const PRELIMINARY_CONFIDENCE: f64 = 0.25;
/// Threshold for detections scored by mAP; low so the ranking sees the tail.
pub const EVAL_CONFIDENCE: f64 = 0.05;
pub const MAP_IOU: f64 = 0.5;

impl GridDetector {
    /// Raw grid, loss and parameter gradients for one labelled image.
    pub fn train_step(
        &self,
        params: &TensorMap,
        image: &Tensor,
        gts: &[crate::boxes::GroundTruth],
    ) -> Result<(DetectorLoss, TensorMap, Tensor)> {
        let (raw, cache) = self.forward_cached(params, image)?;
        let (_, h, _) = image.dims3()?;
        let loss = detector_loss(&raw, gts, h, self.config.anchor)?;
        let (grads, dinput) = self.backward(params, &cache, &loss.grad)?;
        Ok((loss, grads, dinput))
    }

    /// Decoded, suppressed detections for one image.
    pub fn detect(&self, params: &TensorMap, image: &Tensor, conf_thresh: f64) -> Result<Vec<Detection>> {
        let raw = self.forward(params, image)?;
        let (_, h, _) = image.dims3()?;
        Ok(nms(&decode_grid(&raw, h, self.config.anchor, conf_thresh)?, NMS_IOU))
    }

    /// [`GridDetector::detect`] over many images in parallel, in input order.
    pub fn detect_all(&self, params: &TensorMap, images: &[&Tensor], conf_thresh: f64) -> Result<Vec<Vec<Detection>>> {
        images.par_iter().map(|im| self.detect(params, im, conf_thresh)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub condition: Condition,
}

impl Default for DetectTrainConfig {
    fn default() -> Self {
        Self { lr: 0.002, epochs: 30, seed: 11, condition: Condition::Clear }
    }
}

/// Adam with one image per step over a fresh seeded shuffle each epoch.
pub fn train_detector(detector: &GridDetector, pairs: &[ImagePair], cfg: &DetectTrainConfig) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot train a detector on an empty split".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut params = detector.init_params(&mut rng);
    let mut opt = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads, _) = detector.train_step(&params, pairs[i].image(cfg.condition), &pairs[i].boxes)?;
            total += loss.total;
            opt.step(&mut params, &grads);
        }
        let mean = total / pairs.len() as f64;
        log::info!("{} detector epoch {} loss {mean:.6}", detector.config.width.as_str(), epoch + 1);
        losses.push(mean);
    }
    Ok(TrainOutcome { params, losses })
}

/// mAP of `detections[i]` against the boxes of `pairs[i]`.
pub fn score_detections(pairs: &[ImagePair], detections: &[Vec<Detection>], num_classes: usize) -> Result<MapResult> {
    if pairs.len() != detections.len() {
        return Err(Error::InvalidArgument(format!("{} detection lists for {} images", detections.len(), pairs.len())));
    }
    let images: Vec<EvalImage> = pairs
        .iter()
        .zip(detections)
        .map(|(p, d)| EvalImage { detections: d.clone(), ground_truth: p.boxes.clone() })
        .collect();
    Ok(mean_average_precision(&images, num_classes, MAP_IOU))
}

/// Detections at [`EVAL_CONFIDENCE`] and their mAP on one condition.
pub fn evaluate_detector(
    detector: &GridDetector,
    params: &TensorMap,
    pairs: &[ImagePair],
    condition: Condition,
) -> Result<(MapResult, Vec<Vec<Detection>>)> {
    let images: Vec<&Tensor> = pairs.iter().map(|p| p.image(condition)).collect();
    let dets = detector.detect_all(params, &images, EVAL_CONFIDENCE)?;
    Ok((score_detections(pairs, &dets, detector.config.num_classes)?, dets))
}

/// Groups records by image, each list sorted by descending score (stable).
/// Every id in `image_ids` gets an entry, empty when the file has none.
pub fn group_detections(records: &[DetectionRecord], image_ids: &[String]) -> BTreeMap<String, Vec<Detection>> {
    let mut out: BTreeMap<String, Vec<Detection>> = image_ids.iter().map(|id| (id.clone(), Vec::new())).collect();
    for r in records {
        out.entry(r.image_id.clone()).or_default().push(r.detection());
    }
    for dets in out.values_mut() {
        dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
    out
}

/// Loads an externally produced detection file; see [`group_detections`].
pub fn ingest_external(path: impl AsRef<Path>, image_ids: &[String]) -> Result<BTreeMap<String, Vec<Detection>>> {
    Ok(group_detections(&read_detections(path)?, image_ids))
}

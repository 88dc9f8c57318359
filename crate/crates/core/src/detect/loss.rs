//! Training objective on the raw grid.

use super::decode::assign_cells;
use super::grid::BOX_CHANNELS;
use crate::boxes::GroundTruth;
use crate::error::{Error, Result};
use crate::tensor::{bce_with_logits, sigmoid, softmax_cross_entropy, Tensor};

/// Weight of the objectness term at cells without an object.
pub const NO_OBJECT_WEIGHT: f64 = 0.5;

/// Loss terms, each already divided by `S²`, and `d total / d raw`.
#[derive(Clone, Debug)]
pub struct DetectorLoss {
    pub total: f64,
    pub objectness: f64,
    pub boxes: f64,
    pub class: f64,
    pub grad: Tensor,
}

/// Objectness BCE everywhere (no-object cells weighted by
/// [`NO_OBJECT_WEIGHT`]), squared error on `(σ(t_x), σ(t_y), t_w, t_h)` and
/// softmax cross-entropy on the class at responsible cells.
pub fn detector_loss(raw: &Tensor, gts: &[GroundTruth], image_size: usize, anchor: [f64; 2]) -> Result<DetectorLoss> {
    let (ch, s, s2) = raw.dims3()?;
    if s != s2 || ch <= BOX_CHANNELS {
        return Err(Error::InvalidShape {
            op: "detector_loss",
            shape: raw.shape().to_vec(),
            reason: "expected [5 + C, S, S]".into(),
        });
    }
    let classes = ch - BOX_CHANNELS;
    let assigned = assign_cells(gts, image_size, s, anchor)?;
    if let Some(e) = assigned.iter().find(|e| e.class_id >= classes) {
        return Err(Error::InvalidArgument(format!("class {} outside 0..{classes}", e.class_id)));
    }
    let norm = 1.0 / (s * s) as f64;
    let mut grad = Tensor::zeros(raw.shape());
    let (mut objectness, mut boxes, mut class) = (0.0, 0.0, 0.0);

    let mut responsible = vec![None; s * s];
    for e in &assigned {
        responsible[e.row * s + e.col] = Some(e);
    }
    for i in 0..s {
        for j in 0..s {
            let t_obj = raw.at3(0, i, j);
            let Some(e) = responsible[i * s + j] else {
                let (l, g) = bce_with_logits(t_obj, 0.0);
                objectness += NO_OBJECT_WEIGHT * l;
                grad.set3(0, i, j, NO_OBJECT_WEIGHT * g * norm);
                continue;
            };
            let (l, g) = bce_with_logits(t_obj, 1.0);
            objectness += l;
            grad.set3(0, i, j, g * norm);

            for k in 0..4 {
                let t = raw.at3(1 + k, i, j);
                let (pred, dpred) = if k < 2 {
                    let p = sigmoid(t);
                    (p, p * (1.0 - p))
                } else {
                    (t, 1.0)
                };
                let r = pred - e.targets[k];
                boxes += r * r;
                grad.set3(1 + k, i, j, 2.0 * r * dpred * norm);
            }

            let logits: Vec<f64> = (0..classes).map(|k| raw.at3(BOX_CHANNELS + k, i, j)).collect();
            let (l, g) = softmax_cross_entropy(&logits, e.class_id);
            class += l;
            for (k, gk) in g.into_iter().enumerate() {
                grad.set3(BOX_CHANNELS + k, i, j, gk * norm);
            }
        }
    }
    let (objectness, boxes, class) = (objectness * norm, boxes * norm, class * norm);
    Ok(DetectorLoss { total: objectness + boxes + class, objectness, boxes, class, grad })
}

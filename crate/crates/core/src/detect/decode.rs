//! Raw-grid decoding, box encoding and non-maximum suppression.

use super::grid::BOX_CHANNELS;
use crate::boxes::{iou, BBox, Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor};

/// Index and value of the largest logit, ties to the lowest index, and the
/// softmax probability of that class.
pub(crate) fn best_class(logits: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (k, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = k;
        }
    }
    let m = logits[best];
    let z: f64 = logits.iter().map(|&l| (l - m).exp()).sum();
    (best, 1.0 / z)
}

fn grid_dims(raw: &Tensor) -> Result<(usize, usize)> {
    let (c, s, s2) = raw.dims3()?;
    if s != s2 || c <= BOX_CHANNELS {
        return Err(Error::InvalidShape {
            op: "decode_grid",
            shape: raw.shape().to_vec(),
            reason: "expected [5 + C, S, S]".into(),
        });
    }
    Ok((c - BOX_CHANNELS, s))
}

/// Detections from every cell whose score `σ(t_obj)·max softmax` reaches
/// `conf_thresh`, in row-major cell order.
pub fn decode_grid(raw: &Tensor, image_size: usize, anchor: [f64; 2], conf_thresh: f64) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&conf_thresh) {
        return Err(Error::InvalidArgument(format!("confidence threshold {conf_thresh} outside [0, 1]")));
    }
    let (classes, s) = grid_dims(raw)?;
    let cell = image_size as f64 / s as f64;
    let mut out = Vec::new();
    let mut logits = vec![0.0; classes];
    for i in 0..s {
        for j in 0..s {
            let at = |ch: usize| raw.at3(ch, i, j);
            for (k, l) in logits.iter_mut().enumerate() {
                *l = at(BOX_CHANNELS + k);
            }
            let (class_id, p) = best_class(&logits);
            let score = sigmoid(at(0)) * p;
            if score < conf_thresh {
                continue;
            }
            let cx = (j as f64 + sigmoid(at(1))) * cell;
            let cy = (i as f64 + sigmoid(at(2))) * cell;
            let bbox = BBox::from_center(cx, cy, anchor[0] * at(3).exp(), anchor[1] * at(4).exp());
            out.push(Detection { class_id, score, bbox });
        }
    }
    Ok(out)
}

/// A ground-truth box in grid coordinates: responsible cell `(i, j)` and
/// regression targets `(σ(t_x), σ(t_y), t_w, t_h)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodedBox {
    pub row: usize,
    pub col: usize,
    pub targets: [f64; 4],
    pub class_id: usize,
}

pub fn encode_box(gt: &GroundTruth, image_size: usize, s: usize, anchor: [f64; 2]) -> Result<EncodedBox> {
    if !gt.bbox.is_valid() {
        return Err(Error::InvalidArgument(format!("ground-truth box {:?} has non-positive size", gt.bbox)));
    }
    let scale = s as f64 / image_size as f64;
    let (cx, cy) = gt.bbox.center();
    let (gx, gy) = (cx * scale, cy * scale);
    let col = (gx.floor().max(0.0) as usize).min(s - 1);
    let row = (gy.floor().max(0.0) as usize).min(s - 1);
    Ok(EncodedBox {
        row,
        col,
        targets: [gx - col as f64, gy - row as f64, (gt.bbox.w / anchor[0]).ln(), (gt.bbox.h / anchor[1]).ln()],
        class_id: gt.class_id,
    })
}

/// Encoded boxes with at most one per cell: when several centres share a
/// cell the larger box wins (ties keep the earlier one).
pub fn assign_cells(gts: &[GroundTruth], image_size: usize, s: usize, anchor: [f64; 2]) -> Result<Vec<EncodedBox>> {
    let mut chosen: Vec<(EncodedBox, f64)> = Vec::new();
    for gt in gts {
        let e = encode_box(gt, image_size, s, anchor)?;
        let area = gt.bbox.area();
        match chosen.iter_mut().find(|(c, _)| c.row == e.row && c.col == e.col) {
            Some(slot) if area > slot.1 => *slot = (e, area),
            Some(_) => {}
            None => chosen.push((e, area)),
        }
    }
    Ok(chosen.into_iter().map(|(e, _)| e).collect())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// A raw grid that decodes to exactly `gts` (after cell assignment):
/// responsible cells get objectness and class logits of `±confidence`,
/// every other cell `-confidence`.
pub fn encode_grid(
    gts: &[GroundTruth],
    num_classes: usize,
    image_size: usize,
    s: usize,
    anchor: [f64; 2],
    confidence: f64,
) -> Result<Tensor> {
    let mut raw = Tensor::zeros(&[BOX_CHANNELS + num_classes, s, s]);
    for i in 0..s {
        for j in 0..s {
            raw.set3(0, i, j, -confidence);
        }
    }
    for e in assign_cells(gts, image_size, s, anchor)? {
        if e.class_id >= num_classes {
            return Err(Error::InvalidArgument(format!("class {} outside 0..{num_classes}", e.class_id)));
        }
        let [sx, sy, tw, th] = e.targets;
        raw.set3(0, e.row, e.col, confidence);
        raw.set3(1, e.row, e.col, logit(sx));
        raw.set3(2, e.row, e.col, logit(sy));
        raw.set3(3, e.row, e.col, tw);
        raw.set3(4, e.row, e.col, th);
        for k in 0..num_classes {
            let v = if k == e.class_id { confidence } else { -confidence };
            raw.set3(BOX_CHANNELS + k, e.row, e.col, v);
        }
    }
    Ok(raw)
}

/// Greedy same-class suppression. Candidates are visited by descending
/// score, then ascending class, then input order; a box is dropped when its
/// IoU with an already kept box of the same class reaches `iou_thresh`.
pub fn nms(detections: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.score.total_cmp(&da.score).then(da.class_id.cmp(&db.class_id)).then(a.cmp(&b))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = &detections[i];
        if kept.iter().all(|k| k.class_id != d.class_id || iou(&k.bbox, &d.bbox) < iou_thresh) {
            kept.push(*d);
        }
    }
    kept
}

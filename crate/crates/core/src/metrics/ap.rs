//! Non-interpolated average precision over a score-ranked detection list.

use crate::boxes::{iou, Detection, GroundTruth};

/// Detections and ground truth for one image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalImage {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruth>,
}

/// Relevance flags of one class's detections in rank order.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub rel: Vec<bool>,
    /// Number of ground-truth objects of the class.
    pub num_relevant: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    /// 1-based rank.
    pub rank: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Per-class AP (`None` for classes without ground truth) and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct MapResult {
    pub map: f64,
    pub per_class: Vec<Option<f64>>,
}

/// Matches one class's detections pooled over `images`.
///
/// Detections are ranked by descending score (ties keep image order, then
/// list order). Each in turn takes the still-unmatched same-class ground
/// truth box of its own image with the highest IoU `>= iou_thresh` (ties to
/// the lowest index); a matched detection is relevant.
pub fn match_corpus(images: &[EvalImage], class: usize, iou_thresh: f64) -> MatchResult {
    let mut ranked: Vec<(usize, &Detection)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, im)| im.detections.iter().filter(|d| d.class_id == class).map(move |d| (i, d)))
        .collect();
    ranked.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let mut taken: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.ground_truth.len()]).collect();
    let num_relevant = images.iter().map(|im| im.ground_truth.iter().filter(|g| g.class_id == class).count()).sum();

    let rel = ranked
        .iter()
        .map(|&(img, det)| {
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in images[img].ground_truth.iter().enumerate() {
                if gt.class_id != class || taken[img][gi] {
                    continue;
                }
                let o = iou(&det.bbox, &gt.bbox);
                if o >= iou_thresh && best.is_none_or(|(_, b)| o > b) {
                    best = Some((gi, o));
                }
            }
            match best {
                Some((gi, _)) => {
                    taken[img][gi] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    MatchResult { rel, num_relevant }
}

/// Single-image form of [`match_corpus`].
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], class: usize, iou_thresh: f64) -> MatchResult {
    let image = EvalImage { detections: dets.to_vec(), ground_truth: gts.to_vec() };
    match_corpus(std::slice::from_ref(&image), class, iou_thresh)
}

pub fn precision_recall(m: &MatchResult) -> Vec<PrPoint> {
    let mut hits = 0usize;
    m.rel
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            hits += r as usize;
            PrPoint {
                rank: k + 1,
                precision: hits as f64 / (k + 1) as f64,
                recall: if m.num_relevant > 0 { hits as f64 / m.num_relevant as f64 } else { 0.0 },
            }
        })
        .collect()
}

/// `AP = Σ_k P(k) rel(k) / #relevant`; 0 when the class has no ground truth.
pub fn average_precision(m: &MatchResult) -> f64 {
    if m.num_relevant == 0 {
        log::warn!("average precision requested for a class without ground truth; reporting 0");
        return 0.0;
    }
    let sum = precision_recall(m).iter().zip(&m.rel).filter(|(_, &r)| r).fold(0.0, |acc, (p, _)| acc + p.precision);
    sum / m.num_relevant as f64
}

/// Mean of per-class APs over the classes that have ground truth.
pub fn mean_average_precision(images: &[EvalImage], num_classes: usize, iou_thresh: f64) -> MapResult {
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| {
            let m = match_corpus(images, c, iou_thresh);
            (m.num_relevant > 0).then(|| average_precision(&m))
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = if present.is_empty() {
        log::warn!("mAP requested on a corpus without ground truth; reporting 0");
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    MapResult { map, per_class }
}

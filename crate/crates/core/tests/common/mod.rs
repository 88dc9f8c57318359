#![allow(dead_code)]

use fogcascade::boxes::{BBox, Detection, GroundTruth};
use fogcascade::imageio::{DatasetManifest, DetectionRecord, ImageU8, ManifestRecord, Split};
use fogcascade::metrics::EvalImage;
use fogcascade::rng::Rng;
use fogcascade::tensor::{Tensor, TensorMap};
use proptest::prelude::*;

pub const ROUND_TRIP_CASES: u32 = 256;

// ---- brute-force mAP oracle ----
//
// Boxes have integer coordinates so IoU comparisons can be done exactly in
// integer arithmetic: IoU(a, b) >= t  <=>  inter >= t * union, and
// IoU(a, b) > IoU(a, c)  <=>  inter_b * union_c > inter_c * union_b.

fn int_inter_union(a: &BBox, b: &BBox) -> (i64, i64) {
    let (ax0, ay0, ax1, ay1) = (a.x as i64, a.y as i64, (a.x + a.w) as i64, (a.y + a.h) as i64);
    let (bx0, by0, bx1, by1) = (b.x as i64, b.y as i64, (b.x + b.w) as i64, (b.y + b.h) as i64);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0);
    let inter = iw * ih;
    let union = (a.w * a.h) as i64 + (b.w * b.h) as i64 - inter;
    (inter, union)
}

/// Relevance flags in rank order for one class at IoU threshold 1/2.
pub fn oracle_rel(images: &[EvalImage], class: usize) -> (Vec<bool>, usize) {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, im) in images.iter().enumerate() {
        for (j, d) in im.detections.iter().enumerate() {
            if d.class_id == class {
                cands.push((d.score, i, j));
            }
        }
    }
    // Insertion sort on (-score, image, index): obviously stable.
    for k in 1..cands.len() {
        let mut m = k;
        while m > 0 && {
            let (a, b) = (cands[m - 1], cands[m]);
            a.0 < b.0 || (a.0 == b.0 && (a.1, a.2) > (b.1, b.2))
        } {
            cands.swap(m - 1, m);
            m -= 1;
        }
    }
    let mut used: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.ground_truth.len()]).collect();
    let mut rel = Vec::new();
    for &(_, i, j) in &cands {
        let d = &images[i].detections[j];
        let mut best: Option<(usize, i64, i64)> = None;
        for (g, gt) in images[i].ground_truth.iter().enumerate() {
            if gt.class_id != class || used[i][g] {
                continue;
            }
            let (inter, union) = int_inter_union(&d.bbox, &gt.bbox);
            if 2 * inter < union {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bi, bu)) => inter * bu > bi * union,
            };
            if better {
                best = Some((g, inter, union));
            }
        }
        if let Some((g, _, _)) = best {
            used[i][g] = true;
        }
        rel.push(best.is_some());
    }
    let relevant = images.iter().flat_map(|im| &im.ground_truth).filter(|g| g.class_id == class).count();
    (rel, relevant)
}

/// mAP at IoU 1/2 with the same floating-point reduction order as the
/// definition: precision at each relevant rank summed in rank order.
pub fn oracle_map(images: &[EvalImage], num_classes: usize) -> f64 {
    let mut aps = Vec::new();
    for c in 0..num_classes {
        let (rel, relevant) = oracle_rel(images, c);
        if relevant == 0 {
            continue;
        }
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (k, &r) in rel.iter().enumerate() {
            if r {
                hits += 1;
                sum += hits as f64 / (k + 1) as f64;
            }
        }
        aps.push(sum / relevant as f64);
    }
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

fn int_box(rng: &mut Rng) -> BBox {
    BBox::new(
        rng.range_inclusive(0, 8) as f64,
        rng.range_inclusive(0, 8) as f64,
        rng.range_inclusive(1, 6) as f64,
        rng.range_inclusive(1, 6) as f64,
    )
}

/// One image with at most 6 detections, 4 ground-truth boxes and 3
/// classes. Scores come from a coarse grid so ties are common; detections
/// are often jittered copies of ground truth.
pub fn random_instance(rng: &mut Rng) -> EvalImage {
    let classes = rng.range_inclusive(1, 3);
    let gts: Vec<GroundTruth> = (0..rng.range_inclusive(0, 4))
        .map(|_| GroundTruth { class_id: rng.range_inclusive(0, classes - 1), bbox: int_box(rng) })
        .collect();
    let dets = (0..rng.range_inclusive(0, 6))
        .map(|_| {
            let score = rng.range_inclusive(1, 5) as f64 / 5.0;
            if !gts.is_empty() && rng.next_f64() < 0.6 {
                let g = gts[rng.below(gts.len() as u64) as usize];
                let mut b = g.bbox;
                b.x += rng.range_inclusive(0, 2) as f64 - 1.0;
                b.w += rng.range_inclusive(0, 1) as f64;
                let class_id = if rng.next_f64() < 0.8 { g.class_id } else { rng.range_inclusive(0, classes - 1) };
                Detection { class_id, score, bbox: b }
            } else {
                Detection { class_id: rng.range_inclusive(0, classes - 1), score, bbox: int_box(rng) }
            }
        })
        .collect();
    EvalImage { detections: dets, ground_truth: gts }
}

// ---- proptest strategies ----

pub fn image_u8() -> impl Strategy<Value = ImageU8> {
    (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), 3 * w * h).prop_map(move |d| ImageU8::new(w, h, d).unwrap())
    })
}

pub fn tensor() -> impl Strategy<Value = Tensor> {
    proptest::collection::vec(1usize..5, 0..4).prop_flat_map(|shape| {
        let n = shape.iter().product::<usize>();
        proptest::collection::vec(any::<f64>(), n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
    })
}

pub fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

pub fn tensor_map() -> impl Strategy<Value = TensorMap> {
    proptest::collection::btree_map("[a-z]{1,6}(\\.[a-z0-9_]{1,5}){0,2}", tensor(), 0..6)
        .prop_map(|m| m.into_iter().collect())
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e4f64..1e4, any::<f64>().prop_filter("finite", |v| v.is_finite())]
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-6f64..1e3, any::<f64>().prop_filter("positive", |v| v.is_finite() && *v > 0.0)]
}

pub fn detection_record() -> impl Strategy<Value = DetectionRecord> {
    ("\\PC{0,12}", 0usize..1000, 0.0f64..=1.0, finite(), finite(), positive(), positive())
        .prop_map(|(image_id, class_id, score, x, y, w, h)| DetectionRecord { image_id, class_id, score, x, y, w, h })
}

fn ground_truth() -> impl Strategy<Value = GroundTruth> {
    (0usize..5, finite(), finite(), positive(), positive())
        .prop_map(|(class_id, x, y, w, h)| GroundTruth { class_id, bbox: BBox::new(x, y, w, h) })
}

pub fn manifest() -> impl Strategy<Value = DatasetManifest> {
    let record = ("[a-z0-9_]{1,10}", proptest::collection::vec(ground_truth(), 0..5));
    (
        prop_oneof![Just(Split::Train), Just(Split::Val), Just(Split::Test)],
        proptest::collection::vec("\\PC{1,8}", 0..4),
        proptest::collection::btree_map("[a-z0-9_]{1,10}", record, 0..6),
    )
        .prop_map(|(split, class_names, recs)| DatasetManifest {
            split,
            class_names,
            records: recs
                .into_iter()
                .map(|(id, (stem, boxes))| ManifestRecord {
                    clear_path: format!("clear/{stem}.ppm"),
                    foggy_path: format!("foggy/{stem}.ppm"),
                    depth_path: format!("depth/{stem}.ptns"),
                    boxes,
                    id,
                })
                .collect(),
            base_dir: Default::default(),
        })
}

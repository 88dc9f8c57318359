use fogcascade::boxes::{iou, BBox, Detection, GroundTruth};
use fogcascade::dehaze::roi_mask;
use fogcascade::detect::*;
use proptest::prelude::*;

const ANCHOR: [f64; 2] = [16.0, 16.0];

fn gt_box() -> impl Strategy<Value = GroundTruth> {
    (0usize..3, 0.0f64..60.0, 0.0f64..60.0, 2.0f64..30.0, 2.0f64..30.0)
        .prop_map(|(class_id, cx, cy, w, h)| GroundTruth { class_id, bbox: BBox::from_center(cx, cy, w, h) })
}

fn detection() -> impl Strategy<Value = Detection> {
    (0usize..3, 0.0f64..1.0, 0.0f64..40.0, 0.0f64..40.0, 1.0f64..20.0, 1.0f64..20.0)
        .prop_map(|(class_id, score, x, y, w, h)| Detection { class_id, score, bbox: BBox::new(x, y, w, h) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn encode_decode_round_trip(gt in gt_box()) {
        let raw = encode_grid(&[gt], 3, 64, 8, ANCHOR, 40.0).unwrap();
        let dets = decode_grid(&raw, 64, ANCHOR, 0.0).unwrap();
        let hit: Vec<_> = dets.iter().filter(|d| d.score > 0.5).collect();
        prop_assert_eq!(hit.len(), 1);
        let d = hit[0];
        prop_assert_eq!(d.class_id, gt.class_id);
        for (a, b) in [(d.bbox.x, gt.bbox.x), (d.bbox.y, gt.bbox.y), (d.bbox.w, gt.bbox.w), (d.bbox.h, gt.bbox.h)] {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn loss_vanishes_on_encoded_grid(gts in proptest::collection::vec(gt_box(), 0..5)) {
        let raw = encode_grid(&gts, 3, 64, 8, ANCHOR, 40.0).unwrap();
        let l = detector_loss(&raw, &gts, 64, ANCHOR).unwrap();
        prop_assert!(l.boxes < 1e-20);
        prop_assert!(l.class < 1e-15);
    }

    #[test]
    fn loss_positive_off_target(gt in gt_box(), shift in 0.05f64..1.0) {
        let mut raw = encode_grid(&[gt], 3, 64, 8, ANCHOR, 40.0).unwrap();
        let e = encode_box(&gt, 64, 8, ANCHOR).unwrap();
        let v = raw.at3(3, e.row, e.col);
        raw.set3(3, e.row, e.col, v + shift);
        prop_assert!(detector_loss(&raw, &[gt], 64, ANCHOR).unwrap().boxes > 0.0);
    }

    #[test]
    fn nms_output_properties(dets in proptest::collection::vec(detection(), 0..12), thr in 0.1f64..0.9) {
        let kept = nms(&dets, thr);
        prop_assert!(kept.windows(2).all(|w| w[0].score >= w[1].score));
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.class_id != b.class_id || iou(&a.bbox, &b.bbox) < thr);
            }
        }
        // idempotent
        prop_assert_eq!(nms(&kept, thr), kept);
    }
}

#[test]
fn external_fixture_drives_roi_mask() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/external_detections.jsonl");
    let ids = vec!["street_0003".to_string()];
    let grouped = ingest_external(path, &ids).unwrap();
    assert_eq!(grouped.len(), 3);
    let first: Vec<f64> = grouped["street_0001"].iter().map(|d| d.score).collect();
    assert_eq!(first, vec![0.91, 0.88, 0.26]);
    assert_eq!(grouped["street_0002"].len(), 2);
    assert!(grouped["street_0003"].is_empty());

    let mask = roi_mask(&grouped["street_0001"], 512, 1024);
    // inside the person box only
    assert_eq!(mask.at3(0, 300, 440), 0.91);
    // person and car boxes do not overlap; inside the car box
    assert_eq!(mask.at3(0, 300, 200), 0.88);
    assert_eq!(mask.at3(0, 10, 10), 0.0);
}

#[test]
fn empty_external_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.jsonl");
    std::fs::write(&p, "").unwrap();
    assert!(ingest_external(&p, &[]).unwrap().is_empty());
}

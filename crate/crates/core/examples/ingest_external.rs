//! Scores detections produced outside this crate, supplied as JSON lines.

use fogcascade::boxes::{BBox, GroundTruth};
use fogcascade::dataset::ImagePair;
use fogcascade::detect::{group_detections, score_detections};
use fogcascade::imageio::parse_detections;
use fogcascade::tensor::Tensor;

const EXTERNAL: &str = r#"
{"image_id": "img_a", "class_id": 0, "score": 0.92, "x": 4.0, "y": 4.0, "w": 12.0, "h": 12.0}
{"image_id": "img_a", "class_id": 1, "score": 0.40, "x": 30.0, "y": 8.0, "w": 10.0, "h": 10.0}
{"image_id": "img_b", "class_id": 1, "score": 0.75, "x": 20.0, "y": 22.0, "w": 16.0, "h": 14.0}
{"image_id": "img_b", "class_id": 1, "score": 0.55, "x": 21.0, "y": 22.0, "w": 16.0, "h": 14.0}
"#;

fn pair(id: &str, boxes: Vec<GroundTruth>) -> ImagePair {
    let blank = Tensor::zeros(&[3, 64, 64]);
    ImagePair { id: id.into(), foggy: blank.clone(), clear: blank, boxes }
}

fn main() -> fogcascade::Result<()> {
    let pairs = vec![
        pair("img_a", vec![GroundTruth { class_id: 0, bbox: BBox::new(5.0, 5.0, 12.0, 12.0) }]),
        pair("img_b", vec![GroundTruth { class_id: 1, bbox: BBox::new(20.0, 21.0, 16.0, 15.0) }]),
    ];
    let records = parse_detections(EXTERNAL)?;
    let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
    let grouped = group_detections(&records, &ids);
    let dets: Vec<_> = ids.iter().map(|id| grouped[id].clone()).collect();
    for (id, d) in ids.iter().zip(&dets) {
        println!("{id}: {} detections", d.len());
    }
    let r = score_detections(&pairs, &dets, 3)?;
    println!("per class AP {:?}", r.per_class);
    println!("mAP@0.5 {:.4}", r.map);
    Ok(())
}

//! Average precision on a two-image toy corpus, with the ranked
//! precision/recall points behind it.

use fogcascade::boxes::{BBox, Detection, GroundTruth};
use fogcascade::metrics::{average_precision, match_corpus, mean_average_precision, precision_recall, EvalImage};

fn det(class_id: usize, score: f64, x: f64, y: f64) -> Detection {
    Detection { class_id, score, bbox: BBox::new(x, y, 10.0, 10.0) }
}

fn gt(class_id: usize, x: f64, y: f64) -> GroundTruth {
    GroundTruth { class_id, bbox: BBox::new(x, y, 10.0, 10.0) }
}

fn main() {
    let images = vec![
        EvalImage {
            detections: vec![det(0, 0.9, 0.0, 0.0), det(0, 0.8, 1.0, 1.0), det(1, 0.7, 30.0, 30.0)],
            ground_truth: vec![gt(0, 0.0, 0.0), gt(1, 50.0, 50.0)],
        },
        EvalImage {
            detections: vec![det(0, 0.85, 20.0, 20.0), det(0, 0.3, 40.0, 40.0)],
            ground_truth: vec![gt(0, 21.0, 21.0), gt(0, 0.0, 40.0)],
        },
    ];
    for class in 0..2 {
        let m = match_corpus(&images, class, 0.5);
        println!("class {class}: {} ground truth, relevance {:?}", m.num_relevant, m.rel);
        for p in precision_recall(&m) {
            println!("  rank {}  precision {:.3}  recall {:.3}", p.rank, p.precision, p.recall);
        }
        println!("  AP {:.4}", average_precision(&m));
    }
    let r = mean_average_precision(&images, 3, 0.5);
    println!("per class {:?}", r.per_class);
    println!("mAP@0.5 {:.4} (class 2 has no ground truth and is skipped)", r.map);
}

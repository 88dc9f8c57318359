//! Trains the light grid detector on clear scenes, then lists its
//! detections on one unseen scene next to the ground truth.

use fogcascade::dataset::{Condition, ImagePair};
use fogcascade::detect::{
    evaluate_detector, train_detector, DetectTrainConfig, GridDetector, GridDetectorConfig, PRELIMINARY_CONFIDENCE,
};
use fogcascade::rng::Rng;
use fogcascade::scatter::{gen_scene, SceneSpec, CLASS_NAMES};

fn corpus(n: usize, seed: u64) -> fogcascade::Result<Vec<ImagePair>> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let s = gen_scene(&SceneSpec::default(), &mut rng)?;
            Ok(ImagePair { id: format!("scene_{i:03}"), foggy: s.image.clone(), clear: s.image, boxes: s.boxes })
        })
        .collect()
}

fn main() -> fogcascade::Result<()> {
    let (train, val) = (corpus(64, 3)?, corpus(16, 4)?);
    let detector = GridDetector::new(GridDetectorConfig::light())?;
    println!("light detector, {} parameters", detector.param_count());
    let cfg = DetectTrainConfig { epochs: 12, lr: 0.005, ..Default::default() };
    let outcome = train_detector(&detector, &train, &cfg)?;
    println!("loss {:.4} -> {:.4}", outcome.losses[0], outcome.losses[outcome.losses.len() - 1]);

    let (map, _) = evaluate_detector(&detector, &outcome.params, &val, Condition::Clear)?;
    println!("val mAP@0.5 {:.4}", map.map);

    let pair = &val[0];
    for gt in &pair.boxes {
        let b = gt.bbox;
        println!("gt   {:<8} ({:5.1}, {:5.1}) {:4.1}x{:4.1}", CLASS_NAMES[gt.class_id], b.x, b.y, b.w, b.h);
    }
    for d in detector.detect(&outcome.params, &pair.clear, PRELIMINARY_CONFIDENCE)? {
        let b = d.bbox;
        println!(
            "det  {:<8} ({:5.1}, {:5.1}) {:4.1}x{:4.1} score {:.3}",
            CLASS_NAMES[d.class_id], b.x, b.y, b.w, b.h, d.score
        );
    }
    Ok(())
}

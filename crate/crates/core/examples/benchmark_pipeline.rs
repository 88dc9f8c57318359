//! Trains small detectors and dehazers in memory, then benchmarks the three
//! pipeline variants on clear and foggy copies of held-out scenes.
//!
//! Takes under a minute in release mode; the `fogcascade` binary runs the
//! same stages on disk.

use fogcascade::dataset::{Condition, ImagePair};
use fogcascade::dehaze::{train_dehazer, AodNet, AodNetX, DehazeTrainConfig};
use fogcascade::detect::{train_detector, DetectTrainConfig, GridDetector, GridDetectorConfig};
use fogcascade::pipeline::{benchmark_markdown, run_benchmark, run_variant, LoadedDetector, Variant, VariantSpec};
use fogcascade::rng::Rng;
use fogcascade::scatter::{apply_fog, gen_scene, transmission_from_depth, FogParams, SceneSpec};

fn corpus(n: usize, seed: u64) -> fogcascade::Result<Vec<ImagePair>> {
    let fog = FogParams::default();
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let s = gen_scene(&SceneSpec::default(), &mut rng)?;
            let t = transmission_from_depth(&s.depth, fog.beta)?;
            let foggy = apply_fog(&s.image, &t, fog.airlight)?;
            Ok(ImagePair { id: format!("scene_{i:03}"), foggy, clear: s.image, boxes: s.boxes })
        })
        .collect()
}

fn detector(config: GridDetectorConfig, pairs: &[ImagePair]) -> fogcascade::Result<LoadedDetector> {
    let detector = GridDetector::new(config)?;
    let cfg = DetectTrainConfig { epochs: 15, condition: Condition::Clear, ..Default::default() };
    let params = train_detector(&detector, pairs, &cfg)?.params;
    Ok(LoadedDetector { detector, params })
}

fn main() -> fogcascade::Result<()> {
    let (train, test) = (corpus(96, 5)?, corpus(24, 6)?);
    println!("training detectors");
    let heavy = detector(GridDetectorConfig::heavy(), &train)?;
    let light = detector(GridDetectorConfig::light(), &train)?;
    println!("training dehazers");
    let cfg = DehazeTrainConfig { epochs: 4, ..Default::default() };
    let aod = train_dehazer(&AodNet::new(), &train, &cfg, None)?.params;
    let init = AodNetX::new().params_from_trunk(&aod, &mut Rng::new(cfg.seed));
    let aodx = train_dehazer(&AodNetX::new(), &train, &cfg, Some(init))?.params;

    let specs = vec![
        VariantSpec::new(Variant::HeavyOnly, "A", heavy.clone(), None, None)?,
        VariantSpec::new(Variant::AodNetThenHeavy, "A", heavy.clone(), None, Some(aod))?,
        VariantSpec::new(Variant::LightAodNetXHeavy, "A", heavy, Some(light), Some(aodx))?,
    ];

    let out = run_variant(&specs[2], &test[0].foggy)?;
    println!(
        "{} on {}: {} preliminary RoIs, {} final detections",
        specs[2].label(),
        test[0].id,
        out.preliminary.len(),
        out.detections.len()
    );

    let run = run_benchmark(&specs, &test, 3)?;
    print!("{}", benchmark_markdown(&run.rows));
    Ok(())
}

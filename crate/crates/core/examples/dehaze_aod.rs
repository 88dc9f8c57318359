//! Trains AOD-Net on a small in-memory corpus and compares it with the hazy
//! input on held-out scenes.

use fogcascade::dataset::ImagePair;
use fogcascade::dehaze::{eval_dehazer, train_dehazer, AodNet, DehazeTrainConfig, Dehazer};
use fogcascade::rng::Rng;
use fogcascade::scatter::{apply_fog, gen_scene, transmission_from_depth, FogParams, SceneSpec};

fn corpus(n: usize, seed: u64) -> fogcascade::Result<Vec<ImagePair>> {
    let spec = SceneSpec { image_size: 32, object_count: (1, 3), object_size: (6, 12), ..Default::default() };
    let fog = FogParams::default();
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let s = gen_scene(&spec, &mut rng)?;
            let t = transmission_from_depth(&s.depth, fog.beta)?;
            let foggy = apply_fog(&s.image, &t, fog.airlight)?;
            Ok(ImagePair { id: format!("scene_{i:03}"), foggy, clear: s.image, boxes: s.boxes })
        })
        .collect()
}

fn main() -> fogcascade::Result<()> {
    let (train, val) = (corpus(48, 1)?, corpus(12, 2)?);
    let model = AodNet::new();
    println!("AOD-Net, {} parameters", Dehazer::param_count(&model));
    let cfg = DehazeTrainConfig { epochs: 6, ..Default::default() };
    let outcome = train_dehazer(&model, &train, &cfg, None)?;
    for (epoch, loss) in outcome.losses.iter().enumerate() {
        println!("epoch {:>2}  mse {loss:.5}", epoch + 1);
    }
    let e = eval_dehazer(&model, &outcome.params, &val, false)?;
    println!(
        "val SSIM {:.4} (hazy {:.4}), PSNR {:.2} dB (hazy {:.2} dB)",
        e.mean_ssim, e.hazy_ssim, e.mean_psnr, e.hazy_psnr
    );
    Ok(())
}

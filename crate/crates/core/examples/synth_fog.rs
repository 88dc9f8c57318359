//! Renders one scene and fogs it at increasing extinction coefficients.
//!
//! `cargo run --example synth_fog -- [out_dir]`

use fogcascade::imageio::write_image;
use fogcascade::metrics::{psnr, ssim};
use fogcascade::rng::Rng;
use fogcascade::scatter::{apply_fog, gen_scene, transmission_from_depth, FogParams, SceneSpec, CLASS_NAMES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("fog_sweep"), Into::into);
    std::fs::create_dir_all(&out)?;
    let spec = SceneSpec::default();
    let scene = gen_scene(&spec, &mut Rng::new(42))?;
    for gt in &scene.boxes {
        let b = gt.bbox;
        println!("{:<8} at ({:.0}, {:.0}) {:.0}x{:.0}", CLASS_NAMES[gt.class_id], b.x, b.y, b.w, b.h);
    }
    write_image(out.join("clear.ppm"), &scene.image)?;

    let airlight = FogParams::default().airlight;
    println!("{:>6} {:>8} {:>7} {:>8}", "beta", "mean t", "SSIM", "PSNR");
    for beta in [0.0, 0.02, 0.05, 0.08, 0.12, 0.2] {
        let t = transmission_from_depth(&scene.depth, beta)?;
        let foggy = apply_fog(&scene.image, &t, airlight)?;
        let mean_t = t.data().iter().sum::<f64>() / t.len() as f64;
        let p = psnr(&foggy, &scene.image, 1.0)?;
        println!(
            "{beta:>6.2} {mean_t:>8.3} {:>7.4} {:>8}",
            ssim(&foggy, &scene.image)?,
            fogcascade::metrics::format_db(p)
        );
        write_image(out.join(format!("beta_{beta:.2}.ppm")), &foggy)?;
    }
    println!("images in {}", out.display());
    Ok(())
}

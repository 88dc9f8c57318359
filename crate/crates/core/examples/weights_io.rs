//! Saves freshly initialised AOD-NetX weights and a float image, reads them
//! back and checks that every value survives bit for bit.

use fogcascade::dehaze::AodNetX;
use fogcascade::imageio::{load_weights, read_tensor, save_weights, write_tensor};
use fogcascade::rng::Rng;
use fogcascade::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut rng = Rng::new(8);
    let params = AodNetX::new().init_params(&mut rng);
    let path = dir.path().join("aod-netx.ppwa");
    save_weights(&path, &params)?;
    let back = load_weights(&path)?;
    for (name, t) in params.iter() {
        let b = back.require(name)?;
        let same = t.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        println!("{name:<20} {:?} {}", t.shape(), if same { "identical" } else { "DIFFERS" });
    }
    println!("{} bytes on disk", std::fs::metadata(&path)?.len());

    let image = Tensor::uniform(&[3, 16, 16], 0.0, 1.0, &mut rng);
    let tpath = dir.path().join("image.ptns");
    write_tensor(&tpath, &image)?;
    println!("tensor round trip identical: {}", read_tensor(&tpath)?.data() == image.data());
    Ok(())
}

//! Compares analytic and central-difference gradients for each layer kind.

use fogcascade::rng::Rng;
use fogcascade::tensor::gradcheck::layer_problem;
use fogcascade::tensor::{grad_check, GradCheckOptions, LayerSpec};

fn main() -> fogcascade::Result<()> {
    let mut rng = Rng::new(5);
    let layers = [
        (
            LayerSpec::Conv2d { in_channels: 3, out_channels: 4, kernel: 3, stride: 1, same_padding: true },
            vec![3, 6, 6],
        ),
        (
            LayerSpec::Conv2d { in_channels: 3, out_channels: 2, kernel: 3, stride: 2, same_padding: true },
            vec![3, 7, 7],
        ),
        (LayerSpec::Sigmoid, vec![2, 4, 4]),
        (LayerSpec::Batchnorm { channels: 3 }, vec![3, 5, 5]),
        (LayerSpec::BilinearUp, vec![2, 3, 3]),
    ];
    let opts = GradCheckOptions::default();
    for (spec, shape) in layers {
        let (fragment, params, input) = layer_problem(spec.clone(), &shape, &mut rng)?;
        let r = grad_check(&fragment, &params, &input, &opts)?;
        println!(
            "{:<70} {:>4} probes  max rel error {:.2e} at {}",
            format!("{spec:?}"),
            r.probes,
            r.max_rel_error,
            r.worst
        );
    }
    Ok(())
}

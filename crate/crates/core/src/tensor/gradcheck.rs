//! Central-difference gradient checking.
//!
//! A [`Differentiable`] fragment maps `(params, input)` to a scalar loss and
//! reports analytic gradients for every trainable parameter and for the
//! input. [`grad_check`] perturbs each probed element by `±eps` and reports
//! the worst relative error `|a - n| / max(|a|, |n|, 1e-8)`. Fragments with
//! kinks can report which side of each kink a point is on; probes whose
//! stencil straddles one are counted separately instead of compared.

use super::*;
use crate::error::Result;
use crate::rng::Rng;

pub trait Differentiable {
    fn loss(&self, params: &TensorMap, input: &Tensor) -> Result<f64>;

    /// Analytic gradients: `(per-parameter, input)`. Only parameters present
    /// in the returned map are checked.
    fn gradients(&self, params: &TensorMap, input: &Tensor) -> Result<(TensorMap, Tensor)>;

    /// Branch taken at every kink, or `None` for smooth fragments.
    fn kink_pattern(&self, _params: &TensorMap, _input: &Tensor) -> Result<Option<Vec<u32>>> {
        Ok(None)
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Probe at most this many evenly spaced elements per tensor.
    /// `None` probes every element.
    pub max_probes_per_tensor: Option<usize>,
    pub check_input: bool,
    /// Use the five-point stencil `(8(f(x+ε) - f(x-ε)) - (f(x+2ε) - f(x-2ε))) / 12ε`
    /// instead of the two-point one. Its truncation error is O(ε⁴).
    pub fourth_order: bool,
    /// Return as soon as one probe's stencil crosses a kink.
    pub stop_at_kink: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, max_probes_per_tensor: None, check_input: true, fourth_order: false, stop_at_kink: false }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `tensor[index]` of the worst probe.
    pub worst: String,
    pub probes: usize,
    /// Probes left out of the comparison because their stencil crosses a
    /// kink.
    pub kink_crossings: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn probe_indices(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < len => (0..m).map(|j| j * len / m).collect(),
        _ => (0..len).collect(),
    }
}

/// Offset of the outermost stencil points.
fn reach(opts: &GradCheckOptions) -> f64 {
    if opts.fourth_order {
        2.0 * opts.eps
    } else {
        opts.eps
    }
}

/// Numeric derivative of `f` at offset 0 along one coordinate.
fn difference(opts: &GradCheckOptions, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let e = opts.eps;
    let near = f(e)? - f(-e)?;
    if !opts.fourth_order {
        return Ok(near / (2.0 * e));
    }
    let far = f(2.0 * e)? - f(-2.0 * e)?;
    Ok((8.0 * near - far) / (12.0 * e))
}

/// Whether the kink pattern at either end of the stencil differs from the
/// centre. Kink quantities are close to linear over the stencil, so equal
/// patterns at both ends mean none switches in between.
fn straddles(
    opts: &GradCheckOptions,
    centre: &Option<Vec<u32>>,
    mut pattern: impl FnMut(f64) -> Result<Option<Vec<u32>>>,
) -> Result<bool> {
    if centre.is_none() {
        return Ok(false);
    }
    let r = reach(opts);
    Ok(pattern(r)? != *centre || pattern(-r)? != *centre)
}

pub fn grad_check(
    fragment: &impl Differentiable,
    params: &TensorMap,
    input: &Tensor,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (param_grads, input_grad) = fragment.gradients(params, input)?;
    let centre = fragment.kink_pattern(params, input)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: String::new(), probes: 0, kink_crossings: 0 };
    let mut record = |name: &str, i: usize, a: f64, n: Option<f64>| {
        let Some(n) = n else {
            report.kink_crossings += 1;
            return;
        };
        let e = relative_error(a, n);
        report.probes += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = e.max(report.max_rel_error);
            report.worst = format!("{name}[{i}]");
        }
    };

    let mut work = params.clone();
    for (name, grad) in param_grads.iter() {
        for i in probe_indices(grad.len(), opts.max_probes_per_tensor) {
            let orig = work.require(name)?.data()[i];
            let crossed = straddles(opts, &centre, |d| {
                work.get_mut(name).unwrap().data_mut()[i] = orig + d;
                fragment.kink_pattern(&work, input)
            })?;
            let n = difference(opts, |d| {
                work.get_mut(name).unwrap().data_mut()[i] = orig + d;
                fragment.loss(&work, input)
            })?;
            work.get_mut(name).unwrap().data_mut()[i] = orig;
            let n = (!crossed).then_some(n);
            record(name, i, grad.data()[i], n);
            if crossed && opts.stop_at_kink {
                return Ok(report);
            }
        }
    }

    if opts.check_input {
        let mut x = input.clone();
        for i in probe_indices(x.len(), opts.max_probes_per_tensor) {
            let orig = x.data()[i];
            let crossed = straddles(opts, &centre, |d| {
                x.data_mut()[i] = orig + d;
                fragment.kink_pattern(params, &x)
            })?;
            let n = difference(opts, |d| {
                x.data_mut()[i] = orig + d;
                fragment.loss(params, &x)
            })?;
            x.data_mut()[i] = orig;
            let n = (!crossed).then_some(n);
            record("input", i, input_grad.data()[i], n);
            if crossed && opts.stop_at_kink {
                return Ok(report);
            }
        }
    }
    Ok(report)
}

/// A single layer followed by a fixed random projection `Σ r·y`, so every
/// output element carries an O(1) gradient.
#[derive(Clone, Debug)]
pub struct LayerFragment {
    pub spec: LayerSpec,
    projection: Tensor,
}

impl LayerFragment {
    fn forward(&self, params: &TensorMap, x: &Tensor) -> Result<Tensor> {
        match &self.spec {
            LayerSpec::Conv2d { stride, .. } => {
                conv2d(x, params.require("layer.weight")?, params.require("layer.bias")?, *stride, self.spec.padding())
            }
            LayerSpec::Relu => Ok(activation(x, Activation::Relu)),
            LayerSpec::Sigmoid => Ok(activation(x, Activation::Sigmoid)),
            LayerSpec::Brelu => Ok(activation(x, Activation::Brelu)),
            LayerSpec::Maxout { group } => maxout(x, *group),
            LayerSpec::MaxpoolSame { kernel } => maxpool_same(x, *kernel),
            LayerSpec::BilinearUp => bilinear_up2(x),
            LayerSpec::Concat => {
                let c = x.dims3()?.0;
                let parts = split_channels(x, &[1, c - 1])?;
                concat(&[&parts[1], &parts[0]])
            }
            LayerSpec::Batchnorm { channels } => {
                let stats = BatchNormStats::new(*channels);
                let (y, _, _) = batchnorm(
                    x,
                    params.require("layer.gamma")?,
                    params.require("layer.beta")?,
                    BatchNormMode::Train,
                    &stats,
                )?;
                Ok(y)
            }
        }
    }
}

impl Differentiable for LayerFragment {
    fn loss(&self, params: &TensorMap, input: &Tensor) -> Result<f64> {
        let y = self.forward(params, input)?;
        Ok(y.data().iter().zip(self.projection.data()).map(|(a, b)| a * b).sum())
    }

    fn gradients(&self, params: &TensorMap, x: &Tensor) -> Result<(TensorMap, Tensor)> {
        let dy = &self.projection;
        let mut grads = TensorMap::new();
        let dx = match &self.spec {
            LayerSpec::Conv2d { stride, .. } => {
                let g = conv2d_backward(x, params.require("layer.weight")?, dy, *stride, self.spec.padding())?;
                grads.insert("layer.weight", g.weights);
                grads.insert("layer.bias", g.bias);
                g.input
            }
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Brelu => {
                let kind = match self.spec {
                    LayerSpec::Relu => Activation::Relu,
                    LayerSpec::Sigmoid => Activation::Sigmoid,
                    _ => Activation::Brelu,
                };
                let y = activation(x, kind);
                activation_backward(x, &y, dy, kind)?
            }
            LayerSpec::Maxout { group } => maxout_backward(x, *group, dy)?,
            LayerSpec::MaxpoolSame { kernel } => maxpool_same_backward(x, *kernel, dy)?,
            LayerSpec::BilinearUp => bilinear_up2_backward(x.shape(), dy)?,
            LayerSpec::Concat => {
                let c = x.dims3()?.0;
                let parts = split_channels(dy, &[c - 1, 1])?;
                concat(&[&parts[1], &parts[0]])?
            }
            LayerSpec::Batchnorm { channels } => {
                let gamma = params.require("layer.gamma")?;
                let stats = BatchNormStats::new(*channels);
                let (_, _, cache) = batchnorm(x, gamma, params.require("layer.beta")?, BatchNormMode::Train, &stats)?;
                let (dx, dg, db) = batchnorm_backward(&cache, gamma, dy)?;
                grads.insert("layer.gamma", dg);
                grads.insert("layer.beta", db);
                dx
            }
        };
        Ok((grads, dx))
    }
}

/// Random single-layer problem for `spec` on an input of `input_shape`.
///
/// Inputs to piecewise layers are kept at least `0.05` away from their kinks.
pub fn layer_problem(
    spec: LayerSpec,
    input_shape: &[usize],
    rng: &mut Rng,
) -> Result<(LayerFragment, TensorMap, Tensor)> {
    let (c, h, w) = match input_shape {
        &[c, h, w] => (c, h, w),
        s => {
            return Err(crate::error::Error::InvalidShape {
                op: "layer_problem",
                shape: s.to_vec(),
                reason: "expected [C, H, W]".into(),
            })
        }
    };
    spec.validate(c)?;
    let away_from = |v: f64, kinks: &[f64]| {
        kinks.iter().fold(v, |v, &k| if (v - k).abs() < 0.05 { k + 0.05f64.copysign(v - k) } else { v })
    };
    let input = Tensor::from_fn(input_shape, |_| {
        let v = rng.uniform(-1.0, 1.5);
        match spec {
            LayerSpec::Relu => away_from(v, &[0.0]),
            LayerSpec::Brelu => away_from(v, &[0.0, 1.0]),
            _ => v,
        }
    });
    let mut params = TensorMap::new();
    let out_shape = match spec {
        LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, .. } => {
            let fan_in = in_channels * kernel * kernel;
            params.insert("layer.weight", he_uniform(&[out_channels, in_channels, kernel, kernel], fan_in, rng));
            params.insert("layer.bias", Tensor::uniform(&[out_channels], -0.5, 0.5, rng));
            let p = spec.padding();
            vec![out_channels, (h + 2 * p - kernel) / stride + 1, (w + 2 * p - kernel) / stride + 1]
        }
        LayerSpec::Maxout { group } => vec![c / group, h, w],
        LayerSpec::BilinearUp => vec![c, 2 * h, 2 * w],
        LayerSpec::Batchnorm { channels } => {
            params.insert("layer.gamma", Tensor::uniform(&[channels], 0.5, 1.5, rng));
            params.insert("layer.beta", Tensor::uniform(&[channels], -0.5, 0.5, rng));
            vec![c, h, w]
        }
        _ => vec![c, h, w],
    };
    let projection = Tensor::uniform(&out_shape, -1.0, 1.0, rng);
    Ok((LayerFragment { spec, projection }, params, input))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(spec: LayerSpec, shape: &[usize], seed: u64) -> f64 {
        let mut rng = Rng::new(seed);
        let (frag, params, input) = layer_problem(spec, shape, &mut rng).unwrap();
        grad_check(&frag, &params, &input, &GradCheckOptions::default()).unwrap().max_rel_error
    }

    #[test]
    fn conv_random_2x5x5() {
        let spec = LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, same_padding: true };
        assert!(check(spec, &[2, 5, 5], 11) < 1e-6);
    }

    #[test]
    fn strided_conv() {
        let spec = LayerSpec::Conv2d { in_channels: 3, out_channels: 4, kernel: 3, stride: 2, same_padding: true };
        assert!(check(spec, &[3, 8, 8], 12) < 1e-6);
    }

    #[test]
    fn linear_layer_is_tight() {
        let spec = LayerSpec::Conv2d { in_channels: 6, out_channels: 4, kernel: 1, stride: 1, same_padding: false };
        assert!(check(spec, &[6, 1, 1], 13) < 1e-8);
    }

    #[test]
    fn activations() {
        assert!(check(LayerSpec::Relu, &[2, 4, 4], 14) < 1e-6);
        assert!(check(LayerSpec::Sigmoid, &[2, 4, 4], 15) < 1e-6);
        assert!(check(LayerSpec::Brelu, &[2, 4, 4], 16) < 1e-6);
    }

    #[test]
    fn pooling_layers() {
        assert!(check(LayerSpec::Maxout { group: 4 }, &[8, 3, 3], 17) < 1e-6);
        assert!(check(LayerSpec::MaxpoolSame { kernel: 3 }, &[2, 5, 5], 18) < 1e-6);
        assert!(check(LayerSpec::BilinearUp, &[1, 3, 3], 19) < 1e-6);
        assert!(check(LayerSpec::Concat, &[3, 4, 4], 20) < 1e-6);
    }

    #[test]
    fn batchnorm_train_mode() {
        assert!(check(LayerSpec::Batchnorm { channels: 3 }, &[3, 4, 4], 21) < 1e-5);
    }

    /// `Σ relu(x)`, with analytic gradient and kink pattern.
    struct ReluSum;

    impl Differentiable for ReluSum {
        fn loss(&self, _: &TensorMap, x: &Tensor) -> Result<f64> {
            Ok(x.data().iter().map(|v| v.max(0.0)).sum())
        }

        fn gradients(&self, _: &TensorMap, x: &Tensor) -> Result<(TensorMap, Tensor)> {
            Ok((TensorMap::new(), x.map(|v| if v > 0.0 { 1.0 } else { 0.0 })))
        }

        fn kink_pattern(&self, _: &TensorMap, x: &Tensor) -> Result<Option<Vec<u32>>> {
            Ok(Some(x.data().iter().map(|&v| u32::from(v > 0.0)).collect()))
        }
    }

    #[test]
    fn straddled_kinks_are_counted_not_compared() {
        let x = Tensor::new(vec![1, 1, 3], vec![0.5, 4e-6, -0.2]).unwrap();
        let r = grad_check(&ReluSum, &TensorMap::new(), &x, &GradCheckOptions::default()).unwrap();
        assert_eq!((r.probes, r.kink_crossings), (2, 1));
        assert!(r.max_rel_error < 1e-9);
        let stop = GradCheckOptions { stop_at_kink: true, ..Default::default() };
        assert_eq!(grad_check(&ReluSum, &TensorMap::new(), &x, &stop).unwrap().probes, 1);
    }

    #[test]
    fn sampled_probes_are_evenly_spaced() {
        assert_eq!(probe_indices(10, Some(5)), vec![0, 2, 4, 6, 8]);
        assert_eq!(probe_indices(3, Some(5)), vec![0, 1, 2]);
    }
}

//! Finite-difference gradient suite over every layer and model.

use crate::boxes::{BBox, GroundTruth};
use crate::dehaze::{gt_mask, Dehazer, ModelKind};
use crate::detect::{DetectorWidth, GridDetector, GridDetectorConfig};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::gradcheck::layer_problem;
use crate::tensor::{grad_check, Differentiable, GradCheckOptions, GradCheckReport, LayerSpec, Tensor, TensorMap};

/// Tolerance for layers without kinks.
pub const SMOOTH_TOLERANCE: f64 = 1e-6;
/// Tolerance for everything else.
pub const TOLERANCE: f64 = 1e-5;

/// `mse(J, target)` of a dehazer in training mode.
pub struct DehazerFragment<'a> {
    pub model: &'a dyn Dehazer,
    pub mask: Option<Tensor>,
    pub target: Tensor,
}

impl Differentiable for DehazerFragment<'_> {
    fn loss(&self, params: &TensorMap, input: &Tensor) -> Result<f64> {
        Ok(self.model.train_step(params, input, self.mask.as_ref(), &self.target)?.loss)
    }

    fn gradients(&self, params: &TensorMap, input: &Tensor) -> Result<(TensorMap, Tensor)> {
        let s = self.model.train_step(params, input, self.mask.as_ref(), &self.target)?;
        Ok((s.grads, s.input_grad))
    }

    fn kink_pattern(&self, params: &TensorMap, input: &Tensor) -> Result<Option<Vec<u32>>> {
        Ok(Some(self.model.kinks(params, input, self.mask.as_ref())?.pattern))
    }
}

#[derive(Clone, Debug)]
pub struct GradCase {
    pub name: String,
    pub max_rel_error: f64,
    pub worst: String,
    pub probes: usize,
    pub tolerance: f64,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn layer_cases(rng: &mut Rng) -> Result<Vec<GradCase>> {
    let conv = |c_in, c_out, kernel, stride| LayerSpec::Conv2d {
        in_channels: c_in,
        out_channels: c_out,
        kernel,
        stride,
        same_padding: true,
    };
    let specs: Vec<(&str, LayerSpec, Vec<usize>, f64)> = vec![
        ("conv3x3", conv(2, 3, 3, 1), vec![2, 8, 8], SMOOTH_TOLERANCE),
        ("conv5x5", conv(3, 2, 5, 1), vec![3, 8, 8], SMOOTH_TOLERANCE),
        ("conv7x7", conv(2, 2, 7, 1), vec![2, 8, 8], SMOOTH_TOLERANCE),
        ("conv3x3_stride2", conv(3, 4, 3, 2), vec![3, 8, 8], SMOOTH_TOLERANCE),
        ("conv1x1", conv(4, 3, 1, 1), vec![4, 8, 8], SMOOTH_TOLERANCE),
        ("relu", LayerSpec::Relu, vec![3, 8, 8], TOLERANCE),
        ("sigmoid", LayerSpec::Sigmoid, vec![3, 8, 8], SMOOTH_TOLERANCE),
        ("brelu", LayerSpec::Brelu, vec![3, 8, 8], TOLERANCE),
        ("maxout", LayerSpec::Maxout { group: 4 }, vec![8, 8, 8], TOLERANCE),
        ("maxpool_same", LayerSpec::MaxpoolSame { kernel: 7 }, vec![2, 8, 8], TOLERANCE),
        ("bilinear_up", LayerSpec::BilinearUp, vec![2, 8, 8], SMOOTH_TOLERANCE),
        ("concat", LayerSpec::Concat, vec![3, 8, 8], SMOOTH_TOLERANCE),
        ("batchnorm", LayerSpec::Batchnorm { channels: 3 }, vec![3, 8, 8], TOLERANCE),
    ];
    specs
        .into_iter()
        .map(|(name, spec, shape, tolerance)| {
            let (frag, params, input) = layer_problem(spec, &shape, rng)?;
            let r = grad_check(&frag, &params, &input, &GradCheckOptions::default())?;
            Ok(GradCase {
                name: name.into(),
                max_rel_error: r.max_rel_error,
                worst: r.worst,
                probes: r.probes,
                tolerance,
            })
        })
        .collect()
}

/// Probe points closer than this to a kink are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: usize = 500;
/// Problems whose check has a stencil crossing a kink are redrawn this many
/// times at most. The margin screen measures distance, not how fast a
/// probe moves towards the kink, so a few still cross.
const MAX_CHECKS: usize = 20;

fn case(name: String, r: GradCheckReport) -> GradCase {
    GradCase { name, max_rel_error: r.max_rel_error, worst: r.worst, probes: r.probes, tolerance: TOLERANCE }
}

fn jitter_offsets(params: &mut TensorMap, rng: &mut Rng) {
    // Zero biases put exact zeros at ReLU kinks wherever a conv sees only
    // zeros.
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") || name.ends_with(".beta") {
            t.data_mut().iter_mut().for_each(|v| *v += rng.uniform(-0.1, 0.1));
        }
    }
}

/// A random `3×8×8` dehazing problem whose forward pass stays at least
/// [`KINK_MARGIN`] away from every kink.
pub fn dehazer_problem(kind: ModelKind, rng: &mut Rng) -> Result<(TensorMap, Tensor, Option<Tensor>, Tensor)> {
    let model = kind.model();
    let mask = kind.uses_mask().then(|| {
        let boxes = [GroundTruth { class_id: 0, bbox: BBox::new(1.0, 2.0, 4.0, 3.0) }];
        gt_mask(&boxes, 8, 8).map(|v| v * 0.7)
    });
    for _ in 0..MAX_DRAWS {
        let mut params = model.init(rng);
        jitter_offsets(&mut params, rng);
        let input = Tensor::uniform(&[3, 8, 8], 0.05, 0.95, rng);
        if model.kinks(&params, &input, mask.as_ref())?.margin < KINK_MARGIN {
            continue;
        }
        // The target sits a small offset from the output. Smaller offsets
        // shrink rounding noise in the loss; larger ones lift the gradients
        // above the O(eps²) truncation error of the deeper networks.
        let dl = match kind {
            ModelKind::AodNet | ModelKind::AodNetX => 3e-3,
            ModelKind::Unet | ModelKind::DehazeNet => 0.1,
        };
        let out = model.train_step(&params, &input, mask.as_ref(), &Tensor::zeros(&[3, 8, 8]))?.output;
        let target = out.zip_map(&Tensor::uniform(&[3, 8, 8], -dl, dl, rng), |o, d| o + d)?;
        return Ok((params, input, mask, target));
    }
    Err(Error::InvalidArgument(format!("no kink-free probe point found for {kind} in {MAX_DRAWS} draws")))
}

/// Options for whole-model checks. The five-point stencil at a wider step
/// keeps truncation and rounding error both well under the tolerance on
/// entries whose gradient is small. Large models probe a spread subset of
/// each tensor.
pub fn model_options(max_probes_per_tensor: Option<usize>) -> GradCheckOptions {
    GradCheckOptions { eps: 1e-4, fourth_order: true, max_probes_per_tensor, check_input: true, stop_at_kink: true }
}

/// Detector losses are O(1) while deep backbone gradients reach 1e-7, so
/// rounding noise dominates at `1e-4`. Between kinks the network is
/// piecewise linear and only the loss head curves, which keeps truncation
/// small at the wider step.
const DETECTOR_EPS: f64 = 1e-3;

pub fn dehazer_case(kind: ModelKind, rng: &mut Rng) -> Result<GradCase> {
    let model = kind.model();
    let probes = (kind == ModelKind::Unet).then_some(200);
    for _ in 0..MAX_CHECKS {
        let (params, input, mask, target) = dehazer_problem(kind, rng)?;
        let frag = DehazerFragment { model: model.as_ref(), mask, target };
        let r = grad_check(&frag, &params, &input, &model_options(probes))?;
        if r.kink_crossings == 0 {
            return Ok(case(kind.as_str().into(), r));
        }
        log::debug!("{kind}: {} probes cross a kink, redrawing", r.kink_crossings);
    }
    Err(Error::InvalidArgument(format!("every {kind} problem in {MAX_CHECKS} draws has a probe crossing a kink")))
}

/// Detector forward pass followed by the detection loss.
pub struct DetectorFragment<'a> {
    pub detector: &'a GridDetector,
    pub ground_truth: Vec<GroundTruth>,
}

impl Differentiable for DetectorFragment<'_> {
    fn loss(&self, params: &TensorMap, input: &Tensor) -> Result<f64> {
        Ok(self.detector.train_step(params, input, &self.ground_truth)?.0.total)
    }

    fn gradients(&self, params: &TensorMap, input: &Tensor) -> Result<(TensorMap, Tensor)> {
        let (_, grads, dinput) = self.detector.train_step(params, input, &self.ground_truth)?;
        Ok((grads, dinput))
    }

    fn kink_pattern(&self, params: &TensorMap, input: &Tensor) -> Result<Option<Vec<u32>>> {
        Ok(Some(self.detector.kinks(params, input)?.pattern))
    }
}

/// A detector on a random `3×8×8` image (one grid cell) with one box,
/// drawn away from ReLU kinks.
pub fn detector_case(width: DetectorWidth, rng: &mut Rng) -> Result<GradCase> {
    let detector = GridDetector::new(GridDetectorConfig::for_width(width))?;
    let frag = DetectorFragment {
        detector: &detector,
        ground_truth: vec![GroundTruth { class_id: 1, bbox: BBox::new(1.0, 2.0, 5.0, 3.0) }],
    };
    let probes = (width == DetectorWidth::Heavy).then_some(200);
    let mut checks = 0;
    for _ in 0..MAX_DRAWS {
        let mut params = detector.init_params(rng);
        jitter_offsets(&mut params, rng);
        let input = Tensor::uniform(&[3, 8, 8], 0.05, 0.95, rng);
        if detector.kinks(&params, &input)?.margin < KINK_MARGIN {
            continue;
        }
        let opts = GradCheckOptions { eps: DETECTOR_EPS, ..model_options(probes) };
        let r = grad_check(&frag, &params, &input, &opts)?;
        if r.kink_crossings == 0 {
            return Ok(case(format!("detector_{}", width.as_str()), r));
        }
        checks += 1;
        if checks == MAX_CHECKS {
            break;
        }
    }
    Err(Error::InvalidArgument(format!("no kink-free probe point found for the {} detector", width.as_str())))
}

/// Every layer, then every model, from one seed.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCase>> {
    let mut rng = Rng::new(seed);
    let mut cases = layer_cases(&mut rng)?;
    for kind in ModelKind::ALL {
        cases.push(dehazer_case(kind, &mut rng)?);
    }
    for width in [DetectorWidth::Light, DetectorWidth::Heavy] {
        cases.push(detector_case(width, &mut rng)?);
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_pass() {
        for c in layer_cases(&mut Rng::new(3)).unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn models_pass() {
        let mut rng = Rng::new(99);
        for kind in [ModelKind::AodNet, ModelKind::AodNetX, ModelKind::DehazeNet] {
            let c = dehazer_case(kind, &mut rng).unwrap();
            assert!(c.passed(), "{c:?}");
        }
        for width in [DetectorWidth::Light, DetectorWidth::Heavy] {
            let c = detector_case(width, &mut rng).unwrap();
            assert!(c.passed(), "{c:?}");
        }
    }
}

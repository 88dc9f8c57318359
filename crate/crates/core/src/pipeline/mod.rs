//! Detector-only, dehaze-then-detect and light → AOD-NetX → heavy cascades,
//! evaluated on clear and foggy renderings of the same scenes.

mod report;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{benchmark_markdown, compare_report, read_benchmark_csv, write_benchmark_csv, ReportOptions};

use crate::boxes::Detection;
use crate::dataset::{Condition, ImagePair};
use crate::dehaze::{roi_mask, AodNet, AodNetX, Dehazer};
use crate::detect::{
    score_detections, DetectorWidth, GridDetector, GridDetectorConfig, EVAL_CONFIDENCE, PRELIMINARY_CONFIDENCE,
};
use crate::error::{Error, Result};
use crate::imageio::load_weights;
use crate::tensor::{Tensor, TensorMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    HeavyOnly,
    AodNetThenHeavy,
    LightAodNetXHeavy,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::HeavyOnly, Variant::AodNetThenHeavy, Variant::LightAodNetXHeavy];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::HeavyOnly => "heavy-only",
            Variant::AodNetThenHeavy => "aod-net-then-heavy",
            Variant::LightAodNetXHeavy => "light-aod-netx-heavy",
        }
    }

    /// Row label for a detector family, e.g. `light-A+AOD-NetX+heavy-A`.
    pub fn label(self, family: &str) -> String {
        match self {
            Variant::HeavyOnly => format!("heavy-{family}"),
            Variant::AodNetThenHeavy => format!("heavy-{family}+AOD-Net"),
            Variant::LightAodNetXHeavy => format!("light-{family}+AOD-NetX+heavy-{family}"),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

/// A detector with its weights.
#[derive(Clone, Debug)]
pub struct LoadedDetector {
    pub detector: GridDetector,
    pub params: TensorMap,
}

impl LoadedDetector {
    pub fn load(config: GridDetectorConfig, path: impl AsRef<Path>) -> Result<Self> {
        let detector = GridDetector::new(config)?;
        let params = load_weights(path.as_ref())?;
        detector.check_params(&params).map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Ok(Self { detector, params })
    }
}

/// One benchmark row's models. Construct with [`VariantSpec::new`], which
/// checks that the variant has every model it needs.
#[derive(Clone, Debug)]
pub struct VariantSpec {
    pub variant: Variant,
    pub family: String,
    pub heavy: LoadedDetector,
    pub light: Option<LoadedDetector>,
    /// AOD-Net weights for [`Variant::AodNetThenHeavy`], AOD-NetX weights
    /// for [`Variant::LightAodNetXHeavy`].
    pub dehazer: Option<TensorMap>,
    /// Threshold on light-detector scores before they enter the RoI mask.
    pub preliminary_confidence: f64,
    /// Threshold on final detections.
    pub final_confidence: f64,
}

impl VariantSpec {
    pub fn new(
        variant: Variant,
        family: impl Into<String>,
        heavy: LoadedDetector,
        light: Option<LoadedDetector>,
        dehazer: Option<TensorMap>,
    ) -> Result<Self> {
        let family = family.into();
        let missing = |what: &str| Err(Error::Config(format!("variant {} needs {what}", variant.label(&family))));
        if heavy.detector.config.width != DetectorWidth::Heavy {
            return missing("a heavy detector in the final stage");
        }
        match variant {
            Variant::HeavyOnly => {}
            Variant::AodNetThenHeavy if dehazer.is_none() => return missing("AOD-Net weights"),
            Variant::LightAodNetXHeavy if dehazer.is_none() => return missing("AOD-NetX weights"),
            Variant::LightAodNetXHeavy if light.is_none() => return missing("light detector weights"),
            _ => {}
        }
        Ok(Self {
            variant,
            family,
            heavy,
            light,
            dehazer,
            preliminary_confidence: PRELIMINARY_CONFIDENCE,
            final_confidence: EVAL_CONFIDENCE,
        })
    }

    pub fn label(&self) -> String {
        self.variant.label(&self.family)
    }
}

/// Final detections of one image, with the intermediate stages.
#[derive(Clone, Debug)]
pub struct VariantOutput {
    pub detections: Vec<Detection>,
    /// Light-detector boxes that shaped the RoI mask.
    pub preliminary: Vec<Detection>,
    /// The image the heavy detector saw, when it was dehazed.
    pub dehazed: Option<Tensor>,
}

pub fn run_variant(spec: &VariantSpec, image: &Tensor) -> Result<VariantOutput> {
    let heavy = &spec.heavy;
    let detect_final = |x: &Tensor| heavy.detector.detect(&heavy.params, x, spec.final_confidence);
    let dehazer = || spec.dehazer.as_ref().ok_or_else(|| Error::Config(format!("{} has no dehazer", spec.label())));
    match spec.variant {
        Variant::HeavyOnly => {
            Ok(VariantOutput { detections: detect_final(image)?, preliminary: Vec::new(), dehazed: None })
        }
        Variant::AodNetThenHeavy => {
            let j = AodNet::new().dehaze(dehazer()?, image, None)?;
            Ok(VariantOutput { detections: detect_final(&j)?, preliminary: Vec::new(), dehazed: Some(j) })
        }
        Variant::LightAodNetXHeavy => {
            let light =
                spec.light.as_ref().ok_or_else(|| Error::Config(format!("{} has no light detector", spec.label())))?;
            let preliminary = light.detector.detect(&light.params, image, spec.preliminary_confidence)?;
            let (_, h, w) = image.dims3()?;
            let mask = roi_mask(&preliminary, h, w);
            let j = AodNetX::new().dehaze(dehazer()?, image, Some(&mask))?;
            Ok(VariantOutput { detections: detect_final(&j)?, preliminary, dehazed: Some(j) })
        }
    }
}

/// `100·(foggy − clear)/clear`, or `None` when the clear mAP is 0.
pub fn performance_change_percent(map_clear: f64, map_foggy: f64) -> Option<f64> {
    (map_clear > 0.0).then(|| 100.0 * (map_foggy - map_clear) / map_clear)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub variant: String,
    pub map_clear: f64,
    pub map_foggy: f64,
    pub change_percent: Option<f64>,
}

impl BenchmarkRow {
    pub fn new(variant: impl Into<String>, map_clear: f64, map_foggy: f64) -> Self {
        Self {
            variant: variant.into(),
            map_clear,
            map_foggy,
            change_percent: performance_change_percent(map_clear, map_foggy),
        }
    }
}

/// Per-image outputs of one variant on one condition, in split order.
#[derive(Clone, Debug)]
pub struct ConditionRun {
    pub condition: Condition,
    pub map: f64,
    pub outputs: Vec<VariantOutput>,
}

#[derive(Clone, Debug)]
pub struct VariantRun {
    pub label: String,
    pub runs: Vec<ConditionRun>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkRun {
    pub rows: Vec<BenchmarkRow>,
    pub variants: Vec<VariantRun>,
}

/// Runs every variant over every image of `pairs` in both conditions.
/// Images run in parallel; results keep split order.
pub fn run_benchmark(specs: &[VariantSpec], pairs: &[ImagePair], num_classes: usize) -> Result<BenchmarkRun> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("benchmark split is empty".into()));
    }
    if specs.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one variant".into()));
    }
    let mut rows = Vec::with_capacity(specs.len());
    let mut variants = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut runs = Vec::with_capacity(2);
        for condition in Condition::BOTH {
            let outputs: Vec<VariantOutput> =
                pairs.par_iter().map(|p| run_variant(spec, p.image(condition))).collect::<Result<_>>()?;
            let dets: Vec<Vec<Detection>> = outputs.iter().map(|o| o.detections.clone()).collect();
            let map = score_detections(pairs, &dets, num_classes)?.map;
            runs.push(ConditionRun { condition, map, outputs });
        }
        let row = BenchmarkRow::new(spec.label(), runs[0].map, runs[1].map);
        log::info!("{}: clear {:.4} foggy {:.4}", row.variant, row.map_clear, row.map_foggy);
        rows.push(row);
        variants.push(VariantRun { label: spec.label(), runs });
    }
    Ok(BenchmarkRun { rows, variants })
}

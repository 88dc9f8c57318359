//! JSON run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dehaze::{DehazeTrainConfig, ModelKind};
use crate::detect::{DetectTrainConfig, DetectorWidth, GridDetectorConfig, PRELIMINARY_CONFIDENCE};
use crate::error::{Error, Result};
use crate::imageio::Split;
use crate::pipeline::Variant;
use crate::scatter::{DatasetCounts, FogParams, SceneSpec, CLASS_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DehazeSection {
    pub models: Vec<ModelKind>,
    pub lr: f64,
    /// Per-model learning rates that replace `lr`.
    pub lr_overrides: BTreeMap<ModelKind, f64>,
    pub epochs: usize,
    pub use_gt_rois: bool,
    /// Split used by `eval-dehaze`.
    pub eval_split: Split,
}

impl Default for DehazeSection {
    fn default() -> Self {
        let t = DehazeTrainConfig::default();
        Self {
            models: ModelKind::ALL.to_vec(),
            lr: t.lr,
            // BReLU units saturate for good at the shared rate.
            lr_overrides: BTreeMap::from([(ModelKind::DehazeNet, 0.001)]),
            epochs: t.epochs,
            use_gt_rois: t.use_gt_rois,
            eval_split: Split::Val,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub name: String,
    /// Added to the run seed when training this family's detectors.
    pub seed_offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub families: Vec<FamilyConfig>,
    pub lr: f64,
    pub epochs: usize,
    pub anchor: [f64; 2],
}

impl Default for DetectSection {
    fn default() -> Self {
        let t = DetectTrainConfig::default();
        Self {
            families: vec![
                FamilyConfig { name: "A".into(), seed_offset: 100 },
                FamilyConfig { name: "B".into(), seed_offset: 200 },
            ],
            lr: t.lr,
            epochs: t.epochs,
            anchor: [16.0, 16.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub variants: Vec<Variant>,
    pub split: Split,
    pub preliminary_confidence: f64,
    /// Before/after image pairs written for this many leading images.
    pub dump_images: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            split: Split::Test,
            preliminary_confidence: PRELIMINARY_CONFIDENCE,
            dump_images: 4,
        }
    }
}

/// Every experiment setting. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Scene generator settings; its seed is replaced by `seed`.
    pub scene: SceneSpec,
    pub counts: DatasetCounts,
    pub fog: FogParams,
    pub dehaze: DehazeSection,
    pub detect: DetectSection,
    pub benchmark: BenchmarkSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            data_dir: "data".into(),
            out_dir: "out".into(),
            scene: SceneSpec::default(),
            counts: DatasetCounts::default(),
            fog: FogParams::default(),
            dehaze: DehazeSection::default(),
            detect: DetectSection::default(),
            benchmark: BenchmarkSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` and rebases relative paths onto its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.data_dir = base.join(&cfg.data_dir);
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene_spec().validate()?;
        self.fog.validate()?;
        if self.detect.families.is_empty() {
            return Err(Error::Config("detect.families must not be empty".into()));
        }
        let mut names: Vec<&str> = self.detect.families.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("detect.families names must be unique".into()));
        }
        if let Some(f) = self
            .detect
            .families
            .iter()
            .find(|f| f.name.is_empty() || !f.name.chars().all(|c| c.is_ascii_alphanumeric()))
        {
            return Err(Error::Config(format!("family name {:?} must be non-empty ASCII alphanumeric", f.name)));
        }
        if !(0.0..=1.0).contains(&self.benchmark.preliminary_confidence) {
            return Err(Error::Config("benchmark.preliminary_confidence must lie in [0, 1]".into()));
        }
        if !(self.detect.anchor[0] > 0.0 && self.detect.anchor[1] > 0.0) {
            return Err(Error::Config("detect.anchor must be positive".into()));
        }
        if !self.scene.image_size.is_multiple_of(crate::detect::STRIDE) {
            return Err(Error::Config(format!("scene.image_size must be a multiple of {}", crate::detect::STRIDE)));
        }
        Ok(())
    }

    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec { seed: self.seed, ..self.scene.clone() }
    }

    pub fn dehaze_train(&self, kind: ModelKind) -> DehazeTrainConfig {
        DehazeTrainConfig {
            lr: self.dehaze.lr_overrides.get(&kind).copied().unwrap_or(self.dehaze.lr),
            epochs: self.dehaze.epochs,
            seed: self.seed.wrapping_add(1),
            use_gt_rois: self.dehaze.use_gt_rois,
        }
    }

    pub fn detect_train(&self, family: &FamilyConfig, width: DetectorWidth) -> DetectTrainConfig {
        let width_offset = match width {
            DetectorWidth::Light => 0,
            DetectorWidth::Heavy => 1,
        };
        DetectTrainConfig {
            lr: self.detect.lr,
            epochs: self.detect.epochs,
            seed: self.seed.wrapping_add(family.seed_offset).wrapping_add(width_offset),
            ..Default::default()
        }
    }

    pub fn detector_config(&self, width: DetectorWidth) -> GridDetectorConfig {
        GridDetectorConfig { width, num_classes: CLASS_NAMES.len(), anchor: self.detect.anchor }
    }

    pub fn weights_dir(&self) -> PathBuf {
        self.out_dir.join("weights")
    }

    pub fn dehazer_weights(&self, kind: ModelKind) -> PathBuf {
        self.weights_dir().join(format!("{kind}.ppwa"))
    }

    pub fn detector_weights(&self, family: &str, width: DetectorWidth) -> PathBuf {
        self.weights_dir().join(format!("detector-{family}-{}.ppwa", width.as_str()))
    }
}

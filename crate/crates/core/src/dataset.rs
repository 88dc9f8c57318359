//! Loaded image pairs and shared training bookkeeping.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::GroundTruth;
use crate::error::{Error, Result};
use crate::imageio::{read_image, DatasetManifest};
use crate::tensor::{Tensor, TensorMap};

/// Which rendering of a scene to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Clear,
    Foggy,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::Clear, Condition::Foggy];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Clear => "clear",
            Condition::Foggy => "foggy",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(Condition::Clear),
            "foggy" => Ok(Condition::Foggy),
            _ => Err(Error::InvalidArgument(format!("unknown condition {s:?} (expected clear or foggy)"))),
        }
    }
}

/// A foggy/clear pair with its ground-truth boxes.
#[derive(Clone, Debug)]
pub struct ImagePair {
    pub id: String,
    pub foggy: Tensor,
    pub clear: Tensor,
    pub boxes: Vec<GroundTruth>,
}

impl ImagePair {
    pub fn image(&self, condition: Condition) -> &Tensor {
        match condition {
            Condition::Clear => &self.clear,
            Condition::Foggy => &self.foggy,
        }
    }
}

/// Reads every record of `manifest`, in record order.
pub fn load_pairs(manifest: &DatasetManifest) -> Result<Vec<ImagePair>> {
    manifest
        .records
        .par_iter()
        .map(|r| {
            Ok(ImagePair {
                id: r.id.clone(),
                foggy: read_image(manifest.resolve(&r.foggy_path))?,
                clear: read_image(manifest.resolve(&r.clear_path))?,
                boxes: r.boxes.clone(),
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: TensorMap,
    /// Mean training loss of each epoch.
    pub losses: Vec<f64>,
}

/// Writes `epoch,loss` rows with 1-based epochs.
pub fn write_loss_log(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["epoch", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{l:.10}")])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

//! Dataset manifests: one JSON document per split.
//!
//! File paths inside a manifest are relative to the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boxes::GroundTruth;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?} (train|val|test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub clear_path: String,
    pub foggy_path: String,
    pub depth_path: String,
    pub boxes: Vec<GroundTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub split: Split,
    pub class_names: Vec<String>,
    pub records: Vec<ManifestRecord>,
    /// Directory the record paths are relative to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Parses and checks id uniqueness; does not touch the filesystem.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.check_ids()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest always serializes");
        s.push('\n');
        s
    }

    fn check_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate record id {:?}", r.id)));
            }
            if let Some(b) = r.boxes.iter().find(|b| !b.bbox.is_valid()) {
                return Err(Error::Manifest(format!("record {:?} has invalid box {:?}", r.id, b.bbox)));
            }
        }
        Ok(())
    }

    /// Loads a manifest and verifies every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_json(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for r in &m.records {
            for p in [&r.clear_path, &r.foggy_path, &r.depth_path] {
                let full = m.resolve(p);
                if !full.is_file() {
                    return Err(Error::Manifest(format!("record {:?}: missing file {}", r.id, full.display())));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

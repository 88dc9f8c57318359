use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_fog, gen_scene, transmission_from_depth, FogParams, SceneSpec, CLASS_NAMES};
use crate::error::Result;
use crate::imageio::{
    ensure_dir, float_to_u8, u8_to_float, write_ppm, write_tensor, DatasetManifest, ManifestRecord, Split,
};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl DatasetCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

impl Default for DatasetCounts {
    fn default() -> Self {
        Self { train: 200, val: 50, test: 50 }
    }
}

/// Writes the clear/foggy/depth corpus and one manifest per split:
///
/// ```text
/// <out>/<split>/{clear,foggy}/<id>.ppm
/// <out>/<split>/depth/<id>.ptns
/// <out>/<split>/manifest.json
/// ```
///
/// Record `g` (counted across train, val, test in that order) draws from
/// `Rng::child(spec.seed, g)`; each image gets its own beta drawn uniformly
/// from `[0.5 beta, 1.5 beta]`.
pub fn gen_dataset(
    spec: &SceneSpec,
    counts: DatasetCounts,
    fog: &FogParams,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<DatasetManifest>> {
    spec.validate()?;
    fog.validate()?;
    let out_dir = out_dir.as_ref();
    let mut manifests = Vec::new();
    let mut first_index = 0u64;
    for split in Split::ALL {
        let n = counts.get(split);
        let split_dir = out_dir.join(split.as_str());
        for sub in ["clear", "foggy", "depth"] {
            ensure_dir(split_dir.join(sub))?;
        }
        let records = (0..n)
            .into_par_iter()
            .map(|k| {
                let id = format!("{split}_{k:05}");
                let mut rng = Rng::child(spec.seed, first_index + k as u64);
                let scene = gen_scene(spec, &mut rng)?;
                let beta = rng.uniform(0.5 * fog.beta, 1.5 * fog.beta);

                let clear_u8 = float_to_u8(&scene.image)?;
                let clear = u8_to_float(&clear_u8);
                let t = transmission_from_depth(&scene.depth, beta)?;
                let foggy = apply_fog(&clear, &t, fog.airlight)?;

                let rec = ManifestRecord {
                    clear_path: format!("clear/{id}.ppm"),
                    foggy_path: format!("foggy/{id}.ppm"),
                    depth_path: format!("depth/{id}.ptns"),
                    boxes: scene.boxes,
                    id,
                };
                write_ppm(split_dir.join(&rec.clear_path), &clear_u8)?;
                write_ppm(split_dir.join(&rec.foggy_path), &float_to_u8(&foggy)?)?;
                write_tensor(split_dir.join(&rec.depth_path), &scene.depth)?;
                Ok(rec)
            })
            .collect::<Result<Vec<_>>>()?;
        first_index += n as u64;

        let manifest = DatasetManifest {
            split,
            class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            records,
            base_dir: split_dir.clone(),
        };
        manifest.save(split_dir.join("manifest.json"))?;
        manifests.push(manifest);
    }
    Ok(manifests)
}

/// Path of a split's manifest inside a dataset directory.
pub fn manifest_path(data_dir: impl AsRef<Path>, split: Split) -> std::path::PathBuf {
    data_dir.as_ref().join(split.as_str()).join("manifest.json")
}

//! On-disk formats: P6 PPM images, `PTNS` tensors, `PPWA` weight archives,
//! JSON Lines detections and JSON dataset manifests.

mod detections;
mod manifest;
mod ppm;
mod ptns;
mod weights;

pub use detections::{format_detections, parse_detections, read_detections, write_detections, DetectionRecord};
pub use manifest::{DatasetManifest, ManifestRecord, Split};
pub use ppm::{
    decode_ppm, encode_ppm, float_to_u8, read_image, read_ppm, u8_to_float, write_image, write_ppm, ImageU8,
};
pub use ptns::{decode_tensor, encode_tensor, read_tensor, write_tensor, TENSOR_MAGIC, TENSOR_VERSION};
pub use weights::{
    decode_weights, encode_weights, load_weights, save_weights, WeightArchive, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};

/// Creates `dir` and its parents.
pub fn ensure_dir(dir: impl AsRef<std::path::Path>) -> crate::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))
}

//! Synthetic fog: transmission from depth, the scattering model, and the
//! procedural shapes corpus the experiments run on.

mod dataset;
mod scene;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use dataset::{gen_dataset, manifest_path, DatasetCounts};
pub use scene::{gen_scene, Scene, SceneSpec, ShapeClass, CLASS_NAMES};

/// Homogeneous haze: scattering coefficient (per meter) and airlight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FogParams {
    pub beta: f64,
    pub airlight: [f64; 3],
}

impl Default for FogParams {
    fn default() -> Self {
        Self { beta: 0.08, airlight: [0.80, 0.82, 0.85] }
    }
}

impl FogParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta {} must be finite and >= 0", self.beta)));
        }
        if self.airlight.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument(format!("airlight {:?} must lie in [0, 1]", self.airlight)));
        }
        Ok(())
    }
}

/// `t(x) = exp(-beta * d(x))` elementwise over a `[1, H, W]` depth map.
pub fn transmission_from_depth(depth: &Tensor, beta: f64) -> Result<Tensor> {
    let (c, _, _) = depth.dims3()?;
    if c != 1 {
        return Err(Error::ShapeMismatch { op: "transmission_from_depth", dim: "channels", expected: 1, actual: c });
    }
    if let Some(d) = depth.data().iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidArgument(format!("depth {d} must be positive and finite")));
    }
    Ok(depth.map(|d| (-beta * d).exp()))
}

/// Hazy image `I = J t + A (1 - t)` per channel.
pub fn apply_fog(clear: &Tensor, transmission: &Tensor, airlight: [f64; 3]) -> Result<Tensor> {
    let (c, h, w) = clear.dims3()?;
    if c != 3 {
        return Err(Error::ShapeMismatch { op: "apply_fog", dim: "channels", expected: 3, actual: c });
    }
    if transmission.shape() != [1, h, w] {
        return Err(Error::InvalidShape {
            op: "apply_fog",
            shape: transmission.shape().to_vec(),
            reason: format!("transmission must be [1, {h}, {w}]"),
        });
    }
    let t = transmission.data();
    let plane = h * w;
    Ok(Tensor::from_fn(clear.shape(), |i| {
        let (ch, p) = (i / plane, i % plane);
        clear.data()[i] * t[p] + airlight[ch] * (1.0 - t[p])
    }))
}

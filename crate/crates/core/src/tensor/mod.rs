//! Dense `f64` tensors and the layer primitives every network is built from.
//!
//! Image-like tensors are single-sample `[C, H, W]` in row-major order. Layers
//! expose explicit forward and backward functions; models wire them by hand
//! and keep their parameters in a [`TensorMap`] keyed by name.

mod activation;
mod batchnorm;
mod concat;
mod conv;
pub mod gradcheck;
pub(crate) mod layer;
mod loss;
pub mod margin;
mod optim;
mod pool;

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub use activation::{activation, activation_backward, sigmoid, Activation};
pub use batchnorm::{batchnorm, batchnorm_backward, BatchNormCache, BatchNormMode, BatchNormStats};
pub use concat::{concat, split_channels};
pub use conv::{conv2d, conv2d_backward, ConvGrads};
pub use gradcheck::{grad_check, Differentiable, GradCheckOptions, GradCheckReport};
pub use layer::{he_uniform, LayerSpec};
pub use loss::{bce_loss, bce_with_logits, mse_loss, softmax_cross_entropy, Loss};
pub use optim::{Adam, Optimizer, Sgd};
pub use pool::{
    bilinear_up2, bilinear_up2_backward, maxout, maxout_backward, maxpool2, maxpool2_backward, maxpool_same,
    maxpool_same_backward,
};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?} {:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?} [{} values]", self.shape, self.data.len())
        }
    }
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    ///
    /// An empty shape is a scalar holding one value.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidShape { op: "Tensor::new", shape, reason: "dimensions must be positive".into() });
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                dim: "element count",
                expected: n,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero dimension in {shape:?}");
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        t
    }

    /// Uniform random values in `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut crate::rng::Rng) -> Self {
        Self::from_fn(shape, |_| rng.uniform(lo, hi))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            _ => {
                Err(Error::InvalidShape { op: "dims3", shape: self.shape.clone(), reason: "expected [C, H, W]".into() })
            }
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return Err(Error::InvalidShape {
                op: "reshape",
                shape: shape.to_vec(),
                reason: format!("cannot hold {} elements", self.data.len()),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x] = v;
    }

    /// Channel `c` of a `[C, H, W]` tensor as a flat slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub(crate) fn expect_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape.len() != other.shape.len() {
            return Err(Error::ShapeMismatch {
                op,
                dim: "rank",
                expected: self.shape.len(),
                actual: other.shape.len(),
            });
        }
        const DIMS: [&str; 4] = ["dim 0", "dim 1", "dim 2", "dim 3"];
        for (i, (&a, &b)) in self.shape.iter().zip(&other.shape).enumerate() {
            if a != b {
                return Err(Error::ShapeMismatch {
                    op,
                    dim: DIMS.get(i).copied().unwrap_or("trailing dim"),
                    expected: a,
                    actual: b,
                });
            }
        }
        Ok(())
    }
}

/// Named tensor collection: model parameters, their gradients, and the
/// contents of a weight archive. Iteration order is lexicographic by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorMap(BTreeMap<String, Tensor>);

impl TensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.0.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.0.get_mut(name)
    }

    /// Like [`get`](Self::get) but reports the missing name.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.0.get(name).ok_or_else(|| Error::MissingTensor { archive: "parameters".into(), name: name.into() })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.0.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.0.values().map(Tensor::len).sum()
    }

    /// Adds `t` into the entry `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, t: Tensor) -> Result<()> {
        match self.0.get_mut(name) {
            Some(acc) => acc.add_assign(&t),
            None => {
                self.0.insert(name.to_string(), t);
                Ok(())
            }
        }
    }

    /// Adds every entry of `other` into `self`.
    pub fn accumulate_all(&mut self, other: TensorMap) -> Result<()> {
        for (k, v) in other.0 {
            self.accumulate(&k, v)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.0.values_mut().for_each(|t| t.scale(s));
    }

    /// Errors unless `self` has exactly the names and shapes of `expected`.
    pub fn check_layout(&self, expected: &TensorMap) -> Result<()> {
        for (name, t) in expected.iter() {
            let got = self.get(name).ok_or_else(|| Error::InvalidArgument(format!("missing tensor {name}")))?;
            if got.shape() != t.shape() {
                return Err(Error::InvalidArgument(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if let Some(extra) = self.names().find(|n| !expected.contains(n)) {
            return Err(Error::InvalidArgument(format!("unexpected tensor {extra}")));
        }
        Ok(())
    }
}

impl IntoIterator for TensorMap {
    type Item = (String, Tensor);
    type IntoIter = std::collections::btree_map::IntoIter<String, Tensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl FromIterator<(String, Tensor)> for TensorMap {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_element_count() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { expected: 6, actual: 5, .. }));
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn scalar_has_one_element() {
        let s = Tensor::scalar(2.5);
        assert!(s.shape().is_empty());
        assert_eq!(s.data(), &[2.5]);
    }

    #[test]
    fn shape_mismatch_names_dimension() {
        let a = Tensor::zeros(&[1, 2, 3]);
        let b = Tensor::zeros(&[1, 2, 4]);
        match a.zip_map(&b, |x, _| x).unwrap_err() {
            Error::ShapeMismatch { dim, expected, actual, .. } => {
                assert_eq!((dim, expected, actual), ("dim 2", 3, 4));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn accumulate_creates_then_adds() {
        let mut m = TensorMap::new();
        m.accumulate("w", Tensor::full(&[2], 1.0)).unwrap();
        m.accumulate("w", Tensor::full(&[2], 2.0)).unwrap();
        assert_eq!(m.get("w").unwrap().data(), &[3.0, 3.0]);
    }
}

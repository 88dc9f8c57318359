use super::Tensor;
use crate::error::{Error, Result};

/// Channel concatenation of `[C_i, H, W]` tensors in argument order.
pub fn concat(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs.first().ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
    let (_, h, w) = first.dims3()?;
    let mut channels = 0;
    for t in inputs {
        let (c, th, tw) = t.dims3()?;
        if th != h {
            return Err(Error::ShapeMismatch { op: "concat", dim: "height", expected: h, actual: th });
        }
        if tw != w {
            return Err(Error::ShapeMismatch { op: "concat", dim: "width", expected: w, actual: tw });
        }
        channels += c;
    }
    let mut data = Vec::with_capacity(channels * h * w);
    for t in inputs {
        data.extend_from_slice(t.data());
    }
    Tensor::new(vec![channels, h, w], data)
}

/// Inverse of [`concat`]: slices `t` into consecutive channel blocks.
pub fn split_channels(t: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let (c, h, w) = t.dims3()?;
    let total: usize = sizes.iter().sum();
    if total != c {
        return Err(Error::ShapeMismatch { op: "split_channels", dim: "channels", expected: total, actual: c });
    }
    let plane = h * w;
    let mut offset = 0;
    sizes
        .iter()
        .map(|&n| {
            let part = t.data()[offset * plane..(offset + n) * plane].to_vec();
            offset += n;
            Tensor::new(vec![n, h, w], part)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_input_is_identity() {
        let t = Tensor::from_fn(&[2, 3, 3], |i| i as f64);
        assert_eq!(concat(&[&t]).unwrap(), t);
    }

    #[test]
    fn channel_order_follows_arguments() {
        let a = Tensor::full(&[1, 2, 2], 1.0);
        let b = Tensor::full(&[2, 2, 2], 2.0);
        let c = concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[3, 2, 2]);
        assert_eq!(c.channel(0), &[1.0; 4]);
        assert_eq!(c.channel(2), &[2.0; 4]);
        let parts = split_channels(&c, &[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn spatial_mismatch_rejected() {
        let a = Tensor::zeros(&[1, 2, 2]);
        let b = Tensor::zeros(&[1, 3, 2]);
        match concat(&[&a, &b]).unwrap_err() {
            Error::ShapeMismatch { dim, .. } => assert_eq!(dim, "height"),
            e => panic!("{e}"),
        }
    }
}

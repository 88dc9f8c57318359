use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean of squared differences over every element (all channels).
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_same_shape(b, "mse")?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(max^2 / mse)` in dB; `+inf` for identical inputs.
pub fn psnr(a: &Tensor, b: &Tensor, max_val: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_val * max_val / m).log10())
}

/// Formats a dB value, printing `inf` for the identical-image case.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of an `h×w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = taps.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * wo + x]).sum();
        }
    }
    out
}

/// Mean SSIM over valid window positions, averaged over channels.
///
/// Uses an 11×11 Gaussian window (sigma 1.5), dynamic range `L = 1`,
/// `c1 = (0.01 L)^2`, `c2 = (0.03 L)^2`.
pub fn ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    x.expect_same_shape(y, "ssim")?;
    let (c, h, w) = x.dims3()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidShape {
            op: "ssim",
            shape: x.shape().to_vec(),
            reason: format!("image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        });
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let taps = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let mut total = 0.0;
    for ch in 0..c {
        let (px, py) = (x.channel(ch), y.channel(ch));
        let xx: Vec<f64> = px.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = py.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = px.iter().zip(py).map(|(a, b)| a * b).collect();
        let mx = filter_valid(px, h, w, &taps);
        let my = filter_valid(py, h, w, &taps);
        let exx = filter_valid(&xx, h, w, &taps);
        let eyy = filter_valid(&yy, h, w, &taps);
        let exy = filter_valid(&xy, h, w, &taps);
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (mux, muy) = (mx[i], my[i]);
            let vx = exx[i] - mux * mux;
            let vy = eyy[i] - muy * muy;
            let cov = exy[i] - mux * muy;
            let num = (2.0 * mux * muy + c1) * (2.0 * cov + c2);
            let den = (mux * mux + muy * muy + c1) * (vx + vy + c2);
            sum += num / den;
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn mse_cases() {
        let x = Tensor::full(&[3, 2, 2], 0.4);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(mse(&Tensor::zeros(&[3, 2, 2]), &Tensor::full(&[3, 2, 2], 1.0)).unwrap(), 1.0);
        let a = Tensor::new(vec![2], vec![0.0, 0.5]).unwrap();
        let b = Tensor::new(vec![2], vec![0.5, 0.5]).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 0.125);
        assert!(mse(&a, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn psnr_cases() {
        let x = Tensor::full(&[3, 2, 2], 0.4);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(format_db(f64::INFINITY), "inf");
        assert_eq!(psnr(&Tensor::zeros(&[4]), &Tensor::full(&[4], 1.0), 1.0).unwrap(), 0.0);
        let b = Tensor::full(&[4], 0.1);
        assert!((psnr(&Tensor::zeros(&[4]), &b, 1.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn window_sums_to_one() {
        let t = gaussian_window(11, 1.5);
        let s: f64 = t.iter().flat_map(|a| t.iter().map(move |b| a * b)).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ssim_self_is_one() {
        let mut rng = Rng::new(8);
        let x = Tensor::uniform(&[3, 16, 13], 0.0, 1.0, &mut rng);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_images() {
        let c1 = SSIM_K1 * SSIM_K1;
        let v = ssim(&Tensor::zeros(&[3, 11, 11]), &Tensor::full(&[3, 11, 11], 1.0)).unwrap();
        assert!((v - c1 / (1.0 + c1)).abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetric_bitwise() {
        let mut rng = Rng::new(9);
        let x = Tensor::uniform(&[3, 12, 12], 0.0, 1.0, &mut rng);
        let y = Tensor::uniform(&[3, 12, 12], 0.0, 1.0, &mut rng);
        assert_eq!(ssim(&x, &y).unwrap().to_bits(), ssim(&y, &x).unwrap().to_bits());
    }

    #[test]
    fn ssim_rejects_small_images() {
        let x = Tensor::zeros(&[3, 10, 20]);
        assert!(ssim(&x, &x).is_err());
    }
}

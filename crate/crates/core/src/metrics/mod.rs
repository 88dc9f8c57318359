//! Image-quality and detection-quality metrics.

mod ap;
mod image;

pub use crate::boxes::iou;
pub use ap::{
    average_precision, match_corpus, match_detections, mean_average_precision, precision_recall, EvalImage, MapResult,
    MatchResult, PrPoint,
};
pub use image::{format_db, gaussian_window, mse, psnr, ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};

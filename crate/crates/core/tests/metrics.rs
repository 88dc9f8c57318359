mod common;

use common::*;
use fogcascade::boxes::Detection;
use fogcascade::metrics::*;
use fogcascade::rng::Rng;
use fogcascade::tensor::Tensor;
use proptest::prelude::*;

#[test]
fn map_matches_oracle_on_single_images() {
    let mut rng = Rng::new(2024);
    for _ in 0..1500 {
        let im = random_instance(&mut rng);
        let got = mean_average_precision(std::slice::from_ref(&im), 3, 0.5).map;
        assert_eq!(got, oracle_map(std::slice::from_ref(&im), 3), "{im:?}");
    }
}

#[test]
fn map_matches_oracle_on_pooled_corpora() {
    let mut rng = Rng::new(77);
    for _ in 0..300 {
        let images: Vec<EvalImage> = (0..rng.range_inclusive(1, 4)).map(|_| random_instance(&mut rng)).collect();
        assert_eq!(mean_average_precision(&images, 3, 0.5).map, oracle_map(&images, 3));
    }
}

#[test]
fn matching_matches_oracle() {
    let mut rng = Rng::new(5);
    for _ in 0..500 {
        let images: Vec<EvalImage> = (0..2).map(|_| random_instance(&mut rng)).collect();
        for c in 0..3 {
            let m = match_corpus(&images, c, 0.5);
            let (rel, relevant) = oracle_rel(&images, c);
            assert_eq!((m.rel, m.num_relevant), (rel, relevant));
        }
    }
}

fn with_scores(im: &EvalImage, f: impl Fn(f64) -> f64) -> EvalImage {
    EvalImage {
        detections: im.detections.iter().map(|d| Detection { score: f(d.score), ..*d }).collect(),
        ground_truth: im.ground_truth.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ap_invariant_under_monotone_rescaling(seed in any::<u64>(), a in 0.01f64..10.0, b in -5.0f64..5.0) {
        let im = random_instance(&mut Rng::new(seed));
        let base = mean_average_precision(std::slice::from_ref(&im), 3, 0.5);
        let scaled = with_scores(&im, |s| (a * s + b).exp());
        let other = mean_average_precision(std::slice::from_ref(&scaled), 3, 0.5);
        prop_assert_eq!(base, other);
    }

    #[test]
    fn ap_in_unit_interval(seed in any::<u64>()) {
        let im = random_instance(&mut Rng::new(seed));
        let r = mean_average_precision(std::slice::from_ref(&im), 3, 0.5);
        prop_assert!((0.0..=1.0).contains(&r.map));
        for ap in r.per_class.iter().flatten() {
            prop_assert!((0.0..=1.0).contains(ap));
        }
    }

    #[test]
    fn perfect_detector_scores_one(seed in any::<u64>()) {
        let mut im = random_instance(&mut Rng::new(seed));
        im.detections = im.ground_truth.iter().map(|g| Detection { class_id: g.class_id, score: 0.9, bbox: g.bbox }).collect();
        let r = mean_average_precision(std::slice::from_ref(&im), 3, 0.5);
        if !im.ground_truth.is_empty() {
            prop_assert_eq!(r.map, 1.0);
        }
    }

    #[test]
    fn psnr_agrees_with_mse(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let a = Tensor::uniform(&[3, 12, 12], 0.0, 1.0, &mut rng);
        let b = Tensor::uniform(&[3, 12, 12], 0.0, 1.0, &mut rng);
        let m = mse(&a, &b).unwrap();
        let p = psnr(&a, &b, 1.0).unwrap();
        prop_assert!((p - 10.0 * (1.0 / m).log10()).abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let a = Tensor::uniform(&[3, 16, 16], 0.0, 1.0, &mut rng);
        let b = Tensor::uniform(&[3, 16, 16], 0.0, 1.0, &mut rng);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(s <= 1.0 + 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn constant_images() {
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let s = ssim(&Tensor::full(&[3, 16, 16], 1.0), &Tensor::zeros(&[3, 16, 16])).unwrap();
    assert!((s - c1 / (1.0 + c1)).abs() < 1e-12);
    assert!(psnr(&Tensor::zeros(&[3, 4, 4]), &Tensor::zeros(&[3, 4, 4]), 1.0).unwrap().is_infinite());
}

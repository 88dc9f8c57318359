//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any FAIL.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use fogcascade::cli::{run_from_args, RunConfig};
use fogcascade::dataset::{load_pairs, Condition};
use fogcascade::dehaze::{eval_dehazer, AodNet, AodNetX};
use fogcascade::detect::{evaluate_detector, DetectorWidth, GridDetector};
use fogcascade::diagnostics::gradient_suite;
use fogcascade::imageio::*;
use fogcascade::metrics::{mean_average_precision, mse, psnr, ssim, SSIM_K1};
use fogcascade::pipeline::{performance_change_percent, read_benchmark_csv};
use fogcascade::rng::Rng;
use fogcascade::scatter::*;
use fogcascade::tensor::Tensor;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let cases = gradient_suite(RunConfig::default().seed).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut worst_smooth: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for c in &cases {
        println!("    {:<20} {:.2e} (< {:.0e})", c.name, c.max_rel_error, c.tolerance);
        if c.tolerance < 1e-5 {
            worst_smooth = worst_smooth.max(c.max_rel_error);
        } else {
            worst = worst.max(c.max_rel_error);
        }
    }
    let failed: Vec<&str> = cases.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    check(failed.is_empty(), format!("failed: {failed:?}"))?;
    let names: Vec<&str> = cases.iter().map(|c| c.name.as_str()).collect();
    for m in ["aod-net", "aod-netx", "unet", "dehazenet", "detector_light", "detector_heavy"] {
        check(names.contains(&m), format!("{m} missing from the suite"))?;
    }
    check(elapsed < Duration::from_secs(120), format!("took {elapsed:.1?}"))?;
    Ok(format!("{} cases, smooth max {worst_smooth:.1e}, other max {worst:.1e}, {elapsed:.1?}", cases.len()))
}

fn metric_oracles() -> Outcome {
    let mut rng = Rng::new(1);
    let n = 2000;
    for i in 0..n {
        let im = random_instance(&mut rng);
        let got = mean_average_precision(std::slice::from_ref(&im), 3, 0.5).map;
        let want = oracle_map(std::slice::from_ref(&im), 3);
        check(got == want, format!("instance {i}: {got} != oracle {want}"))?;
    }
    let x = Tensor::uniform(&[3, 24, 24], 0.0, 1.0, &mut rng);
    let s = ssim(&x, &x).map_err(|e| e.to_string())?;
    check((s - 1.0).abs() < 1e-12, format!("SSIM(x, x) = {s}"))?;
    let c1 = SSIM_K1 * SSIM_K1;
    let s = ssim(&Tensor::full(&[3, 16, 16], 1.0), &Tensor::zeros(&[3, 16, 16])).map_err(|e| e.to_string())?;
    check((s - c1 / (1.0 + c1)).abs() < 1e-12, format!("constant SSIM {s}"))?;
    for _ in 0..200 {
        let a = Tensor::uniform(&[3, 16, 16], 0.0, 1.0, &mut rng);
        let b = Tensor::uniform(&[3, 16, 16], 0.0, 1.0, &mut rng);
        let (m, p) = (mse(&a, &b).unwrap(), psnr(&a, &b, 1.0).unwrap());
        check((p - 10.0 * (1.0 / m).log10()).abs() < 1e-12, "PSNR disagrees with MSE")?;
    }
    Ok(format!("{n} instances equal the oracle; SSIM identities and 200 PSNR/MSE pairs hold"))
}

fn change_arithmetic() -> Outcome {
    let rows = [
        (0.5644, 0.4850, -14.07),
        (0.6813, 0.5822, -14.53),
        (0.4896, 0.6152, 25.68),
        (0.5243, 0.4948, -5.63),
        (0.6099, 0.5900, -3.27),
        (0.5150, 0.6114, 18.71),
    ];
    let mut worst: f64 = 0.0;
    for (clear, foggy, printed) in rows {
        let c = performance_change_percent(clear, foggy).ok_or("undefined change")?;
        worst = worst.max((c - printed).abs());
        check((c - printed).abs() <= 0.05, format!("{clear}/{foggy}: {c:.3} vs {printed}"))?;
    }
    Ok(format!("6 rows within {worst:.3} pp"))
}

fn fog_identities() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SceneSpec { seed: 5, ..Default::default() };
    let counts = DatasetCounts { train: 10, val: 0, test: 0 };
    gen_dataset(&spec, counts, &FogParams { beta: 0.0, ..Default::default() }, dir.path())
        .map_err(|e| e.to_string())?;
    let m = DatasetManifest::load(manifest_path(dir.path(), Split::Train)).map_err(|e| e.to_string())?;
    for p in load_pairs(&m).map_err(|e| e.to_string())? {
        check(p.clear.data() == p.foggy.data(), format!("{}: foggy differs at beta 0", p.id))?;
        check(ssim(&p.foggy, &p.clear).unwrap() == 1.0, "SSIM below 1 at beta 0")?;
    }
    let fog = FogParams::default();
    let mut rng = Rng::new(11);
    for k in 0..100 {
        let scene = gen_scene(&spec, &mut rng).map_err(|e| e.to_string())?;
        let t = transmission_from_depth(&scene.depth, fog.beta).unwrap();
        let hazy = apply_fog(&scene.image, &t, fog.airlight).unwrap();
        let plane = t.len();
        for (i, &v) in hazy.data().iter().enumerate() {
            let (j, a) = (scene.image.data()[i], fog.airlight[i / plane]);
            check(v >= j.min(a) - 1e-12 && v <= j.max(a) + 1e-12, format!("scene {k} pixel {i} outside [J, A]"))?;
        }
    }
    let t = transmission_from_depth(&Tensor::full(&[1, 1, 1], 1.0), std::f64::consts::LN_2).unwrap();
    check((t.data()[0] - 0.5).abs() < 1e-15, format!("t = {}", t.data()[0]))?;
    Ok("beta 0 corpus identical, 100 scenes bounded, t(ln 2, 1) = 0.5".into())
}

fn attention_degeneracy() -> Outcome {
    let (net, xnet) = (AodNet::new(), AodNetX::new());
    let mut rng = Rng::new(21);
    for k in 0..50 {
        let trunk = net.init_params(&mut rng);
        let params = xnet.params_from_trunk(&trunk, &mut rng);
        let size = 8 * rng.range_inclusive(1, 8);
        let img = Tensor::uniform(&[3, size, size], 0.0, 1.0, &mut rng);
        let a = net.forward(&trunk, &img).map_err(|e| e.to_string())?;
        let b = xnet.forward(&params, &img, &Tensor::zeros(&[1, size, size])).map_err(|e| e.to_string())?;
        check(bits(&a.k) == bits(&b.k_refined) && bits(&a.j) == bits(&b.j), format!("image {k} differs"))?;
    }
    Ok("50 images bitwise equal on K and J".into())
}

fn run_cli(args: &[&str], config: &Path, out: &Path) -> Result<(), String> {
    let mut argv: Vec<String> = vec!["fogcascade".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--config".into(), config.display().to_string(), "--out".into(), out.display().to_string()]);
    match run_from_args(argv) {
        0 => Ok(()),
        code => Err(format!("`{}` exited with {code}", args.join(" "))),
    }
}

struct EndToEnd {
    root: tempfile::TempDir,
    dehaze_seconds: f64,
}

/// synth, then AOD-Net training (timed, evaluated for the learning-signal
/// criterion), AOD-NetX and detector training, then the benchmark.
fn full_run(out_name: &str) -> Result<EndToEnd, String> {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = root.path().join("run.json");
    std::fs::write(&config, "{}").map_err(|e| e.to_string())?;
    let out = root.path().join(out_name);
    let start = Instant::now();
    run_cli(&["synth"], &config, &out)?;
    run_cli(&["train-dehaze", "--model", "aod-net", "--threads", "1"], &config, &out)?;
    let cfg = RunConfig::load(&config).map_err(|e| e.to_string())?;
    let val = DatasetManifest::load(manifest_path(&cfg.data_dir, Split::Val)).map_err(|e| e.to_string())?;
    let pairs = load_pairs(&val).map_err(|e| e.to_string())?;
    let params = load_weights(out.join("weights/aod-net.ppwa")).map_err(|e| e.to_string())?;
    eval_dehazer(&AodNet::new(), &params, &pairs, false).map_err(|e| e.to_string())?;
    let dehaze_seconds = start.elapsed().as_secs_f64();
    run_cli(&["train-dehaze", "--model", "aod-netx"], &config, &out)?;
    run_cli(&["train-detect"], &config, &out)?;
    run_cli(&["benchmark"], &config, &out)?;
    Ok(EndToEnd { root, dehaze_seconds })
}

fn learning_signal(run: &EndToEnd) -> Outcome {
    let cfg = RunConfig::load(run.root.path().join("run.json")).map_err(|e| e.to_string())?;
    check(cfg.counts.train == 200 && cfg.counts.val == 50 && cfg.scene.image_size == 64, "default corpus changed")?;
    let val = DatasetManifest::load(manifest_path(&cfg.data_dir, Split::Val)).map_err(|e| e.to_string())?;
    let pairs = load_pairs(&val).map_err(|e| e.to_string())?;
    let params = load_weights(run.root.path().join("a/weights/aod-net.ppwa")).map_err(|e| e.to_string())?;
    let e = eval_dehazer(&AodNet::new(), &params, &pairs, false).map_err(|e| e.to_string())?;
    let detail = format!(
        "val SSIM {:.4} vs hazy {:.4}, PSNR {:.2} vs {:.2} dB, synth+train+eval {:.0} s",
        e.mean_ssim, e.hazy_ssim, e.mean_psnr, e.hazy_psnr, run.dehaze_seconds
    );
    check(e.mean_ssim > e.hazy_ssim, detail.clone())?;
    check(run.dehaze_seconds < 900.0, detail.clone())?;
    Ok(detail)
}

fn end_to_end(first: &EndToEnd) -> Outcome {
    let out = first.root.path().join("a");
    let csv_path = out.join("benchmark/benchmark.csv");
    let rows = read_benchmark_csv(&csv_path).map_err(|e| e.to_string())?;
    check(rows.len() == 6, format!("{} rows", rows.len()))?;
    check(rows.iter().all(|r| r.map_clear.is_finite() && r.map_foggy.is_finite()), "non-finite mAP")?;
    for r in &rows {
        println!(
            "    {:<28} clear {:.4} foggy {:.4} change {}",
            r.variant,
            r.map_clear,
            r.map_foggy,
            r.change_percent.map_or("n/a".into(), |c| format!("{c:+.2}%"))
        );
    }

    let cfg = RunConfig::load(first.root.path().join("run.json")).map_err(|e| e.to_string())?;
    let val = DatasetManifest::load(manifest_path(&cfg.data_dir, Split::Val)).map_err(|e| e.to_string())?;
    let pairs = load_pairs(&val).map_err(|e| e.to_string())?;
    let mut heavy_maps = Vec::new();
    for f in &cfg.detect.families {
        let mut per_width = Vec::new();
        for w in [DetectorWidth::Light, DetectorWidth::Heavy] {
            let det = GridDetector::new(cfg.detector_config(w)).unwrap();
            let params = load_weights(out.join(format!("weights/detector-{}-{}.ppwa", f.name, w.as_str())))
                .map_err(|e| e.to_string())?;
            per_width
                .push(evaluate_detector(&det, &params, &pairs, Condition::Clear).map_err(|e| e.to_string())?.0.map);
        }
        println!("    family {}: clear val mAP light {:.4} heavy {:.4}", f.name, per_width[0], per_width[1]);
        if per_width[1] < per_width[0] {
            println!("    note: heavy below light for family {}", f.name);
        }
        heavy_maps.push(per_width[1]);
    }
    let min_heavy = heavy_maps.iter().copied().fold(f64::INFINITY, f64::min);
    check(min_heavy >= 0.5, format!("heavy clear val mAP {min_heavy:.4}"))?;

    let second = full_run("a").map_err(|e| format!("rerun: {e}"))?;
    let again = std::fs::read(second.root.path().join("a/benchmark/benchmark.csv")).map_err(|e| e.to_string())?;
    let original = std::fs::read(&csv_path).map_err(|e| e.to_string())?;
    check(again == original, "rerun CSV differs")?;
    Ok(format!("6 finite rows, heavy clear val mAP >= {min_heavy:.4}, rerun byte-identical"))
}

fn fail<T: std::fmt::Debug>(what: &str, e: proptest::test_runner::TestError<T>) -> String {
    format!("{what}: {e}")
}

fn round_trips() -> Outcome {
    let cases = 256;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&image_u8(), |img| {
            assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
            Ok(())
        })
        .map_err(|e| fail("PPM", e))?;
    runner
        .run(&tensor(), |t| {
            let back = decode_tensor(&encode_tensor(&t)).unwrap();
            assert!(back.shape() == t.shape() && bits(&back) == bits(&t));
            Ok(())
        })
        .map_err(|e| fail("PTNS", e))?;
    runner
        .run(&tensor_map(), |m| {
            let back = decode_weights(&encode_weights(m.iter()).unwrap()).unwrap();
            assert_eq!(back.len(), m.len());
            for (name, t) in m.iter() {
                let b = back.require(name).unwrap();
                assert!(b.shape() == t.shape() && bits(b) == bits(t));
            }
            Ok(())
        })
        .map_err(|e| fail("PPWA", e))?;
    runner
        .run(&proptest::collection::vec(detection_record(), 0..8), |recs| {
            assert_eq!(parse_detections(&format_detections(&recs)).unwrap(), recs);
            Ok(())
        })
        .map_err(|e| fail("JSONL", e))?;
    runner
        .run(&manifest(), |m| {
            assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);
            Ok(())
        })
        .map_err(|e| fail("manifest", e))?;
    Ok(format!("PPM, PTNS, PPWA, JSONL, manifest: {cases} cases each"))
}

fn report(id: usize, name: &str, outcome: Outcome, failures: &mut usize) {
    match outcome {
        Ok(detail) => println!("PASS {id} {name}: {detail}"),
        Err(detail) => {
            *failures += 1;
            println!("FAIL {id} {name}: {detail}");
        }
    }
}

fn main() {
    let mut failures = 0;
    report(1, "gradient suite", gradient_checks(), &mut failures);
    report(2, "metric oracles", metric_oracles(), &mut failures);
    report(3, "performance-change arithmetic", change_arithmetic(), &mut failures);
    report(4, "fog-model identities", fog_identities(), &mut failures);
    report(5, "attention degeneracy", attention_degeneracy(), &mut failures);
    match full_run("a") {
        Ok(run) => {
            report(6, "dehazing learning signal", learning_signal(&run), &mut failures);
            report(7, "end-to-end benchmark", end_to_end(&run), &mut failures);
        }
        Err(e) => {
            report(6, "dehazing learning signal", Err(e.clone()), &mut failures);
            report(7, "end-to-end benchmark", Err(e), &mut failures);
        }
    }
    report(8, "format round-trips", round_trips(), &mut failures);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

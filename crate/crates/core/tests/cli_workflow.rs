use std::path::Path;

use fogcascade::cli::run_from_args;
use fogcascade::pipeline::read_benchmark_csv;

fn run(args: &[&str], config: &Path, out: &Path) -> i32 {
    let mut argv: Vec<String> = vec!["fogcascade".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--config".into(), config.display().to_string(), "--out".into(), out.display().to_string()]);
    run_from_args(argv)
}

const CONFIG: &str = r#"{
    "seed": 3,
    "counts": {"train": 6, "val": 3, "test": 4},
    "scene": {"image_size": 32, "object_count": [1, 3]},
    "dehaze": {"epochs": 1, "models": ["aod-net", "aod-netx", "unet", "dehazenet"]},
    "detect": {"epochs": 2},
    "benchmark": {"dump_images": 2}
}"#;

#[test]
fn small_workflow_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, CONFIG).unwrap();
    let (out1, out2) = (dir.path().join("out1"), dir.path().join("out2"));

    assert_eq!(run(&["synth"], &config, &out1), 0);
    assert!(dir.path().join("data/train/manifest.json").is_file());
    for (out, threads) in [(&out1, "1"), (&out2, "2")] {
        assert_eq!(run(&["train-dehaze", "--threads", threads], &config, out), 0);
        assert_eq!(run(&["train-detect", "--threads", threads], &config, out), 0);
        assert_eq!(run(&["benchmark", "--threads", threads], &config, out), 0);
    }
    let csv1 = std::fs::read(out1.join("benchmark/benchmark.csv")).unwrap();
    assert_eq!(csv1, std::fs::read(out2.join("benchmark/benchmark.csv")).unwrap());
    let rows = read_benchmark_csv(out1.join("benchmark/benchmark.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.map_clear.is_finite() && r.map_foggy.is_finite()));
    for rel in ["benchmark/detections/heavy-a/foggy.jsonl", "weights/aod-netx.ppwa", "logs/unet_loss.csv"] {
        assert_eq!(std::fs::read(out1.join(rel)).unwrap(), std::fs::read(out2.join(rel)).unwrap(), "{rel}");
    }
    let before = out1.join("benchmark/images/light-a_aod-netx_heavy-a/test_00001_foggy_before.ppm");
    fogcascade::imageio::read_ppm(&before).unwrap();
    assert!(!out1.join("benchmark/images/heavy-a").exists());

    assert_eq!(run(&["eval-dehaze"], &config, &out1), 0);
    assert!(out1.join("eval/dehaze_table.md").is_file());
    assert_eq!(run(&["detect", "--family", "B", "--width", "light"], &config, &out1), 0);
    let dets = out1.join("detections/detector-B-light_test_foggy.jsonl");
    assert_eq!(run(&["ingest", dets.to_str().unwrap()], &config, &out1), 0);
    assert_eq!(run(&["pipeline", "--variant", "aod-net-then-heavy"], &config, &out1), 0);
    assert!(out1.join("detections/aod-net-then-heavy-A_test_foggy.jsonl").is_file());
    assert_eq!(run(&["pipeline", "--family", "C"], &config, &out1), 1);
}

//! Command-line front end. Every workflow reads a [`RunConfig`]; flags only
//! override paths, the seed and the thread count.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{BenchmarkSection, DehazeSection, DetectSection, FamilyConfig, RunConfig};

use crate::boxes::Detection;
use crate::dataset::{load_pairs, write_loss_log, Condition, ImagePair};
use crate::dehaze::{dehaze_table_markdown, eval_dehazer, train_dehazer, AodNetX, DehazeTableRow, ModelKind};
use crate::detect::{evaluate_detector, ingest_external, train_detector, DetectorWidth, GridDetector, EVAL_CONFIDENCE};
use crate::diagnostics::gradient_suite;
use crate::error::{Error, Result};
use crate::imageio::{
    ensure_dir, load_weights, read_detections, save_weights, write_detections, DatasetManifest, DetectionRecord, Split,
};
use crate::pipeline::{
    compare_report, run_benchmark, run_variant, LoadedDetector, ReportOptions, Variant, VariantSpec,
};
use crate::rng::Rng;
use crate::scatter::{gen_dataset, manifest_path};

#[derive(Debug, Parser)]
#[command(name = "fogcascade", about = "Fog synthesis, selective dehazing and detection benchmarks", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for per-image stages. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the clear/foggy corpus and its manifests.
    Synth,
    /// Train dehazing models on the train split.
    TrainDehaze {
        /// Models to train; defaults to the configured list.
        #[arg(long = "model")]
        models: Vec<ModelKind>,
    },
    /// Train light and heavy detectors for every family on clear train images.
    TrainDetect {
        #[arg(long)]
        family: Option<String>,
        #[arg(long, value_parser = parse_width)]
        width: Option<DetectorWidth>,
    },
    /// Mean SSIM/PSNR/loss of the trained dehazers and the comparison table.
    EvalDehaze,
    /// Run one trained detector over a split and write JSON Lines.
    Detect {
        #[arg(long, default_value = "A")]
        family: String,
        #[arg(long, value_parser = parse_width, default_value = "heavy")]
        width: DetectorWidth,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "foggy")]
        condition: Condition,
        #[arg(long, default_value_t = EVAL_CONFIDENCE)]
        conf: f64,
    },
    /// Run one variant over a split and write its final detections.
    Pipeline {
        #[arg(long, default_value = "light-aod-netx-heavy")]
        variant: Variant,
        #[arg(long, default_value = "A")]
        family: String,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "foggy")]
        condition: Condition,
    },
    /// Evaluate every configured variant and family on clear and foggy images.
    Benchmark,
    /// Finite-difference check of every layer and model.
    Gradcheck,
    /// Validate an external detection file and summarise it per image.
    Ingest {
        path: PathBuf,
        /// Manifest whose ids should all appear in the summary.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn parse_width(s: &str) -> std::result::Result<DetectorWidth, String> {
    match s {
        "light" => Ok(DetectorWidth::Light),
        "heavy" => Ok(DetectorWidth::Heavy),
        _ => Err(format!("unknown width {s:?} (expected light or heavy)")),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 on runtime failure, 2 on usage errors.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    let work = || dispatch(&cli.command, &cfg);
    match cli.common.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Synth => synth(cfg),
        Command::TrainDehaze { models } => {
            let models = if models.is_empty() { cfg.dehaze.models.clone() } else { models.clone() };
            train_dehaze(cfg, &models)
        }
        Command::TrainDetect { family, width } => train_detect(cfg, family.as_deref(), *width),
        Command::EvalDehaze => eval_dehaze(cfg),
        Command::Detect { family, width, split, condition, conf } => {
            detect(cfg, family, *width, *split, *condition, *conf)
        }
        Command::Pipeline { variant, family, split, condition } => pipeline(cfg, *variant, family, *split, *condition),
        Command::Benchmark => benchmark(cfg),
        Command::Gradcheck => gradcheck(cfg),
        Command::Ingest { path, manifest } => ingest(path, manifest.as_deref()),
    }
}

fn load_split(cfg: &RunConfig, split: Split) -> Result<(DatasetManifest, Vec<ImagePair>)> {
    let manifest = DatasetManifest::load(manifest_path(&cfg.data_dir, split))?;
    let pairs = load_pairs(&manifest)?;
    Ok((manifest, pairs))
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let manifests = gen_dataset(&cfg.scene_spec(), cfg.counts, &cfg.fog, &cfg.data_dir)?;
    for m in &manifests {
        println!("{}: {} images", m.split, m.records.len());
    }
    Ok(())
}

fn train_dehaze(cfg: &RunConfig, models: &[ModelKind]) -> Result<()> {
    let (_, pairs) = load_split(cfg, Split::Train)?;
    ensure_dir(cfg.weights_dir())?;
    let logs = cfg.out_dir.join("logs");
    ensure_dir(&logs)?;
    for &kind in models {
        let train_cfg = cfg.dehaze_train(kind);
        // AOD-NetX starts from the trained AOD-Net trunk when there is one.
        let init = match kind {
            ModelKind::AodNetX if cfg.dehazer_weights(ModelKind::AodNet).is_file() => {
                let trunk = load_weights(cfg.dehazer_weights(ModelKind::AodNet))?;
                Some(AodNetX::new().params_from_trunk(&trunk, &mut Rng::new(train_cfg.seed)))
            }
            _ => None,
        };
        let model = kind.model();
        let out = train_dehazer(model.as_ref(), &pairs, &train_cfg, init)?;
        save_weights(cfg.dehazer_weights(kind), &out.params)?;
        write_loss_log(logs.join(format!("{kind}_loss.csv")), &out.losses)?;
        println!("{kind}: final epoch loss {:.6}", out.losses.last().copied().unwrap_or(f64::NAN));
    }
    Ok(())
}

fn families<'a>(cfg: &'a RunConfig, only: Option<&str>) -> Result<Vec<&'a FamilyConfig>> {
    let all: Vec<&FamilyConfig> = cfg.detect.families.iter().filter(|f| only.is_none_or(|n| f.name == n)).collect();
    if all.is_empty() {
        return Err(Error::Config(format!("no detector family named {:?}", only.unwrap_or(""))));
    }
    Ok(all)
}

fn train_detect(cfg: &RunConfig, family: Option<&str>, width: Option<DetectorWidth>) -> Result<()> {
    let (_, train) = load_split(cfg, Split::Train)?;
    let (_, val) = load_split(cfg, Split::Val)?;
    ensure_dir(cfg.weights_dir())?;
    let logs = cfg.out_dir.join("logs");
    ensure_dir(&logs)?;
    let widths = match width {
        Some(w) => vec![w],
        None => vec![DetectorWidth::Light, DetectorWidth::Heavy],
    };
    for f in families(cfg, family)? {
        for &w in &widths {
            let detector = GridDetector::new(cfg.detector_config(w))?;
            let out = train_detector(&detector, &train, &cfg.detect_train(f, w))?;
            save_weights(cfg.detector_weights(&f.name, w), &out.params)?;
            write_loss_log(logs.join(format!("detector-{}-{}_loss.csv", f.name, w.as_str())), &out.losses)?;
            let (clear, _) = evaluate_detector(&detector, &out.params, &val, Condition::Clear)?;
            let (foggy, _) = evaluate_detector(&detector, &out.params, &val, Condition::Foggy)?;
            println!("{}-{}: val mAP clear {:.4} foggy {:.4}", f.name, w.as_str(), clear.map, foggy.map);
        }
    }
    Ok(())
}

fn eval_dehaze(cfg: &RunConfig) -> Result<()> {
    let (_, pairs) = load_split(cfg, cfg.dehaze.eval_split)?;
    let mut rows = Vec::new();
    for &kind in &cfg.dehaze.models {
        let params = load_weights(cfg.dehazer_weights(kind))?;
        let model = kind.model();
        let e = eval_dehazer(model.as_ref(), &params, &pairs, cfg.dehaze.use_gt_rois)?;
        println!(
            "{kind}: loss {:.6} SSIM {:.4} (hazy {:.4}) PSNR {:.2} dB (hazy {:.2} dB)",
            e.mean_loss, e.mean_ssim, e.hazy_ssim, e.mean_psnr, e.hazy_psnr
        );
        rows.push(DehazeTableRow { model: kind.label().into(), avg_loss: e.mean_loss, ssim: e.mean_ssim });
    }
    let dir = cfg.out_dir.join("eval");
    ensure_dir(&dir)?;
    let path = dir.join("dehaze_table.md");
    std::fs::write(&path, dehaze_table_markdown(&rows)).map_err(|e| Error::io(&path, e))?;
    print!("{}", dehaze_table_markdown(&rows));
    Ok(())
}

fn load_detector(cfg: &RunConfig, family: &str, width: DetectorWidth) -> Result<LoadedDetector> {
    LoadedDetector::load(cfg.detector_config(width), cfg.detector_weights(family, width))
}

fn records(pairs: &[ImagePair], dets: &[Vec<Detection>]) -> Vec<DetectionRecord> {
    pairs.iter().zip(dets).flat_map(|(p, d)| d.iter().map(|d| DetectionRecord::new(p.id.clone(), d))).collect()
}

fn detect(
    cfg: &RunConfig,
    family: &str,
    width: DetectorWidth,
    split: Split,
    condition: Condition,
    conf: f64,
) -> Result<()> {
    let det = load_detector(cfg, family, width)?;
    let (_, pairs) = load_split(cfg, split)?;
    let images: Vec<_> = pairs.iter().map(|p| p.image(condition)).collect();
    let dets = det.detector.detect_all(&det.params, &images, conf)?;
    let dir = cfg.out_dir.join("detections");
    ensure_dir(&dir)?;
    let path = dir.join(format!("detector-{family}-{}_{split}_{condition}.jsonl", width.as_str()));
    write_detections(&path, &records(&pairs, &dets))?;
    println!("{} detections -> {}", dets.iter().map(Vec::len).sum::<usize>(), path.display());
    Ok(())
}

fn variant_spec(cfg: &RunConfig, variant: Variant, family: &str) -> Result<VariantSpec> {
    let heavy = load_detector(cfg, family, DetectorWidth::Heavy)?;
    let (light, dehazer) = match variant {
        Variant::HeavyOnly => (None, None),
        Variant::AodNetThenHeavy => (None, Some(load_weights(cfg.dehazer_weights(ModelKind::AodNet))?)),
        Variant::LightAodNetXHeavy => (
            Some(load_detector(cfg, family, DetectorWidth::Light)?),
            Some(load_weights(cfg.dehazer_weights(ModelKind::AodNetX))?),
        ),
    };
    let mut spec = VariantSpec::new(variant, family, heavy, light, dehazer)?;
    spec.preliminary_confidence = cfg.benchmark.preliminary_confidence;
    Ok(spec)
}

fn pipeline(cfg: &RunConfig, variant: Variant, family: &str, split: Split, condition: Condition) -> Result<()> {
    let spec = variant_spec(cfg, variant, family)?;
    let (_, pairs) = load_split(cfg, split)?;
    use rayon::prelude::*;
    let dets: Vec<Vec<Detection>> =
        pairs.par_iter().map(|p| Ok(run_variant(&spec, p.image(condition))?.detections)).collect::<Result<_>>()?;
    let dir = cfg.out_dir.join("detections");
    ensure_dir(&dir)?;
    let path = dir.join(format!("{variant}-{family}_{split}_{condition}.jsonl"));
    write_detections(&path, &records(&pairs, &dets))?;
    let map = crate::detect::score_detections(&pairs, &dets, spec.heavy.detector.config.num_classes)?;
    println!("{}: mAP {:.4} -> {}", spec.label(), map.map, path.display());
    Ok(())
}

fn benchmark(cfg: &RunConfig) -> Result<()> {
    let (manifest, pairs) = load_split(cfg, cfg.benchmark.split)?;
    let mut specs = Vec::new();
    for f in &cfg.detect.families {
        for &v in &cfg.benchmark.variants {
            specs.push(variant_spec(cfg, v, &f.name)?);
        }
    }
    let run = run_benchmark(&specs, &pairs, manifest.num_classes())?;
    let dir = cfg.out_dir.join("benchmark");
    compare_report(&run, &pairs, &dir, ReportOptions { dump_images: cfg.benchmark.dump_images })?;
    print!("{}", crate::pipeline::benchmark_markdown(&run.rows));
    Ok(())
}

fn gradcheck(cfg: &RunConfig) -> Result<()> {
    let cases = gradient_suite(cfg.seed)?;
    let mut failed = 0;
    for c in &cases {
        let status = if c.passed() { "ok" } else { "FAIL" };
        failed += usize::from(!c.passed());
        println!(
            "{:<20} max rel err {:.3e} (tol {:.0e}, {} probes, worst {}) {status}",
            c.name, c.max_rel_error, c.tolerance, c.probes, c.worst
        );
    }
    if failed > 0 {
        return Err(Error::InvalidArgument(format!("{failed} gradient checks failed")));
    }
    Ok(())
}

fn ingest(path: &Path, manifest: Option<&Path>) -> Result<()> {
    let ids: Vec<String> = match manifest {
        Some(m) => DatasetManifest::load(m)?.records.into_iter().map(|r| r.id).collect(),
        None => Vec::new(),
    };
    let total = read_detections(path)?.len();
    let grouped = ingest_external(path, &ids)?;
    println!("{total} detections across {} images", grouped.len());
    for (id, dets) in &grouped {
        let top = dets.first().map_or("-".to_string(), |d| format!("{:.3}", d.score));
        println!("{id}: {} detections, top score {top}", dets.len());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_from_args(["fogcascade"]), 2);
        assert_eq!(run_from_args(["fogcascade", "frobnicate"]), 2);
        assert_eq!(run_from_args(["fogcascade", "synth", "--bogus"]), 2);
        assert_eq!(run_from_args(["fogcascade", "detect", "--width", "medium"]), 2);
    }

    #[test]
    fn runtime_errors_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.json");
        assert_eq!(
            run_from_args(["fogcascade".as_ref(), "synth".as_ref(), "--config".as_ref(), missing.as_os_str()]),
            1
        );
        let out = dir.path().join("out");
        let args = ["fogcascade".as_ref(), "benchmark".as_ref(), "--out".as_ref(), out.as_os_str()];
        assert_eq!(run_from_args(args), 1);
    }

    #[test]
    fn ingest_reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(
            &p,
            "{\"image_id\":\"a\",\"class_id\":0,\"score\":0.5,\"x\":0,\"y\":0,\"w\":1,\"h\":1}\nnot json\n",
        )
        .unwrap();
        assert!(ingest(&p, None).unwrap_err().to_string().contains("line 2"));
    }
}

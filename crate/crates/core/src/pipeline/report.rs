//! Benchmark tables, detection dumps and before/after image pairs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{BenchmarkRow, BenchmarkRun};
use crate::dataset::ImagePair;
use crate::error::{Error, Result};
use crate::imageio::{ensure_dir, write_detections, write_image, DetectionRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportOptions {
    /// Write before/after pairs for this many leading images.
    pub dump_images: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { dump_images: 4 }
    }
}

/// `variant,map_clear,map_foggy,change_percent`; floats use the shortest
/// representation that parses back exactly and an undefined change is empty.
pub fn write_benchmark_csv(path: impl AsRef<Path>, rows: &[BenchmarkRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_benchmark_csv(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn benchmark_markdown(rows: &[BenchmarkRow]) -> String {
    let mut s = String::from("| Model | mAP (Clear) | mAP (Foggy) | Performance Change |\n|---|---|---|---|\n");
    for r in rows {
        let change = match r.change_percent {
            Some(c) => format!("{c:+.2}%"),
            None => "n/a".into(),
        };
        let _ = writeln!(s, "| {} | {:.4} | {:.4} | {change} |", r.variant, r.map_clear, r.map_foggy);
    }
    s
}

fn slug(label: &str) -> String {
    label.to_lowercase().replace('+', "_")
}

/// Writes under `out_dir`:
///
/// ```text
/// benchmark.csv, benchmark.md
/// detections/<variant>/<condition>.jsonl
/// images/<variant>/<id>_<condition>_{before,after}.ppm   (dehazing variants)
/// ```
///
/// Returns the written paths in write order.
pub fn compare_report(
    run: &BenchmarkRun,
    pairs: &[ImagePair],
    out_dir: impl AsRef<Path>,
    opts: ReportOptions,
) -> Result<Vec<PathBuf>> {
    if run.rows.is_empty() {
        return Err(Error::InvalidArgument("no benchmark rows to report".into()));
    }
    let out = out_dir.as_ref();
    ensure_dir(out)?;
    let mut written = Vec::new();

    let csv_path = out.join("benchmark.csv");
    write_benchmark_csv(&csv_path, &run.rows)?;
    written.push(csv_path);
    let md_path = out.join("benchmark.md");
    std::fs::write(&md_path, benchmark_markdown(&run.rows)).map_err(|e| Error::io(&md_path, e))?;
    written.push(md_path);

    for v in &run.variants {
        let det_dir = out.join("detections").join(slug(&v.label));
        ensure_dir(&det_dir)?;
        for c in &v.runs {
            let records: Vec<DetectionRecord> = pairs
                .iter()
                .zip(&c.outputs)
                .flat_map(|(p, o)| o.detections.iter().map(|d| DetectionRecord::new(p.id.clone(), d)))
                .collect();
            let path = det_dir.join(format!("{}.jsonl", c.condition));
            write_detections(&path, &records)?;
            written.push(path);
        }

        for c in &v.runs {
            for (p, o) in pairs.iter().zip(&c.outputs).take(opts.dump_images) {
                let Some(after) = &o.dehazed else { continue };
                let img_dir = out.join("images").join(slug(&v.label));
                ensure_dir(&img_dir)?;
                for (tag, t) in [("before", p.image(c.condition)), ("after", after)] {
                    let path = img_dir.join(format!("{}_{}_{tag}.ppm", p.id, c.condition));
                    write_image(&path, t)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

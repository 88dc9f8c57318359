//! Detection files: JSON Lines, one object per line with keys
//! `image_id, class_id, score, x, y, w, h` (pixels, top-left origin).
//! Unknown keys are ignored on read; blank lines are skipped.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boxes::{BBox, Detection};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_id: usize,
    pub score: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl DetectionRecord {
    pub fn new(image_id: impl Into<String>, det: &Detection) -> Self {
        Self {
            image_id: image_id.into(),
            class_id: det.class_id,
            score: det.score,
            x: det.bbox.x,
            y: det.bbox.y,
            w: det.bbox.w,
            h: det.bbox.h,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection { class_id: self.class_id, score: self.score, bbox: BBox::new(self.x, self.y, self.w, self.h) }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(format!("box size {}x{} must be positive", self.w, self.h));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if ![self.x, self.y].iter().all(|v| v.is_finite()) {
            return Err("box origin must be finite".into());
        }
        Ok(())
    }
}

pub fn parse_detections(text: &str) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord =
            serde_json::from_str(line).map_err(|e| Error::Line { line: i + 1, reason: e.to_string() })?;
        rec.validate().map_err(|reason| Error::Line { line: i + 1, reason })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn format_detections(records: &[DetectionRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("detection records always serialize"));
        s.push('\n');
    }
    s
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text)
}

pub fn write_detections(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(format_detections(records).as_bytes()).map_err(|e| Error::io(path, e))
}

//! Quality-first filtering of candidate face records.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::manifest::FaceRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationThresholds {
    pub min_face_area: f64,
    pub min_quality: f64,
}

impl Default for CurationThresholds {
    fn default() -> Self {
        Self { min_face_area: 0.1, min_quality: 0.5 }
    }
}

impl CurationThresholds {
    pub fn validate(&self) -> Result<()> {
        if !self.min_face_area.is_finite() || !self.min_quality.is_finite() {
            return Err(invalid("curation thresholds must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Zero-based position in the input.
    pub index: usize,
    pub image_path: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct CurationOutcome {
    pub kept: Vec<FaceRecord>,
    pub rejected: Vec<Rejection>,
}

/// Reason a well-formed record fails the gates, checked in order:
/// face size, then quality.
pub fn rejection_reason(r: &FaceRecord, th: &CurationThresholds) -> Option<&'static str> {
    if !(r.face_area_fraction >= th.min_face_area) {
        Some("small-face")
    } else if !(r.quality_score >= th.min_quality) {
        Some("low-quality")
    } else {
        None
    }
}

fn malformed(r: &FaceRecord) -> Option<String> {
    if !(0.0..=1.0).contains(&r.face_area_fraction) {
        return Some(format!("face_area_fraction {} outside [0,1]", r.face_area_fraction));
    }
    if !(0.0..=1.0).contains(&r.quality_score) {
        return Some(format!("quality_score {} outside [0,1]", r.quality_score));
    }
    let [w, h] = r.image_size;
    r.landmarks.validate(w, h).err().map(|e| e.to_string())
}

pub fn curate(records: Vec<FaceRecord>, th: &CurationThresholds) -> CurationOutcome {
    let mut out = CurationOutcome::default();
    for (index, r) in records.into_iter().enumerate() {
        let reason = match malformed(&r) {
            Some(m) => Some(format!("malformed: {m}")),
            None => rejection_reason(&r, th).map(String::from),
        };
        match reason {
            Some(reason) => out.rejected.push(Rejection { index, image_path: Some(r.image_path.clone()), reason }),
            None => out.kept.push(r),
        }
    }
    out
}

/// Parses manifest lines leniently: unparseable lines become rejections.
pub fn curate_lines<'a>(lines: impl IntoIterator<Item = &'a str>, th: &CurationThresholds) -> CurationOutcome {
    let mut parsed = Vec::new();
    let mut positions = Vec::new();
    let mut out = CurationOutcome::default();
    for (index, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FaceRecord>(line) {
            Ok(r) => {
                parsed.push(r);
                positions.push(index);
            }
            Err(e) => out.rejected.push(Rejection { index, image_path: None, reason: format!("malformed: {e}") }),
        }
    }
    let inner = curate(parsed, th);
    out.kept = inner.kept;
    out.rejected.extend(inner.rejected.into_iter().map(|mut r| {
        r.index = positions[r.index];
        r
    }));
    out.rejected.sort_by_key(|r| r.index);
    out
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which localizer produced a detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionSource {
    Cnn,
    Cluster,
}

impl fmt::Display for DetectionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectionSource::Cnn => "cnn",
            DetectionSource::Cluster => "cluster",
        })
    }
}

impl FromStr for DetectionSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(DetectionSource::Cnn),
            "cluster" => Ok(DetectionSource::Cluster),
            other => Err(invalid(format!("unknown method {other:?} (expected cnn or cluster)"))),
        }
    }
}

/// A located pedestrian: centroid and box size in meters, scene origin at the
/// top-left image corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
    pub source: DetectionSource,
}

/// One JSON-lines record of a detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: String,
    pub source: DetectionSource,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn record(&self, frame: &str) -> DetectionRecord {
        DetectionRecord {
            frame: frame.to_string(),
            source: self.source,
            cx: self.cx,
            cy: self.cy,
            w: self.w,
            h: self.h,
            confidence: self.confidence,
        }
    }
}

impl From<&DetectionRecord> for Detection {
    fn from(r: &DetectionRecord) -> Self {
        Detection {
            cx: r.cx,
            cy: r.cy,
            w: r.w,
            h: r.h,
            confidence: r.confidence,
            source: r.source,
        }
    }
}

/// Serializes detections of one frame as JSON lines, one per detection.
pub fn to_jsonl(frame: &str, dets: &[Detection]) -> Result<String> {
    let mut out = String::new();
    for d in dets {
        out.push_str(&serde_json::to_string(&d.record(frame))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<DetectionRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

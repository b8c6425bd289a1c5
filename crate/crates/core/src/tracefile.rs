//! Line-delimited JSON trace files.
//!
//! One record per line: `{"t": s, "arm": "L"|"R", "p": [x, y, z], "q": [w, x, y, z]}`.
//! Blank lines are ignored. Reading is streaming.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t: f64,
    pub arm: String,
    pub p: [f64; 3],
    pub q: [f64; 4],
}

impl TraceRecord {
    pub fn pose(&self) -> Pose {
        Pose::from_wxyz(self.p, self.q)
    }
}

pub fn write_traces(path: &Path, poses: &[Pose], arm: &str, rate_hz: f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, pose) in poses.iter().enumerate() {
        let rec = TraceRecord {
            t: i as f64 / rate_hz,
            arm: arm.to_string(),
            p: [pose.p.x, pose.p.y, pose.p.z],
            q: pose.wxyz(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Streaming reader yielding one record per non-blank line.
pub struct TraceReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl TraceReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(TraceReader {
            path: path.to_path_buf(),
            lines: BufReader::new(file).lines(),
            line: 0,
        })
    }

    fn parse_error(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            reason: reason.into(),
        }
    }
}

impl Iterator for TraceReader {
    type Item = Result<TraceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let rec: TraceRecord = match serde_json::from_str(&text) {
                Ok(r) => r,
                Err(e) => return Some(Err(self.parse_error(e.to_string()))),
            };
            if rec.arm != "L" && rec.arm != "R" {
                return Some(Err(self.parse_error(format!("arm must be \"L\" or \"R\", got {:?}", rec.arm))));
            }
            if !rec.p.iter().chain(&rec.q).all(|v| v.is_finite()) {
                return Some(Err(self.parse_error("non-finite value")));
            }
            let norm = rec.q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Some(Err(self.parse_error(format!("quaternion norm {norm} is not 1"))));
            }
            return Some(Ok(rec));
        }
    }
}

/// Reads the poses of one arm.
pub fn read_poses(path: &Path, arm: &str) -> Result<Vec<Pose>> {
    let mut out = Vec::new();
    for rec in TraceReader::open(path)? {
        let rec = rec?;
        if rec.arm == arm {
            out.push(rec.pose());
        }
    }
    Ok(out)
}

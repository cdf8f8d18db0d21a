//! Plain-text box annotations: one `class_id cx cy w h` line per box,
//! normalized coordinates, six decimals, LF line endings.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundingBox, DatasetError};

/// Parses annotation text. `path` is only used for error messages.
pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<BoundingBox>, DatasetError> {
    let mut boxes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        boxes.push(parse_line(line).map_err(|message| DatasetError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        })?);
    }
    Ok(boxes)
}

fn parse_line(line: &str) -> Result<BoundingBox, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(format!("expected 5 fields, found {}", tokens.len()));
    }
    let class_id: u32 = tokens[0]
        .parse()
        .map_err(|_| format!("invalid class id '{}'", tokens[0]))?;
    let mut vals = [0.0f64; 4];
    for (slot, tok) in vals.iter_mut().zip(&tokens[1..]) {
        let v: f64 = tok.parse().map_err(|_| format!("invalid number '{tok}'"))?;
        if !v.is_finite() {
            return Err(format!("non-finite value '{tok}'"));
        }
        *slot = v;
    }
    Ok(BoundingBox::new(class_id, vals[0], vals[1], vals[2], vals[3]))
}

/// Serializes boxes in the canonical fixed-point layout.
pub fn format_annotations(boxes: &[BoundingBox]) -> String {
    let mut out = String::with_capacity(boxes.len() * 40);
    for b in boxes {
        let _ = writeln!(out, "{} {:.6} {:.6} {:.6} {:.6}", b.class_id, b.cx, b.cy, b.w, b.h);
    }
    out
}

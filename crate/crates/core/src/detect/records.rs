//! Line-delimited text records.
//!
//! Detections: `image_id class_id score x_min y_min x_max y_max`, score with
//! six decimals and coordinates with two. Ground truth uses the same layout
//! without the score. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{BBox, GroundTruth, ImageDetection, Detection};
use crate::error::{Error, Result};

pub fn format_detections(dets: &[ImageDetection]) -> String {
    let mut out = String::new();
    for d in dets {
        let b = d.detection.bbox;
        let _ = writeln!(
            out,
            "{} {} {:.6} {:.2} {:.2} {:.2} {:.2}",
            d.image_id, d.detection.class_id, d.detection.score, b.x_min, b.y_min, b.x_max, b.y_max
        );
    }
    out
}

pub fn format_ground_truth(truths: &[GroundTruth]) -> String {
    let mut out = String::new();
    for t in truths {
        let b = t.bbox;
        let _ = writeln!(
            out,
            "{} {} {:.2} {:.2} {:.2} {:.2}",
            t.image_id, t.class_id, b.x_min, b.y_min, b.x_max, b.y_max
        );
    }
    out
}

fn records(text: &str, fields: usize) -> impl Iterator<Item = Result<(usize, Vec<&str>)>> {
    text.lines().enumerate().filter_map(move |(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != fields {
            return Some(Err(Error::Record {
                line: i + 1,
                message: format!("expected {fields} fields, found {}", parts.len()),
            }));
        }
        Some(Ok((i + 1, parts)))
    })
}

fn field<T: FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Record {
        line,
        message: format!("bad {name} {raw:?}"),
    })
}

fn bbox(line: usize, raw: &[&str]) -> Result<BBox> {
    let b = BBox::new(
        field(line, "x_min", raw[0])?,
        field(line, "y_min", raw[1])?,
        field(line, "x_max", raw[2])?,
        field(line, "y_max", raw[3])?,
    );
    if !b.is_valid() {
        return Err(Error::Record {
            line,
            message: "box corners out of order".into(),
        });
    }
    Ok(b)
}

pub fn parse_detections(text: &str) -> Result<Vec<ImageDetection>> {
    records(text, 7)
        .map(|r| {
            let (line, p) = r?;
            Ok(ImageDetection {
                image_id: p[0].to_string(),
                detection: Detection {
                    class_id: field(line, "class_id", p[1])?,
                    score: field(line, "score", p[2])?,
                    bbox: bbox(line, &p[3..])?,
                },
            })
        })
        .collect()
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruth>> {
    records(text, 6)
        .map(|r| {
            let (line, p) = r?;
            Ok(GroundTruth {
                image_id: p[0].to_string(),
                class_id: field(line, "class_id", p[1])?,
                bbox: bbox(line, &p[2..])?,
            })
        })
        .collect()
}

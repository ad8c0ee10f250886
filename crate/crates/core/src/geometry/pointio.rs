//! Plain-text point files: one `x y z` per line, `#` starts a comment.

use std::fmt::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::PointSet;

pub fn parse_points(text: &str) -> Result<PointSet> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 coordinates, found {}", toks.len()),
            });
        }
        let mut p = [0.0; 3];
        for (c, t) in p.iter_mut().zip(&toks) {
            *c = t
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: format!("bad coordinate {t:?}"),
                })?;
        }
        points.push(p);
    }
    PointSet::new(points)
}

/// Shortest round-tripping decimal form, so parse(format(p)) == p bitwise.
pub fn format_points(ps: &PointSet) -> String {
    let mut out = String::with_capacity(ps.len() * 48);
    for p in ps.iter() {
        writeln!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
    }
    out
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points(&text)
}

pub fn write_points(path: impl AsRef<Path>, ps: &PointSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_points(ps)).map_err(|e| Error::io(path, e))
}

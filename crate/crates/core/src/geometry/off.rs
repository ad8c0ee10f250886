use std::fmt::Write;

use crate::error::{Error, Result};

use super::Mesh;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("expected a number, found {tok:?}")))
}

/// Parses an OFF mesh.
///
/// The `OFF` keyword may be on its own line or glued to the counts
/// (`OFF1024 2048 0`, common in ModelNet files). Faces with more than three
/// vertices are fan-triangulated. Everything after `#` on a line is ignored.
pub fn parse_off(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (mut lineno, mut first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    if let Some(rest) = first.strip_prefix("OFF") {
        let rest = rest.trim();
        if rest.is_empty() {
            (lineno, first) = lines
                .next()
                .ok_or_else(|| parse_err(lineno, "missing counts line"))?;
        } else {
            first = rest;
        }
    }

    let counts: Vec<&str> = first.split_whitespace().collect();
    if counts.len() < 2 || counts.len() > 3 {
        return Err(parse_err(lineno, format!("malformed counts line {first:?}")));
    }
    let nv: usize = parse_num(counts[0], lineno)?;
    let nf: usize = parse_num(counts[1], lineno)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(lineno, format!("expected {nv} vertices, found {}", vertices.len())))?;
        lineno = ln;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse_err(ln, "vertex needs three coordinates"));
        }
        let p = [
            parse_num::<f64>(toks[0], ln)?,
            parse_num::<f64>(toks[1], ln)?,
            parse_num::<f64>(toks[2], ln)?,
        ];
        if p.iter().any(|c| !c.is_finite()) {
            return Err(parse_err(ln, "non-finite vertex coordinate"));
        }
        vertices.push(p);
    }

    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(lineno, format!("expected {nf} faces, found {f}")))?;
        lineno = ln;
        let mut toks = l.split_whitespace();
        let n: usize = parse_num(toks.next().unwrap_or(""), ln)?;
        if n < 3 {
            return Err(parse_err(ln, format!("face with {n} vertices")));
        }
        let idx = (0..n)
            .map(|_| {
                let i: usize = parse_num(toks.next().ok_or_else(|| parse_err(ln, "face truncated"))?, ln)?;
                if i >= nv {
                    return Err(parse_err(ln, format!("vertex index {i} out of range (V = {nv})")));
                }
                Ok(i)
            })
            .collect::<Result<Vec<usize>>>()?;
        // remaining tokens (face colours) are ignored
        for k in 1..n - 1 {
            faces.push([idx[0], idx[k], idx[k + 1]]);
        }
    }

    Mesh::new(vertices, faces)
}

pub fn write_off(mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(out, "OFF\n{} {} 0", mesh.vertices.len(), mesh.faces.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{} {} {}", v[0], v[1], v[2]).unwrap();
    }
    for f in &mesh.faces {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    out
}

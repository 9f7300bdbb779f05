//! Versioned text format for [`ModelParams`].
//!
//! ```text
//! gacredit-model v1
//! [config]
//! lookback=8
//! ...
//! [embedding]
//! alpha0=1.0
//! alpha=1.0,1.0,1.0,1.0
//! gamma=...
//! [projection]
//! w_q 16x16
//! <16 rows of comma-separated values>
//! ...
//! [head]
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is bit-exact.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::attention::{FeatureMap, ProjectionParams};
use crate::clifford::{format_f64, join_f64, DIM};
use crate::embed::EmbeddingParams;
use crate::linalg::Matrix;
use crate::model::{HeadKind, HeadParams, ModelParams};

pub const MAGIC: &str = "gacredit-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArtifactError {
    #[error("not a model artifact (missing '{MAGIC}' header)")]
    NotAnArtifact,
    #[error("unsupported artifact version {found} (expected {VERSION})")]
    Version { found: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key {key} in [{section}]")]
    Missing { section: String, key: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub fn save(params: &ModelParams) -> String {
    let mut out = format!("{MAGIC} v{VERSION}\n");
    let p = &params.projection;
    out.push_str("[config]\n");
    out.push_str(&format!("lookback={}\n", params.lookback));
    out.push_str(&format!("d_h={}\n", p.d_h()));
    out.push_str(&format!("feature_map={}\n", p.feature_map));
    out.push_str(&format!("leak={}\n", format_f64(p.leak)));
    out.push_str(&format!("eps={}\n", format_f64(p.eps)));
    out.push_str(&format!("head={}\n", params.head.kind()));

    let e = &params.embedding;
    out.push_str("[embedding]\n");
    out.push_str(&format!("alpha0={}\n", format_f64(e.alpha0)));
    out.push_str(&format!("alpha={}\n", join_f64(&e.alpha)));
    out.push_str(&format!("gamma={}\n", join_f64(&e.gamma)));

    out.push_str("[projection]\n");
    for (name, w) in [("w_q", &p.w_q), ("w_k", &p.w_k), ("w_v", &p.w_v)] {
        write_matrix(&mut out, name, w);
    }

    out.push_str("[head]\n");
    match &params.head {
        HeadParams::Linear { w_out, b_out } => {
            out.push_str(&format!("w_out={}\n", join_f64(w_out)));
            out.push_str(&format!("b_out={}\n", format_f64(*b_out)));
        }
        HeadParams::Mlp { w1, b1, w2, b2 } => {
            write_matrix(&mut out, "w1", w1);
            out.push_str(&format!("b1={}\n", join_f64(b1)));
            out.push_str(&format!("w2={}\n", join_f64(w2)));
            out.push_str(&format!("b2={}\n", format_f64(*b2)));
        }
    }
    out
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    out.push_str(&format!("{name} {}x{}\n", m.rows, m.cols));
    for r in 0..m.rows {
        out.push_str(&join_f64(m.row(r)));
        out.push('\n');
    }
}

#[derive(Debug, Default)]
struct Section {
    scalars: BTreeMap<String, (usize, String)>,
    matrices: BTreeMap<String, Matrix>,
}

impl Section {
    fn raw(&self, section: &str, key: &str) -> Result<&(usize, String), ArtifactError> {
        self.scalars
            .get(key)
            .ok_or_else(|| ArtifactError::Missing { section: section.into(), key: key.into() })
    }

    fn f64(&self, section: &str, key: &str) -> Result<f64, ArtifactError> {
        let (line, v) = self.raw(section, key)?;
        parse_f64(v, *line)
    }

    fn usize(&self, section: &str, key: &str) -> Result<usize, ArtifactError> {
        let (line, v) = self.raw(section, key)?;
        v.parse().map_err(|_| ArtifactError::Syntax { line: *line, message: format!("{key}: not a count: {v:?}") })
    }

    fn vec(&self, section: &str, key: &str, len: usize) -> Result<Vec<f64>, ArtifactError> {
        let (line, v) = self.raw(section, key)?;
        let vals = parse_row(v, *line)?;
        if vals.len() != len {
            return Err(ArtifactError::Dimension(format!("{key} has {} entries, expected {len}", vals.len())));
        }
        Ok(vals)
    }

    fn matrix(&self, section: &str, key: &str, rows: usize, cols: usize) -> Result<Matrix, ArtifactError> {
        let m = self
            .matrices
            .get(key)
            .ok_or_else(|| ArtifactError::Missing { section: section.into(), key: key.into() })?;
        if m.rows != rows || m.cols != cols {
            return Err(ArtifactError::Dimension(format!("{key} is {}x{}, expected {rows}x{cols}", m.rows, m.cols)));
        }
        Ok(m.clone())
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64, ArtifactError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ArtifactError::Syntax { line, message: format!("not a finite number: {s:?}") })
}

fn parse_row(s: &str, line: usize) -> Result<Vec<f64>, ArtifactError> {
    s.split(',').map(|p| parse_f64(p, line)).collect()
}

/// Largest matrix dimension accepted when parsing.
const MAX_DIM: usize = 4096;

pub fn load(text: &str) -> Result<ModelParams, ArtifactError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or(ArtifactError::NotAnArtifact)?;
    let version = header.strip_prefix(MAGIC).ok_or(ArtifactError::NotAnArtifact)?.trim();
    if version != format!("v{VERSION}") {
        return Err(ArtifactError::Version { found: version.to_string() });
    }

    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    while let Some((line, raw)) = lines.next() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if let Some(name) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            if sections.contains_key(name) {
                return Err(ArtifactError::Syntax { line, message: format!("duplicate section [{name}]") });
            }
            sections.insert(name.to_string(), Section::default());
            current = Some(name.to_string());
            continue;
        }
        let sec_name = current
            .as_ref()
            .ok_or_else(|| ArtifactError::Syntax { line, message: "entry outside a section".into() })?;
        let sec = sections.get_mut(sec_name).expect("inserted above");
        if let Some((k, v)) = l.split_once('=') {
            let key = k.trim().to_string();
            if sec.scalars.insert(key.clone(), (line, v.trim().to_string())).is_some() {
                return Err(ArtifactError::Syntax { line, message: format!("duplicate key {key}") });
            }
            continue;
        }
        // matrix block: "name RxC" then R rows
        let (name, shape) = l
            .split_once(' ')
            .ok_or_else(|| ArtifactError::Syntax { line, message: format!("unrecognized line {l:?}") })?;
        let (r, c) = shape
            .trim()
            .split_once('x')
            .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
            .ok_or_else(|| ArtifactError::Syntax { line, message: format!("bad matrix shape {shape:?}") })?;
        if r == 0 || c == 0 || r > MAX_DIM || c > MAX_DIM {
            return Err(ArtifactError::Syntax { line, message: format!("matrix shape {r}x{c} out of range") });
        }
        let mut data = Vec::with_capacity((r * c).min(1 << 16));
        for _ in 0..r {
            let (rl, row) = lines
                .next()
                .ok_or_else(|| ArtifactError::Syntax { line, message: format!("matrix {name} truncated") })?;
            let vals = parse_row(row.trim(), rl)?;
            if vals.len() != c {
                return Err(ArtifactError::Syntax { line: rl, message: format!("row has {} values, expected {c}", vals.len()) });
            }
            data.extend(vals);
        }
        if sec.matrices.insert(name.to_string(), Matrix::from_vec(r, c, data)).is_some() {
            return Err(ArtifactError::Syntax { line, message: format!("duplicate matrix {name}") });
        }
    }

    let get = |name: &str| {
        sections
            .get(name)
            .ok_or_else(|| ArtifactError::Missing { section: name.into(), key: "(section)".into() })
    };
    let cfg = get("config")?;
    let lookback = cfg.usize("config", "lookback")?;
    let d_h = cfg.usize("config", "d_h")?;
    if d_h == 0 || d_h > MAX_DIM {
        return Err(ArtifactError::Dimension(format!("d_h {d_h} out of range")));
    }
    let feature_map: FeatureMap = {
        let (line, v) = cfg.raw("config", "feature_map")?;
        v.parse().map_err(|m| ArtifactError::Syntax { line: *line, message: m })?
    };
    let leak = cfg.f64("config", "leak")?;
    let eps = cfg.f64("config", "eps")?;
    let head_kind: HeadKind = {
        let (line, v) = cfg.raw("config", "head")?;
        v.parse().map_err(|m| ArtifactError::Syntax { line: *line, message: m })?
    };

    let emb = get("embedding")?;
    let embedding = EmbeddingParams {
        alpha0: emb.f64("embedding", "alpha0")?,
        alpha: emb.vec("embedding", "alpha", 4)?.try_into().expect("length checked"),
        gamma: emb.vec("embedding", "gamma", 6)?.try_into().expect("length checked"),
    };

    let proj = get("projection")?;
    let projection = ProjectionParams {
        w_q: proj.matrix("projection", "w_q", d_h, DIM)?,
        w_k: proj.matrix("projection", "w_k", d_h, DIM)?,
        w_v: proj.matrix("projection", "w_v", d_h, DIM)?,
        leak,
        eps,
        feature_map,
    };

    let head_sec = get("head")?;
    let head = match head_kind {
        HeadKind::Linear => HeadParams::Linear {
            w_out: head_sec.vec("head", "w_out", d_h)?,
            b_out: head_sec.f64("head", "b_out")?,
        },
        HeadKind::Mlp => {
            let hidden = head_sec
                .matrices
                .get("w1")
                .map(|m| m.rows)
                .ok_or_else(|| ArtifactError::Missing { section: "head".into(), key: "w1".into() })?;
            HeadParams::Mlp {
                w1: head_sec.matrix("head", "w1", hidden, d_h)?,
                b1: head_sec.vec("head", "b1", hidden)?,
                w2: head_sec.vec("head", "w2", hidden)?,
                b2: head_sec.f64("head", "b2")?,
            }
        }
    };

    let params = ModelParams { embedding, projection, head, lookback };
    params.validate().map_err(|e| ArtifactError::Dimension(e.to_string()))?;
    Ok(params)
}

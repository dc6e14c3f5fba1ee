//! Field dumps (`QSSFIELD v1`, text and raw) and PGM slices.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::field::{Field, FieldError, Grid};

pub const MAGIC: &str = "QSSFIELD";
pub const VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Os { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed header: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("{path}: expected {expected} values, found {found}")]
    Count { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: bad value `{token}`")]
    Value { path: PathBuf, token: String },
    #[error("{path}: {source}")]
    Field { path: PathBuf, source: FieldError },
}

fn os(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Os { path: path.to_path_buf(), source }
}

/// Parsed header line.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub grid: Grid,
    pub component: String,
}

impl Header {
    pub fn line(&self) -> String {
        format!(
            "{MAGIC} {VERSION} {} {} {} {}",
            self.grid.dims(),
            self.grid.points_per_axis(),
            self.grid.half_extent(),
            self.component
        )
    }

    fn parse(line: &str, path: &Path) -> Result<Self, IoError> {
        let bad = |reason: &str| IoError::Header { path: path.to_path_buf(), reason: reason.to_string() };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 6 {
            return Err(bad("expected `QSSFIELD v1 N n L component`"));
        }
        if tok[0] != MAGIC || tok[1] != VERSION {
            return Err(bad("unknown magic or version"));
        }
        let dims: usize = tok[2].parse().map_err(|_| bad("N is not an integer"))?;
        let n: usize = tok[3].parse().map_err(|_| bad("n is not an integer"))?;
        let l: f64 = tok[4].parse().map_err(|_| bad("L is not a number"))?;
        let grid = Grid::new(dims, l, n).map_err(|e| bad(&e.to_string()))?;
        Ok(Header { grid, component: tok[5].to_string() })
    }
}

pub fn write_text(path: &Path, field: &Field, component: &str) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(os(path))?;
    let mut w = BufWriter::new(file);
    let header = Header { grid: *field.grid(), component: component.to_string() };
    writeln!(w, "{}", header.line()).map_err(os(path))?;
    for v in field.values() {
        writeln!(w, "{v:e}").map_err(os(path))?;
    }
    w.flush().map_err(os(path))
}

pub fn read_text(path: &Path) -> Result<(Field, Header), IoError> {
    let text = fs::read_to_string(path).map_err(os(path))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let header = Header::parse(first, path)?;
    let values = rest
        .split_whitespace()
        .map(|tok| tok.parse::<f64>().map_err(|_| IoError::Value { path: path.to_path_buf(), token: tok.to_string() }))
        .collect::<Result<Vec<_>, _>>()?;
    finish(path, header, values)
}

fn finish(path: &Path, header: Header, values: Vec<f64>) -> Result<(Field, Header), IoError> {
    if values.len() != header.grid.len() {
        return Err(IoError::Count { path: path.to_path_buf(), expected: header.grid.len(), found: values.len() });
    }
    let field =
        Field::new(header.grid, values).map_err(|source| IoError::Field { path: path.to_path_buf(), source })?;
    Ok((field, header))
}

/// Path of the header sidecar for a raw dump.
pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("hdr")
}

/// Little-endian `f64` values at `path`, header line in the `.hdr` sidecar.
pub fn write_raw(path: &Path, field: &Field, component: &str) -> Result<(), IoError> {
    let header = Header { grid: *field.grid(), component: component.to_string() };
    let hdr = sidecar(path);
    fs::write(&hdr, format!("{}\n", header.line())).map_err(os(&hdr))?;
    let bytes: Vec<u8> = field.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(os(path))
}

pub fn read_raw(path: &Path) -> Result<(Field, Header), IoError> {
    let hdr = sidecar(path);
    let text = fs::read_to_string(&hdr).map_err(os(&hdr))?;
    let header = Header::parse(text.lines().next().unwrap_or(""), &hdr)?;
    let bytes = fs::read(path).map_err(os(path))?;
    if bytes.len() % 8 != 0 {
        return Err(IoError::Count { path: path.to_path_buf(), expected: header.grid.len() * 8, found: bytes.len() });
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    finish(path, header, values)
}

/// Reads either variant: raw when a `.hdr` sidecar exists next to a
/// non-text file, text otherwise.
pub fn read_any(path: &Path) -> Result<(Field, Header), IoError> {
    let is_raw = path.extension().is_some_and(|e| e == "bin") && sidecar(path).exists();
    if is_raw {
        read_raw(path)
    } else {
        read_text(path)
    }
}

/// Sign map of the `(x₁, x₂)` plane through the center of the remaining
/// axes: 0 negative, 255 positive, 128 within `eps` of zero. Row `j`
/// holds `x₂` index `n−1−j` so that `x₂` points up.
pub fn mid_plane_pgm(field: &Field, eps: f64) -> Vec<u8> {
    let grid = field.grid();
    let n = grid.points_per_axis();
    let c = grid.center_index();
    let mut multi = vec![c; grid.dims()];
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    for row in 0..n {
        for col in 0..n {
            multi[0] = col;
            multi[1] = n - 1 - row;
            let v = field.values()[grid.flatten(&multi)];
            out.push(if v > eps {
                255
            } else if v < -eps {
                0
            } else {
                128
            });
        }
    }
    out
}

pub fn write_pgm(path: &Path, field: &Field, eps: f64) -> Result<(), IoError> {
    fs::write(path, mid_plane_pgm(field, eps)).map_err(os(path))
}

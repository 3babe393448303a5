//! Matrix Market reader and writer for real dense (`array`) and sparse
//! (`coordinate`) matrices, `general` or `symmetric`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bayesbt_core::DenseMatrix;

use crate::error::{CliError, CliResult};

/// A parse failure with the 1-based line it occurred on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MtxError {
    pub line: usize,
    pub message: String,
}

impl MtxError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Array,
    Coordinate,
}

pub fn read_mtx(path: &Path) -> CliResult<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_mtx(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line,
        message: e.message,
    })
}

pub fn parse_mtx(text: &str) -> Result<DenseMatrix, MtxError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| MtxError::new(1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
        let found = header.split_whitespace().next().unwrap_or("");
        return Err(MtxError::new(
            1,
            format!("expected `%%MatrixMarket` banner, found `{found}`"),
        ));
    }
    let field = |i: usize, what: &str| {
        tokens
            .get(i)
            .map(String::as_str)
            .ok_or_else(|| MtxError::new(1, format!("missing {what} in banner")))
    };
    if field(1, "object")? != "matrix" {
        return Err(MtxError::new(
            1,
            format!("unsupported object `{}`", field(1, "object")?),
        ));
    }
    let layout = match field(2, "format")? {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(MtxError::new(1, format!("unsupported format `{other}`"))),
    };
    match field(3, "field")? {
        "real" | "double" | "integer" => {}
        other => return Err(MtxError::new(1, format!("unsupported field `{other}`"))),
    }
    let symmetric = match field(4, "symmetry")? {
        "general" => false,
        "symmetric" => true,
        other => return Err(MtxError::new(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or_else(|| MtxError::new(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| MtxError::new(size_line, format!("invalid size token `{t}`")))
        })
        .collect::<Result<_, _>>()?;
    let expected = if layout == Layout::Array { 2 } else { 3 };
    if dims.len() != expected {
        return Err(MtxError::new(
            size_line,
            format!("expected {expected} size entries, found {}", dims.len()),
        ));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if symmetric && rows != cols {
        return Err(MtxError::new(size_line, "symmetric matrix must be square"));
    }
    let mut m = DenseMatrix::zeros(rows, cols);

    match layout {
        Layout::Array => {
            // Column-major; symmetric files store the lower triangle only.
            let slots: Vec<(usize, usize)> = (0..cols)
                .flat_map(|j| (0..rows).map(move |i| (i, j)))
                .filter(|&(i, j)| !symmetric || i >= j)
                .collect();
            let mut filled = 0;
            for (line, text) in body {
                for tok in text.split_whitespace() {
                    let &(i, j) = slots
                        .get(filled)
                        .ok_or_else(|| MtxError::new(line, format!("unexpected extra value `{tok}`")))?;
                    let v = parse_value(tok, line)?;
                    m[(i, j)] = v;
                    if symmetric {
                        m[(j, i)] = v;
                    }
                    filled += 1;
                }
            }
            if filled != slots.len() {
                return Err(MtxError::new(
                    text.lines().count(),
                    format!("expected {} values, found {filled}", slots.len()),
                ));
            }
        }
        Layout::Coordinate => {
            let nnz = dims[2];
            let mut seen = 0;
            for (line, text) in body {
                let toks: Vec<&str> = text.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(MtxError::new(
                        line,
                        format!("expected `row col value`, found `{}`", text.trim()),
                    ));
                }
                let index = |t: &str, bound: usize| -> Result<usize, MtxError> {
                    let k: usize = t
                        .parse()
                        .map_err(|_| MtxError::new(line, format!("invalid index `{t}`")))?;
                    if k == 0 || k > bound {
                        return Err(MtxError::new(line, format!("index `{t}` out of range 1..={bound}")));
                    }
                    Ok(k - 1)
                };
                let i = index(toks[0], rows)?;
                let j = index(toks[1], cols)?;
                let v = parse_value(toks[2], line)?;
                m[(i, j)] += v;
                if symmetric && i != j {
                    m[(j, i)] += v;
                }
                seen += 1;
                if seen > nnz {
                    return Err(MtxError::new(line, format!("more than the declared {nnz} entries")));
                }
            }
            if seen != nnz {
                return Err(MtxError::new(
                    text.lines().count(),
                    format!("declared {nnz} entries, found {seen}"),
                ));
            }
        }
    }
    Ok(m)
}

fn parse_value(tok: &str, line: usize) -> Result<f64, MtxError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| MtxError::new(line, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(MtxError::new(line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

/// Dense `array real general` text with round-trip precision.
pub fn format_mtx(m: &DenseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for v in m.iter() {
        let _ = writeln!(out, "{v:.16e}");
    }
    out
}

pub fn write_mtx(path: &Path, m: &DenseMatrix) -> CliResult<()> {
    fs::write(path, format_mtx(m)).map_err(|e| CliError::io(path, e))
}

//! LIBSVM / svmlight text format: one data point per line,
//! `label idx:val idx:val ...` with 1-based, strictly increasing feature indices.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{CsrMatrix, Result, SparseError};

/// Parses LIBSVM text into a feature-major `d x n` matrix and its labels.
///
/// Blank lines are skipped. `d` is `expected_features` when given, otherwise
/// the largest index seen. Labels are kept as real values.
pub fn parse_libsvm<R: BufRead>(
    reader: R,
    expected_features: Option<usize>,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let mut labels = Vec::new();
    // (feature row, data column, value) in column-major order
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_feature = 0usize;

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| SparseError::Parse {
            line: line_no,
            message,
        };
        let mut tokens = line.split_ascii_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(format!("malformed label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(parse_err(format!("non-finite label `{label_tok}`")));
        }
        let column = labels.len();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(format!("malformed token `{tok}`")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| parse_err(format!("malformed feature index `{idx_s}`")))?;
            let val: f64 = val_s
                .parse()
                .map_err(|_| parse_err(format!("malformed value `{val_s}`")))?;
            if idx == 0 {
                return Err(parse_err("feature indices are 1-based; got 0".into()));
            }
            if idx <= prev {
                return Err(parse_err(format!(
                    "feature index {idx} does not increase (previous {prev})"
                )));
            }
            if let Some(d) = expected_features {
                if idx > d {
                    return Err(parse_err(format!(
                        "feature index {idx} exceeds expected feature count {d}"
                    )));
                }
            }
            if !val.is_finite() {
                return Err(parse_err(format!("non-finite value `{val_s}`")));
            }
            prev = idx;
            max_feature = max_feature.max(idx);
            entries.push((idx - 1, column, val));
        }
        labels.push(label);
    }

    let n = labels.len();
    let d = expected_features.unwrap_or(max_feature);
    let mut row_offsets = vec![0usize; d + 1];
    for &(r, _, _) in &entries {
        row_offsets[r + 1] += 1;
    }
    for r in 0..d {
        row_offsets[r + 1] += row_offsets[r];
    }
    let mut next = row_offsets.clone();
    let mut col_indices = vec![0usize; entries.len()];
    let mut values = vec![0.0; entries.len()];
    // entries are column-ordered, so each row receives increasing columns
    for &(r, c, v) in &entries {
        let slot = next[r];
        col_indices[slot] = c;
        values[slot] = v;
        next[r] += 1;
    }
    Ok((CsrMatrix::from_parts(d, n, row_offsets, col_indices, values), labels))
}

pub fn read_libsvm_file(
    path: impl AsRef<Path>,
    expected_features: Option<usize>,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let file = File::open(path.as_ref())
        .map_err(|e| SparseError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_libsvm(BufReader::new(file), expected_features)
}

/// Writes `x` (feature-major) and `labels` in LIBSVM format. Values use the
/// shortest round-trip decimal form, so parsing the output reproduces them bit-exactly.
pub fn write_libsvm<W: Write>(x: &CsrMatrix, labels: &[f64], mut out: W) -> Result<()> {
    if labels.len() != x.n_cols() {
        return Err(SparseError::DimensionMismatch {
            expected: x.n_cols(),
            actual: labels.len(),
        });
    }
    let by_point = x.transpose();
    for (j, label) in labels.iter().enumerate() {
        write!(out, "{label}")?;
        let (feats, vals) = by_point.row(j);
        for (&f, &v) in feats.iter().zip(vals) {
            write!(out, " {}:{}", f + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

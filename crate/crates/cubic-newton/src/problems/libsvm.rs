//! Reader for the LibSVM text format: one sample per line,
//! `label index:value index:value ...` with 1-based, strictly ascending
//! indices. Features are densified; missing indices are zero.

use super::Dataset;
use nalgebra::{DMatrix, DVector};
use std::io::BufRead;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: empty label field")]
    MissingLabel { line: usize },
    #[error("line {line}: malformed token '{token}'")]
    BadToken { line: usize, token: String },
    #[error("line {line}: feature index {index} is not >= 1")]
    IndexUnderflow { line: usize, index: i64 },
    #[error("line {line}: feature index {index} does not ascend (previous {previous})")]
    NonAscendingIndex { line: usize, index: usize, previous: usize },
    #[error("line {line}: feature index {index} exceeds the declared dimension {dim}")]
    IndexOverflow { line: usize, index: usize, dim: usize },
    #[error("input has no samples")]
    Empty,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse result: the dense dataset plus any advisory records produced while
/// normalizing labels.
#[derive(Debug)]
pub struct ParsedData {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

/// Parses LibSVM text with the dimension inferred from the largest index.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<ParsedData, ParseError> {
    parse_libsvm_with_dim(reader, None)
}

/// Parses LibSVM text; `dim` overrides the inferred feature count.
pub fn parse_libsvm_with_dim<R: BufRead>(
    reader: R,
    dim: Option<usize>,
) -> Result<ParsedData, ParseError> {
    let mut labels: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let label_tok = tokens.next().ok_or(ParseError::MissingLabel { line: lineno })?;
        let label: f64 = label_tok
            .parse()
            .map_err(|_| ParseError::BadToken { line: lineno, token: label_tok.to_string() })?;

        let mut row = Vec::new();
        let mut previous = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok
                .split_once(':')
                .ok_or_else(|| ParseError::BadToken { line: lineno, token: tok.to_string() })?;
            let raw_index: i64 = idx_str
                .parse()
                .map_err(|_| ParseError::BadToken { line: lineno, token: tok.to_string() })?;
            if raw_index < 1 {
                return Err(ParseError::IndexUnderflow { line: lineno, index: raw_index });
            }
            let index = raw_index as usize;
            if index <= previous {
                return Err(ParseError::NonAscendingIndex { line: lineno, index, previous });
            }
            let value: f64 = val_str
                .parse()
                .map_err(|_| ParseError::BadToken { line: lineno, token: tok.to_string() })?;
            if let Some(d) = dim {
                if index > d {
                    return Err(ParseError::IndexOverflow { line: lineno, index, dim: d });
                }
            }
            previous = index;
            max_index = max_index.max(index);
            row.push((index - 1, value));
        }
        labels.push(label);
        rows.push(row);
    }

    if labels.is_empty() {
        return Err(ParseError::Empty);
    }

    let d = dim.unwrap_or(max_index).max(1);
    let n = labels.len();
    let mut features = DMatrix::zeros(n, d);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[(i, j)] = v;
        }
    }

    let mut warnings = Vec::new();
    // {0, 1} labels are only recognized when a literal 0 is present;
    // otherwise {+1} alone already follows the {-1, +1} convention.
    let zero_one = labels.iter().any(|&b| b == 0.0)
        && labels.iter().all(|&b| b == 0.0 || b == 1.0);
    let label_vec = if zero_one {
        let zeros = labels.iter().filter(|&&b| b == 0.0).count();
        warnings.push(format!(
            "labels in {{0, 1}} remapped to {{-1, +1}} ({zeros} zeros, {} ones)",
            n - zeros
        ));
        DVector::from_iterator(n, labels.iter().map(|&b| if b == 0.0 { -1.0 } else { 1.0 }))
    } else {
        DVector::from_vec(labels)
    };

    let dataset = Dataset::new(features, label_vec).map_err(|_| ParseError::Empty)?;
    Ok(ParsedData { dataset, warnings })
}

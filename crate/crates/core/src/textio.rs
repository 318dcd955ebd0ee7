//! Line-oriented text container for numeric artifacts.
//!
//! ```text
//! #curreg <kind> v1
//! key value
//! matrix <name> <rows> <cols>
//! <row 0 values...>
//! ...
//! ```
//!
//! Floats are written with the shortest representation that parses back to
//! the identical bit pattern, so a write/read cycle is exact.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextFormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("missing matrix `{0}`")]
    MissingMatrix(String),
    #[error("expected artifact kind `{expected}`, found `{found}`")]
    WrongKind { expected: String, found: String },
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Debug, Default)]
pub struct TextWriter {
    buf: String,
}

impl TextWriter {
    pub fn new(kind: &str) -> Self {
        Self {
            buf: format!("#curreg {kind} v1\n"),
        }
    }

    pub fn key(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        debug_assert!(!key.contains(char::is_whitespace));
        self.buf.push_str(&format!("{key} {value}\n"));
        self
    }

    pub fn key_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.key(key, fmt_f64(value))
    }

    pub fn key_f64s(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let joined: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        self.key(key, joined.join(" "))
    }

    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> &mut Self {
        self.buf
            .push_str(&format!("matrix {name} {} {}\n", m.nrows(), m.ncols()));
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
            self.buf.push_str(&row.join(" "));
            self.buf.push('\n');
        }
        self
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

#[derive(Debug)]
pub struct TextDocument {
    pub kind: String,
    keys: BTreeMap<String, String>,
    matrices: BTreeMap<String, DMatrix<f64>>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> TextFormatError {
    TextFormatError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, TextFormatError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid number `{tok}`")))
}

impl TextDocument {
    pub fn parse(text: &str) -> Result<Self, TextFormatError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("#curreg") {
            return Err(parse_err(1, "missing `#curreg` header"));
        }
        let kind = parts
            .next()
            .ok_or_else(|| parse_err(1, "missing artifact kind"))?
            .to_string();
        let mut keys = BTreeMap::new();
        let mut matrices = BTreeMap::new();
        while let Some((ln, line)) = lines.next() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            if key == "matrix" {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(parse_err(ln, "malformed matrix header"));
                }
                let rows: usize = toks[1]
                    .parse()
                    .map_err(|_| parse_err(ln, "bad row count"))?;
                let cols: usize = toks[2]
                    .parse()
                    .map_err(|_| parse_err(ln, "bad column count"))?;
                let mut m = DMatrix::zeros(rows, cols);
                for i in 0..rows {
                    let (rl, row) = lines
                        .next()
                        .ok_or_else(|| parse_err(ln, format!("matrix `{}` truncated", toks[0])))?;
                    let vals: Vec<&str> = row.split_whitespace().collect();
                    if vals.len() != cols {
                        return Err(parse_err(
                            rl,
                            format!("expected {cols} values, found {}", vals.len()),
                        ));
                    }
                    for (j, v) in vals.iter().enumerate() {
                        m[(i, j)] = parse_f64(v, rl)?;
                    }
                }
                matrices.insert(toks[0].to_string(), m);
            } else {
                keys.insert(key.to_string(), rest.trim().to_string());
            }
        }
        Ok(Self {
            kind,
            keys,
            matrices,
        })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), TextFormatError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(TextFormatError::WrongKind {
                expected: kind.into(),
                found: self.kind.clone(),
            })
        }
    }

    pub fn get(&self, key: &str) -> Result<&str, TextFormatError> {
        self.keys
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| TextFormatError::MissingKey(key.into()))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, TextFormatError> {
        parse_f64(self.get(key)?, 0)
    }

    pub fn get_f64s(&self, key: &str) -> Result<Vec<f64>, TextFormatError> {
        self.get(key)?
            .split_whitespace()
            .map(|t| parse_f64(t, 0))
            .collect()
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, TextFormatError> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| parse_err(0, format!("key `{key}`: invalid integer `{v}`")))
    }

    pub fn matrix(&self, name: &str) -> Result<&DMatrix<f64>, TextFormatError> {
        self.matrices
            .get(name)
            .ok_or_else(|| TextFormatError::MissingMatrix(name.into()))
    }

    pub fn has_matrix(&self, name: &str) -> bool {
        self.matrices.contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrix_round_trip_is_bit_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6)) {
            let m = DMatrix::from_row_slice(2, 3, &vals);
            let mut w = TextWriter::new("test");
            w.key_f64("scale", vals[0]).matrix("m", &m);
            let doc = TextDocument::parse(&w.finish()).unwrap();
            let back = doc.matrix("m").unwrap();
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(doc.get_f64("scale").unwrap().to_bits(), vals[0].to_bits());
        }
    }

    #[test]
    fn truncated_matrix_is_reported() {
        let text = "#curreg test v1\nmatrix m 2 2\n1 2\n";
        assert!(TextDocument::parse(text).is_err());
    }
}

//! Matrix and coreset files.
//!
//! Matrices are stored either as a little-endian binary blob
//!
//! ```text
//! "DBCM" | u32 version = 1 | u64 rows | u64 cols | rows·cols f64, row-major
//! ```
//!
//! or as headerless comma-separated text. Readers detect the format from the
//! leading magic bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"DBCM";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 8 + 8;

pub fn encode_binary(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Parse("missing DBCM header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked above"));
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported DBCM version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("length checked above"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("length checked above"));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| Error::Parse("DBCM shape overflows".into()))?;
    let payload = &bytes[HEADER..];
    if payload.len() != count.saturating_mul(8) {
        return Err(Error::Parse(format!(
            "DBCM declares {rows}x{cols} values but carries {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks_exact yields 8 bytes")))
        .collect();
    DenseMatrix::from_vec(rows as usize, cols as usize, data)
}

/// One `f64` per field with 17 significant digits, so values round-trip.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn encode_csv(m: &DenseMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&v| format_f64(v)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: cannot parse {:?} as a number", lineno + 1, f.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    DenseMatrix::from_rows(&rows)
}

pub fn decode_auto(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse("file is neither DBCM nor UTF-8 text".into()))?;
        decode_csv(text)
    }
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    decode_auto(&fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

pub fn write_matrix(path: &Path, m: &DenseMatrix, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Binary => fs::write(path, encode_binary(m))?,
        MatrixFormat::Csv => fs::write(path, encode_csv(m))?,
    }
    Ok(())
}

/// `index,weight` lines for the nonzero weights.
pub fn write_coreset(path: &Path, weights: &[f64]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            writeln!(f, "{i},{}", format_f64(w))?;
        }
    }
    Ok(())
}

/// Reads `index,weight` lines into a dense weight vector of length `n`.
pub fn read_coreset(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut w = vec![0.0; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("coreset line {}: expected index,weight", lineno + 1)))?;
        let i: usize = a
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("coreset line {}: bad index {:?}", lineno + 1, a.trim())))?;
        let v: f64 = b
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("coreset line {}: bad weight {:?}", lineno + 1, b.trim())))?;
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        w[i] += v;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..35).map(|_| (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-30..30))).collect();
        DenseMatrix::from_vec(7, 5, data).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let m = random_matrix(1);
        let back = decode_auto(&encode_binary(&m)).unwrap();
        assert_eq!(back.as_slice(), m.as_slice());
        assert_eq!((back.rows(), back.cols()), (7, 5));
    }

    #[test]
    fn csv_round_trip() {
        let m = random_matrix(2);
        let back = decode_auto(encode_csv(&m).as_bytes()).unwrap();
        for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn bad_inputs() {
        let m = random_matrix(3);
        let mut bytes = encode_binary(&m);
        bytes.pop();
        assert!(matches!(decode_auto(&bytes), Err(Error::Parse(_))));
        assert!(decode_csv("1,2\n3\n").is_err());
        assert!(decode_csv("1,x\n").is_err());
        assert!(decode_csv("\n\n").is_err());
        let mut v2 = encode_binary(&m);
        v2[4] = 2;
        assert!(decode_binary(&v2).is_err());
    }

    #[test]
    fn coreset_round_trip() {
        let dir = std::env::temp_dir().join(format!("dbc-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("c.csv");
        let w = vec![0.0, 0.25, 0.0, 0.75];
        write_coreset(&p, &w).unwrap();
        assert_eq!(read_coreset(&p, 4).unwrap(), w);
        assert!(read_coreset(&p, 3).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }
}

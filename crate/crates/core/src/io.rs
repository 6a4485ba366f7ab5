//! Plain-text formats: dense CSV matrices, single-column signals, edge lists,
//! and the fixed-precision number formatting used by every CSV writer.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Significant digits for every floating-point value written to CSV.
pub const SIG_DIGITS: usize = 12;

/// Formats `x` with [`SIG_DIGITS`] significant digits, `%g` style: fixed
/// notation for moderate exponents, scientific otherwise, trailing zeros
/// trimmed. Non-finite values print as `inf`, `-inf` and `NA`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_f64(field: &str, context: impl FnOnce() -> String) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::parse(context(), e))
}

/// Reads a headerless, comma-separated dense matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, f)| {
                parse_f64(f, || format!("{}:{}:{}", path.display(), lineno + 1, col + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    format!("{}:{}", path.display(), lineno + 1),
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a dense matrix, one row per line, no header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes the upper triangle (diagonal included) of a symmetric matrix as
/// `i,j,weight` lines with 1-indexed nodes, skipping zero weights.
pub fn write_edge_list(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "i,j,weight").map_err(io_err)?;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let x = m[(i, j)];
            if x != 0.0 {
                writeln!(w, "{},{},{}", i + 1, j + 1, fmt_f64(x)).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

/// Reads an `i,j,weight` edge list into an `n x n` symmetric matrix.
pub fn read_edge_list(path: &Path, n: usize) -> Result<DMatrix<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut m = DMatrix::zeros(n, n);
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let ctx = || format!("{} record {}", path.display(), k + 1);
        if rec.len() != 3 {
            return Err(Error::parse(ctx(), "expected i,j,weight"));
        }
        let idx = |f: &str| -> Result<usize> {
            let v: usize = f.trim().parse().map_err(|e| Error::parse(ctx(), e))?;
            if v == 0 || v > n {
                return Err(Error::parse(ctx(), format!("node {v} outside 1..={n}")));
            }
            Ok(v - 1)
        };
        let (i, j) = (idx(&rec[0])?, idx(&rec[1])?);
        let x = parse_f64(&rec[2], ctx)?;
        m[(i, j)] = x;
        m[(j, i)] = x;
    }
    Ok(m)
}

/// Writes a signal as a single-column CSV with a `value` header.
pub fn write_signal_csv(path: &Path, x: &DVector<f64>) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "value").map_err(io_err)?;
    for &v in x.iter() {
        writeln!(w, "{}", fmt_f64(v)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_signal_csv(path: &Path) -> Result<DVector<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut values = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e))?;
        values.push(parse_f64(&rec[0], || format!("{} row {}", path.display(), k + 1))?);
    }
    Ok(DVector::from_vec(values))
}

/// Writes a header and pre-formatted rows through the `csv` writer.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = create(path)?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::parse(path.display().to_string(), e);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::parse(path.display().to_string(), e))
}

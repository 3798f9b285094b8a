//! CSV matrices and JSON documents.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every finite `f64` exactly. JSON reports keep the field
//! order of the serialised struct.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::algebra::{Element, ProbAlgebra};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn parse_err(path: &Path, row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        col,
        msg: msg.into(),
    }
}

/// Raw CSV cells, with 1-based line numbers. Blank lines are skipped.
fn read_cells(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, 0, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows.len() + 1);
        let cells: Vec<String> = rec.iter().map(str::to_owned).collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push((line, cells));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, 0, "no rows"));
    }
    Ok(rows)
}

fn parse_real(path: &Path, row: usize, col: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| parse_err(path, row, col, format!("'{cell}' is not a number")))
}

fn rectangular<T>(path: &Path, rows: Vec<(usize, Vec<T>)>) -> Result<(usize, usize, Vec<T>)> {
    let ncols = rows[0].1.len();
    let nrows = rows.len();
    let mut flat = Vec::with_capacity(nrows * ncols);
    for (line, cells) in rows {
        if cells.len() != ncols {
            return Err(parse_err(
                path,
                line,
                cells.len().min(ncols) + 1,
                format!("expected {ncols} columns, found {}", cells.len()),
            ));
        }
        flat.extend(cells);
    }
    Ok((nrows, ncols, flat))
}

/// Reads a real matrix; row `r` of the file is row `r` of the matrix.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let rows = read_cells(path)?;
    let parsed = rows
        .into_iter()
        .map(|(line, cells)| {
            let vals = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| parse_real(path, line, c + 1, cell))
                .collect::<Result<Vec<_>>>()?;
            Ok((line, vals))
        })
        .collect::<Result<Vec<_>>>()?;
    let (r, c, flat) = rectangular(path, parsed)?;
    Ok(DMatrix::from_row_slice(r, c, &flat))
}

/// Reads a matrix whose first row may hold labels instead of numbers.
///
/// The first row is taken as labels only when none of its cells parse as a number.
pub fn load_labelled_matrix_csv(path: impl AsRef<Path>) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let path = path.as_ref();
    let mut rows = read_cells(path)?;
    let labels = if rows[0].1.iter().all(|c| c.parse::<f64>().is_err()) {
        Some(rows.remove(0).1)
    } else {
        None
    };
    if rows.is_empty() {
        return Err(parse_err(path, 0, 0, "no rows"));
    }
    let parsed = rows
        .into_iter()
        .map(|(line, cells)| {
            let vals = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| parse_real(path, line, c + 1, cell))
                .collect::<Result<Vec<_>>>()?;
            Ok((line, vals))
        })
        .collect::<Result<Vec<_>>>()?;
    let (r, c, flat) = rectangular(path, parsed)?;
    let m = DMatrix::from_row_slice(r, c, &flat);
    if let Some(l) = &labels {
        if l.len() != c {
            return Err(parse_err(path, 1, 1, format!("{} labels for {c} columns", l.len())));
        }
    }
    Ok((labels, m))
}

/// Parses `re`, `re+imi`, `re-imi` or `imi` (whitespace ignored).
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix(['i', 'j']) else {
        return s.parse().ok().map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => x.parse().ok()?,
    };
    Some(Complex64::new(re.parse().ok()?, im))
}

/// Reads a complex matrix with cells like `0.5-1.25i`.
pub fn load_complex_matrix_csv(path: impl AsRef<Path>) -> Result<CMatrix> {
    let path = path.as_ref();
    let rows = read_cells(path)?;
    let parsed = rows
        .into_iter()
        .map(|(line, cells)| {
            let vals = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    parse_complex(cell)
                        .ok_or_else(|| parse_err(path, line, c + 1, format!("'{cell}' is not a complex number")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((line, vals))
        })
        .collect::<Result<Vec<_>>>()?;
    let (r, c, flat) = rectangular(path, parsed)?;
    Ok(CMatrix::from_row_slice(r, c, &flat))
}

/// Reads an element of `alg`: one row of `N` values for the function model,
/// `n` rows of `n` entries for the matrix model.
pub fn load_element_csv(path: impl AsRef<Path>, alg: &ProbAlgebra) -> Result<Element> {
    let path = path.as_ref();
    let m = load_complex_matrix_csv(path)?;
    let elem = if alg.is_function_model() {
        if m.nrows() != 1 {
            return Err(Error::Format {
                path: path.display().to_string(),
                msg: format!("function-model element must be one row, found {}", m.nrows()),
            });
        }
        Element::from_complex(m.row(0).iter().copied().collect())
    } else {
        Element::Matrix(m)
    };
    alg.check_member(&elem)?;
    Ok(elem)
}

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:.16e}{sign}{:.16e}i", z.re, z.im.abs())
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_f64(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_labelled_matrix_csv(path: impl AsRef<Path>, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_f64(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_complex_matrix_csv(path: impl AsRef<Path>, m: &CMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_complex(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Pretty JSON formatter that writes floats with 17 significant digits
/// and non-finite floats as `null`.
pub struct ReportFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for ReportFormatter<'_> {
    fn default() -> Self {
        ReportFormatter {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl Formatter for ReportFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(format_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn report_to_string<T: Serialize>(report: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ReportFormatter::default());
    report
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidInput(format!("cannot serialise report: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_report_json<T: Serialize>(path: impl AsRef<Path>, report: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_to_string(report)?).map_err(|e| io_err(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        row: e.line(),
        col: e.column(),
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_fn(5, 5, |r, c| ((r * 7 + c) as f64).sin() * 10f64.powi(r as i32 - 2) + 1.0 / 3.0);
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(load_matrix_csv(&p).unwrap(), m);
    }

    #[test]
    fn parse_error_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1,2,3\n4,5,6\n7,x,9\n").unwrap();
        let err = load_matrix_csv(&p).unwrap_err();
        assert!(err.to_string().contains("row 3, col 2"), "{err}");
    }

    #[test]
    fn empty_file_has_no_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        fs::write(&p, "").unwrap();
        assert!(load_matrix_csv(&p).unwrap_err().to_string().contains("no rows"));
    }

    #[test]
    fn ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ragged.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(load_matrix_csv(&p), Err(Error::Parse { row: 2, .. })));
    }

    #[test]
    fn labels_detected_only_when_fully_non_numeric() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lab.csv");
        fs::write(&p, "a,b\n1,2\n3,4\n").unwrap();
        let (labels, m) = load_labelled_matrix_csv(&p).unwrap();
        assert_eq!(labels.unwrap(), vec!["a", "b"]);
        assert_eq!(m.shape(), (2, 2));
        fs::write(&p, "1,b\n1,2\n").unwrap();
        assert!(load_labelled_matrix_csv(&p).is_err());
    }

    #[test]
    fn complex_cells() {
        assert_eq!(parse_complex("0.5+0.25i"), Some(Complex64::new(0.5, 0.25)));
        assert_eq!(parse_complex("1-2i"), Some(Complex64::new(1.0, -2.0)));
        assert_eq!(parse_complex("-2.5i"), Some(Complex64::new(0.0, -2.5)));
        assert_eq!(parse_complex("3"), Some(Complex64::new(3.0, 0.0)));
        assert_eq!(parse_complex("i"), Some(Complex64::new(0.0, 1.0)));
        assert_eq!(parse_complex("1e-3+2e-4i"), Some(Complex64::new(1e-3, 2e-4)));
        assert_eq!(parse_complex("-1e+2-3E-1i"), Some(Complex64::new(-100.0, -0.3)));
        assert_eq!(parse_complex("abc"), None);
        assert_eq!(parse_complex(""), None);
    }

    #[test]
    fn report_uses_17_digits_and_field_order() {
        #[derive(Serialize)]
        struct R {
            zeta: f64,
            alpha: Vec<f64>,
            bad: f64,
        }
        let s = report_to_string(&R {
            zeta: 0.1,
            alpha: vec![1.5],
            bad: f64::NAN,
        })
        .unwrap();
        assert!(s.find("zeta").unwrap() < s.find("alpha").unwrap());
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("\"bad\": null"));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["zeta"].as_f64(), Some(0.1));
    }

    proptest! {
        #[test]
        fn float_text_roundtrip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
            let z = Complex64::new(x, -x / 3.0);
            prop_assert_eq!(parse_complex(&format_complex(z)), Some(z));
        }
    }
}

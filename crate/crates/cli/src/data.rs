//! CSV ingestion and emission.
//!
//! Files are row-major with one observation per row; inputs are returned as
//! `d × n` matrices with one observation per column, which is the
//! orientation the models expect.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gp_core::{DMatrix, DVector};

use crate::CliError;

/// A column selected by header name or by 1-based position.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Name(String),
    Index(usize),
    /// The rightmost column.
    Last,
}

impl Column {
    /// Integers select by position unless the header has a column of that name.
    pub fn parse(text: &str) -> Column {
        match text.trim().parse::<usize>() {
            Ok(i) if i >= 1 => Column::Index(i),
            _ => Column::Name(text.trim().to_string()),
        }
    }

    pub fn parse_list(text: &str) -> Vec<Column> {
        text.split(',').filter(|s| !s.trim().is_empty()).map(Column::parse).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Option<DVector<f64>>,
    pub x_names: Vec<String>,
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

fn parse_response(cell: &str) -> Option<f64> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "true" => Some(1.0),
        "false" => Some(0.0),
        other => other.parse().ok(),
    }
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let records = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let records: Vec<_> = records.into_iter().filter(|r| !(r.len() == 1 && r[0].is_empty())).collect();
    if records.is_empty() {
        return Err(CliError::Data(format!("{} is empty", path.display())));
    }
    Ok(records)
}

/// Reads inputs and, when `y_col` is given, a response column.
///
/// With no `x_cols`, every column except the response is an input. A header
/// row is detected when a selected cell of the first row is not numeric.
/// Responses may also be written `true`/`false`.
pub fn load_csv(path: &Path, x_cols: &[Column], y_col: Option<&Column>) -> Result<Dataset, CliError> {
    let records = read_records(path)?;
    let first = &records[0];
    let width = first.len();

    let resolve = |col: &Column| -> Result<usize, CliError> {
        match col {
            Column::Name(name) => first
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| CliError::Data(format!("{}: missing column \"{name}\"", path.display()))),
            Column::Index(i) => {
                let literal = i.to_string();
                let has_header = first.iter().any(|c| parse_number(c).is_none());
                if let Some(pos) = first.iter().position(|c| has_header && c == literal) {
                    return Ok(pos);
                }
                if *i <= width {
                    Ok(i - 1)
                } else {
                    Err(CliError::Data(format!("{}: column {i} requested but rows have {width} columns", path.display())))
                }
            }
            Column::Last => Ok(width - 1),
        }
    };

    let y_idx = y_col.map(&resolve).transpose()?;
    let x_idx: Vec<usize> = if x_cols.is_empty() {
        (0..width).filter(|j| Some(*j) != y_idx).collect()
    } else {
        x_cols.iter().map(&resolve).collect::<Result<_, _>>()?
    };
    if x_idx.is_empty() {
        return Err(CliError::Data(format!("{}: no input columns selected", path.display())));
    }

    let named = x_cols.iter().chain(y_col).any(|c| matches!(c, Column::Name(_)));
    let header = named
        || x_idx.iter().any(|&j| first.get(j).is_some_and(|c| parse_number(c).is_none()))
        || y_idx.is_some_and(|j| first.get(j).is_some_and(|c| parse_response(c).is_none()));
    let col_name = |j: usize| if header { first[j].to_string() } else { format!("{}", j + 1) };

    let body = if header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let n = body.len();
    let d = x_idx.len();
    let mut x = DMatrix::zeros(d, n);
    let mut y = y_idx.map(|_| DVector::zeros(n));
    for (i, rec) in body.iter().enumerate() {
        let row = rec.position().map_or(i + 1 + header as usize, |p| p.line() as usize);
        if rec.len() != width {
            return Err(CliError::Data(format!(
                "{}: row {row} has {} fields, expected {width}",
                path.display(),
                rec.len()
            )));
        }
        for (k, &j) in x_idx.iter().enumerate() {
            x[(k, i)] = parse_number(&rec[j]).filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: non-numeric cell \"{}\" at row {row}, column \"{}\"",
                    path.display(),
                    &rec[j],
                    col_name(j)
                ))
            })?;
        }
        if let (Some(j), Some(y)) = (y_idx, y.as_mut()) {
            y[i] = parse_response(&rec[j]).filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: non-numeric cell \"{}\" at row {row}, column \"{}\"",
                    path.display(),
                    &rec[j],
                    col_name(j)
                ))
            })?;
        }
    }
    let x_names = x_idx.iter().map(|&j| if header { first[j].to_string() } else { format!("x{}", j + 1) }).collect();
    Ok(Dataset { x, y, x_names })
}

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a header and rows of numbers.
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    let io = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Two-sided 95% quantile of the standard normal.
pub const Z95: f64 = 1.95996;

/// Writes the ribbon table `x..., mean, variance, lower95, upper95`.
pub fn write_predictions(
    path: &Path,
    x_names: &[String],
    xs: &DMatrix<f64>,
    mean: &DVector<f64>,
    var: &DVector<f64>,
) -> Result<(), CliError> {
    let mut header = x_names.to_vec();
    header.extend(["mean", "variance", "lower95", "upper95"].map(String::from));
    let rows = (0..xs.ncols()).map(|j| {
        let half = Z95 * var[j].max(0.0).sqrt();
        let mut row: Vec<f64> = xs.column(j).iter().copied().collect();
        row.extend([mean[j], var[j], mean[j] - half, mean[j] + half]);
        row
    });
    write_table(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_is_detected() {
        let f = file("x,y\n1.0,2.0\n");
        let d = load_csv(f.path(), &[], Some(&Column::Name("y".into()))).unwrap();
        assert_eq!(d.x, DMatrix::from_row_slice(1, 1, &[1.0]));
        assert_eq!(d.y.unwrap(), DVector::from_vec(vec![2.0]));
        assert_eq!(d.x_names, vec!["x"]);
    }

    #[test]
    fn headerless_files_keep_every_row() {
        let f = file("1.0,2.0\n3.0,4.0\n");
        let d = load_csv(f.path(), &[Column::Index(1)], Some(&Column::Index(2))).unwrap();
        assert_eq!(d.x, DMatrix::from_row_slice(1, 2, &[1.0, 3.0]));
        assert_eq!(d.y.unwrap().as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn inputs_are_columns() {
        let f = file("a,b,y\n1,2,0\n3,4,1\n5,6,0\n");
        let d = load_csv(f.path(), &Column::parse_list("a,b"), Some(&Column::parse("y"))).unwrap();
        assert_eq!(d.x.shape(), (2, 3));
        assert_eq!(d.x.column(1).as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn boolean_responses() {
        let f = file("x,y\n0.5,true\n1.5,false\n");
        let d = load_csv(f.path(), &[], Some(&Column::parse("y"))).unwrap();
        assert_eq!(d.y.unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn errors_name_row_and_column() {
        let f = file("x,y\n1.0,2.0\n2.0,abc\n");
        let err = load_csv(f.path(), &[], Some(&Column::parse("y"))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("column \"y\""), "{msg}");
        assert!(matches!(err, CliError::Data(_)));

        let err = load_csv(f.path(), &[], Some(&Column::parse("z"))).unwrap_err();
        assert!(err.to_string().contains("missing column \"z\""));

        let empty = file("");
        assert!(load_csv(empty.path(), &[], None).unwrap_err().to_string().contains("empty"));

        let ragged = file("1,2\n3\n");
        assert!(load_csv(ragged.path(), &[], None).is_err());
    }

    #[test]
    fn predictions_round_trip_exactly() {
        let out = tempfile::NamedTempFile::new().unwrap();
        let xs = DMatrix::from_row_slice(1, 3, &[0.1, 1.0 / 3.0, 2.0]);
        let mean = DVector::from_vec(vec![std::f64::consts::PI, -1e-300, 12345.678901234567]);
        let var = DVector::from_vec(vec![0.25, 1e-17, 2.0 / 7.0]);
        write_predictions(out.path(), &["x".into()], &xs, &mean, &var).unwrap();
        let back = load_csv(out.path(), &[Column::parse("x")], Some(&Column::parse("mean"))).unwrap();
        assert_eq!(back.x, xs);
        assert_eq!(back.y.unwrap(), mean);
        let var_back = load_csv(out.path(), &[Column::parse("x")], Some(&Column::parse("variance"))).unwrap();
        assert_eq!(var_back.y.unwrap(), var);
    }
}

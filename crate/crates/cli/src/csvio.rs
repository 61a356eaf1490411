//! CSV ingestion and emission. Labeled files carry the header
//! `x1,...,xp,y`; unlabeled and query files carry `x1,...,xp`. Non-numeric
//! cells are rejected with their row and column coordinates (rows are
//! 1-based, excluding the header).

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crma::error::{Error, Result};

pub struct LabeledCsv {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))
}

fn expect_header(got: &csv::StringRecord, want: &[String], path: &Path) -> Result<()> {
    let got_cols: Vec<&str> = got.iter().collect();
    if got_cols != want.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(Error::Data {
            row: 0,
            column: want.join(","),
            context: format!(
                "{}: header is `{}`, expected `{}`",
                path.display(),
                got_cols.join(","),
                want.join(",")
            ),
        });
    }
    Ok(())
}

fn covariate_header(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn parse_cell(field: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = field.parse().map_err(|_| Error::Data {
        row,
        column: column.to_string(),
        context: format!("cell `{field}` is not numeric"),
    })?;
    if !value.is_finite() {
        return Err(Error::Data {
            row,
            column: column.to_string(),
            context: format!("cell `{field}` is not finite"),
        });
    }
    Ok(value)
}

fn read_rows(path: &Path, header: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut reader = open_reader(path)?;
    let got = reader
        .headers()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        .clone();
    expect_header(&got, header, path)?;
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Data {
            row,
            column: String::new(),
            context: format!("{}: {e}", path.display()),
        })?;
        if record.len() != header.len() {
            return Err(Error::Data {
                row,
                column: String::new(),
                context: format!(
                    "{}: {} fields, expected {}",
                    path.display(),
                    record.len(),
                    header.len()
                ),
            });
        }
        let mut values = Vec::with_capacity(header.len());
        for (field, column) in record.iter().zip(header) {
            values.push(parse_cell(field, row, column)?);
        }
        rows.push(values);
    }
    Ok(rows)
}

/// Infers `p` from the header (which must be `x1..xp,y`) and reads the file.
pub fn read_labeled(path: &Path) -> Result<LabeledCsv> {
    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        .clone();
    let cols = header.len();
    if cols < 2 || header.iter().next_back() != Some("y") {
        return Err(Error::Data {
            row: 0,
            column: "y".to_string(),
            context: format!(
                "{}: labeled files need the header `x1,...,xp,y`",
                path.display()
            ),
        });
    }
    drop(reader);
    let p = cols - 1;
    let mut want = covariate_header(p);
    want.push("y".to_string());
    let rows = read_rows(path, &want)?;
    if rows.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let n = rows.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..p {
            x[(i, j)] = row[j];
        }
        y[i] = row[p];
    }
    Ok(LabeledCsv { x, y })
}

/// Reads a covariate-only file with header `x1..xp`.
pub fn read_covariates(path: &Path, p: usize) -> Result<DMatrix<f64>> {
    let rows = read_rows(path, &covariate_header(p))?;
    let mut x = DMatrix::zeros(rows.len(), p);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..p {
            x[(i, j)] = row[j];
        }
    }
    Ok(x)
}

pub fn write_labeled(path: &Path, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    let p = x.ncols();
    let mut out = String::new();
    out.push_str(&covariate_header(p).join(","));
    out.push_str(",y\n");
    for i in 0..x.nrows() {
        for j in 0..p {
            out.push_str(&format!("{},", x[(i, j)]));
        }
        out.push_str(&format!("{}\n", y[i]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_covariates(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let p = x.ncols();
    let mut out = String::new();
    out.push_str(&covariate_header(p).join(","));
    out.push('\n');
    for i in 0..x.nrows() {
        let row: Vec<String> = (0..p).map(|j| format!("{}", x[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes the query columns with the prediction appended as `y_hat`.
pub fn write_predictions(path: &Path, x: &DMatrix<f64>, preds: &[f64]) -> Result<()> {
    let p = x.ncols();
    let mut out = String::new();
    out.push_str(&covariate_header(p).join(","));
    out.push_str(",y_hat\n");
    for i in 0..x.nrows() {
        for j in 0..p {
            out.push_str(&format!("{},", x[(i, j)]));
        }
        out.push_str(&format!("{}\n", preds[i]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

//! CSV input and output.
//!
//! Files are comma separated with a header row and `.` decimals. Ragged rows
//! are rejected.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::report::fmt_f64;

/// A numeric table: one response column and the remaining columns as
/// covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub covariate_names: Vec<String>,
    pub response_name: String,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl TabularDataset {
    pub fn new(covariate_names: Vec<String>, response_name: String, x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                x.ncols()
            )));
        }
        Ok(Self {
            covariate_names,
            response_name,
            x,
            y,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn from_csv<R: Read>(r: R, response: &str) -> Result<Self> {
        let (header, table) = read_table(r)?;
        let pos = header
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| Error::InvalidParameter(format!("response column '{response}' not found")))?;
        let (n, cols) = table.dim();
        if cols < 2 {
            return Err(Error::InvalidDimension(
                "dataset needs a response and at least one covariate".into(),
            ));
        }
        let y = table.column(pos).to_owned();
        let keep: Vec<usize> = (0..cols).filter(|&j| j != pos).collect();
        let x = Array2::from_shape_fn((n, keep.len()), |(i, k)| table[[i, keep[k]]]);
        let names = keep.iter().map(|&j| header[j].clone()).collect();
        Self::new(names, response.to_string(), x, y)
    }

    pub fn from_path(path: impl AsRef<Path>, response: &str) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?, response)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![self.response_name.clone()];
        header.extend(self.covariate_names.iter().cloned());
        out.write_record(&header)?;
        for (i, row) in self.x.rows().into_iter().enumerate() {
            let mut rec = vec![fmt_f64(self.y[i])];
            rec.extend(row.iter().map(|&v| fmt_f64(v)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads a headed numeric table.
pub fn read_table<R: Read>(r: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::InvalidDimension("missing header row".into()));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!(
                    "row {} column '{}': cannot parse '{}' as a number",
                    line + 1,
                    header[col],
                    field
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteInput("csv table"));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidDimension("table has no data rows".into()));
    }
    let table =
        Array2::from_shape_vec((rows, header.len()), data).map_err(|e| Error::InvalidDimension(e.to_string()))?;
    Ok((header, table))
}

/// Design matrix from a headed CSV, every column a covariate.
pub fn read_matrix<R: Read>(r: R) -> Result<Array2<f64>> {
    Ok(read_table(r)?.1)
}

pub fn read_matrix_path(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_matrix(std::fs::File::open(path)?)
}

/// Response vector from a headed single-column CSV.
pub fn read_vector<R: Read>(r: R) -> Result<Array1<f64>> {
    let (header, table) = read_table(r)?;
    if header.len() != 1 {
        return Err(Error::InvalidDimension(format!(
            "response file must have one column, found {}",
            header.len()
        )));
    }
    Ok(table.column(0).to_owned())
}

pub fn read_vector_path(path: impl AsRef<Path>) -> Result<Array1<f64>> {
    read_vector(std::fs::File::open(path)?)
}

/// One row per coefficient: `index,coefficient,lasso,in_support`.
pub fn write_coefficients<W: Write>(
    w: W,
    beta_refit: &Array1<f64>,
    beta_lasso: &Array1<f64>,
    support: &[usize],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "coefficient", "lasso", "in_support"])?;
    for j in 0..beta_refit.len() {
        let selected = support.binary_search(&j).is_ok();
        out.write_record([
            j.to_string(),
            fmt_f64(beta_refit[j]),
            fmt_f64(beta_lasso[j]),
            u8::from(selected).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix<W: Write>(w: W, names: &[String], m: &Array2<f64>) -> Result<()> {
    if names.len() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} names for {} columns",
            names.len(),
            m.ncols()
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(names)?;
    for row in m.rows() {
        out.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    out.flush()?;
    Ok(())
}

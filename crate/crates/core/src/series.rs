//! Uniformly sampled multivariate trajectories and their CSV form.
//!
//! A [`TimeSeries`] stores `p` state coordinates (rows) over `T + 1` time
//! points (columns `0..=T`). The on-disk format is a header
//! `t,x0,x1,...,x{p-1}` followed by one row per time index, with values
//! printed at 17 significant digits so that reading back is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    dt: f64,
}

impl TimeSeries {
    /// Wraps a `p x (T+1)` matrix. Requires `p >= 1`, `T >= 1` and finite entries.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        Self::with_dt(values, 1.0)
    }

    pub fn with_dt(values: DMatrix<f64>, dt: f64) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(dim_err("time series needs at least one state coordinate"));
        }
        if values.ncols() < 2 {
            return Err(dim_err("time series needs at least two time points"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { values, dt })
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        let p = columns.first().map(|c| c.len()).unwrap_or(0);
        if columns.iter().any(|c| c.len() != p) {
            return Err(dim_err("columns have different lengths"));
        }
        Self::new(DMatrix::from_columns(columns))
    }

    /// Builds a series without the finiteness check. Used for rollouts that
    /// may run away; callers must track divergence themselves.
    pub(crate) fn from_raw(values: DMatrix<f64>, dt: f64) -> Self {
        Self { values, dt }
    }

    /// State dimension `p`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of stored time points, `T + 1`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    /// Index of the last time point, `T`.
    pub fn horizon(&self) -> usize {
        self.values.ncols().saturating_sub(1)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time_of(&self, t: usize) -> f64 {
        t as f64 * self.dt
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn column(&self, t: usize) -> DVector<f64> {
        self.values.column(t).into_owned()
    }

    /// Columns `start..end` as a new series (at least two columns).
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if end > self.len() || end < start + 2 {
            return Err(Error::InvalidArgument(format!(
                "invalid slice {start}..{end} of a series with {} points",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values.columns(start, end - start).into_owned(),
            dt: self.dt,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(writer);
        let mut header = String::from("t");
        for i in 0..self.dim() {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(out, "{header}")?;
        for t in 0..self.len() {
            let mut line = t.to_string();
            for v in self.values.column(t).iter() {
                line.push(',');
                line.push_str(&format_f64(*v));
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();

        let header = match records.next() {
            Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
            None => return Err(parse_err(1, "missing header")),
        };
        let p = header.len().saturating_sub(1);
        if p == 0 || &header[0] != "t" {
            return Err(parse_err(1, "header must start with `t` followed by state columns"));
        }
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("x{i}") {
                return Err(parse_err(1, format!("expected column `x{i}`, found `{name}`")));
            }
        }

        let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        for (i, rec) in records.enumerate() {
            let row_no = i + 2;
            let rec = rec.map_err(|e| parse_err(row_no, e.to_string()))?;
            if rec.len() != p + 1 {
                return Err(parse_err(
                    row_no,
                    format!("expected {} fields, found {}", p + 1, rec.len()),
                ));
            }
            let t: usize = rec[0]
                .parse()
                .map_err(|_| parse_err(row_no, format!("time index `{}` is not an integer", &rec[0])))?;
            let mut vals = Vec::with_capacity(p);
            for field in rec.iter().skip(1) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(row_no, format!("`{field}` is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(row_no, format!("`{field}` is not finite")));
                }
                vals.push(v);
            }
            rows.push((t, row_no, vals));
        }
        if rows.len() < 2 {
            return Err(parse_err(rows.len() + 2, "need at least two time points"));
        }
        rows.sort_by_key(|r| r.0);
        for (expected, (t, row_no, _)) in rows.iter().enumerate() {
            if *t != expected {
                let msg = if expected > 0 && *t == rows[expected - 1].0 {
                    format!("duplicate time index {t}")
                } else {
                    format!("time index {t} leaves a gap (expected {expected})")
                };
                return Err(parse_err(*row_no, msg));
            }
        }
        let n = rows.len();
        let values = DMatrix::from_fn(p, n, |i, j| rows[j].2[i]);
        Self::new(values)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file)
    }
}

/// 17 significant digits, the shortest width that round-trips every f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        message: message.into(),
    }
}

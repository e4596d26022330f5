//! Return panels: loading, validation, demeaning and global normalization.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// What the numeric cells of a panel CSV contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Cells are returns and are used as-is.
    #[default]
    Returns,
    /// Cells are prices; log returns `ln(p_t / p_{t-1})` are taken on load.
    Prices,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub kind: InputKind,
}

/// A `T x N` panel of returns with its metadata.
///
/// Rows are days, columns are assets. Panels are immutable once built; the
/// transforming operations return new panels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    returns: Array2<f64>,
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    sectors: Option<Vec<String>>,
    volumes: Option<Array2<f64>>,
}

impl ReturnsPanel {
    /// Build a panel from a return matrix. Entries must be finite and dates
    /// strictly increasing.
    pub fn new(returns: Array2<f64>, dates: Vec<NaiveDate>, assets: Vec<String>) -> Result<Self> {
        let (t, n) = returns.dim();
        if t == 0 || n == 0 {
            return Err(RmgError::InvalidInput("empty return panel".into()));
        }
        if dates.len() != t {
            return Err(RmgError::DimensionMismatch {
                expected: t,
                actual: dates.len(),
            });
        }
        if assets.len() != n {
            return Err(RmgError::DimensionMismatch {
                expected: n,
                actual: assets.len(),
            });
        }
        if let Some(w) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(RmgError::InvalidInput(format!(
                "dates not strictly increasing at row {}: {} after {}",
                w + 1,
                dates[w + 1],
                dates[w]
            )));
        }
        if let Some(((ti, i), _)) = returns.indexed_iter().find(|(_, x)| !x.is_finite()) {
            return Err(RmgError::Load {
                row: ti,
                column: assets[i].clone(),
                message: "non-finite value".into(),
            });
        }
        let returns = if returns.is_standard_layout() {
            returns
        } else {
            returns.as_standard_layout().to_owned()
        };
        Ok(Self {
            returns,
            dates,
            assets,
            sectors: None,
            volumes: None,
        })
    }

    /// Panel with synthetic consecutive calendar dates starting 2000-01-01 and
    /// tickers `A0000, A0001, ...`. Used for simulated data.
    pub fn synthetic(returns: Array2<f64>) -> Result<Self> {
        let (t, n) = returns.dim();
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..t)
            .map(|k| start + chrono::Days::new(k as u64))
            .collect();
        let assets = (0..n).map(|i| format!("A{i:04}")).collect();
        Self::new(returns, dates, assets)
    }

    pub fn with_sectors(mut self, sectors: Vec<String>) -> Result<Self> {
        if sectors.len() != self.n_assets() {
            return Err(RmgError::DimensionMismatch {
                expected: self.n_assets(),
                actual: sectors.len(),
            });
        }
        self.sectors = Some(sectors);
        Ok(self)
    }

    pub fn with_volumes(mut self, volumes: Array2<f64>) -> Result<Self> {
        if volumes.dim() != self.returns.dim() {
            return Err(RmgError::InvalidInput(format!(
                "volume shape {:?} does not match returns {:?}",
                volumes.dim(),
                self.returns.dim()
            )));
        }
        if volumes.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RmgError::InvalidInput(
                "volumes must be finite and nonnegative".into(),
            ));
        }
        self.volumes = Some(volumes);
        Ok(self)
    }

    pub fn returns(&self) -> &Array2<f64> {
        &self.returns
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn sectors(&self) -> Option<&[String]> {
        self.sectors.as_deref()
    }

    pub fn volumes(&self) -> Option<&Array2<f64>> {
        self.volumes.as_ref()
    }

    /// Volumes, or a matrix of ones when none were supplied.
    pub fn volumes_or_ones(&self) -> Array2<f64> {
        self.volumes
            .clone()
            .unwrap_or_else(|| Array2::ones(self.returns.dim()))
    }

    pub fn n_obs(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Returns of day `t` as a contiguous slice.
    pub fn row(&self, t: usize) -> &[f64] {
        let start = t * self.n_assets();
        &self.returns.as_slice().expect("standard layout")[start..start + self.n_assets()]
    }

    /// Sub-panel of rows `[from, to)`, metadata carried along.
    pub fn slice_rows(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.n_obs() {
            return Err(RmgError::InvalidInput(format!(
                "row range {from}..{to} outside 0..{}",
                self.n_obs()
            )));
        }
        Ok(Self {
            returns: self.returns.slice(s![from..to, ..]).to_owned(),
            dates: self.dates[from..to].to_vec(),
            assets: self.assets.clone(),
            sectors: self.sectors.clone(),
            volumes: self
                .volumes
                .as_ref()
                .map(|v| v.slice(s![from..to, ..]).to_owned()),
        })
    }

    /// Row range `[from, to)` of the days falling inside the inclusive date
    /// window. `None` bounds are open.
    pub fn row_range(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> (usize, usize) {
        let lo = from.map_or(0, |d| self.dates.partition_point(|x| *x < d));
        let hi = to.map_or(self.n_obs(), |d| self.dates.partition_point(|x| *x <= d));
        (lo, hi.max(lo))
    }

    /// Subtract each column's time average.
    pub fn demean(&self) -> Self {
        let means = self
            .returns
            .mean_axis(Axis(0))
            .expect("panel has at least one row");
        let mut out = self.clone();
        out.returns -= &means;
        out
    }

    /// Demean each column, then apply one global scale so that
    /// `sum_{t,i} r_ti^2 = T N`.
    pub fn normalize(&self) -> Result<Self> {
        let mut out = self.demean();
        let ss: f64 = out.returns.iter().map(|x| x * x).sum();
        if ss <= 0.0 || !ss.is_finite() {
            return Err(RmgError::ZeroPanel);
        }
        let target = (self.n_obs() * self.n_assets()) as f64;
        let scale = (target / ss).sqrt();
        out.returns.mapv_inplace(|x| x * scale);
        Ok(out)
    }

    /// Write the panel in the CSV layout accepted by [`load_panel`]. Values are
    /// written in shortest round-trip form, so a reload is bit-exact.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix_csv(path, &self.dates, &self.assets, &self.returns)
    }
}

/// Write a date-indexed matrix in the panel CSV layout.
pub fn write_matrix_csv(
    path: impl AsRef<Path>,
    dates: &[NaiveDate],
    assets: &[String],
    values: &Array2<f64>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| RmgError::csv(path, e))?;
    let mut header = Vec::with_capacity(assets.len() + 1);
    header.push("date".to_string());
    header.extend(assets.iter().cloned());
    w.write_record(&header).map_err(|e| RmgError::csv(path, e))?;
    for (t, row) in values.outer_iter().enumerate() {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(dates[t].format(DATE_FORMAT).to_string());
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(|e| RmgError::csv(path, e))?;
    }
    w.flush().map_err(|e| RmgError::io(path, e))?;
    Ok(())
}

struct RawTable {
    dates: Vec<NaiveDate>,
    columns: Vec<String>,
    values: Array2<f64>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| RmgError::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| RmgError::csv(path, e))?.clone();
    if headers.len() < 2 {
        return Err(RmgError::InvalidInput(format!(
            "{}: expected a date column and at least one ticker column",
            path.display()
        )));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashMap::new();
    for (i, c) in columns.iter().enumerate() {
        if let Some(prev) = seen.insert(c.as_str(), i) {
            return Err(RmgError::InvalidInput(format!(
                "duplicate ticker `{c}` in columns {} and {}",
                prev + 1,
                i + 1
            )));
        }
    }

    let mut dates = Vec::new();
    let mut data = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| RmgError::csv(path, e))?;
        if rec.len() != columns.len() + 1 {
            return Err(RmgError::Load {
                row,
                column: "*".into(),
                message: format!("expected {} fields, found {}", columns.len() + 1, rec.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|e| RmgError::Load {
            row,
            column: "date".into(),
            message: format!("bad date `{}`: {e}", &rec[0]),
        })?;
        if let Some(&last) = dates.last() {
            if date == last {
                return Err(RmgError::Load {
                    row,
                    column: "date".into(),
                    message: format!("duplicate date {date}"),
                });
            }
            if date < last {
                return Err(RmgError::Load {
                    row,
                    column: "date".into(),
                    message: format!("date {date} precedes {last}"),
                });
            }
        }
        dates.push(date);
        for (i, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(RmgError::Load {
                    row,
                    column: columns[i].clone(),
                    message: "missing value".into(),
                });
            }
            let x: f64 = cell.parse().map_err(|_| RmgError::Load {
                row,
                column: columns[i].clone(),
                message: format!("non-numeric cell `{cell}`"),
            })?;
            if !x.is_finite() {
                return Err(RmgError::Load {
                    row,
                    column: columns[i].clone(),
                    message: format!("non-finite cell `{cell}`"),
                });
            }
            data.push(x);
        }
    }
    let values = Array2::from_shape_vec((dates.len(), columns.len()), data)
        .map_err(|e| RmgError::InvalidInput(e.to_string()))?;
    Ok(RawTable {
        dates,
        columns,
        values,
    })
}

/// Load a panel CSV: a `date` column (ISO-8601) followed by one column per
/// ticker. Gaps are rejected, never imputed.
pub fn load_panel(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<ReturnsPanel> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let (dates, values) = match opts.kind {
        InputKind::Returns => (table.dates, table.values),
        InputKind::Prices => prices_to_log_returns(&table)?,
    };
    if dates.len() < 2 || table.columns.len() < 2 {
        return Err(RmgError::InvalidInput(format!(
            "{}: need at least 2 days and 2 assets, found {} x {}",
            path.display(),
            dates.len(),
            table.columns.len()
        )));
    }
    ReturnsPanel::new(values, dates, table.columns)
}

fn prices_to_log_returns(table: &RawTable) -> Result<(Vec<NaiveDate>, Array2<f64>)> {
    let (t, n) = table.values.dim();
    if t < 2 {
        return Err(RmgError::InvalidInput(
            "need at least two price rows to form returns".into(),
        ));
    }
    let mut out = Array2::zeros((t - 1, n));
    for k in 1..t {
        for i in 0..n {
            let (p0, p1) = (table.values[[k - 1, i]], table.values[[k, i]]);
            if p0 <= 0.0 || p1 <= 0.0 {
                return Err(RmgError::Load {
                    row: if p0 <= 0.0 { k } else { k + 1 },
                    column: table.columns[i].clone(),
                    message: "non-positive price".into(),
                });
            }
            out[[k - 1, i]] = (p1 / p0).ln();
        }
    }
    Ok((table.dates[1..].to_vec(), out))
}

/// Load a `ticker,sector` sidecar and order it by the panel's assets.
pub fn load_sectors(path: impl AsRef<Path>, assets: &[String]) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| RmgError::csv(path, e))?;
    let mut map = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RmgError::csv(path, e))?;
        if rec.len() < 2 {
            return Err(RmgError::InvalidInput(format!(
                "{}: sector rows need `ticker,sector`",
                path.display()
            )));
        }
        map.insert(rec[0].to_string(), rec[1].to_string());
    }
    assets
        .iter()
        .map(|a| {
            map.get(a).cloned().ok_or_else(|| RmgError::Load {
                row: 0,
                column: a.clone(),
                message: "ticker missing from sector file".into(),
            })
        })
        .collect()
}

/// Load a volume sidecar with the same shape and dates as `panel`.
pub fn load_volumes(path: impl AsRef<Path>, panel: &ReturnsPanel) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    if table.columns != panel.assets() {
        return Err(RmgError::InvalidInput(format!(
            "{}: volume columns do not match panel tickers",
            path.display()
        )));
    }
    // A price-derived panel drops the first day; align on dates.
    let offset = table
        .dates
        .iter()
        .position(|d| Some(d) == panel.dates().first())
        .ok_or_else(|| RmgError::InvalidInput("volume dates do not cover the panel".into()))?;
    let t = panel.n_obs();
    if offset + t > table.dates.len() || table.dates[offset..offset + t] != *panel.dates() {
        return Err(RmgError::InvalidInput(
            "volume dates do not match panel dates".into(),
        ));
    }
    Ok(table.values.slice(s![offset..offset + t, ..]).to_owned())
}

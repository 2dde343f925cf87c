//! Balanced panel data: storage, CSV ingestion, time demeaning and standardization.
//!
//! Observations are stacked unit-major, so row `i * T + t` of the design holds
//! unit `i` at period `t`. The design matrix is column-major, one contiguous
//! column per regressor.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    TimeDemeaned,
    Standardized,
}

/// Header names used to read a panel from CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub unit: String,
    pub time: String,
    pub response: String,
    /// Regressor columns; `None` takes every remaining column in header order.
    #[serde(default)]
    pub regressors: Option<Vec<String>>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            response: "y".into(),
            regressors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    n_units: usize,
    n_periods: usize,
    unit_ids: Vec<String>,
    time_ids: Vec<String>,
    response_name: String,
    regressor_names: Vec<String>,
    y: DVector<f64>,
    x: DMatrix<f64>,
    transform_log: Vec<Transform>,
}

impl PanelDataset {
    /// Builds a panel from stacked arrays (`y[i*T + t]`, `x[(i*T + t, j)]`).
    pub fn from_arrays(
        n_units: usize,
        n_periods: usize,
        y: DVector<f64>,
        x: DMatrix<f64>,
    ) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::from_named_arrays(n_units, n_periods, y, x, "y".into(), names)
    }

    pub fn from_named_arrays(
        n_units: usize,
        n_periods: usize,
        y: DVector<f64>,
        x: DMatrix<f64>,
        response_name: String,
        regressor_names: Vec<String>,
    ) -> Result<Self> {
        if n_units < 1 || n_periods < 1 {
            return Err(Error::InvalidArgument("panel needs N >= 1 and T >= 1".into()));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("panel needs at least one regressor".into()));
        }
        let n_obs = n_units * n_periods;
        if y.len() != n_obs || x.nrows() != n_obs {
            return Err(Error::DimensionMismatch(format!(
                "expected {n_obs} stacked observations, got y={} x={}",
                y.len(),
                x.nrows()
            )));
        }
        if regressor_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} regressor names for {} columns",
                regressor_names.len(),
                x.ncols()
            )));
        }
        if !y.iter().chain(x.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("panel contains non-finite values".into()));
        }
        Ok(Self {
            n_units,
            n_periods,
            unit_ids: (1..=n_units).map(|i| i.to_string()).collect(),
            time_ids: (1..=n_periods).map(|t| t.to_string()).collect(),
            response_name,
            regressor_names,
            y,
            x,
            transform_log: vec![Transform::None],
        })
    }

    /// Reads a balanced panel from a CSV file with a header row.
    pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(file, schema)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, schema: &ColumnSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let find = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let unit_col = find(&schema.unit)?;
        let time_col = find(&schema.time)?;
        let y_col = find(&schema.response)?;
        let regressors: Vec<String> = match &schema.regressors {
            Some(names) => names.clone(),
            None => header
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != unit_col && *k != time_col && *k != y_col)
                .map(|(_, h)| h.to_string())
                .collect(),
        };
        if regressors.is_empty() {
            return Err(Error::InvalidArgument("no regressor columns".into()));
        }
        let x_cols = regressors
            .iter()
            .map(|name| find(name))
            .collect::<Result<Vec<_>>>()?;

        let mut cells: HashMap<(String, String), (f64, Vec<f64>)> = HashMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let parse = |col: usize| -> Result<f64> {
                let raw = record.get(col).unwrap_or("");
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::NonNumericCell {
                        column: header.get(col).unwrap_or("").to_string(),
                        line,
                        value: raw.to_string(),
                    }),
                }
            };
            let unit = record.get(unit_col).unwrap_or("").to_string();
            let time = record.get(time_col).unwrap_or("").to_string();
            let yv = parse(y_col)?;
            let xv = x_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?;
            if cells.contains_key(&(unit.clone(), time.clone())) {
                return Err(Error::DuplicateKey { unit, time });
            }
            cells.insert((unit, time), (yv, xv));
        }

        let units = sorted_ids(cells.keys().map(|(u, _)| u.as_str()));
        let times = sorted_ids(cells.keys().map(|(_, t)| t.as_str()));
        let (n, t_len, d) = (units.len(), times.len(), regressors.len());
        if n == 0 {
            return Err(Error::InvalidArgument("CSV contains no observations".into()));
        }
        let mut y = DVector::zeros(n * t_len);
        let mut x = DMatrix::zeros(n * t_len, d);
        for (i, unit) in units.iter().enumerate() {
            for (t, time) in times.iter().enumerate() {
                let (yv, xv) = cells.get(&(unit.clone(), time.clone())).ok_or_else(|| {
                    Error::UnbalancedPanel {
                        unit: unit.clone(),
                        time: time.clone(),
                    }
                })?;
                let row = i * t_len + t;
                y[row] = *yv;
                for (j, v) in xv.iter().enumerate() {
                    x[(row, j)] = *v;
                }
            }
        }
        Ok(Self {
            n_units: n,
            n_periods: t_len,
            unit_ids: units,
            time_ids: times,
            response_name: schema.response.clone(),
            regressor_names: regressors,
            y,
            x,
            transform_log: vec![Transform::None],
        })
    }

    /// Writes the panel in the `unit,time,y,<x-names...>` layout.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["unit".to_string(), "time".to_string(), self.response_name.clone()];
        header.extend(self.regressor_names.iter().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.n_units {
            for t in 0..self.n_periods {
                let row = self.row(i, t);
                let mut rec = vec![self.unit_ids[i].clone(), self.time_ids[t].clone()];
                rec.push(format_f64(self.y[row]));
                rec.extend((0..self.n_regressors()).map(|j| format_f64(self.x[(row, j)])));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.n_units * self.n_periods
    }

    #[inline]
    pub fn row(&self, unit: usize, period: usize) -> usize {
        unit * self.n_periods + period
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y_at(&self, unit: usize, period: usize) -> f64 {
        self.y[self.row(unit, period)]
    }

    pub fn x_at(&self, unit: usize, period: usize, regressor: usize) -> f64 {
        self.x[(self.row(unit, period), regressor)]
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    pub fn transform_log(&self) -> &[Transform] {
        &self.transform_log
    }

    /// Response as a T x N matrix (column i is unit i's time series).
    pub fn y_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n_periods, self.n_units, self.y.as_slice())
    }

    /// Stacked vector reshaped to T x N (column i holds unit i).
    pub fn to_period_unit(&self, stacked: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n_periods, self.n_units, stacked.as_slice())
    }

    /// Sub-panel restricted to a contiguous range of periods.
    pub fn time_slice(&self, periods: Range<usize>) -> Result<Self> {
        if periods.start >= periods.end || periods.end > self.n_periods {
            return Err(Error::InvalidArgument(format!(
                "invalid period range {periods:?} for T={}",
                self.n_periods
            )));
        }
        let len = periods.len();
        let rows: Vec<usize> = (0..self.n_units)
            .flat_map(|i| periods.clone().map(move |t| (i, t)))
            .map(|(i, t)| self.row(i, t))
            .collect();
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        let x = self.x.select_rows(rows.iter());
        Ok(Self {
            n_units: self.n_units,
            n_periods: len,
            unit_ids: self.unit_ids.clone(),
            time_ids: self.time_ids[periods].to_vec(),
            response_name: self.response_name.clone(),
            regressor_names: self.regressor_names.clone(),
            y,
            x,
            transform_log: self.transform_log.clone(),
        })
    }

    /// Removes each unit's time mean from the response and every regressor.
    pub fn demean_time(&self) -> Result<Self> {
        if self.transform_log.contains(&Transform::TimeDemeaned) {
            return Err(Error::AlreadyTransformed("time_demeaned"));
        }
        Ok(self.force_demean_time())
    }

    /// `demean_time` without the transform-log guard.
    pub fn force_demean_time(&self) -> Self {
        let mut out = self.clone();
        let t_len = self.n_periods;
        let demean = |col: &mut [f64]| {
            for block in col.chunks_mut(t_len) {
                let mean = block.iter().sum::<f64>() / t_len as f64;
                block.iter_mut().for_each(|v| *v -= mean);
            }
        };
        demean(out.y.as_mut_slice());
        for j in 0..out.x.ncols() {
            demean(out.x.column_mut(j).as_mut_slice());
        }
        out.transform_log.push(Transform::TimeDemeaned);
        out
    }

    /// Pooled standardization of the response and each regressor to mean 0, variance 1.
    pub fn standardize(&self) -> Result<(Self, ScaleRecord)> {
        let n = self.n_obs() as f64;
        let moments = |col: &[f64]| {
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let mut out = self.clone();
        let (my, sy) = moments(self.y.as_slice());
        if !(sy > 0.0) {
            return Err(Error::InvalidArgument("response has zero variance".into()));
        }
        out.y.iter_mut().for_each(|v| *v = (*v - my) / sy);
        let mut regressors = Vec::with_capacity(self.n_regressors());
        for j in 0..self.n_regressors() {
            let (m, s) = moments(self.x.column(j).as_slice());
            if !(s > 1e-300) {
                return Err(Error::ZeroVariance(j));
            }
            out.x.column_mut(j).iter_mut().for_each(|v| *v = (*v - m) / s);
            regressors.push(ScaleEntry {
                name: self.regressor_names[j].clone(),
                mean: m,
                sd: s,
            });
        }
        out.transform_log.push(Transform::Standardized);
        let record = ScaleRecord {
            response: ScaleEntry {
                name: self.response_name.clone(),
                mean: my,
                sd: sy,
            },
            regressors,
        };
        Ok((out, record))
    }

    /// Inverts `standardize` using its record.
    pub fn unstandardize(&self, record: &ScaleRecord) -> Result<Self> {
        if record.regressors.len() != self.n_regressors() {
            return Err(Error::DimensionMismatch("scale record size".into()));
        }
        let mut out = self.clone();
        let r = &record.response;
        out.y.iter_mut().for_each(|v| *v = *v * r.sd + r.mean);
        for (j, e) in record.regressors.iter().enumerate() {
            out.x.column_mut(j).iter_mut().for_each(|v| *v = *v * e.sd + e.mean);
        }
        if let Some(pos) = out.transform_log.iter().rposition(|t| *t == Transform::Standardized) {
            out.transform_log.remove(pos);
        }
        Ok(out)
    }

    /// SHA-256 of the numeric content, used to tie saved artifacts to their data.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_units as u64).to_le_bytes());
        hasher.update((self.n_periods as u64).to_le_bytes());
        for v in self.y.iter().chain(self.x.iter()) {
            hasher.update(v.to_le_bytes());
        }
        hex_digest(&hasher.finalize())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn format_f64(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

/// Sorts identifiers numerically when every id parses as a number, lexicographically otherwise.
fn sorted_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = ids.collect();
    let mut v: Vec<String> = set.into_iter().map(str::to_string).collect();
    if v.iter().all(|s| s.parse::<f64>().is_ok()) {
        v.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
        });
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Original pooled means and standard deviations removed by `standardize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub response: ScaleEntry,
    pub regressors: Vec<ScaleEntry>,
}

impl ScaleRecord {
    /// Multiplier taking a standardized-unit coefficient (or CI bound) to original units.
    pub fn coefficient_scale(&self, j: usize) -> f64 {
        self.response.sd / self.regressors[j].sd
    }

    /// Maps standardized coefficients to original units, returning `(intercept, beta)`.
    pub fn coefficients_to_original(&self, beta: &DVector<f64>) -> (f64, DVector<f64>) {
        let b = DVector::from_iterator(
            beta.len(),
            beta.iter().enumerate().map(|(j, v)| v * self.coefficient_scale(j)),
        );
        let intercept = self.response.mean
            - b.iter()
                .zip(&self.regressors)
                .map(|(bj, e)| bj * e.mean)
                .sum::<f64>();
        (intercept, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(rows: &[&str]) -> String {
        let mut s = String::from("unit,time,y,x1\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn reads_small_balanced_panel() {
        let text = csv_text(&["1,1,1.0,0.5", "1,2,2.0,0.1", "2,1,3.0,0.2", "2,2,4.0,0.3"]);
        let ds = PanelDataset::read_csv(text.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!((ds.n_units(), ds.n_periods(), ds.n_regressors()), (2, 2, 1));
        assert_eq!(ds.y_at(1, 0), 3.0);
        assert_eq!(ds.x_at(0, 1, 0), 0.1);
        assert_eq!(ds.transform_log(), &[Transform::None]);
    }

    #[test]
    fn missing_row_is_unbalanced() {
        let text = csv_text(&["1,1,1.0,0.5", "1,2,2.0,0.1", "2,1,3.0,0.2"]);
        let err = PanelDataset::read_csv(text.as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert!(matches!(err, Error::UnbalancedPanel { .. }), "{err}");
    }

    #[test]
    fn shuffled_rows_match_sorted_file() {
        let sorted = csv_text(&["1,1,1.0,0.5", "1,2,2.0,0.1", "2,1,3.0,0.2", "2,2,4.0,0.3"]);
        let shuffled = csv_text(&["2,2,4.0,0.3", "1,2,2.0,0.1", "2,1,3.0,0.2", "1,1,1.0,0.5"]);
        let a = PanelDataset::read_csv(sorted.as_bytes(), &ColumnSchema::default()).unwrap();
        let b = PanelDataset::read_csv(shuffled.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn numeric_ids_sort_numerically() {
        let text = csv_text(&["10,1,1,1", "10,2,2,2", "9,1,3,3", "9,2,4,4"]);
        let ds = PanelDataset::read_csv(text.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!(ds.unit_ids(), &["9".to_string(), "10".to_string()]);
    }

    #[test]
    fn duplicate_and_non_numeric_cells() {
        let dup = csv_text(&["1,1,1.0,0.5", "1,1,2.0,0.1"]);
        assert!(matches!(
            PanelDataset::read_csv(dup.as_bytes(), &ColumnSchema::default()),
            Err(Error::DuplicateKey { .. })
        ));
        let bad = csv_text(&["1,1,abc,0.5"]);
        assert!(matches!(
            PanelDataset::read_csv(bad.as_bytes(), &ColumnSchema::default()),
            Err(Error::NonNumericCell { .. })
        ));
    }

    #[test]
    fn demeaning_removes_unit_means() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        let x = DMatrix::from_column_slice(6, 1, &[0.0, 1.0, 5.0, 2.0, 2.0, 8.0]);
        let ds = PanelDataset::from_arrays(2, 3, y, x).unwrap();
        let dm = ds.demean_time().unwrap();
        assert_eq!(dm.y().as_slice(), &[-1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        for i in 0..2 {
            let mean: f64 = (0..3).map(|t| dm.x_at(i, t, 0)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-10);
        }
        assert!(matches!(dm.demean_time(), Err(Error::AlreadyTransformed(_))));
        let again = dm.force_demean_time();
        assert!((again.x() - dm.x()).amax() < 1e-12);
    }

    #[test]
    fn standardize_two_point_column() {
        let y = DVector::from_vec(vec![1.0, 3.0]);
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        let ds = PanelDataset::from_arrays(1, 2, y, x).unwrap();
        let (st, rec) = ds.standardize().unwrap();
        assert_eq!(st.x().as_slice(), &[-1.0, 1.0]);
        assert_eq!(rec.regressors[0].mean, 1.0);
        assert_eq!(rec.regressors[0].sd, 1.0);
        let (st2, rec2) = st.standardize().unwrap();
        assert!((st2.x() - st.x()).amax() < 1e-12);
        assert!((rec2.regressors[0].mean).abs() < 1e-12);
        assert!((rec2.regressors[0].sd - 1.0).abs() < 1e-12);
        let json = serde_json::to_value(&rec).unwrap();
        assert_eq!(json["regressors"][0]["name"], "x1");
    }

    #[test]
    fn zero_variance_regressor_is_rejected() {
        let y = DVector::from_vec(vec![1.0, 3.0, 2.0]);
        let x = DMatrix::from_column_slice(3, 2, &[0.0, 2.0, 1.0, 4.0, 4.0, 4.0]);
        let ds = PanelDataset::from_arrays(1, 3, y, x).unwrap();
        assert!(matches!(ds.standardize(), Err(Error::ZeroVariance(1))));
    }

    #[test]
    fn time_slice_keeps_unit_blocks() {
        let y = DVector::from_fn(8, |r, _| r as f64);
        let x = DMatrix::from_fn(8, 1, |r, _| 10.0 * r as f64);
        let ds = PanelDataset::from_arrays(2, 4, y, x).unwrap();
        let second = ds.time_slice(2..4).unwrap();
        assert_eq!(second.y().as_slice(), &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(second.n_periods(), 2);
    }
}

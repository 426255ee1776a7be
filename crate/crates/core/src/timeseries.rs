//! Monthly panel data: grid, series, CSV ingestion and windowing.
//!
//! Month indices count from January 1987 = 1, so December 1998 is 144 and
//! July 2013 is 319.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EPOCH_YEAR: i32 = 1987;

/// Month index of `year`-`month` (1-based month) relative to January 1987 = 1.
pub fn month_index(year: i32, month: u32) -> i32 {
    (year - EPOCH_YEAR) * 12 + month as i32
}

pub fn month_label(index: i32) -> String {
    let zero = index - 1;
    let year = EPOCH_YEAR + zero.div_euclid(12);
    let month = zero.rem_euclid(12) + 1;
    format!("{year:04}-{month:02}")
}

/// Parses a `YYYY-MM` label into a month index.
pub fn parse_month(label: &str) -> Option<i32> {
    let (y, m) = label.trim().split_once('-')?;
    if y.len() != 4 || m.len() != 2 {
        return None;
    }
    let year: i32 = y.parse().ok()?;
    let month: u32 = m.parse().ok()?;
    if !(1..=12).contains(&month) {
        return None;
    }
    Some(month_index(year, month))
}

/// Regular monthly grid. The normalized view maps the first point to 0 and
/// the last to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start_month: i32,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(start_month: i32, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::Grid(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        Ok(Self {
            start_month,
            n_points,
        })
    }

    pub fn end_month(&self) -> i32 {
        self.start_month + self.n_points as i32 - 1
    }

    /// Length of the grid in months (`n_points - 1`).
    pub fn span_months(&self) -> f64 {
        (self.n_points - 1) as f64
    }

    pub fn month_at(&self, index: usize) -> i32 {
        self.start_month + index as i32
    }

    pub fn index_of(&self, month: i32) -> Option<usize> {
        if month < self.start_month || month > self.end_month() {
            None
        } else {
            Some((month - self.start_month) as usize)
        }
    }

    pub fn to_normalized(&self, month: f64) -> f64 {
        (month - self.start_month as f64) / self.span_months()
    }

    pub fn from_normalized(&self, t: f64) -> f64 {
        self.start_month as f64 + t * self.span_months()
    }

    pub fn normalized_points(&self) -> Vec<f64> {
        let span = self.span_months();
        (0..self.n_points).map(|i| i as f64 / span).collect()
    }

    pub fn sub_grid(&self, from: usize, to: usize) -> Result<TimeGrid> {
        if from > to || to >= self.n_points {
            return Err(Error::Grid(format!(
                "index window [{from}, {to}] outside grid of {} points",
                self.n_points
            )));
        }
        TimeGrid::new(self.month_at(from), to - from + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub name: String,
    /// Index values; entries flagged in `missing` hold NaN.
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl PriceSeries {
    /// A complete series (no missing points). Values must be positive.
    pub fn complete(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Value {
                row: i + 1,
                column: 0,
                message: format!("series '{name}' has non-positive value {v}"),
            });
        }
        let missing = vec![false; values.len()];
        Ok(Self {
            name,
            values,
            missing,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_missing_in(&self, from: usize, to: usize) -> Option<usize> {
        (from..=to).find(|&i| self.missing[i])
    }

    /// Natural logarithms over `[from, to]`; errors on any missing point.
    pub fn log_values(&self, from: usize, to: usize) -> Result<Vec<f64>> {
        if let Some(index) = self.first_missing_in(from, to) {
            return Err(Error::MissingData {
                series: self.name.clone(),
                index,
            });
        }
        Ok(self.values[from..=to].iter().map(|v| v.ln()).collect())
    }

    pub fn slice(&self, from: usize, to: usize) -> PriceSeries {
        PriceSeries {
            name: self.name.clone(),
            values: self.values[from..=to].to_vec(),
            missing: self.missing[from..=to].to_vec(),
        }
    }

    pub fn scaled(&self, factor: f64) -> PriceSeries {
        PriceSeries {
            name: self.name.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            missing: self.missing.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub grid: TimeGrid,
    pub series: Vec<PriceSeries>,
}

impl Panel {
    pub fn new(grid: TimeGrid, series: Vec<PriceSeries>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (col, s) in series.iter().enumerate() {
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Schema(format!("duplicate series name '{}'", s.name)));
            }
            if s.values.len() != grid.n_points || s.missing.len() != grid.n_points {
                return Err(Error::Schema(format!(
                    "series '{}' has {} values for a {}-point grid",
                    s.name,
                    s.values.len(),
                    grid.n_points
                )));
            }
            for (row, (v, m)) in s.values.iter().zip(&s.missing).enumerate() {
                if !m && !(v.is_finite() && *v > 0.0) {
                    return Err(Error::Value {
                        row: row + 1,
                        column: col + 2,
                        message: format!("value {v} is not strictly positive"),
                    });
                }
            }
        }
        Ok(Self { grid, series })
    }

    pub fn names(&self) -> Vec<&str> {
        self.series.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&PriceSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// Result of [`restrict`]: the windowed panel plus names of series dropped
/// for having gaps inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Restricted {
    pub panel: Panel,
    pub dropped: Vec<String>,
}

/// Restricts `panel` to the months `[from_month, to_month]`. Series with any
/// missing value inside the window are dropped; no imputation is done.
pub fn restrict(panel: &Panel, from_month: i32, to_month: i32) -> Result<Restricted> {
    if from_month >= to_month {
        return Err(Error::Grid(format!(
            "empty window {}..{}",
            month_label(from_month),
            month_label(to_month)
        )));
    }
    let (from, to) = match (panel.grid.index_of(from_month), panel.grid.index_of(to_month)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Grid(format!(
                "window {}..{} is not inside the panel grid {}..{}",
                month_label(from_month),
                month_label(to_month),
                month_label(panel.grid.start_month),
                month_label(panel.grid.end_month())
            )))
        }
    };
    let grid = panel.grid.sub_grid(from, to)?;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for s in &panel.series {
        if s.first_missing_in(from, to).is_some() {
            dropped.push(s.name.clone());
        } else {
            kept.push(s.slice(from, to));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyPanel(format!(
            "all {} series have missing values in the window",
            dropped.len()
        )));
    }
    Ok(Restricted {
        panel: Panel::new(grid, kept)?,
        dropped,
    })
}

/// Parses a panel from CSV text with header `date,<name1>,...` and rows
/// `YYYY-MM,<v1>,...`. Empty cells are missing values.
pub fn parse_panel(csv_text: &str) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(1, e))?,
        None => return Err(Error::Schema("empty input".into())),
    };
    if header.len() < 2 {
        return Err(Error::Schema("header needs a date column and at least one series".into()));
    }
    if !header[0].trim().eq_ignore_ascii_case("date") {
        return Err(Error::Schema(format!(
            "first header cell must be 'date', found '{}'",
            &header[0]
        )));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for n in &names {
        if n.is_empty() {
            return Err(Error::Schema("empty series name in header".into()));
        }
        if !seen.insert(n.as_str()) {
            return Err(Error::Schema(format!("duplicate header name '{n}'")));
        }
    }

    let mut start_month = None;
    let mut prev_month = None;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut masks: Vec<Vec<bool>> = vec![Vec::new(); names.len()];
    for (k, rec) in records.enumerate() {
        let row = k + 1;
        let line = k + 2;
        let rec = rec.map_err(|e| csv_error(line, e))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != names.len() + 1 {
            return Err(Error::Schema(format!(
                "line {line} has {} cells, expected {}",
                rec.len(),
                names.len() + 1
            )));
        }
        let month = parse_month(&rec[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("bad date '{}', expected YYYY-MM", &rec[0]),
        })?;
        if let Some(p) = prev_month {
            if month != p + 1 {
                return Err(Error::Grid(format!(
                    "line {line}: {} does not follow {}",
                    month_label(month),
                    month_label(p)
                )));
            }
        } else {
            start_month = Some(month);
        }
        prev_month = Some(month);

        for (j, cell) in rec.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                columns[j].push(f64::NAN);
                masks[j].push(true);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {} value '{cell}' is not a number", j + 2),
            })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Value {
                    row,
                    column: j + 2,
                    message: format!("value {cell} is not strictly positive"),
                });
            }
            columns[j].push(v);
            masks[j].push(false);
        }
    }

    let start = start_month.ok_or_else(|| Error::Grid("no data rows".into()))?;
    let grid = TimeGrid::new(start, columns.first().map_or(0, Vec::len))?;
    let series = names
        .into_iter()
        .zip(columns.into_iter().zip(masks))
        .map(|(name, (values, missing))| PriceSeries {
            name,
            values,
            missing,
        })
        .collect();
    Panel::new(grid, series)
}

fn csv_error(line: usize, e: csv::Error) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn quote_name(name: &str) -> String {
    if name.contains([',', '"', '\n', '\r']) || name.trim() != name {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

/// Writes the panel in the same CSV layout [`parse_panel`] reads. Values use
/// the shortest representation that round-trips exactly.
pub fn serialize_panel(panel: &Panel) -> String {
    let mut out = String::from("date");
    for s in &panel.series {
        out.push(',');
        out.push_str(&quote_name(&s.name));
    }
    out.push('\n');
    for i in 0..panel.grid.n_points {
        out.push_str(&month_label(panel.grid.month_at(i)));
        for s in &panel.series {
            out.push(',');
            if !s.missing[i] {
                out.push_str(&s.values[i].to_string());
            }
        }
        out.push('\n');
    }
    out
}

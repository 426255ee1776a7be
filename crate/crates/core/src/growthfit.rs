//! Exponential growth fits on candidate windows and selection of the
//! undisturbed interval.
//!
//! Windows are scored with a free-intercept least-squares fit of the log
//! index on time (conventional R²). The growth rate itself is then estimated
//! on the selected window with the intercept pinned at the log value at the
//! window start, constrained to be positive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{Panel, PriceSeries};

/// Lower bound applied to fixed-intercept growth rates (per month).
pub const ALPHA_FLOOR: f64 = 1e-8;

/// Mean R² differences at or below this are treated as ties in the scan.
pub const R2_TIE_TOLERANCE: f64 = 1e-12;

/// Default candidate window lengths in months (2, 3 and 5 years).
pub const DEFAULT_WINDOW_LENGTHS: [usize; 3] = [24, 36, 60];

/// Inclusive index window on a panel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub series_name: String,
    pub window: Window,
    /// Growth rate per month.
    pub alpha: f64,
    /// Log index value at the window start.
    pub intercept: f64,
    pub r2: f64,
    /// Set when the fixed-intercept estimate hit [`ALPHA_FLOOR`].
    #[serde(default)]
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSearchResult {
    pub best_window: Window,
    pub window_length_months: usize,
    pub mean_r2: f64,
    pub per_series: Vec<WindowFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub fits: Vec<WindowFit>,
    pub mean: f64,
    /// Sample standard deviation (denominator n - 1); zero for a single series.
    pub sd: f64,
}

fn window_logs(series: &PriceSeries, window: Window) -> Result<Vec<f64>> {
    if window.end < window.start || window.end >= series.len() {
        return Err(Error::Window(format!(
            "window [{}, {}] outside series of length {}",
            window.start,
            window.end,
            series.len()
        )));
    }
    if window.len() < 3 {
        return Err(Error::Window(format!(
            "window of {} points is too short, need at least 3",
            window.len()
        )));
    }
    series.log_values(window.start, window.end)
}

/// Coefficient of determination on the log scale, clamped to [0, 1]. A flat
/// log series counts as a perfect fit.
fn r_squared(logs: &[f64], sse: f64) -> f64 {
    let first = logs[0];
    if logs.iter().all(|&y| y == first) {
        return 1.0;
    }
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let sst: f64 = logs.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return 1.0;
    }
    (1.0 - sse / sst).clamp(0.0, 1.0)
}

/// Ordinary least squares of log value on elapsed months with a free
/// intercept. `alpha` may be any real here.
pub fn fit_window_free(series: &PriceSeries, window: Window) -> Result<WindowFit> {
    let logs = window_logs(series, window)?;
    let n = logs.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = logs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in logs.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let alpha = sxy / sxx;
    let intercept = y_mean - alpha * x_mean;
    let sse: f64 = logs
        .iter()
        .enumerate()
        .map(|(i, y)| (y - intercept - alpha * i as f64).powi(2))
        .sum();
    Ok(WindowFit {
        series_name: series.name.clone(),
        window,
        alpha,
        intercept,
        r2: r_squared(&logs, sse),
        clamped: false,
    })
}

/// Least squares with the intercept fixed at the log value at the window
/// start; the rate is clamped below at [`ALPHA_FLOOR`].
pub fn fit_window_fixed(series: &PriceSeries, window: Window) -> Result<WindowFit> {
    let logs = window_logs(series, window)?;
    let base = logs[0];
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in logs.iter().enumerate() {
        let t = i as f64;
        num += t * (y - base);
        den += t * t;
    }
    let raw = num / den;
    let clamped = !(raw >= ALPHA_FLOOR);
    let alpha = if clamped { ALPHA_FLOOR } else { raw };
    if !alpha.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite growth rate for '{}'",
            series.name
        )));
    }
    let sse: f64 = logs
        .iter()
        .enumerate()
        .map(|(i, y)| (y - base - alpha * i as f64).powi(2))
        .sum();
    Ok(WindowFit {
        series_name: series.name.clone(),
        window,
        alpha,
        intercept: base,
        r2: r_squared(&logs, sse),
        clamped,
    })
}

/// Mean that does not depend on the order of its inputs.
fn order_free_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// Scans every contiguous window of each requested length and returns the
/// one with the largest mean R² across series. Ties go to the earliest
/// start, then the shortest length.
pub fn search_interval(panel: &Panel, lengths: &[usize]) -> Result<IntervalSearchResult> {
    if panel.is_empty() {
        return Err(Error::EmptyPanel("interval search needs at least one series".into()));
    }
    if let Some(bad) = lengths.iter().find(|&&l| l < 3) {
        return Err(Error::Window(format!("window length {bad} is below 3")));
    }
    let n = panel.grid.n_points;
    let mut candidates: Vec<Window> = lengths
        .iter()
        .filter(|&&len| len <= n)
        .flat_map(|&len| (0..=n - len).map(move |s| Window::new(s, s + len - 1)))
        .collect();
    candidates.sort_by_key(|w| (w.start, w.len()));
    candidates.dedup();
    if candidates.is_empty() {
        return Err(Error::Window(format!(
            "no window of lengths {lengths:?} fits a {n}-point grid"
        )));
    }

    let scored: Vec<Result<(Window, f64)>> = candidates
        .par_iter()
        .map(|&w| {
            let r2: Vec<f64> = panel
                .series
                .iter()
                .map(|s| fit_window_free(s, w).map(|f| f.r2))
                .collect::<Result<_>>()?;
            Ok((w, order_free_mean(&r2)))
        })
        .collect();

    let mut best: Option<(Window, f64)> = None;
    for item in scored {
        let (w, score) = item?;
        // candidates are visited in tie-break order, so only clear gains win
        if best.is_none_or(|(_, b)| score > b + R2_TIE_TOLERANCE) {
            best = Some((w, score));
        }
    }
    let (best_window, _) = best.expect("candidates is non-empty");
    let per_series = panel
        .series
        .iter()
        .map(|s| fit_window_free(s, best_window))
        .collect::<Result<Vec<_>>>()?;
    let mean_r2 = per_series.iter().map(|f| f.r2).sum::<f64>() / per_series.len() as f64;
    Ok(IntervalSearchResult {
        best_window,
        window_length_months: best_window.len(),
        mean_r2,
        per_series,
    })
}

/// Fixed-intercept growth rates for every series on `window`.
pub fn estimate_alphas(panel: &Panel, window: Window) -> Result<AlphaSummary> {
    let fits = panel
        .series
        .par_iter()
        .map(|s| fit_window_fixed(s, window))
        .collect::<Result<Vec<_>>>()?;
    let alphas: Vec<f64> = fits.iter().map(|f| f.alpha).collect();
    let (mean, sd) = mean_sd(&alphas);
    Ok(AlphaSummary { fits, mean, sd })
}

pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

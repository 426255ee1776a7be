//! Recovery of nonmonotone warping functions from growth rates, plus the
//! second-order model diagnostic.
//!
//! Time is normalized so the analysis window maps onto `[0, 1]`. The monthly
//! rate is rescaled by the window length, so an exact exponential yields the
//! identity warp `h(t) = t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growthfit::ALPHA_FLOOR;
use crate::timeseries::{PriceSeries, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpFunction {
    pub series_name: String,
    /// Raw monthly grid of the analysis window; values live on its
    /// normalized view.
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    /// Growth rate per month used to build the warp.
    pub alpha_used: f64,
    /// End of the undisturbed interval in normalized time.
    pub t0_normalized: f64,
    /// Set when the growth rate sat at the positivity floor.
    pub unreliable: bool,
}

impl WarpFunction {
    /// `h(1)`, the warped time reached at the end of the window.
    pub fn end_value(&self) -> f64 {
        *self.values.last().expect("warp has at least two points")
    }

    /// Mean `|h(t) - t|` over the undisturbed interval `[0, t0]`.
    pub fn anchor_deviation(&self) -> f64 {
        let ts = self.grid.normalized_points();
        let devs: Vec<f64> = ts
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t <= self.t0_normalized + 1e-12)
            .map(|(t, h)| (h - t).abs())
            .collect();
        devs.iter().sum::<f64>() / devs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSet {
    pub grid: TimeGrid,
    pub warps: Vec<WarpFunction>,
}

impl WarpSet {
    pub fn new(warps: Vec<WarpFunction>) -> Result<Self> {
        let first = warps.first().ok_or(Error::EmptySample)?;
        let grid = first.grid;
        for w in &warps {
            if w.grid.n_points != grid.n_points || w.values.len() != grid.n_points {
                return Err(Error::Grid(format!(
                    "warp '{}' has {} points, expected {}",
                    w.series_name,
                    w.values.len(),
                    grid.n_points
                )));
            }
        }
        let mut names: Vec<&str> = warps.iter().map(|w| w.series_name.as_str()).collect();
        names.sort_unstable();
        if let Some(d) = names.windows(2).find(|p| p[0] == p[1]) {
            return Err(Error::Schema(format!("duplicate warp name '{}'", d[0])));
        }
        Ok(Self { grid, warps })
    }

    pub fn len(&self) -> usize {
        self.warps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.warps.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.warps.iter().map(|w| w.series_name.as_str()).collect()
    }

    /// Splits into (kept, excluded) by name.
    pub fn partition(&self, exclude: &[String]) -> (Vec<&WarpFunction>, Vec<&WarpFunction>) {
        self.warps
            .iter()
            .partition(|w| !exclude.iter().any(|e| e == &w.series_name))
    }
}

/// Warp of `series` on the analysis window starting at grid index
/// `window_start` and running to the end of the series:
/// `h(t) = (log X(t) - log X(0)) / alpha`, in normalized units.
///
/// `fit_end` is the grid index closing the undisturbed interval.
pub fn compute_warp(
    series: &PriceSeries,
    grid: &TimeGrid,
    alpha: f64,
    window_start: usize,
    fit_end: usize,
) -> Result<WarpFunction> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Rate(alpha));
    }
    if series.len() != grid.n_points {
        return Err(Error::Grid(format!(
            "series '{}' has {} points on a {}-point grid",
            series.name,
            series.len(),
            grid.n_points
        )));
    }
    let last = grid.n_points - 1;
    if window_start >= last || fit_end < window_start || fit_end > last {
        return Err(Error::Window(format!(
            "analysis window [{window_start}, {last}] with fit end {fit_end} is invalid"
        )));
    }
    let sub = grid.sub_grid(window_start, last)?;
    let logs = series.log_values(window_start, last)?;
    let scale = alpha * sub.span_months();
    let base = logs[0];
    let mut values: Vec<f64> = logs.iter().map(|y| (y - base) / scale).collect();
    values[0] = 0.0;
    Ok(WarpFunction {
        series_name: series.name.clone(),
        grid: sub,
        values,
        alpha_used: alpha,
        t0_normalized: (fit_end - window_start) as f64 / sub.span_months(),
        unreliable: alpha <= ALPHA_FLOOR,
    })
}

/// Latent smooth trajectory `x0 * exp(alpha * months elapsed)` on `grid`.
pub fn baseline_growth(name: &str, alpha: f64, x0: f64, grid: &TimeGrid) -> Result<PriceSeries> {
    if !alpha.is_finite() || !(x0 > 0.0) {
        return Err(Error::Config(format!(
            "baseline needs finite alpha and positive level, got alpha={alpha}, x0={x0}"
        )));
    }
    let values = (0..grid.n_points)
        .map(|i| x0 * (alpha * i as f64).exp())
        .collect();
    PriceSeries::complete(name, values)
}

fn first_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    d
}

fn second_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let h2 = h * h;
    let mut d = vec![0.0; n];
    d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    d
}

fn raw_residual(x: &[f64], h: &[f64], alpha_norm: f64, dt: f64) -> Vec<f64> {
    let d1 = first_derivative(x, dt);
    let d2 = second_derivative(x, dt);
    let h2 = second_derivative(h, dt);
    (0..x.len())
        .map(|i| {
            let q = d1[i] / x[i];
            d2[i] / x[i] - q * q - alpha_norm * h2[i]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub series_name: String,
    /// `d/dt(X'/X) - alpha * h''` per grid point, normalized time units.
    pub residuals: Vec<f64>,
    pub max_abs: f64,
    /// Residual level of exact-model data with the same warp and rate.
    pub calibration: f64,
    pub flagged: bool,
}

/// Relative floor on the calibration level, in units of `alpha_norm^2`.
const CALIBRATION_FLOOR: f64 = 1e-6;

/// Checks `d/dt (X'/X) = alpha * h''` on the warp grid with second-order
/// finite differences. The residual is flagged when it exceeds ten times the
/// level seen on exact-model data `X(0) exp(alpha h(t))` with the same warp.
///
/// `series` must be aligned with the warp grid.
pub fn second_order_diagnostic(
    series: &PriceSeries,
    warp: &WarpFunction,
    alpha: f64,
) -> Result<Diagnostic> {
    let n = warp.grid.n_points;
    if n < 5 {
        return Err(Error::Grid(format!("diagnostic needs at least 5 points, got {n}")));
    }
    if series.len() != n {
        return Err(Error::Grid(format!(
            "series '{}' has {} points, warp grid has {n}",
            series.name,
            series.len()
        )));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Rate(alpha));
    }
    let x = &series.values;
    if let Some(index) = series.first_missing_in(0, n - 1) {
        return Err(Error::MissingData {
            series: series.name.clone(),
            index,
        });
    }
    let dt = 1.0 / warp.grid.span_months();
    let alpha_norm = alpha * warp.grid.span_months();
    let residuals = raw_residual(x, &warp.values, alpha_norm, dt);
    let max_abs = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));

    let model: Vec<f64> = warp
        .values
        .iter()
        .map(|h| x[0] * (alpha_norm * h).exp())
        .collect();
    let calibration = raw_residual(&model, &warp.values, alpha_norm, dt)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    let threshold = 10.0 * calibration.max(CALIBRATION_FLOOR * alpha_norm * alpha_norm);
    Ok(Diagnostic {
        series_name: series.name.clone(),
        residuals,
        max_abs,
        calibration,
        flagged: max_abs > threshold,
    })
}

/// Writes warps as `t_normalized,<name1>,...`, one row per grid point.
pub fn warps_to_csv(set: &WarpSet) -> String {
    let mut out = String::from("t_normalized");
    for w in &set.warps {
        out.push(',');
        out.push_str(&w.series_name);
    }
    out.push('\n');
    for (i, t) in set.grid.normalized_points().iter().enumerate() {
        out.push_str(&t.to_string());
        for w in &set.warps {
            out.push(',');
            out.push_str(&w.values[i].to_string());
        }
        out.push('\n');
    }
    out
}

/// Reads a warp CSV. The monthly anchor is not part of the file, so the grid
/// starts at `start_month`; rates are unknown and left as NaN.
pub fn warps_from_csv(text: &str, start_month: i32) -> Result<WarpSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Schema("empty warp file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t_normalized" {
        return Err(Error::Schema(
            "warp header must be 't_normalized,<name1>,...'".into(),
        ));
    }
    let names = &cols[1..];
    let mut ts = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (k, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::Schema(format!(
                "line {} has {} cells, expected {}",
                k + 1,
                cells.len(),
                cols.len()
            )));
        }
        let parse = |c: &str| -> Result<f64> {
            c.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: k + 1,
                    message: format!("'{c}' is not a finite number"),
                })
        };
        ts.push(parse(cells[0])?);
        for (j, c) in cells[1..].iter().enumerate() {
            columns[j].push(parse(c)?);
        }
    }
    let grid = TimeGrid::new(start_month, ts.len())?;
    for (t, expected) in ts.iter().zip(grid.normalized_points()) {
        if (t - expected).abs() > 1e-12 {
            return Err(Error::Grid(format!(
                "t_normalized value {t} does not match uniform grid point {expected}"
            )));
        }
    }
    let warps = names
        .iter()
        .zip(columns)
        .map(|(name, values)| WarpFunction {
            series_name: name.to_string(),
            grid,
            values,
            alpha_used: f64::NAN,
            t0_normalized: 0.0,
            unreliable: false,
        })
        .collect();
    WarpSet::new(warps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(144, n).unwrap()
    }

    #[test]
    fn exact_exponential_gives_identity() {
        let g = grid(176);
        let s = baseline_growth("A", 0.0075, 92.0, &g).unwrap();
        let w = compute_warp(&s, &g, 0.0075, 0, 23).unwrap();
        for (h, t) in w.values.iter().zip(g.normalized_points()) {
            assert!((h - t).abs() < 1e-12);
        }
        assert_eq!(w.values[0], 0.0);
        assert!((w.t0_normalized - 23.0 / 175.0).abs() < 1e-15);
        assert!(w.anchor_deviation() < 1e-10);
    }

    #[test]
    fn flat_series_gives_zero_warp() {
        let g = grid(30);
        let s = PriceSeries::complete("A", vec![100.0; 30]).unwrap();
        let w = compute_warp(&s, &g, 0.01, 0, 10).unwrap();
        assert!(w.values.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn drop_below_start_gives_negative_warp() {
        let g = grid(5);
        let s = PriceSeries::complete("A", vec![100.0, 110.0, 105.0, 95.0, 90.0]).unwrap();
        let w = compute_warp(&s, &g, 0.01, 0, 1).unwrap();
        assert!(w.values[3] < 0.0 && w.values[4] < 0.0);
        assert!(w.values[1] > 0.0);
    }

    #[test]
    fn warp_starts_at_window_start() {
        let g = grid(40);
        let s = baseline_growth("A", 0.01, 90.0, &g).unwrap();
        let w = compute_warp(&s, &g, 0.01, 10, 33).unwrap();
        assert_eq!(w.grid.start_month, 154);
        assert_eq!(w.grid.n_points, 30);
        assert!((w.end_value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn warp_errors() {
        let g = grid(10);
        let s = baseline_growth("A", 0.01, 90.0, &g).unwrap();
        assert_eq!(compute_warp(&s, &g, 0.0, 0, 3), Err(Error::Rate(0.0)));
        assert!(matches!(compute_warp(&s, &g, -1.0, 0, 3), Err(Error::Rate(_))));
        let mut m = s.clone();
        m.missing[7] = true;
        m.values[7] = f64::NAN;
        assert!(matches!(
            compute_warp(&m, &g, 0.01, 0, 3),
            Err(Error::MissingData { .. })
        ));
    }

    #[test]
    fn clamped_rate_is_tagged() {
        let g = grid(10);
        let s = baseline_growth("A", 0.01, 90.0, &g).unwrap();
        assert!(compute_warp(&s, &g, ALPHA_FLOOR, 0, 3).unwrap().unreliable);
        assert!(!compute_warp(&s, &g, 0.01, 0, 3).unwrap().unreliable);
    }

    #[test]
    fn baseline_values() {
        let g = grid(13);
        let z = baseline_growth("Z", 0.0075, 100.0, &g).unwrap();
        assert!((z.values[12] - 109.41742837052104).abs() < 1e-10);
        let flat = baseline_growth("Z", 0.0, 50.0, &g).unwrap();
        assert!(flat.values.iter().all(|&v| v == 50.0));
    }

    fn warped_series(n: usize, alpha_norm: f64, h: impl Fn(f64) -> f64) -> (PriceSeries, WarpFunction) {
        let g = grid(n);
        let ts = g.normalized_points();
        let hv: Vec<f64> = ts.iter().map(|&t| h(t)).collect();
        let x: Vec<f64> = hv.iter().map(|&v| 90.0 * (alpha_norm * v).exp()).collect();
        let s = PriceSeries::complete("A", x).unwrap();
        let w = WarpFunction {
            series_name: "A".into(),
            grid: g,
            values: hv,
            alpha_used: alpha_norm / g.span_months(),
            t0_normalized: 0.1,
            unreliable: false,
        };
        (s, w)
    }

    #[test]
    fn diagnostic_vanishes_for_exponential() {
        let (s, w) = warped_series(176, 1.3, |t| t);
        let d = second_order_diagnostic(&s, &w, 1.3 / 175.0).unwrap();
        // stencil error of X''/X - (X'/X)^2 on exp(a t) is -a^4 dt^2 / 4
        let dt = 1.0 / 175.0;
        assert!(d.max_abs < 1.3f64.powi(4) * dt * dt, "{}", d.max_abs);
        assert!(!d.flagged);
    }

    #[test]
    fn diagnostic_converges_at_second_order() {
        let h = |t: f64| t + 0.3 * (2.0 * std::f64::consts::PI * t).sin();
        let mut errs = Vec::new();
        for n in [51usize, 101, 201, 401] {
            let (s, w) = warped_series(n, 1.3, h);
            let d = second_order_diagnostic(&s, &w, 1.3 / (n - 1) as f64).unwrap();
            errs.push(d.max_abs);
        }
        for pair in errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(order >= 1.9, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn diagnostic_flags_time_varying_rate() {
        // Z'/Z = a0 (1 + s/2) with identity warp, checked against constant a0
        let n = 176;
        let a0 = 1.3;
        let g = grid(n);
        let x: Vec<f64> = g
            .normalized_points()
            .iter()
            .map(|&t| 90.0 * (a0 * (t + t * t / 4.0)).exp())
            .collect();
        let s = PriceSeries::complete("A", x).unwrap();
        let w = WarpFunction {
            series_name: "A".into(),
            grid: g,
            values: g.normalized_points(),
            alpha_used: a0 / 175.0,
            t0_normalized: 0.1,
            unreliable: false,
        };
        let d = second_order_diagnostic(&s, &w, a0 / 175.0).unwrap();
        assert!(d.flagged);
        assert!((d.max_abs - a0 / 2.0).abs() < 1e-3);

        let (s, w) = warped_series(n, a0, |t| t + 0.2 * (3.0 * t).sin());
        assert!(!second_order_diagnostic(&s, &w, a0 / 175.0).unwrap().flagged);
    }

    #[test]
    fn diagnostic_needs_five_points() {
        let (s, w) = warped_series(4, 1.0, |t| t);
        assert!(matches!(
            second_order_diagnostic(&s, &w, 0.3),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(12);
        let warps = ["a", "b"]
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let s = PriceSeries::complete(
                    *name,
                    (0..12).map(|i| 90.0 + (i as f64 * (k as f64 + 1.0)).sin() * 5.0).collect(),
                )
                .unwrap();
                compute_warp(&s, &g, 0.01, 0, 3).unwrap()
            })
            .collect();
        let set = WarpSet::new(warps).unwrap();
        let back = warps_from_csv(&warps_to_csv(&set), 144).unwrap();
        assert_eq!(back.names(), set.names());
        for (a, b) in set.warps.iter().zip(&back.warps) {
            assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn warp_csv_errors() {
        assert!(matches!(warps_from_csv("x,a\n0,1\n1,2\n", 0), Err(Error::Schema(_))));
        assert!(matches!(
            warps_from_csv("t_normalized,a\n0,1\n0.7,2\n", 0),
            Err(Error::Grid(_))
        ));
        assert!(matches!(
            warps_from_csv("t_normalized,a\n0,1\n1,x\n", 0),
            Err(Error::Parse { .. })
        ));
    }

    proptest! {
        #[test]
        fn warp_is_scale_invariant(vals in proptest::collection::vec(50.0f64..200.0, 6..40), k in 0.01f64..100.0, alpha in 1e-4f64..0.05) {
            let g = grid(vals.len());
            let s = PriceSeries::complete("A", vals).unwrap();
            let a = compute_warp(&s, &g, alpha, 0, 3).unwrap();
            let b = compute_warp(&s.scaled(k), &g, alpha, 0, 3).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn baseline_round_trip_is_identity(alpha in 3e-3f64..0.05, x0 in 1.0f64..500.0, n in 24usize..200) {
            let g = grid(n);
            let s = baseline_growth("Z", alpha, x0, &g).unwrap();
            let w = compute_warp(&s, &g, alpha, 0, 1).unwrap();
            for (h, t) in w.values.iter().zip(g.normalized_points()) {
                prop_assert!((h - t).abs() < 1e-12);
            }
        }

        #[test]
        fn warp_direction_follows_price(vals in proptest::collection::vec(50.0f64..200.0, 3..40), alpha in 1e-4f64..0.05) {
            let g = grid(vals.len());
            let s = PriceSeries::complete("A", vals.clone()).unwrap();
            let w = compute_warp(&s, &g, alpha, 0, 1).unwrap();
            for i in 0..vals.len() - 1 {
                let dh = w.values[i + 1] - w.values[i];
                let dx = vals[i + 1] - vals[i];
                prop_assert_eq!(dh.partial_cmp(&0.0), dx.partial_cmp(&0.0));
            }
        }
    }
}

//! Python bindings for the warpgrowth pipeline.
//!
//! Series values and curves cross the boundary as plain lists of floats;
//! tabular results (fits, study reports) come back as dicts.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use warpgrowth::fpca::{self, Retention, DEFAULT_GAMMAS};
use warpgrowth::growthfit::{self, Window, WindowFit, DEFAULT_WINDOW_LENGTHS};
use warpgrowth::simulate;
use warpgrowth::timeseries::{self, PriceSeries, TimeGrid};
use warpgrowth::warping;
use warpgrowth::Error;

create_exception!(warpgrowth_py, WarpgrowthError, PyException);
create_exception!(warpgrowth_py, InputError, WarpgrowthError);
create_exception!(warpgrowth_py, NumericalError, WarpgrowthError);
create_exception!(warpgrowth_py, ConfigError, WarpgrowthError);

fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Config(_) => ConfigError::new_err(e.to_string()),
        e if e.is_input_error() => InputError::new_err(e.to_string()),
        _ => NumericalError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for warpgrowth::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| NumericalError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn fit_dict<'py>(py: Python<'py>, f: &WindowFit) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &f.series_name)?;
    d.set_item("alpha", f.alpha)?;
    d.set_item("intercept", f.intercept)?;
    d.set_item("r2", f.r2)?;
    d.set_item("clamped", f.clamped)?;
    Ok(d)
}

#[pyclass(name = "Panel", module = "warpgrowth_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPanel {
    inner: timeseries::Panel,
}

#[pymethods]
impl PyPanel {
    /// Builds a panel from `{name: values}` on a monthly grid starting at
    /// `start_month` (January 1987 = 1). Use NaN for missing values.
    #[new]
    fn new(start_month: i32, series: Vec<(String, Vec<f64>)>) -> PyResult<Self> {
        let n = series.first().map_or(0, |s| s.1.len());
        let grid = TimeGrid::new(start_month, n).or_py()?;
        let series = series
            .into_iter()
            .map(|(name, values)| {
                let missing = values.iter().map(|v| v.is_nan()).collect();
                PriceSeries { name, values, missing }
            })
            .collect();
        Ok(Self {
            inner: timeseries::Panel::new(grid, series).or_py()?,
        })
    }

    /// Parses `date,<name>...` CSV text.
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: timeseries::parse_panel(text).or_py()?,
        })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError::new_err(e.to_string()))?;
        Self::from_csv(&text)
    }

    fn to_csv(&self) -> String {
        timeseries::serialize_panel(&self.inner)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.series.iter().map(|s| s.name.clone()).collect()
    }

    #[getter]
    fn start_month(&self) -> i32 {
        self.inner.grid.start_month
    }

    #[getter]
    fn months(&self) -> Vec<i32> {
        (0..self.inner.grid.n_points).map(|i| self.inner.grid.month_at(i)).collect()
    }

    fn values(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .get(name)
            .map(|s| s.values.clone())
            .ok_or_else(|| InputError::new_err(format!("no series named '{name}'")))
    }

    /// Keeps months `[from_month, to_month]`; returns the new panel and the
    /// names dropped for missing values.
    fn restrict(&self, from_month: i32, to_month: i32) -> PyResult<(PyPanel, Vec<String>)> {
        let r = timeseries::restrict(&self.inner, from_month, to_month).or_py()?;
        Ok((PyPanel { inner: r.panel }, r.dropped))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Panel({} series, {}..{})",
            self.inner.len(),
            timeseries::month_label(self.inner.grid.start_month),
            timeseries::month_label(self.inner.grid.end_month())
        )
    }
}

#[pyclass(name = "WarpSet", module = "warpgrowth_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWarpSet {
    inner: warping::WarpSet,
}

#[pymethods]
impl PyWarpSet {
    #[staticmethod]
    fn from_csv(text: &str, start_month: i32) -> PyResult<Self> {
        Ok(Self {
            inner: warping::warps_from_csv(text, start_month).or_py()?,
        })
    }

    fn to_csv(&self) -> String {
        warping::warps_to_csv(&self.inner)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().into_iter().map(String::from).collect()
    }

    /// Normalized time points on `[0, 1]`.
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.grid.normalized_points()
    }

    #[getter]
    fn start_month(&self) -> i32 {
        self.inner.grid.start_month
    }

    fn values(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .warps
            .iter()
            .find(|w| w.series_name == name)
            .map(|w| w.values.clone())
            .ok_or_else(|| InputError::new_err(format!("no warp named '{name}'")))
    }

    /// `h(1)` per series.
    fn end_values(&self) -> Vec<f64> {
        self.inner.warps.iter().map(|w| w.end_value()).collect()
    }

    fn unreliable(&self) -> Vec<bool> {
        self.inner.warps.iter().map(|w| w.unreliable).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "FpcaModel", module = "warpgrowth_py", frozen)]
struct PyFpcaModel {
    inner: fpca::FpcaModel,
}

#[pymethods]
impl PyFpcaModel {
    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean.clone()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn eigenfunctions(&self) -> Vec<Vec<f64>> {
        self.inner.eigenfunctions.clone()
    }

    #[getter]
    fn var_explained(&self) -> Vec<f64> {
        self.inner.var_explained.clone()
    }

    #[getter]
    fn n_retained(&self) -> usize {
        self.inner.n_retained
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }

    #[getter]
    fn scores(&self) -> Vec<Vec<f64>> {
        self.inner.scores.clone()
    }

    #[getter]
    fn in_sample(&self) -> Vec<bool> {
        self.inner.in_sample.clone()
    }

    fn cumulative_fraction(&self, k: usize) -> f64 {
        self.inner.cumulative_fraction(k)
    }

    fn score_of(&self, name: &str) -> Option<Vec<f64>> {
        self.inner.score_of(name).map(<[f64]>::to_vec)
    }

    #[pyo3(signature = (scores, k=None))]
    fn reconstruct(&self, scores: Vec<f64>, k: Option<usize>) -> Vec<f64> {
        self.inner.reconstruct(&scores, k.unwrap_or(self.inner.n_retained))
    }

    /// Curves `mean + gamma * sqrt(lambda_k) * phi_k`; `k` is 1-based.
    #[pyo3(signature = (k, gammas=None))]
    fn modes_of_variation(&self, k: usize, gammas: Option<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let gammas = gammas.unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
        Ok(fpca::modes_of_variation(&self.inner, k, &gammas).or_py()?.curves)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| NumericalError::new_err(e.to_string()))
    }
}

#[pyclass(name = "SimTruth", module = "warpgrowth_py", skip_from_py_object)]
#[derive(Clone)]
struct PySimTruth {
    inner: simulate::SimTruth,
}

#[pymethods]
impl PySimTruth {
    /// The bundled default truth.
    #[staticmethod]
    fn default() -> Self {
        Self {
            inner: simulate::SimTruth::default_truth(),
        }
    }

    #[staticmethod]
    fn from_manifest(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: simulate::SimTruth::from_manifest(std::path::Path::new(path)).or_py()?,
        })
    }

    #[getter]
    fn get_n(&self) -> usize {
        self.inner.n
    }

    #[setter]
    fn set_n(&mut self, n: usize) {
        self.inner.n = n;
    }

    #[getter]
    fn get_seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean.clone()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn eigenfunctions(&self) -> Vec<Vec<f64>> {
        self.inner.eigenfunctions.clone()
    }

    fn two_component_fraction(&self) -> f64 {
        self.inner.two_component_fraction()
    }

    /// Draws replicate `index` of the study as a panel.
    fn generate_panel(&self, index: u64) -> PyResult<PyPanel> {
        let mut rng = simulate::replicate_rng(self.inner.seed, index);
        let rep = simulate::generate_replicate(&self.inner, &mut rng).or_py()?;
        Ok(PyPanel { inner: rep.panel })
    }
}

/// Scans windows of the given lengths for the largest mean R².
#[pyfunction]
#[pyo3(signature = (panel, window_lengths=None))]
fn search_interval<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    window_lengths: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyDict>> {
    let lengths = window_lengths.unwrap_or_else(|| DEFAULT_WINDOW_LENGTHS.to_vec());
    let r = growthfit::search_interval(&panel.inner, &lengths).or_py()?;
    let grid = &panel.inner.grid;
    let d = PyDict::new(py);
    d.set_item("window", (r.best_window.start, r.best_window.end))?;
    d.set_item("start_month", grid.month_at(r.best_window.start))?;
    d.set_item("end_month", grid.month_at(r.best_window.end))?;
    d.set_item("window_length_months", r.window_length_months)?;
    d.set_item("mean_r2", r.mean_r2)?;
    let fits = r
        .per_series
        .iter()
        .map(|f| fit_dict(py, f))
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("fits", fits)?;
    Ok(d)
}

/// Fixed-intercept growth rates on the index window `[start, end]`.
#[pyfunction]
fn estimate_alphas<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    start: usize,
    end: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let s = growthfit::estimate_alphas(&panel.inner, Window::new(start, end)).or_py()?;
    let d = PyDict::new(py);
    d.set_item("mean", s.mean)?;
    d.set_item("sd", s.sd)?;
    d.set_item("alphas", s.fits.iter().map(|f| f.alpha).collect::<Vec<_>>())?;
    let fits = s.fits.iter().map(|f| fit_dict(py, f)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("fits", fits)?;
    Ok(d)
}

/// Warps of every series from index `window_start` to the panel end, using
/// one growth rate per series.
#[pyfunction]
fn compute_warps(panel: &PyPanel, alphas: Vec<f64>, window_start: usize, fit_end: usize) -> PyResult<PyWarpSet> {
    let p = &panel.inner;
    if alphas.len() != p.len() {
        return Err(InputError::new_err(format!(
            "{} growth rates for {} series",
            alphas.len(),
            p.len()
        )));
    }
    let warps = p
        .series
        .iter()
        .zip(&alphas)
        .map(|(s, a)| warping::compute_warp(s, &p.grid, *a, window_start, fit_end))
        .collect::<warpgrowth::Result<Vec<_>>>()
        .or_py()?;
    Ok(PyWarpSet {
        inner: warping::WarpSet::new(warps).or_py()?,
    })
}

/// `x0 * exp(alpha * months elapsed)` on `n_points` months.
#[pyfunction]
fn baseline_growth(alpha: f64, x0: f64, n_points: usize) -> PyResult<Vec<f64>> {
    let grid = TimeGrid::new(1, n_points).or_py()?;
    Ok(warping::baseline_growth("baseline", alpha, x0, &grid).or_py()?.values)
}

#[pyfunction]
#[pyo3(signature = (warps, exclude=Vec::new(), k=None, var_threshold=None))]
fn fit_fpca(
    warps: &PyWarpSet,
    exclude: Vec<String>,
    k: Option<usize>,
    var_threshold: Option<f64>,
) -> PyResult<PyFpcaModel> {
    let retention = match (k, var_threshold) {
        (Some(_), Some(_)) => return Err(ConfigError::new_err("pass either k or var_threshold")),
        (Some(k), None) => Retention::Components(k),
        (None, Some(v)) => Retention::VarianceThreshold(v),
        (None, None) => Retention::default(),
    };
    Ok(PyFpcaModel {
        inner: fpca::fit_fpca(&warps.inner, &exclude, retention).or_py()?,
    })
}

/// Regression of each component's scores on the growth rates.
#[pyfunction]
fn score_rate_regression<'py>(
    py: Python<'py>,
    scores: Vec<Vec<f64>>,
    alphas: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &fpca::score_rate_regression(&scores, &alphas).or_py()?)
}

/// Residual check of `d/dt(X'/X) = alpha h''` for one series on the warp grid.
#[pyfunction]
fn second_order_diagnostic<'py>(
    py: Python<'py>,
    warps: &PyWarpSet,
    name: &str,
    values: Vec<f64>,
    alpha: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let warp = warps
        .inner
        .warps
        .iter()
        .find(|w| w.series_name == name)
        .ok_or_else(|| InputError::new_err(format!("no warp named '{name}'")))?;
    let series = PriceSeries::complete(name, values).or_py()?;
    json_to_py(py, &warping::second_order_diagnostic(&series, warp, alpha).or_py()?)
}

/// Runs the Monte Carlo study; returns the report as a dict.
#[pyfunction]
fn run_study<'py>(py: Python<'py>, truth: &PySimTruth, n_replicates: usize) -> PyResult<Bound<'py, PyAny>> {
    let t = truth.inner.clone();
    let report = py.detach(|| simulate::run_study(&t, n_replicates)).or_py()?;
    json_to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (truth, sizes=vec![25, 100, 400], repeats=50))]
fn convergence_sweep<'py>(
    py: Python<'py>,
    truth: &PySimTruth,
    sizes: Vec<usize>,
    repeats: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let t = truth.inner.clone();
    let table = py
        .detach(|| simulate::convergence_sweep(&t, &sizes, repeats))
        .or_py()?;
    json_to_py(py, &table)
}

#[pyfunction]
fn month_index(year: i32, month: u32) -> i32 {
    timeseries::month_index(year, month)
}

#[pyfunction]
fn month_label(index: i32) -> String {
    timeseries::month_label(index)
}

#[pymodule]
fn warpgrowth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("WarpgrowthError", py.get_type::<WarpgrowthError>())?;
    m.add("InputError", py.get_type::<InputError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add_class::<PyPanel>()?;
    m.add_class::<PyWarpSet>()?;
    m.add_class::<PyFpcaModel>()?;
    m.add_class::<PySimTruth>()?;
    m.add_function(wrap_pyfunction!(search_interval, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_alphas, m)?)?;
    m.add_function(wrap_pyfunction!(compute_warps, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_growth, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fpca, m)?)?;
    m.add_function(wrap_pyfunction!(score_rate_regression, m)?)?;
    m.add_function(wrap_pyfunction!(second_order_diagnostic, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(month_index, m)?)?;
    m.add_function(wrap_pyfunction!(month_label, m)?)?;
    Ok(())
}

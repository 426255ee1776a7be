//! Monte Carlo study of the estimation pipeline.
//!
//! Warps are drawn from a known Karhunen–Loève truth, turned into price
//! trajectories through the exponential growth model, and pushed through the
//! same interval search, rate estimation, warp recovery and FPCA used on
//! real data. Error metrics compare every stage with the truth.
//!
//! The truth is expressed in normalized units: `mean` and `eigenfunctions`
//! live on the normalized view of `grid`, and a warp in months is
//! `T0 + L * h(τ)` with `L` the grid span. Trajectories are
//! `X(t) = X(T0) exp{α (h(t) - h(T0))}` with `α` per month.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::{self, Retention};
use crate::growthfit::{self, mean_sd, DEFAULT_WINDOW_LENGTHS};
use crate::quadrature::{inner, norm_sq, trapezoid_weights};
use crate::timeseries::{Panel, PriceSeries, TimeGrid};
use crate::warping::{compute_warp, warps_from_csv, WarpSet};

const ORTHONORMALITY_TOL: f64 = 1e-8;
/// Warps with a smaller norm on the comparison region are left out of RISE.
pub const RISE_NORM_GUARD: f64 = 1e-8;
const MAX_DRAWS_CHECK: usize = 10_000;
const MIN_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub grid: TimeGrid,
    pub mean: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub n: usize,
    pub x0_range: (f64, f64),
    pub alpha_range: (f64, f64),
    pub cap: f64,
    pub seed: u64,
    pub window_lengths: Vec<usize>,
}

/// Months 144..=319 (December 1998 to July 2013).
pub const DEFAULT_T0: i32 = 144;
pub const DEFAULT_T1: i32 = 319;
/// Last month of the undisturbed stretch in the bundled truth (November 2000).
pub const DEFAULT_FIT_END: i32 = 167;
pub const DEFAULT_K: usize = 10;

/// Weighted Gram–Schmidt (two passes) under the quadrature inner product.
fn orthonormalize(basis: Vec<Vec<f64>>, w: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    for mut v in basis {
        for _ in 0..2 {
            for q in &out {
                let c = inner(w, &v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = norm_sq(w, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        out.push(v);
    }
    out
}

impl SimTruth {
    /// Bundled truth: identity warp up to November 2000, then a boom–bust
    /// shaped mean; eigenfunctions are orthonormalized sine perturbations
    /// vanishing on the undisturbed stretch.
    pub fn default_truth() -> Self {
        let grid = TimeGrid::new(DEFAULT_T0, (DEFAULT_T1 - DEFAULT_T0 + 1) as usize)
            .expect("static grid");
        let ts = grid.normalized_points();
        let tau0 = grid.to_normalized(DEFAULT_FIT_END as f64);
        let u: Vec<f64> = ts
            .iter()
            .map(|t| ((t - tau0) / (1.0 - tau0)).max(0.0))
            .collect();
        let pi = std::f64::consts::PI;
        let mean = ts
            .iter()
            .zip(&u)
            .map(|(t, u)| t + 0.45 * (1.25 * pi * u).sin())
            .collect();
        let w = trapezoid_weights(grid.n_points);
        let raw = (1..=DEFAULT_K)
            .map(|k| u.iter().map(|u| ((k as f64 - 0.5) * pi * u).sin()).collect())
            .collect();
        let eigenfunctions = orthonormalize(raw, &w);

        // 80% / 15% on the leading pair, the rest decaying geometrically
        let scale = 0.05;
        let tail: f64 = (0..DEFAULT_K - 2).map(|j| 0.5f64.powi(j as i32)).sum();
        let eigenvalues = (0..DEFAULT_K)
            .map(|k| match k {
                0 => scale * 0.80,
                1 => scale * 0.15,
                _ => scale * 0.05 * 0.5f64.powi(k as i32 - 2) / tail,
            })
            .collect();
        Self {
            grid,
            mean,
            eigenfunctions,
            eigenvalues,
            n: 20,
            x0_range: (85.0, 100.0),
            alpha_range: (0.003, 0.018),
            cap: 300.0,
            seed: 20140301,
            window_lengths: DEFAULT_WINDOW_LENGTHS.to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Fraction of variance carried by the first two true components.
    pub fn two_component_fraction(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(2).sum::<f64>() / total
    }

    /// True covariance `Σ λ_k φ_k(s) φ_k(t)` at grid points `s`, `t`.
    pub fn covariance_at(&self, s: usize, t: usize) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.eigenfunctions)
            .map(|(l, p)| l * p[s] * p[t])
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.grid.n_points;
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.mean.len() != m {
            return cfg(format!("mean has {} points, grid has {m}", self.mean.len()));
        }
        if self.eigenfunctions.len() != self.eigenvalues.len() {
            return cfg(format!(
                "{} eigenfunctions for {} eigenvalues",
                self.eigenfunctions.len(),
                self.eigenvalues.len()
            ));
        }
        if self.eigenvalues.iter().any(|l| !(*l >= 0.0)) {
            return cfg("eigenvalues must be nonnegative".into());
        }
        if self.eigenvalues.windows(2).any(|p| p[1] > p[0]) {
            return cfg("eigenvalues must be nonincreasing".into());
        }
        let w = trapezoid_weights(m);
        for (j, a) in self.eigenfunctions.iter().enumerate() {
            if a.len() != m {
                return cfg(format!("eigenfunction {} has {} points", j + 1, a.len()));
            }
            for (k, b) in self.eigenfunctions.iter().enumerate().take(j + 1) {
                let expected = if j == k { 1.0 } else { 0.0 };
                let d = inner(&w, a, b);
                if (d - expected).abs() > ORTHONORMALITY_TOL {
                    return cfg(format!(
                        "eigenfunctions {} and {} have inner product {d}",
                        j + 1,
                        k + 1
                    ));
                }
            }
        }
        let (lo, hi) = self.x0_range;
        if !(lo > 0.0 && hi > lo) {
            return cfg(format!("invalid initial level range ({lo}, {hi})"));
        }
        let (lo, hi) = self.alpha_range;
        if !(lo > 0.0 && hi > lo) {
            return cfg(format!("invalid growth rate range ({lo}, {hi})"));
        }
        if !(self.cap > 0.0) {
            return cfg("cap must be positive".into());
        }
        if self.n < 2 {
            return cfg("sample size must be at least 2".into());
        }
        Ok(())
    }

    /// Warp `μ + Σ √λ_k ξ_k φ_k` in normalized units.
    pub fn warp_from_scores(&self, xi: &[f64]) -> Vec<f64> {
        let mut h = self.mean.clone();
        for ((l, p), x) in self.eigenvalues.iter().zip(&self.eigenfunctions).zip(xi) {
            let c = l.sqrt() * x;
            h.iter_mut().zip(p).for_each(|(a, b)| *a += c * b);
        }
        h
    }

    /// `X(T0) exp{α (h(t) - h(T0))}` on the monthly grid, with `h` in
    /// normalized units and `α` per month.
    pub fn trajectory(&self, warp: &[f64], alpha: f64, x0: f64) -> Vec<f64> {
        let span = self.grid.span_months();
        warp.iter()
            .map(|h| x0 * (alpha * span * (h - warp[0])).exp())
            .collect()
    }

    /// Loads a truth from a JSON manifest referencing CSV files for the mean
    /// (`t_normalized,mean`) and eigenfunctions (`t_normalized,phi_1,...`).
    /// Relative paths resolve against the manifest's directory.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: TruthManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad truth manifest: {e}")))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let read = |p: &str| -> Result<WarpSet> {
            let full = dir.join(p);
            let body = std::fs::read_to_string(&full)?;
            warps_from_csv(&body, manifest.t0_month)
        };
        let mean_set = read(&manifest.mean_csv)?;
        let phi_set = read(&manifest.eigenfunctions_csv)?;
        if mean_set.len() != 1 {
            return Err(Error::Config("mean file must hold exactly one column".into()));
        }
        let defaults = SimTruth::default_truth();
        let truth = SimTruth {
            grid: mean_set.grid,
            mean: mean_set.warps[0].values.clone(),
            eigenfunctions: phi_set.warps.into_iter().map(|w| w.values).collect(),
            eigenvalues: manifest.eigenvalues,
            n: manifest.n.unwrap_or(defaults.n),
            x0_range: manifest.x0_range.unwrap_or(defaults.x0_range),
            alpha_range: manifest.alpha_range.unwrap_or(defaults.alpha_range),
            cap: manifest.cap.unwrap_or(defaults.cap),
            seed: manifest.seed.unwrap_or(defaults.seed),
            window_lengths: manifest.window_lengths.unwrap_or(defaults.window_lengths),
        };
        truth.validate()?;
        Ok(truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    /// Month index of the first grid point.
    pub t0_month: i32,
    pub mean_csv: String,
    pub eigenfunctions_csv: String,
    pub eigenvalues: Vec<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub x0_range: Option<(f64, f64)>,
    #[serde(default)]
    pub alpha_range: Option<(f64, f64)>,
    #[serde(default)]
    pub cap: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub window_lengths: Option<Vec<usize>>,
}

/// One generated sample with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub panel: Panel,
    pub alphas: Vec<f64>,
    /// True warps in normalized units, anchored at `h(T0) = 0`.
    pub warps: Vec<Vec<f64>>,
    /// Standard normal scores `ξ_ik`.
    pub scores: Vec<Vec<f64>>,
    /// Candidates drawn, including rejected ones.
    pub draws: usize,
}

/// RNG for replicate `index` of a study seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `truth.n` accepted series. Each candidate draws, in order, its
/// score vector, growth rate and initial level; candidates whose trajectory
/// reaches the cap are rejected and redrawn in full.
pub fn generate_replicate<R: Rng + ?Sized>(truth: &SimTruth, rng: &mut R) -> Result<Replicate> {
    truth.validate()?;
    let k = truth.k();
    let mut draws = 0usize;
    let mut series = Vec::with_capacity(truth.n);
    let mut alphas = Vec::with_capacity(truth.n);
    let mut warps = Vec::with_capacity(truth.n);
    let mut scores = Vec::with_capacity(truth.n);
    while series.len() < truth.n {
        if draws >= MAX_DRAWS_CHECK && (series.len() as f64) < MIN_ACCEPTANCE * draws as f64 {
            return Err(Error::Config(format!(
                "only {} of {draws} candidate trajectories stayed below the cap {}",
                series.len(),
                truth.cap
            )));
        }
        draws += 1;
        let xi: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let alpha = rng.random_range(truth.alpha_range.0..truth.alpha_range.1);
        let x0 = rng.random_range(truth.x0_range.0..truth.x0_range.1);
        let h = truth.warp_from_scores(&xi);
        let x = truth.trajectory(&h, alpha, x0);
        if x.iter().any(|v| !(*v < truth.cap)) {
            continue;
        }
        let name = format!("sim{:03}", series.len() + 1);
        series.push(PriceSeries::complete(name, x)?);
        alphas.push(alpha);
        warps.push(h.iter().map(|v| v - h[0]).collect());
        scores.push(xi);
    }
    Ok(Replicate {
        panel: Panel::new(truth.grid, series)?,
        alphas,
        warps,
        scores,
        draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub index: usize,
    pub ok: bool,
    pub error: Option<String>,
    pub draws: usize,
    /// Selected window, month indices.
    pub window_start: Option<i32>,
    pub window_end: Option<i32>,
    pub mean_r2: Option<f64>,
    pub ase: Option<f64>,
    pub rise: Option<f64>,
    pub rise_excluded: usize,
    /// Sign-aligned integrated squared error per eigenfunction.
    pub ise: Vec<f64>,
    /// `(λ̂_k - λ_k)² / λ_k²` per component.
    pub eigenvalue_rel_err: Vec<f64>,
    pub var_explained_2: Option<f64>,
}

impl ReplicateRow {
    fn failed(index: usize, draws: usize, err: &Error) -> Self {
        Self {
            index,
            ok: false,
            error: Some(err.to_string()),
            draws,
            window_start: None,
            window_end: None,
            mean_r2: None,
            ase: None,
            rise: None,
            rise_excluded: 0,
            ise: Vec::new(),
            eigenvalue_rel_err: Vec::new(),
            var_explained_2: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, sd) = mean_sd(values);
        Some(Self {
            mean,
            sd,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub ase: Option<Summary>,
    pub window_start: Option<Summary>,
    pub window_end: Option<Summary>,
    pub rise: Option<Summary>,
    /// Mean over replicates of the sign-aligned ISE, per eigenfunction.
    pub mise: Vec<Option<Summary>>,
    pub eigenvalue_rel_err: Vec<Option<Summary>>,
    pub var_explained_2: Option<Summary>,
}

/// Figures reported for the original study built on the housing-estimated
/// truth. Kept for side-by-side context; they are not reproduced by the
/// bundled synthetic truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub ase_mean: f64,
    pub ase_sd: f64,
    pub window_start_mean: f64,
    pub window_start_sd: f64,
    pub window_end_mean: f64,
    pub window_end_sd: f64,
    pub rise_mean: f64,
    pub mise: [f64; 2],
    pub eigenvalue_rel_err: [f64; 2],
    pub var_explained_2_mean: f64,
    pub var_explained_2_range: [f64; 2],
}

impl Default for ReferenceValues {
    fn default() -> Self {
        Self {
            ase_mean: 0.011,
            ase_sd: 0.041,
            window_start_mean: 146.31,
            window_start_sd: 7.58,
            window_end_mean: 169.43,
            window_end_sd: 7.93,
            rise_mean: 0.032,
            mise: [0.029, 0.053],
            eigenvalue_rel_err: [0.825, 0.135],
            var_explained_2_mean: 0.96,
            var_explained_2_range: [0.855, 0.988],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub n_replicates: usize,
    pub n_failed: usize,
    pub truth_var_explained_2: f64,
    pub aggregates: Aggregates,
    pub reference_values: ReferenceValues,
    pub replicates: Vec<ReplicateRow>,
}

/// Pipeline output for one replicate, kept for inspection and tests.
#[derive(Debug, Clone)]
pub struct ReplicateFit {
    pub replicate: Replicate,
    pub search: growthfit::IntervalSearchResult,
    pub alphas: Vec<f64>,
    pub warps: WarpSet,
    pub model: fpca::FpcaModel,
}

/// Runs interval search, rate estimation, warp recovery and FPCA on a
/// generated replicate. Time 0 is the first grid month.
pub fn fit_replicate(truth: &SimTruth, replicate: Replicate) -> Result<ReplicateFit> {
    let lengths = if truth.window_lengths.is_empty() {
        DEFAULT_WINDOW_LENGTHS.to_vec()
    } else {
        truth.window_lengths.clone()
    };
    let search = growthfit::search_interval(&replicate.panel, &lengths)?;
    let summary = growthfit::estimate_alphas(&replicate.panel, search.best_window)?;
    let alphas: Vec<f64> = summary.fits.iter().map(|f| f.alpha).collect();
    let warps = replicate
        .panel
        .series
        .iter()
        .zip(&alphas)
        .map(|(s, &a)| compute_warp(s, &replicate.panel.grid, a, 0, search.best_window.end))
        .collect::<Result<Vec<_>>>()?;
    let warps = WarpSet::new(warps)?;
    let k = truth.k().min(replicate.panel.len() - 1).max(1);
    let model = fpca::fit_fpca(&warps, &[], Retention::Components(k))?;
    Ok(ReplicateFit {
        replicate,
        search,
        alphas,
        warps,
        model,
    })
}

fn sign_aligned_sq(w: &[f64], est: &[f64], truth: &[f64]) -> f64 {
    let minus: Vec<f64> = est.iter().zip(truth).map(|(a, b)| a - b).collect();
    let plus: Vec<f64> = est.iter().zip(truth).map(|(a, b)| a + b).collect();
    norm_sq(w, &minus).min(norm_sq(w, &plus))
}

/// Relative integrated squared error of the estimated warps on `(t0, 1]`;
/// returns the average and how many warps were left out by the norm guard.
fn rise(fit: &ReplicateFit) -> (Option<f64>, usize) {
    let grid = fit.warps.grid;
    let from = fit.search.best_window.end;
    let m = grid.n_points - from;
    if m < 2 {
        return (None, fit.warps.len());
    }
    let dt = (m - 1) as f64 / grid.span_months();
    let w: Vec<f64> = trapezoid_weights(m).iter().map(|v| v * dt).collect();
    let mut ratios = Vec::new();
    let mut excluded = 0;
    for (est, truth) in fit.warps.warps.iter().zip(&fit.replicate.warps) {
        let h = &truth[from..];
        let den = norm_sq(&w, h);
        if den.sqrt() < RISE_NORM_GUARD {
            excluded += 1;
            continue;
        }
        let diff: Vec<f64> = est.values[from..].iter().zip(h).map(|(a, b)| a - b).collect();
        ratios.push(norm_sq(&w, &diff) / den);
    }
    if ratios.is_empty() {
        (None, excluded)
    } else {
        (Some(ratios.iter().sum::<f64>() / ratios.len() as f64), excluded)
    }
}

fn replicate_row(truth: &SimTruth, index: usize) -> ReplicateRow {
    let mut rng = replicate_rng(truth.seed, index as u64);
    let replicate = match generate_replicate(truth, &mut rng) {
        Ok(r) => r,
        Err(e) => return ReplicateRow::failed(index, 0, &e),
    };
    let draws = replicate.draws;
    let fit = match fit_replicate(truth, replicate) {
        Ok(f) => f,
        Err(e) => return ReplicateRow::failed(index, draws, &e),
    };
    let n = fit.alphas.len() as f64;
    let ase = fit
        .alphas
        .iter()
        .zip(&fit.replicate.alphas)
        .map(|(est, a)| ((est - a) / a).powi(2))
        .sum::<f64>()
        / n;
    let (rise, rise_excluded) = rise(&fit);
    let w = &fit.model.weights;
    let ise = fit
        .model
        .eigenfunctions
        .iter()
        .zip(&truth.eigenfunctions)
        .map(|(est, phi)| sign_aligned_sq(w, est, phi))
        .collect();
    let eigenvalue_rel_err = fit
        .model
        .eigenvalues
        .iter()
        .zip(&truth.eigenvalues)
        .take(fit.model.n_retained)
        .filter(|(_, l)| **l > 0.0)
        .map(|(est, l)| ((est - l) / l).powi(2))
        .collect();
    let grid = fit.replicate.panel.grid;
    ReplicateRow {
        index,
        ok: true,
        error: None,
        draws,
        window_start: Some(grid.month_at(fit.search.best_window.start)),
        window_end: Some(grid.month_at(fit.search.best_window.end)),
        mean_r2: Some(fit.search.mean_r2),
        ase: Some(ase),
        rise,
        rise_excluded,
        ise,
        eigenvalue_rel_err,
        var_explained_2: Some(fit.model.cumulative_fraction(2)),
    }
}

fn column<F: Fn(&ReplicateRow) -> Option<f64>>(rows: &[ReplicateRow], f: F) -> Vec<f64> {
    rows.iter().filter(|r| r.ok).filter_map(f).collect()
}

/// Repeats generation and fitting `n_replicates` times. Replicate `i` uses
/// its own RNG stream, so results do not depend on scheduling. Failed
/// replicates are kept in the report with their error.
pub fn run_study(truth: &SimTruth, n_replicates: usize) -> Result<SimReport> {
    if n_replicates == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    truth.validate()?;
    let rows: Vec<ReplicateRow> = (0..n_replicates)
        .into_par_iter()
        .map(|i| replicate_row(truth, i))
        .collect();
    if let Some(cfg) = rows.iter().find_map(|r| {
        r.error
            .as_ref()
            .filter(|e| e.starts_with("configuration error"))
    }) {
        return Err(Error::Config(cfg.clone()));
    }
    let k = truth.k();
    let aggregates = Aggregates {
        ase: Summary::of(&column(&rows, |r| r.ase)),
        window_start: Summary::of(&column(&rows, |r| r.window_start.map(f64::from))),
        window_end: Summary::of(&column(&rows, |r| r.window_end.map(f64::from))),
        rise: Summary::of(&column(&rows, |r| r.rise)),
        mise: (0..k)
            .map(|j| Summary::of(&column(&rows, |r| r.ise.get(j).copied())))
            .collect(),
        eigenvalue_rel_err: (0..k)
            .map(|j| Summary::of(&column(&rows, |r| r.eigenvalue_rel_err.get(j).copied())))
            .collect(),
        var_explained_2: Summary::of(&column(&rows, |r| r.var_explained_2)),
    };
    Ok(SimReport {
        seed: truth.seed,
        n: truth.n,
        k,
        n_replicates,
        n_failed: rows.iter().filter(|r| !r.ok).count(),
        truth_var_explained_2: truth.two_component_fraction(),
        aggregates,
        reference_values: ReferenceValues::default(),
        replicates: rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Flat per-replicate CSV.
pub fn report_to_csv(report: &SimReport) -> String {
    let k = report.k;
    let mut out = String::from(
        "replicate,ok,draws,window_start,window_end,mean_r2,ase,rise,rise_excluded,var_explained_2",
    );
    for j in 1..=k {
        out.push_str(&format!(",ise_{j}"));
    }
    for j in 1..=k {
        out.push_str(&format!(",eigenvalue_rel_err_{j}"));
    }
    out.push('\n');
    for r in &report.replicates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.ok,
            r.draws,
            r.window_start.map(|v| v.to_string()).unwrap_or_default(),
            r.window_end.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.mean_r2),
            opt(r.ase),
            opt(r.rise),
            r.rise_excluded,
            opt(r.var_explained_2)
        ));
        for j in 0..k {
            out.push(',');
            out.push_str(&opt(r.ise.get(j).copied()));
        }
        for j in 0..k {
            out.push(',');
            out.push_str(&opt(r.eigenvalue_rel_err.get(j).copied()));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub mean_sup_err: f64,
    pub cov_sup_err: f64,
    pub phi1_sup_err: f64,
    pub lambda1_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSlopes {
    pub mean: Option<f64>,
    pub covariance: Option<f64>,
    pub phi1: Option<f64>,
    pub lambda1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub repeats: usize,
    pub rows: Vec<SweepRow>,
    /// Least-squares slopes of log error against log n.
    pub slopes: SweepSlopes,
}

fn log_log_slope(ns: &[usize], errs: &[f64]) -> Option<f64> {
    if errs.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    Some(sxy / sxx)
}

const SWEEP_STREAM_BASE: u64 = 1 << 40;

fn sweep_errors(truth: &SimTruth, n: usize, rng: &mut ChaCha8Rng) -> Result<[f64; 4]> {
    let k = truth.k();
    let curves: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let xi: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            truth.warp_from_scores(&xi)
        })
        .collect();
    let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
    let mean = fpca::mean_of(&refs)?;
    let g = fpca::covariance_of(&refs, &mean)?;
    let w = trapezoid_weights(truth.grid.n_points);
    let eig = fpca::eigendecompose(&g, &w)?;
    let m = truth.grid.n_points;

    let mean_err = mean
        .iter()
        .zip(&truth.mean)
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let mut cov_err = 0.0f64;
    for s in 0..m {
        for t in s..m {
            cov_err = cov_err.max((g[(s, t)] - truth.covariance_at(s, t)).abs());
        }
    }
    let (phi1_err, lambda1_err) = match (truth.eigenfunctions.first(), truth.eigenvalues.first()) {
        (Some(phi), Some(l)) => {
            let est = &eig.functions[0];
            let sup = |sign: f64| {
                est.iter()
                    .zip(phi)
                    .fold(0.0f64, |a, (x, y)| a.max((x - sign * y).abs()))
            };
            (sup(1.0).min(sup(-1.0)), (eig.values[0] - l).abs())
        }
        _ => (0.0, eig.values[0].abs()),
    };
    Ok([mean_err, cov_err, phi1_err, lambda1_err])
}

/// Sup-norm estimation errors of the mean, covariance, leading eigenfunction
/// and leading eigenvalue from `n` directly drawn warps, averaged over
/// `repeats` samples per size.
pub fn convergence_sweep(truth: &SimTruth, sizes: &[usize], repeats: usize) -> Result<ConvergenceTable> {
    truth.validate()?;
    if sizes.len() < 2 || sizes.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config("sweep sizes must be increasing with at least two entries".into()));
    }
    if sizes[0] < 2 || repeats == 0 {
        return Err(Error::Config("sweep needs sizes of at least 2 and one repeat".into()));
    }
    let rows = sizes
        .iter()
        .enumerate()
        .map(|(si, &n)| {
            let errs = (0..repeats)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
                    rng.set_stream(SWEEP_STREAM_BASE + (si * repeats + rep) as u64);
                    sweep_errors(truth, n, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let avg = |j: usize| errs.iter().map(|e| e[j]).sum::<f64>() / repeats as f64;
            Ok(SweepRow {
                n,
                mean_sup_err: avg(0),
                cov_sup_err: avg(1),
                phi1_sup_err: avg(2),
                lambda1_abs_err: avg(3),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = |f: fn(&SweepRow) -> f64| {
        log_log_slope(sizes, &rows.iter().map(f).collect::<Vec<_>>())
    };
    let slopes = SweepSlopes {
        mean: slope(|r| r.mean_sup_err),
        covariance: slope(|r| r.cov_sup_err),
        phi1: slope(|r| r.phi1_sup_err),
        lambda1: slope(|r| r.lambda1_abs_err),
    };
    Ok(ConvergenceTable {
        repeats,
        rows,
        slopes,
    })
}

//! Functional principal component analysis of a sample of warping functions.
//!
//! Curves live on a uniform grid over `[0, 1]` and every integral uses
//! trapezoidal weights `w`. The covariance operator is discretized as
//! `W^{1/2} G W^{1/2}`, whose eigenvalues are the operator eigenvalues and
//! whose eigenvectors map back to `L²`-orthonormal eigenfunctions through
//! `W^{-1/2}`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{inner, integrate, trapezoid_weights};
use crate::timeseries::TimeGrid;
use crate::warping::{WarpFunction, WarpSet};

/// Default cumulative variance fraction for choosing the number of components.
pub const DEFAULT_VAR_THRESHOLD: f64 = 0.999;

/// Relative size of negative eigenvalues accepted as rounding and floored to 0.
pub const EIGEN_FLOOR_REL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Retention {
    /// Smallest number of components reaching this cumulative variance fraction.
    VarianceThreshold(f64),
    /// Fixed number of components.
    Components(usize),
}

impl Default for Retention {
    fn default() -> Self {
        Retention::VarianceThreshold(DEFAULT_VAR_THRESHOLD)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    pub grid: TimeGrid,
    pub weights: Vec<f64>,
    pub mean: Vec<f64>,
    /// All eigenvalues of the discretized operator, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Retained eigenfunctions, one vector per component.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub var_explained: Vec<f64>,
    pub n_retained: usize,
    /// Series the model was fitted on.
    pub n_fit: usize,
    pub names: Vec<String>,
    /// Scores `∫(h_i - μ) φ_k`, one row per series in input order.
    pub scores: Vec<Vec<f64>>,
    pub in_sample: Vec<bool>,
}

impl FpcaModel {
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Fraction of total variance carried by the first `k` eigenvalues.
    pub fn cumulative_fraction(&self, k: usize) -> f64 {
        let total = self.total_variance();
        if total <= 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(k).sum::<f64>() / total
    }

    /// `μ + Σ_{k<K} s_k φ_k`.
    pub fn reconstruct(&self, scores: &[f64], k: usize) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (s, phi) in scores.iter().zip(&self.eigenfunctions).take(k) {
            for (o, p) in out.iter_mut().zip(phi) {
                *o += s * p;
            }
        }
        out
    }

    pub fn score_of(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.scores[i].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModesOfVariation {
    pub component: usize,
    pub gammas: Vec<f64>,
    /// One curve per gamma.
    pub curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRegression {
    pub component: usize,
    pub slope: f64,
    pub intercept: f64,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub functions: Vec<Vec<f64>>,
}

/// Sorts warps by name so sample statistics do not depend on input order.
fn canonical<'a>(warps: &[&'a WarpFunction]) -> Vec<&'a [f64]> {
    let mut sorted = warps.to_vec();
    sorted.sort_by(|a, b| a.series_name.cmp(&b.series_name));
    sorted.iter().map(|w| w.values.as_slice()).collect()
}

pub(crate) fn mean_of(curves: &[&[f64]]) -> Result<Vec<f64>> {
    let first = curves.first().ok_or(Error::EmptySample)?;
    let n = curves.len() as f64;
    let mut mean = vec![0.0; first.len()];
    for c in curves {
        for (m, v) in mean.iter_mut().zip(c.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Covariance surface with divisor `n`.
pub(crate) fn covariance_of(curves: &[&[f64]], mean: &[f64]) -> Result<DMatrix<f64>> {
    if curves.len() < 2 {
        return Err(Error::SampleSize {
            got: curves.len(),
            need: 2,
        });
    }
    let m = mean.len();
    let n = curves.len() as f64;
    let centered: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| c.iter().zip(mean).map(|(v, mu)| v - mu).collect())
        .collect();
    let mut g = DMatrix::zeros(m, m);
    for s in 0..m {
        for t in s..m {
            let v = centered.iter().map(|c| c[s] * c[t]).sum::<f64>() / n;
            g[(s, t)] = v;
            g[(t, s)] = v;
        }
    }
    Ok(g)
}

/// Pointwise mean of the warps.
pub fn mean_function(set: &WarpSet) -> Result<Vec<f64>> {
    let refs: Vec<&WarpFunction> = set.warps.iter().collect();
    mean_of(&canonical(&refs))
}

/// `G(s,t) = (1/n) Σ h_i(s) h_i(t) - μ(s) μ(t)`, evaluated in centered form.
pub fn covariance_function(set: &WarpSet) -> Result<DMatrix<f64>> {
    let refs: Vec<&WarpFunction> = set.warps.iter().collect();
    let curves = canonical(&refs);
    if curves.len() < 2 {
        return Err(Error::SampleSize {
            got: curves.len(),
            need: 2,
        });
    }
    let mean = mean_of(&curves)?;
    covariance_of(&curves, &mean)
}

/// Sign convention: `∫φ ≥ 0`, falling back to `φ(1) ≥ 0` when the integral
/// vanishes.
fn orient(phi: &mut [f64], weights: &[f64]) {
    let integral = integrate(weights, phi);
    let scale: f64 = weights.iter().zip(phi.iter()).map(|(w, p)| w * p.abs()).sum();
    let flip = if integral.abs() > 1e-10 * scale {
        integral < 0.0
    } else {
        *phi.last().unwrap_or(&0.0) < 0.0
    };
    if flip {
        phi.iter_mut().for_each(|p| *p = -*p);
    }
}

/// Eigenpairs of the covariance operator with kernel `g` under quadrature
/// `weights`, in descending eigenvalue order.
pub fn eigendecompose(g: &DMatrix<f64>, weights: &[f64]) -> Result<Eigen> {
    let m = weights.len();
    if g.nrows() != m || g.ncols() != m {
        return Err(Error::Grid(format!(
            "covariance is {}x{}, grid has {m} points",
            g.nrows(),
            g.ncols()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Numerical("quadrature weights must be positive".into()));
    }
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !scale.is_finite() {
        return Err(Error::Numerical("covariance has non-finite entries".into()));
    }
    let asym = (0..m)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .fold(0.0f64, |a, (i, j)| a.max((g[(i, j)] - g[(j, i)]).abs()));
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Numerical(format!(
            "covariance is not symmetric (max deviation {asym:e})"
        )));
    }

    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |i, j| {
        sqrt_w[i] * 0.5 * (g[(i, j)] + g[(j, i)]) * sqrt_w[j]
    });
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });

    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i]).max(0.0);
    let floor = EIGEN_FLOOR_REL * top;
    let mut values = Vec::with_capacity(m);
    let mut functions = Vec::with_capacity(m);
    for &k in &order {
        let mut lambda = eig.eigenvalues[k];
        if lambda < 0.0 {
            if lambda < -floor && -lambda > f64::EPSILON * scale * m as f64 {
                return Err(Error::Numerical(format!(
                    "covariance is not positive semidefinite (eigenvalue {lambda:e})"
                )));
            }
            lambda = 0.0;
        }
        let mut phi: Vec<f64> = (0..m)
            .map(|i| eig.eigenvectors[(i, k)] / sqrt_w[i])
            .collect();
        orient(&mut phi, weights);
        values.push(lambda);
        functions.push(phi);
    }
    Ok(Eigen { values, functions })
}

fn check_grid(model: &FpcaModel, warp: &WarpFunction) -> Result<()> {
    if warp.values.len() != model.grid.n_points {
        return Err(Error::Grid(format!(
            "warp '{}' has {} points, model grid has {}",
            warp.series_name,
            warp.values.len(),
            model.grid.n_points
        )));
    }
    Ok(())
}

fn scores_for(model: &FpcaModel, values: &[f64]) -> Vec<f64> {
    let centered: Vec<f64> = values.iter().zip(&model.mean).map(|(h, m)| h - m).collect();
    model
        .eigenfunctions
        .iter()
        .map(|phi| inner(&model.weights, &centered, phi))
        .collect()
}

/// Scores `∫(h_i - μ) φ_k` of every warp in `set`, in-sample or held out.
pub fn project_scores(set: &WarpSet, model: &FpcaModel) -> Result<Vec<Vec<f64>>> {
    set.warps
        .iter()
        .map(|w| {
            check_grid(model, w)?;
            Ok(scores_for(model, &w.values))
        })
        .collect()
}

fn retained_count(values: &[f64], retention: Retention) -> Result<usize> {
    let m = values.len();
    match retention {
        Retention::Components(k) => {
            if k == 0 || k > m {
                return Err(Error::Config(format!(
                    "component count {k} must lie in 1..={m}"
                )));
            }
            Ok(k)
        }
        Retention::VarianceThreshold(t) => {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!(
                    "variance threshold {t} must lie in (0, 1]"
                )));
            }
            let total: f64 = values.iter().sum();
            if total <= 0.0 {
                return Ok(1);
            }
            let mut cum = 0.0;
            for (k, v) in values.iter().enumerate() {
                cum += v;
                if cum / total >= t - 1e-12 {
                    return Ok(k + 1);
                }
            }
            Ok(m)
        }
    }
}

/// Fits the model on all warps except those named in `exclude`; excluded
/// warps are projected onto the fitted components and flagged out-of-sample.
pub fn fit_fpca(set: &WarpSet, exclude: &[String], retention: Retention) -> Result<FpcaModel> {
    if let Some(unknown) = exclude
        .iter()
        .find(|e| !set.warps.iter().any(|w| &w.series_name == *e))
    {
        return Err(Error::Schema(format!("excluded series '{unknown}' is not in the sample")));
    }
    let (kept, _) = set.partition(exclude);
    if kept.len() < 2 {
        return Err(Error::SampleSize {
            got: kept.len(),
            need: 2,
        });
    }
    let curves = canonical(&kept);
    let mean = mean_of(&curves)?;
    let g = covariance_of(&curves, &mean)?;
    let weights = trapezoid_weights(set.grid.n_points);
    let eig = eigendecompose(&g, &weights)?;
    let k = retained_count(&eig.values, retention)?;
    let total: f64 = eig.values.iter().sum();
    let var_explained = eig.values[..k]
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();

    let mut model = FpcaModel {
        grid: set.grid,
        weights,
        mean,
        eigenvalues: eig.values,
        eigenfunctions: eig.functions.into_iter().take(k).collect(),
        var_explained,
        n_retained: k,
        n_fit: kept.len(),
        names: set.warps.iter().map(|w| w.series_name.clone()).collect(),
        scores: Vec::new(),
        in_sample: set
            .warps
            .iter()
            .map(|w| !exclude.contains(&w.series_name))
            .collect(),
    };
    model.scores = project_scores(set, &model)?;
    Ok(model)
}

/// Curves `μ + γ √λ_k φ_k` for each γ; `k` is 1-based.
pub fn modes_of_variation(model: &FpcaModel, k: usize, gammas: &[f64]) -> Result<ModesOfVariation> {
    if k == 0 || k > model.n_retained {
        return Err(Error::Index {
            index: k,
            max: model.n_retained,
        });
    }
    let root = model.eigenvalues[k - 1].sqrt();
    let phi = &model.eigenfunctions[k - 1];
    let curves = gammas
        .iter()
        .map(|g| {
            model
                .mean
                .iter()
                .zip(phi)
                .map(|(m, p)| m + g * root * p)
                .collect()
        })
        .collect();
    Ok(ModesOfVariation {
        component: k,
        gammas: gammas.to_vec(),
        curves,
    })
}

pub const DEFAULT_GAMMAS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Least-squares line of each component's scores on the growth rates, with
/// Pearson correlation. `scores` holds one row per series.
pub fn score_rate_regression(scores: &[Vec<f64>], alphas: &[f64]) -> Result<Vec<ScoreRegression>> {
    if scores.len() != alphas.len() {
        return Err(Error::Schema(format!(
            "{} score rows for {} growth rates",
            scores.len(),
            alphas.len()
        )));
    }
    if alphas.len() < 3 {
        return Err(Error::SampleSize {
            got: alphas.len(),
            need: 3,
        });
    }
    let n = alphas.len() as f64;
    let a_mean = alphas.iter().sum::<f64>() / n;
    let saa: f64 = alphas.iter().map(|a| (a - a_mean).powi(2)).sum();
    if saa == 0.0 {
        return Err(Error::DegenerateRegressor);
    }
    let k = scores.iter().map(Vec::len).min().unwrap_or(0);
    Ok((0..k)
        .map(|c| {
            let ys: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            let y_mean = ys.iter().sum::<f64>() / n;
            let say: f64 = alphas
                .iter()
                .zip(&ys)
                .map(|(a, y)| (a - a_mean) * (y - y_mean))
                .sum();
            let syy: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
            let slope = say / saa;
            let correlation = if syy > 0.0 { say / (saa * syy).sqrt() } else { 0.0 };
            ScoreRegression {
                component: c + 1,
                slope,
                intercept: y_mean - slope * a_mean,
                correlation,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn warp(name: &str, values: Vec<f64>) -> WarpFunction {
        WarpFunction {
            series_name: name.into(),
            grid: TimeGrid::new(0, values.len()).unwrap(),
            values,
            alpha_used: 0.01,
            t0_normalized: 0.0,
            unreliable: false,
        }
    }

    fn set_of(curves: Vec<Vec<f64>>) -> WarpSet {
        WarpSet::new(
            curves
                .into_iter()
                .enumerate()
                .map(|(i, v)| warp(&format!("w{i:02}"), v))
                .collect(),
        )
        .unwrap()
    }

    fn ts(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    }

    #[test]
    fn mean_examples() {
        let t = ts(7);
        let single = set_of(vec![t.clone()]);
        assert_eq!(mean_function(&single).unwrap(), t);

        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        let m = mean_function(&set_of(vec![t.clone(), neg])).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));

        let s = set_of((1..=3).map(|k| t.iter().map(|v| k as f64 * v).collect()).collect());
        let m = mean_function(&s).unwrap();
        for (a, b) in m.iter().zip(&t) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_examples() {
        let g = covariance_function(&set_of(vec![vec![0.0, 1.0], vec![0.0, 3.0]])).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));

        let t = ts(5);
        let g = covariance_function(&set_of(vec![t.clone(), t.clone(), t])).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));

        let f: Vec<f64> = ts(6).iter().map(|t| (3.0 * t).sin()).collect();
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let g = covariance_function(&set_of(vec![f.clone(), neg])).unwrap();
        for s in 0..6 {
            for t in 0..6 {
                assert!((g[(s, t)] - f[s] * f[t]).abs() < 1e-15);
            }
        }

        assert!(matches!(
            covariance_function(&set_of(vec![vec![1.0, 2.0]])),
            Err(Error::SampleSize { got: 1, need: 2 })
        ));
    }

    #[test]
    fn rank_one_spectrum() {
        let m = 9;
        let w = trapezoid_weights(m);
        let f: Vec<f64> = ts(m).iter().map(|t| 1.0 + t * t).collect();
        let c = inner(&w, &f, &f).sqrt();
        let g = DMatrix::from_fn(m, m, |i, j| f[i] * f[j]);
        let e = eigendecompose(&g, &w).unwrap();
        assert!((e.values[0] - c * c).abs() < 1e-12);
        for (p, v) in e.functions[0].iter().zip(&f) {
            assert!((p - v / c).abs() < 1e-12);
        }
        assert!(e.values[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_covariance() {
        let e = eigendecompose(&DMatrix::zeros(4, 4), &trapezoid_weights(4)).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn asymmetric_kernel_rejected() {
        let mut g = DMatrix::identity(3, 3);
        g[(0, 1)] = 0.5;
        assert!(matches!(
            eigendecompose(&g, &trapezoid_weights(3)),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn eigenfunctions_orthonormal_and_oriented() {
        let m = 11;
        let w = trapezoid_weights(m);
        let b = DMatrix::from_fn(m, m, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * (i as f64));
        let g = &b * b.transpose();
        let e = eigendecompose(&g, &w).unwrap();
        for j in 0..m {
            assert!(integrate(&w, &e.functions[j]) >= -1e-12);
            for k in 0..m {
                let d = inner(&w, &e.functions[j], &e.functions[k]);
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-8);
            }
        }
        assert!(e.values.windows(2).all(|p| p[0] >= p[1]));
    }

    fn sample(n: usize, m: usize) -> WarpSet {
        let t = ts(m);
        set_of(
            (0..n)
                .map(|i| {
                    let a = ((i * 37 % 11) as f64 - 5.0) / 5.0;
                    let b = ((i * 53 % 7) as f64 - 3.0) / 3.0;
                    let c = ((i * 29 % 13) as f64 - 6.0) / 6.0;
                    t.iter()
                        .map(|x| {
                            x + a * (std::f64::consts::PI * x).sin()
                                + 0.4 * b * (2.0 * std::f64::consts::PI * x).sin()
                                + 0.1 * c * x * x
                        })
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn projecting_mean_gives_zero_scores() {
        let set = sample(10, 21);
        let model = fit_fpca(&set, &[], Retention::Components(3)).unwrap();
        let mean = set_of(vec![model.mean.clone()]);
        let s = project_scores(&mean, &model).unwrap();
        assert!(s[0].iter().all(|v| v.abs() < 1e-14));

        let lam = model.eigenvalues[0];
        let shifted: Vec<f64> = model
            .mean
            .iter()
            .zip(&model.eigenfunctions[0])
            .map(|(m, p)| m + 2.0 * lam.sqrt() * p)
            .collect();
        let s = project_scores(&set_of(vec![shifted]), &model).unwrap();
        assert!((s[0][0] - 2.0 * lam.sqrt()).abs() < 1e-10);
        assert!(s[0][1].abs() < 1e-10 && s[0][2].abs() < 1e-10);
    }

    #[test]
    fn projection_grid_mismatch() {
        let model = fit_fpca(&sample(5, 11), &[], Retention::default()).unwrap();
        let other = set_of(vec![ts(12)]);
        assert!(matches!(project_scores(&other, &model), Err(Error::Grid(_))));
    }

    #[test]
    fn exact_low_rank_sample() {
        // three components, so the first three explain everything
        let set = sample(12, 31);
        let model = fit_fpca(&set, &[], Retention::Components(3)).unwrap();
        assert!((model.cumulative_fraction(3) - 1.0).abs() < 1e-10);
        let model = fit_fpca(&set, &[], Retention::default()).unwrap();
        assert!(model.n_retained <= 3);
    }

    #[test]
    fn scores_are_centered_with_variance_lambda() {
        let set = sample(15, 25);
        let model = fit_fpca(&set, &[], Retention::Components(3)).unwrap();
        for k in 0..3 {
            let col: Vec<f64> = model.scores.iter().map(|r| r[k]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-8 * model.eigenvalues[k].sqrt().max(1e-300));
            assert!((var - model.eigenvalues[k]).abs() < 1e-10 * model.eigenvalues[0]);
        }
    }

    #[test]
    fn exclusion_projects_held_out() {
        let set = sample(8, 15);
        let ex = vec!["w03".to_string()];
        let model = fit_fpca(&set, &ex, Retention::Components(2)).unwrap();
        assert_eq!(model.n_fit, 7);
        assert_eq!(model.in_sample.iter().filter(|b| !**b).count(), 1);
        assert!(!model.in_sample[3]);
        assert_eq!(model.scores.len(), 8);
        assert!(matches!(
            fit_fpca(&set, &["nope".to_string()], Retention::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn bad_retention() {
        let set = sample(5, 11);
        assert!(matches!(
            fit_fpca(&set, &[], Retention::Components(0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            fit_fpca(&set, &[], Retention::VarianceThreshold(1.5)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn modes() {
        let model = fit_fpca(&sample(10, 21), &[], Retention::Components(2)).unwrap();
        let modes = modes_of_variation(&model, 1, &DEFAULT_GAMMAS).unwrap();
        assert_eq!(modes.curves[2], model.mean);
        for i in 0..21 {
            let avg = 0.5 * (modes.curves[1][i] + modes.curves[3][i]);
            assert!((avg - model.mean[i]).abs() < 1e-14);
        }
        assert!(matches!(
            modes_of_variation(&model, 3, &DEFAULT_GAMMAS),
            Err(Error::Index { index: 3, max: 2 })
        ));
        assert!(modes_of_variation(&model, 0, &DEFAULT_GAMMAS).is_err());

        let mut flat = model.clone();
        flat.eigenvalues[1] = 0.0;
        let modes = modes_of_variation(&flat, 2, &DEFAULT_GAMMAS).unwrap();
        assert!(modes.curves.iter().all(|c| c == &flat.mean));
    }

    #[test]
    fn regression_examples() {
        let r = score_rate_regression(
            &[vec![2.0, 5.0], vec![4.0, 5.0], vec![6.0, 5.0]],
            &[1.0, 2.0, 3.0],
        )
        .unwrap();
        assert!((r[0].slope - 2.0).abs() < 1e-14);
        assert!(r[0].intercept.abs() < 1e-14);
        assert!((r[0].correlation - 1.0).abs() < 1e-14);
        assert_eq!(r[1].slope, 0.0);

        let r = score_rate_regression(&[vec![3.0], vec![1.0], vec![-1.0]], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r[0].correlation + 1.0).abs() < 1e-14);

        assert_eq!(
            score_rate_regression(&[vec![1.0], vec![2.0], vec![3.0]], &[0.5, 0.5, 0.5]),
            Err(Error::DegenerateRegressor)
        );
        assert!(score_rate_regression(&[vec![1.0], vec![2.0]], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn permutation_leaves_eigenfunctions_bit_identical() {
        let set = sample(9, 17);
        let mut rev = set.clone();
        rev.warps.reverse();
        let a = fit_fpca(&set, &[], Retention::Components(3)).unwrap();
        let b = fit_fpca(&rev, &[], Retention::Components(3)).unwrap();
        assert_eq!(a.eigenfunctions, b.eigenfunctions);
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.mean, b.mean);
    }
}

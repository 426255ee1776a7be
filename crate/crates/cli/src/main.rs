//! `warpgrowth` command-line driver.
//!
//! Stages are chained through files in the output directory:
//! `fit` -> `fit.json`, `warp` -> `warps.csv`, `fpca` -> model and tables,
//! `diagnose` -> per-series residual checks, and `simulate` for the Monte
//! Carlo study. Every artifact is computed before anything is written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use warpgrowth::fpca::{self, Retention, DEFAULT_GAMMAS, DEFAULT_VAR_THRESHOLD};
use warpgrowth::growthfit::{self, Window, DEFAULT_WINDOW_LENGTHS};
use warpgrowth::simulate::{self, SimTruth};
use warpgrowth::timeseries::{self, month_label, parse_month, Panel};
use warpgrowth::warping::{self, WarpSet};
use warpgrowth::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "warpgrowth", version, about = "Time-warped growth model pipeline")]
struct Cli {
    /// Worker threads for per-series and per-replicate work.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select the undisturbed window and estimate growth rates.
    Fit(FitArgs),
    /// Recover time-warping functions from a fitted panel.
    Warp(WarpArgs),
    /// Functional PCA of the warps.
    Fpca(FpcaArgs),
    /// Second-order consistency check of the warps against the prices.
    Diagnose(DiagnoseArgs),
    /// Monte Carlo study on a known truth.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct PanelArgs {
    /// Panel CSV (`date,<series>...`, dates as YYYY-MM).
    #[arg(long)]
    input: PathBuf,

    /// First month kept (YYYY-MM or month index); defaults to the panel start.
    #[arg(long, value_parser = parse_month_arg)]
    from: Option<i32>,

    /// Last month kept (YYYY-MM or month index); defaults to the panel end.
    #[arg(long, value_parser = parse_month_arg)]
    to: Option<i32>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    panel: PanelArgs,

    #[arg(long, default_value = ".")]
    output_dir: PathBuf,

    /// Candidate window lengths in months.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WINDOW_LENGTHS.to_vec())]
    window_lengths: Vec<usize>,

    /// Fixed window START:END (month indices or YYYY-MM), skipping the search.
    #[arg(long, value_parser = parse_window_arg)]
    window: Option<(i32, i32)>,
}

#[derive(Args, Debug)]
struct WarpArgs {
    /// Panel CSV used for the fit.
    #[arg(long)]
    input: PathBuf,

    #[arg(long, default_value = ".")]
    output_dir: PathBuf,

    /// Fit artifact; defaults to `<output-dir>/fit.json`.
    #[arg(long)]
    fit: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FpcaArgs {
    /// Warp CSV; defaults to `<output-dir>/warps.csv`.
    #[arg(long)]
    input: Option<PathBuf>,

    #[arg(long, default_value = ".")]
    output_dir: PathBuf,

    /// Fit artifact supplying the grid anchor and growth rates; defaults to
    /// `<output-dir>/fit.json`.
    #[arg(long)]
    fit: Option<PathBuf>,

    /// Month index of the first warp grid point, when no fit artifact exists.
    #[arg(long, value_parser = parse_month_arg)]
    start_month: Option<i32>,

    /// Series left out of the fit and projected afterwards.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,

    /// Number of retained components.
    #[arg(long, conflicts_with = "var_threshold")]
    k: Option<usize>,

    /// Cumulative variance fraction used to choose the number of components.
    #[arg(long)]
    var_threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Panel CSV used for the fit.
    #[arg(long)]
    input: PathBuf,

    #[arg(long, default_value = ".")]
    output_dir: PathBuf,

    /// Fit artifact; defaults to `<output-dir>/fit.json`.
    #[arg(long)]
    fit: Option<PathBuf>,

    /// Warp CSV to check; defaults to the warps implied by the fit.
    #[arg(long)]
    warps: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,

    /// Use the bundled default truth.
    #[arg(long, conflicts_with = "truth")]
    default_truth: bool,

    /// Truth manifest (JSON).
    #[arg(long)]
    truth: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, default_value_t = 100)]
    replicates: usize,

    /// Series per replicate; overrides the truth.
    #[arg(long)]
    sample_size: Option<usize>,

    /// Also run the convergence sweep.
    #[arg(long)]
    sweep: bool,

    #[arg(long, value_delimiter = ',', default_values_t = vec![25usize, 100, 400])]
    sweep_sizes: Vec<usize>,

    #[arg(long, default_value_t = 50)]
    sweep_repeats: usize,
}

fn parse_month_arg(s: &str) -> Result<i32, String> {
    if let Ok(i) = s.trim().parse::<i32>() {
        return Ok(i);
    }
    parse_month(s).ok_or_else(|| format!("'{s}' is neither a month index nor YYYY-MM"))
}

fn parse_window_arg(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("window '{s}' must be START:END"))?;
    let (a, b) = (parse_month_arg(a)?, parse_month_arg(b)?);
    if a >= b {
        return Err(format!("window start {a} must precede end {b}"));
    }
    Ok((a, b))
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_CONFIG,
            e if e.is_input_error() => EXIT_INPUT,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

/// Files produced by a command, written only once everything succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    fn add(&mut self, dir: &Path, name: &str, body: String) {
        self.files.push((dir.join(name), body));
    }

    fn add_json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> CliResult<()> {
        let mut body = serde_json::to_string_pretty(value).map_err(|e| Failure {
            code: EXIT_NUMERICAL,
            message: format!("cannot serialize {name}: {e}"),
        })?;
        body.push('\n');
        self.add(dir, name, body);
        Ok(())
    }

    fn commit(self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| input_failure(format!("cannot create {}: {e}", dir.display())))?;
        for (path, body) in self.files {
            std::fs::write(&path, body)
                .map_err(|e| input_failure(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| input_failure(format!("cannot read {}: {e}", path.display())))
}

fn num(v: f64) -> String {
    v.to_string()
}

// ---------------------------------------------------------------------------
// fit

#[derive(Debug, Serialize, Deserialize)]
struct SeriesFit {
    name: String,
    /// Fixed-intercept growth rate per month.
    alpha: f64,
    intercept: f64,
    /// R² of the free-intercept fit used for window selection.
    r2: f64,
    r2_fixed: f64,
    clamped: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitArtifact {
    panel_from: i32,
    panel_to: i32,
    window_start: i32,
    window_end: i32,
    window_start_label: String,
    window_end_label: String,
    window_length_months: usize,
    window_overridden: bool,
    candidate_lengths: Vec<usize>,
    mean_r2: f64,
    alpha_mean: f64,
    alpha_sd: f64,
    dropped: Vec<String>,
    series: Vec<SeriesFit>,
}

fn load_panel(path: &Path, from: Option<i32>, to: Option<i32>) -> CliResult<timeseries::Restricted> {
    let panel = timeseries::parse_panel(&read_text(path)?)?;
    let from = from.unwrap_or(panel.grid.start_month);
    let to = to.unwrap_or(panel.grid.end_month());
    Ok(timeseries::restrict(&panel, from, to)?)
}

fn grid_index(panel: &Panel, month: i32) -> CliResult<usize> {
    panel.grid.index_of(month).ok_or_else(|| {
        Failure::from(Error::Window(format!(
            "month {} is outside the panel {}..{}",
            month_label(month),
            month_label(panel.grid.start_month),
            month_label(panel.grid.end_month())
        )))
    })
}

fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let restricted = load_panel(&args.panel.input, args.panel.from, args.panel.to)?;
    for name in &restricted.dropped {
        eprintln!("warning: dropped '{name}' (missing values in range)");
    }
    let panel = &restricted.panel;

    let (window, free_fits) = match args.window {
        Some((a, b)) => {
            let w = Window::new(grid_index(panel, a)?, grid_index(panel, b)?);
            let fits = panel
                .series
                .iter()
                .map(|s| growthfit::fit_window_free(s, w))
                .collect::<warpgrowth::Result<Vec<_>>>()?;
            (w, fits)
        }
        None => {
            let search = growthfit::search_interval(panel, &args.window_lengths)?;
            (search.best_window, search.per_series)
        }
    };
    let alphas = growthfit::estimate_alphas(panel, window)?;
    let mean_r2 = free_fits.iter().map(|f| f.r2).sum::<f64>() / free_fits.len() as f64;
    let series = free_fits
        .iter()
        .zip(&alphas.fits)
        .map(|(free, fixed)| SeriesFit {
            name: fixed.series_name.clone(),
            alpha: fixed.alpha,
            intercept: fixed.intercept,
            r2: free.r2,
            r2_fixed: fixed.r2,
            clamped: fixed.clamped,
        })
        .collect();

    let start = panel.grid.month_at(window.start);
    let end = panel.grid.month_at(window.end);
    let artifact = FitArtifact {
        panel_from: panel.grid.start_month,
        panel_to: panel.grid.end_month(),
        window_start: start,
        window_end: end,
        window_start_label: month_label(start),
        window_end_label: month_label(end),
        window_length_months: window.len(),
        window_overridden: args.window.is_some(),
        candidate_lengths: args.window_lengths.clone(),
        mean_r2,
        alpha_mean: alphas.mean,
        alpha_sd: alphas.sd,
        dropped: restricted.dropped.clone(),
        series,
    };

    let mut out = Outputs::default();
    out.add_json(&args.output_dir, "fit.json", &artifact)?;
    out.commit(&args.output_dir)?;
    println!(
        "window {}..{} ({} months), mean R2 {:.6}, mean alpha {:.6}/month (sd {:.6}), {} series",
        artifact.window_start_label,
        artifact.window_end_label,
        artifact.window_length_months,
        mean_r2,
        alphas.mean,
        alphas.sd,
        artifact.series.len()
    );
    Ok(())
}

fn load_fit(path: &Path) -> CliResult<FitArtifact> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| input_failure(format!("bad fit artifact {}: {e}", path.display())))
}

fn fit_path(explicit: &Option<PathBuf>, dir: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| dir.join("fit.json"))
}

// ---------------------------------------------------------------------------
// warp

/// Warps of every fitted series on the analysis window `[window start, panel end]`.
fn warps_from_fit(panel_path: &Path, fit: &FitArtifact) -> CliResult<(Panel, WarpSet)> {
    let restricted = load_panel(panel_path, Some(fit.panel_from), Some(fit.panel_to))?;
    let panel = restricted.panel;
    let ws = grid_index(&panel, fit.window_start)?;
    let we = grid_index(&panel, fit.window_end)?;
    let warps = fit
        .series
        .iter()
        .map(|s| {
            let series = panel.get(&s.name).ok_or_else(|| {
                Error::Schema(format!("fitted series '{}' is not in the panel", s.name))
            })?;
            warping::compute_warp(series, &panel.grid, s.alpha, ws, we)
        })
        .collect::<warpgrowth::Result<Vec<_>>>()?;
    Ok((panel, WarpSet::new(warps)?))
}

#[derive(Serialize)]
struct WarpSummaryRow {
    name: String,
    alpha: f64,
    /// Warped time reached at the end of the window.
    h_end: f64,
    /// `1 - h(1)`; positive when the market ends behind its baseline.
    setback: f64,
    setback_months: f64,
    anchor_deviation: f64,
    unreliable: bool,
}

#[derive(Serialize)]
struct WarpSummary {
    start_month: i32,
    end_month: i32,
    start_label: String,
    end_label: String,
    t0_normalized: f64,
    series: Vec<WarpSummaryRow>,
}

fn cmd_warp(args: &WarpArgs) -> CliResult<()> {
    let fit = load_fit(&fit_path(&args.fit, &args.output_dir))?;
    let (_, set) = warps_from_fit(&args.input, &fit)?;
    let span = set.grid.span_months();
    let summary = WarpSummary {
        start_month: set.grid.start_month,
        end_month: set.grid.end_month(),
        start_label: month_label(set.grid.start_month),
        end_label: month_label(set.grid.end_month()),
        t0_normalized: set.warps[0].t0_normalized,
        series: set
            .warps
            .iter()
            .map(|w| WarpSummaryRow {
                name: w.series_name.clone(),
                alpha: w.alpha_used,
                h_end: w.end_value(),
                setback: 1.0 - w.end_value(),
                setback_months: (1.0 - w.end_value()) * span,
                anchor_deviation: w.anchor_deviation(),
                unreliable: w.unreliable,
            })
            .collect(),
    };

    let mut out = Outputs::default();
    out.add(&args.output_dir, "warps.csv", warping::warps_to_csv(&set));
    out.add_json(&args.output_dir, "warp_summary.json", &summary)?;
    out.commit(&args.output_dir)?;

    let behind = summary.series.iter().filter(|s| s.setback > 0.0).count();
    println!(
        "{} warps on {}..{}, {} ending behind baseline",
        set.len(),
        summary.start_label,
        summary.end_label,
        behind
    );
    for s in summary.series.iter().filter(|s| s.unreliable) {
        eprintln!("warning: '{}' has a clamped growth rate; its warp is unreliable", s.name);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fpca

#[derive(Serialize)]
struct RegressionSummary {
    n: usize,
    components: Vec<fpca::ScoreRegression>,
}

#[derive(Serialize)]
struct FpcaArtifact<'a> {
    excluded: &'a [String],
    cumulative_fraction: Vec<f64>,
    model: &'a fpca::FpcaModel,
}

fn cmd_fpca(args: &FpcaArgs) -> CliResult<()> {
    let warps_path = args
        .input
        .clone()
        .unwrap_or_else(|| args.output_dir.join("warps.csv"));
    let fit_file = fit_path(&args.fit, &args.output_dir);
    let fit = match (args.start_month, fit_file.exists() || args.fit.is_some()) {
        (_, true) => Some(load_fit(&fit_file)?),
        (Some(_), false) => None,
        (None, false) => {
            return Err(input_failure(format!(
                "no fit artifact at {}; pass --fit or --start-month",
                fit_file.display()
            )))
        }
    };
    let start = args
        .start_month
        .or(fit.as_ref().map(|f| f.window_start))
        .expect("start month resolved above");
    let set = warping::warps_from_csv(&read_text(&warps_path)?, start)?;

    let retention = match (args.k, args.var_threshold) {
        (Some(k), _) => Retention::Components(k),
        (None, Some(v)) => Retention::VarianceThreshold(v),
        (None, None) => Retention::VarianceThreshold(DEFAULT_VAR_THRESHOLD),
    };
    let model = fpca::fit_fpca(&set, &args.exclude, retention)?;

    let modes = (1..=model.n_retained.min(2))
        .map(|k| fpca::modes_of_variation(&model, k, &DEFAULT_GAMMAS))
        .collect::<warpgrowth::Result<Vec<_>>>()?;

    let regression = match &fit {
        Some(fit) => regression_against_fit(&model, fit)?,
        None => None,
    };

    let artifact = FpcaArtifact {
        excluded: &args.exclude,
        cumulative_fraction: (1..=model.n_retained)
            .map(|k| model.cumulative_fraction(k))
            .collect(),
        model: &model,
    };

    let dir = &args.output_dir;
    let mut out = Outputs::default();
    out.add_json(dir, "fpca_model.json", &artifact)?;
    out.add(dir, "eigenfunctions.csv", eigenfunctions_csv(&model));
    out.add(dir, "scores.csv", scores_csv(&model));
    for m in &modes {
        out.add(dir, &format!("modes_k{}.csv", m.component), modes_csv(&model, m));
    }
    if let Some(r) = &regression {
        out.add_json(dir, "score_regression.json", r)?;
    }
    out.commit(dir)?;

    let shares: Vec<String> = model
        .var_explained
        .iter()
        .take(3)
        .map(|v| format!("{:.1}%", 100.0 * v))
        .collect();
    println!(
        "{} components retained from {} series ({} projected); leading shares {}",
        model.n_retained,
        model.n_fit,
        model.names.len() - model.n_fit,
        shares.join(", ")
    );
    Ok(())
}

/// Regresses in-sample scores on the fitted growth rates. Skipped (with a
/// note) when the sample is too small or the rates do not vary.
fn regression_against_fit(
    model: &fpca::FpcaModel,
    fit: &FitArtifact,
) -> CliResult<Option<RegressionSummary>> {
    let mut rows = Vec::new();
    let mut alphas = Vec::new();
    for (i, name) in model.names.iter().enumerate() {
        if !model.in_sample[i] {
            continue;
        }
        let Some(s) = fit.series.iter().find(|s| &s.name == name) else {
            eprintln!("note: '{name}' has no fitted growth rate; regression skipped");
            return Ok(None);
        };
        rows.push(model.scores[i].clone());
        alphas.push(s.alpha);
    }
    match fpca::score_rate_regression(&rows, &alphas) {
        Ok(components) => Ok(Some(RegressionSummary {
            n: alphas.len(),
            components,
        })),
        Err(e @ (Error::SampleSize { .. } | Error::DegenerateRegressor)) => {
            eprintln!("note: score regression skipped: {e}");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn eigenfunctions_csv(model: &fpca::FpcaModel) -> String {
    let k = model.n_retained;
    let mut out = String::from("t_normalized,month,mean");
    for j in 1..=k {
        let _ = write!(out, ",phi_{j}");
    }
    for j in 1..=k {
        let _ = write!(out, ",sqrt_lambda_phi_{j}");
    }
    out.push('\n');
    let roots: Vec<f64> = model.eigenvalues[..k].iter().map(|l| l.sqrt()).collect();
    for (i, t) in model.grid.normalized_points().iter().enumerate() {
        let _ = write!(out, "{},{},{}", num(*t), model.grid.month_at(i), num(model.mean[i]));
        for phi in &model.eigenfunctions {
            let _ = write!(out, ",{}", num(phi[i]));
        }
        for (phi, r) in model.eigenfunctions.iter().zip(&roots) {
            let _ = write!(out, ",{}", num(r * phi[i]));
        }
        out.push('\n');
    }
    out
}

fn scores_csv(model: &fpca::FpcaModel) -> String {
    let mut out = String::from("name,in_sample");
    for j in 1..=model.n_retained {
        let _ = write!(out, ",score_{j}");
    }
    out.push('\n');
    for ((name, row), inside) in model.names.iter().zip(&model.scores).zip(&model.in_sample) {
        let _ = write!(out, "{name},{inside}");
        for s in row {
            let _ = write!(out, ",{}", num(*s));
        }
        out.push('\n');
    }
    out
}

fn modes_csv(model: &fpca::FpcaModel, modes: &fpca::ModesOfVariation) -> String {
    let mut out = String::from("t_normalized");
    for g in &modes.gammas {
        let _ = write!(out, ",gamma_{g}");
    }
    out.push('\n');
    for (i, t) in model.grid.normalized_points().iter().enumerate() {
        out.push_str(&num(*t));
        for c in &modes.curves {
            let _ = write!(out, ",{}", num(c[i]));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// diagnose

#[derive(Serialize)]
struct DiagnosticRow {
    name: String,
    max_abs: f64,
    calibration: f64,
    flagged: bool,
}

fn cmd_diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    let fit = load_fit(&fit_path(&args.fit, &args.output_dir))?;
    let (panel, computed) = warps_from_fit(&args.input, &fit)?;
    let set = match &args.warps {
        Some(p) => warping::warps_from_csv(&read_text(p)?, computed.grid.start_month)?,
        None => computed,
    };
    if set.grid != panel.grid.sub_grid(panel.grid.n_points - set.grid.n_points, panel.grid.n_points - 1)? {
        return Err(Error::Grid("warp grid does not match the analysis window of the fit".into()).into());
    }
    let offset = panel.grid.n_points - set.grid.n_points;
    let last = panel.grid.n_points - 1;

    let mut diagnostics = Vec::new();
    for w in &set.warps {
        let fitted = fit
            .series
            .iter()
            .find(|s| s.name == w.series_name)
            .ok_or_else(|| Error::Schema(format!("warp '{}' has no fitted rate", w.series_name)))?;
        let series = panel
            .get(&w.series_name)
            .ok_or_else(|| Error::Schema(format!("warp '{}' is not in the panel", w.series_name)))?
            .slice(offset, last);
        diagnostics.push(warping::second_order_diagnostic(&series, w, fitted.alpha)?);
    }

    let mut table = String::from("t_normalized");
    for d in &diagnostics {
        let _ = write!(table, ",{}", d.series_name);
    }
    table.push('\n');
    for (i, t) in set.grid.normalized_points().iter().enumerate() {
        table.push_str(&num(*t));
        for d in &diagnostics {
            let _ = write!(table, ",{}", num(d.residuals[i]));
        }
        table.push('\n');
    }
    let rows: Vec<DiagnosticRow> = diagnostics
        .iter()
        .map(|d| DiagnosticRow {
            name: d.series_name.clone(),
            max_abs: d.max_abs,
            calibration: d.calibration,
            flagged: d.flagged,
        })
        .collect();

    let mut out = Outputs::default();
    out.add(&args.output_dir, "diagnostics.csv", table);
    out.add_json(&args.output_dir, "diagnose.json", &rows)?;
    out.commit(&args.output_dir)?;

    let flagged: Vec<&str> = rows.iter().filter(|r| r.flagged).map(|r| r.name.as_str()).collect();
    if flagged.is_empty() {
        println!("{} series checked, none flagged", rows.len());
    } else {
        println!("{} series checked, flagged: {}", rows.len(), flagged.join(", "));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut truth = match (&args.truth, args.default_truth) {
        (Some(path), _) => SimTruth::from_manifest(path)?,
        (None, true) => SimTruth::default_truth(),
        (None, false) => {
            return Err(Failure {
                code: EXIT_CONFIG,
                message: "simulate needs --truth <manifest> or --default-truth".into(),
            })
        }
    };
    if let Some(seed) = args.seed {
        truth.seed = seed;
    }
    if let Some(n) = args.sample_size {
        truth.n = n;
    }
    truth.validate()?;
    if args.replicates == 0 {
        return Err(Error::Config("--replicates must be at least 1".into()).into());
    }

    let report = simulate::run_study(&truth, args.replicates)?;
    let sweep = if args.sweep {
        Some(simulate::convergence_sweep(&truth, &args.sweep_sizes, args.sweep_repeats)?)
    } else {
        None
    };

    let dir = &args.output_dir;
    let mut out = Outputs::default();
    out.add_json(dir, "sim_report.json", &report)?;
    out.add(dir, "sim_replicates.csv", simulate::report_to_csv(&report));
    if let Some(s) = &sweep {
        out.add_json(dir, "convergence.json", s)?;
    }
    out.commit(dir)?;

    let agg = &report.aggregates;
    let fmt = |s: &Option<simulate::Summary>| match s {
        Some(s) => format!("{:.4}", s.mean),
        None => "n/a".into(),
    };
    println!(
        "{} replicates ({} failed), n={}: ASE {}, MISE phi1 {}, var explained (2 PCs) {} vs truth {:.4} [reference mean 0.96]",
        report.n_replicates,
        report.n_failed,
        report.n,
        fmt(&agg.ase),
        fmt(agg.mise.first().unwrap_or(&None)),
        fmt(&agg.var_explained_2),
        report.truth_var_explained_2
    );
    if let Some(s) = &sweep {
        let slope = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3}"));
        println!(
            "convergence slopes: mean {}, covariance {}, phi1 {}, lambda1 {}",
            slope(s.slopes.mean),
            slope(s.slopes.covariance),
            slope(s.slopes.phi1),
            slope(s.slopes.lambda1)
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Warp(a) => cmd_warp(a),
        Command::Fpca(a) => cmd_fpca(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

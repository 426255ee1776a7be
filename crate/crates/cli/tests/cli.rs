use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_warpgrowth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn label(month: i32) -> String {
    let z = month - 1;
    format!("{:04}-{:02}", 1987 + z.div_euclid(12), z.rem_euclid(12) + 1)
}

/// Panel on Dec 1998..Jul 2013 from per-series closures of the month offset.
fn write_panel(path: &Path, names: &[&str], f: impl Fn(usize, usize) -> f64) {
    let mut s = format!("date,{}\n", names.join(","));
    for i in 0..176 {
        s.push_str(&label(144 + i as i32));
        for j in 0..names.len() {
            s.push_str(&format!(",{}", f(j, i)));
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

fn boom_bust_panel(path: &Path) {
    write_panel(path, &["Aa", "Bb", "Cc", "Dd", "Ee", "Ff"], |j, i| {
        let a = 0.004 + 0.0015 * j as f64;
        let bump = if i <= 23 {
            0.0
        } else {
            let u = (i - 23) as f64 / 152.0;
            0.1 * (j as f64 + 1.0) * (std::f64::consts::PI * u).sin()
                - 0.05 * (j % 3) as f64 * (2.0 * std::f64::consts::PI * u).sin()
        };
        100.0 * (a * i as f64 + bump).exp()
    });
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let j = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[j].parse().unwrap()).collect()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn full_chain(panel: &Path, out: &Path) {
    let (p, o) = (panel.to_str().unwrap(), out.to_str().unwrap());
    ok(&["fit", "--input", p, "--output-dir", o]);
    ok(&["warp", "--input", p, "--output-dir", o]);
    ok(&["fpca", "--output-dir", o, "--exclude", "Ee,Ff", "--k", "2"]);
    ok(&["diagnose", "--input", p, "--output-dir", o]);
    ok(&["simulate", "--default-truth", "--replicates", "2", "--output-dir", o]);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("panel.csv");
    boom_bust_panel(&panel);
    let before = std::fs::read(&panel).unwrap();

    full_chain(&panel, &tmp.path().join("a"));
    full_chain(&panel, &tmp.path().join("b"));
    let a = snapshot(&tmp.path().join("a"));
    let b = snapshot(&tmp.path().join("b"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between runs");
    }
    assert_eq!(std::fs::read(&panel).unwrap(), before, "input was modified");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let o1 = tmp.path().join("one");
    let o4 = tmp.path().join("four");
    for (dir, threads) in [(&o1, "1"), (&o4, "4")] {
        ok(&[
            "--threads", threads, "simulate", "--default-truth", "--replicates", "3",
            "--output-dir", dir.to_str().unwrap(),
        ]);
    }
    assert_eq!(snapshot(&o1), snapshot(&o4));
}

#[test]
fn missing_input_exits_2_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "fit", "--input", tmp.path().join("absent.csv").to_str().unwrap(),
        "--output-dir", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_panel_exits_2() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("bad.csv");
    std::fs::write(&panel, "date,A\n1998-12,100\n1999-01,-3\n").unwrap();
    let out = run(&["fit", "--input", panel.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("fit.json").exists());
}

#[test]
fn simulate_without_truth_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["simulate", "--output-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn incompatible_cap_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let truth = simulate_manifest(tmp.path(), 50.0, 0.05);
    let out = run(&[
        "simulate", "--truth", truth.to_str().unwrap(), "--replicates", "1",
        "--output-dir", tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("o").exists());
}

/// Manifest with the default grid, sine eigenfunctions and the given cap
/// and first eigenvalue.
fn simulate_manifest(dir: &Path, cap: f64, lambda1: f64) -> std::path::PathBuf {
    let n = 176;
    let mut mean = String::from("t_normalized,mean\n");
    let mut phi = String::from("t_normalized,phi_1\n");
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        mean.push_str(&format!("{t},{t}\n"));
        let p = std::f64::consts::SQRT_2 * (std::f64::consts::PI * t).sin();
        phi.push_str(&format!("{t},{p}\n"));
    }
    std::fs::write(dir.join("mean.csv"), mean).unwrap();
    std::fs::write(dir.join("phi.csv"), phi).unwrap();
    let manifest = format!(
        r#"{{"t0_month": 144, "mean_csv": "mean.csv", "eigenfunctions_csv": "phi.csv",
            "eigenvalues": [{lambda1}], "cap": {cap}}}"#
    );
    let path = dir.join("truth.json");
    std::fs::write(&path, manifest).unwrap();
    path
}

#[test]
fn zero_variance_truth_reports_zero_ase() {
    let tmp = TempDir::new().unwrap();
    let truth = simulate_manifest(tmp.path(), 1e6, 0.0);
    let o = tmp.path().join("o");
    ok(&["simulate", "--truth", truth.to_str().unwrap(), "--replicates", "2", "--output-dir", o.to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("sim_report.json")).unwrap()).unwrap();
    let ase = report["aggregates"]["ase"]["mean"].as_f64().unwrap();
    assert!(ase < 1e-20, "ase = {ase}");
}

#[test]
fn exact_exponentials_give_identity_warps() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("p.csv");
    write_panel(&panel, &["A", "B", "C"], |j, i| {
        (90.0 + j as f64) * ((0.003 + 0.005 * j as f64) * i as f64).exp()
    });
    let o = tmp.path().to_str().unwrap();
    ok(&["fit", "--input", panel.to_str().unwrap(), "--output-dir", o]);
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["mean_r2"].as_f64(), Some(1.0));
    // Every window fits perfectly; the tie-break picks the earliest, shortest.
    assert_eq!(fit["window_start"].as_i64(), Some(144));
    assert_eq!(fit["window_length_months"].as_u64(), Some(24));

    ok(&["warp", "--input", panel.to_str().unwrap(), "--output-dir", o]);
    let warps = tmp.path().join("warps.csv");
    let t = column(&warps, "t_normalized");
    for name in ["A", "B", "C"] {
        let h = column(&warps, name);
        let sup = t.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(sup < 1e-10, "{name}: sup |h - t| = {sup}");
    }
}

#[test]
fn flat_series_gives_zero_warp() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("p.csv");
    write_panel(&panel, &["Flat", "Grow"], |j, i| {
        if j == 0 { 150.0 } else { 100.0 * (0.01 * i as f64).exp() }
    });
    let (p, o) = (panel.to_str().unwrap(), tmp.path().to_str().unwrap());
    ok(&["fit", "--input", p, "--output-dir", o, "--window", "144:167"]);
    ok(&["warp", "--input", p, "--output-dir", o]);
    let h = column(&tmp.path().join("warps.csv"), "Flat");
    assert!(h.iter().all(|v| *v == 0.0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("warp_summary.json")).unwrap()).unwrap();
    let flat = &summary["series"][0];
    assert_eq!(flat["name"], "Flat");
    assert_eq!(flat["unreliable"], true);
}

#[test]
fn ending_below_baseline_is_reported_as_setback() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("p.csv");
    write_panel(&panel, &["Bust", "Boom"], |j, i| {
        let base = 0.008 * i as f64;
        let shock = if i > 23 { 0.4 * ((i - 23) as f64 / 152.0) } else { 0.0 };
        100.0 * if j == 0 { base - shock } else { base + shock }.exp()
    });
    let (p, o) = (panel.to_str().unwrap(), tmp.path().to_str().unwrap());
    ok(&["fit", "--input", p, "--output-dir", o, "--window", "1998-12:2000-11"]);
    ok(&["warp", "--input", p, "--output-dir", o]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("warp_summary.json")).unwrap()).unwrap();
    let rows = summary["series"].as_array().unwrap();
    let bust = rows.iter().find(|r| r["name"] == "Bust").unwrap();
    let boom = rows.iter().find(|r| r["name"] == "Boom").unwrap();
    assert!(bust["h_end"].as_f64().unwrap() < 1.0);
    assert!(bust["setback"].as_f64().unwrap() > 0.0);
    assert!(boom["setback"].as_f64().unwrap() < 0.0);
}

#[test]
fn two_series_sample_has_rank_one_and_opposite_scores() {
    let tmp = TempDir::new().unwrap();
    let n = 11;
    let mut csv = String::from("t_normalized,P,Q\n");
    let mut diff_sq = Vec::new();
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let (p, q) = (t + 0.2 * t * (1.0 - t), t - 0.1 * (3.0 * t).sin());
        diff_sq.push(((p - q) / 2.0).powi(2));
        csv.push_str(&format!("{t},{p},{q}\n"));
    }
    std::fs::write(tmp.path().join("w.csv"), csv).unwrap();
    let o = tmp.path().join("o");
    ok(&[
        "fpca", "--input", tmp.path().join("w.csv").to_str().unwrap(), "--start-month", "144",
        "--k", "1", "--output-dir", o.to_str().unwrap(),
    ]);
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("fpca_model.json")).unwrap()).unwrap();
    let eig: Vec<f64> = model["model"]["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(eig[0] > 0.0);
    assert!(eig[1..].iter().all(|l| l.abs() <= 1e-12 * eig[0]));

    // Trapezoid norm of h_i - mean.
    let w = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 } / (n - 1) as f64;
    let norm = diff_sq.iter().enumerate().map(|(i, d)| w(i) * d).sum::<f64>().sqrt();
    let s = column(&o.join("scores.csv"), "score_1");
    assert!((s[0] + s[1]).abs() < 1e-12);
    assert!((s[0].abs() - norm).abs() < 1e-12, "{} vs {norm}", s[0]);
}

#[test]
fn excluded_series_are_flagged_out_of_sample() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("p.csv");
    boom_bust_panel(&panel);
    let (p, o) = (panel.to_str().unwrap(), tmp.path().to_str().unwrap());
    ok(&["fit", "--input", p, "--output-dir", o]);
    ok(&["warp", "--input", p, "--output-dir", o]);
    ok(&["fpca", "--output-dir", o, "--exclude", "Bb,Dd"]);
    let (header, rows) = read_csv(&tmp.path().join("scores.csv"));
    assert_eq!(header[..2], ["name", "in_sample"]);
    for r in rows {
        let excluded = r[0] == "Bb" || r[0] == "Dd";
        assert_eq!(r[1], (!excluded).to_string(), "{}", r[0]);
    }
    let (modes_header, _) = read_csv(&tmp.path().join("modes_k1.csv"));
    assert_eq!(
        modes_header,
        ["t_normalized", "gamma_-2", "gamma_-1", "gamma_0", "gamma_1", "gamma_2"]
    );
}

#[test]
fn unknown_exclusion_exits_2() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("p.csv");
    boom_bust_panel(&panel);
    let (p, o) = (panel.to_str().unwrap(), tmp.path().to_str().unwrap());
    ok(&["fit", "--input", p, "--output-dir", o]);
    ok(&["warp", "--input", p, "--output-dir", o]);
    let out = run(&["fpca", "--output-dir", o, "--exclude", "Nowhere"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("fpca_model.json").exists());
}

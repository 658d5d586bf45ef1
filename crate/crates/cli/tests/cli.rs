use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use beatlab::model::{g2_model, G2Params};

fn beatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beatlab"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

fn small_config(dir: &Path) -> String {
    let cfg = dir.join("small.toml");
    fs::write(&cfg, "n_pulses = 40\nduration_us = 12.0\nmaster_seed = 5\n").unwrap();
    p(&cfg)
}

fn write_g2(path: &Path, params: G2Params) {
    let mut text = String::from("tau_us,g2\n");
    for k in 0..121 {
        let tau = 0.05 * k as f64;
        text.push_str(&format!("{tau},{}\n", g2_model(tau, &params)));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for run in ["a", "b"] {
        let out = beatlab(&[
            "simulate",
            "--config",
            &cfg,
            "--out",
            &p(&tmp.path().join(run)),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in ["ensemble.csv", "ensemble.meta.json", "traces.svg"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let csv = fs::read_to_string(tmp.path().join("a/ensemble.csv")).unwrap();
    assert!(csv.starts_with("index,t_us,intensity\n"));
    assert_eq!(csv.lines().count(), 1 + 40 * 1200);
    assert!(tmp.path().join("a/manifest.json").exists());
}

#[test]
fn malformed_config_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "n_pulses = 10\nwrite_power = 3.0\n").unwrap();
    let out = beatlab(&[
        "simulate",
        "--config",
        &p(&cfg),
        "--out",
        &p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("write_power"));
}

#[test]
fn analyze_writes_requested_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let sim = tmp.path().join("sim");
    assert!(beatlab(&["simulate", "--config", &cfg, "--out", &p(&sim)])
        .status
        .success());

    let g2_only = tmp.path().join("g2");
    let out = beatlab(&[
        "analyze",
        &p(&sim),
        "--g2",
        "--format",
        "csv",
        "--out",
        &p(&g2_only),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let g2 = fs::read_to_string(g2_only.join("g2.csv")).unwrap();
    let mut lines = g2.lines();
    assert_eq!(lines.next(), Some("tau_us,g2"));
    assert!(lines.next().unwrap().starts_with("0,"));
    assert!(!g2_only.join("g2.svg").exists());
    assert!(!g2_only.join("phases.csv").exists());

    let all = tmp.path().join("all");
    assert!(beatlab(&["analyze", &p(&sim), "--out", &p(&all)])
        .status
        .success());
    for f in [
        "mean.csv",
        "mean.svg",
        "g2.csv",
        "g2.svg",
        "phases.csv",
        "phases.svg",
        "phase_hist.csv",
        "analysis.json",
    ] {
        assert!(all.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(all.join("phases.csv")).unwrap();
    assert!(header.starts_with("index,delta_t_us,period_us,phase_rad\n"));
}

#[test]
fn missing_ensemble_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = beatlab(&[
        "analyze",
        &p(&tmp.path().join("nope")),
        "--out",
        &p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_echoes_generating_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let g2 = tmp.path().join("g2.csv");
    write_g2(
        &g2,
        G2Params {
            v: 0.47,
            gamma: 0.63,
            delta_nu: 0.68,
        },
    );
    let out_dir = tmp.path().join("fit");
    let out = beatlab(&["fit", &p(&g2), "--out", &p(&out_dir)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = fs::read_to_string(out_dir.join("fit.txt")).unwrap();
    assert!(report.contains("converged: true"));
    let csv = fs::read_to_string(out_dir.join("fit.csv")).unwrap();
    let value = |name: &str| -> f64 {
        csv.lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("V") - 0.47).abs() < 1e-6);
    assert!((value("gamma_per_us") - 0.63).abs() < 1e-6);
    assert!((value("delta_nu_mhz") - 0.68).abs() < 1e-6);
    assert!(out_dir.join("g2_fit.svg").exists());
}

#[test]
fn flat_g2_is_flagged_unidentifiable() {
    let tmp = tempfile::tempdir().unwrap();
    let g2 = tmp.path().join("flat.csv");
    write_g2(
        &g2,
        G2Params {
            v: 0.0,
            gamma: 0.0,
            delta_nu: 0.0,
        },
    );
    let out_dir = tmp.path().join("fit");
    assert!(beatlab(&["fit", &p(&g2), "--out", &p(&out_dir)])
        .status
        .success());
    let report = fs::read_to_string(out_dir.join("fit.txt")).unwrap();
    assert!(report.contains("delta_nu identifiable: no"), "{report}");
}

#[test]
fn truncated_csv_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let g2 = tmp.path().join("g2.csv");
    fs::write(&g2, "tau_us,g2\n0,1.5\n0.05,1.49\n0.1,").unwrap();
    let out = beatlab(&["fit", &p(&g2), "--out", &p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_1_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let g2 = tmp.path().join("g2.csv");
    write_g2(
        &g2,
        G2Params {
            v: 0.47,
            gamma: 0.63,
            delta_nu: 0.68,
        },
    );
    let out_dir = tmp.path().join("o");
    let out = beatlab(&[
        "fit",
        &p(&g2),
        "--max-iterations",
        "1",
        "--out",
        &p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
    assert!(fs::read_to_string(out_dir.join("fit.txt"))
        .unwrap()
        .contains("converged: false"));
}

#[test]
fn sweep_grid_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let out = beatlab(&[
        "sweep",
        "--power",
        "0.5:0.5:1",
        "--out",
        &p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = beatlab(&["sweep", "--out", &p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tmp.path().join("power");
    let out = beatlab(&[
        "sweep",
        "--power",
        "0.2:1.0:8",
        "--traces",
        "4",
        "--out",
        &p(&dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.join("power_sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 9);
    assert!(dir.join("power_fit.csv").exists() && dir.join("power_sweep.svg").exists());
}

#[test]
fn temperature_sweep_is_ascending() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("t");
    let out = beatlab(&[
        "sweep",
        "--temperature",
        "330:370:5",
        "--pulses",
        "600",
        "--out",
        &p(&dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.join("temperature_sweep.csv")).unwrap();
    let gammas: Vec<f64> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gammas.len(), 5);
    assert!(gammas.windows(2).all(|w| w[1] > w[0]), "{gammas:?}");
}

#[test]
fn report_writes_every_figure_type() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("report");
    let out = beatlab(&["report", "--pulses", "400", "--out", &p(&dir)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "traces.svg",
        "mean.svg",
        "power_sweep.svg",
        "phases.svg",
        "phase_hist.svg",
        "g2.svg",
        "temperature_sweep.svg",
        "fit.txt",
        "report.txt",
        "manifest.json",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let manifests = fs::read_dir(&dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name() == "manifest.json")
        .count();
    assert_eq!(manifests, 1);
}

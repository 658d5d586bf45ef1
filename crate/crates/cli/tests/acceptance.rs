//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p beatlab-cli --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use beatlab::analyze::{
    beat_period, circular_correlation, extract_phases, phase_histogram, residual_oscillation,
    stream_mean, wrap_phase, MeanTrace, PeriodSource,
};
use beatlab::fit::{
    fit_curve, fit_power_law, g2_pipeline, gamma_temperature_model, model_jacobian, sweep_power,
    sweep_temperature, FitOptions, PowerSweepOptions, SqrtTemperatureLaw,
};
use beatlab::model::{g2_model, FieldPair, G2Params};
use beatlab::reduce::Execution;
use beatlab::rng;
use beatlab::simulate::{
    sample_phase_path, simulate_ensemble, synthesize_trace, AmplitudeMode, ExperimentConfig,
    TimeGrid,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn with_beat(beat: f64, gamma: f64, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        pair: FieldPair::with_beat(1.0, 1.0, beat).unwrap(),
        gamma,
        n_pulses: n,
        ..Default::default()
    }
}

fn round_trip_within(v: f64, gamma: f64, delta_nu: f64) -> bool {
    (0.42..=0.52).contains(&v)
        && (gamma / 0.63 - 1.0).abs() <= 0.15
        && (delta_nu / 0.68 - 1.0).abs() <= 0.03
}

fn g2_round_trip() -> Outcome {
    let start = Instant::now();
    let cfg = with_beat(0.68, 0.63, 2000);
    let run = g2_pipeline(&cfg, Execution::Parallel, &FitOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let p = run.fit.params;
    let pass = round_trip_within(p.v, p.gamma, p.delta_nu) && secs < 60.0;

    // context only: how often other seeds land inside the same window
    let others = 20u64;
    let inside = (1..=others)
        .filter(|s| {
            let c = ExperimentConfig {
                master_seed: *s,
                ..cfg.clone()
            };
            let f = g2_pipeline(&c, Execution::Parallel, &FitOptions::default())
                .unwrap()
                .fit
                .params;
            round_trip_within(f.v, f.gamma, f.delta_nu)
        })
        .count();
    outcome(
        pass,
        format!(
            "V = {:.4}, gamma = {:.4} /us ({:+.1}%), delta_nu = {:.4} MHz ({:+.2}%), {:.1} s; {inside}/{others} other seeds also inside",
            p.v,
            p.gamma,
            100.0 * (p.gamma / 0.63 - 1.0),
            p.delta_nu,
            100.0 * (p.delta_nu / 0.68 - 1.0),
            secs
        ),
    )
}

fn beat_period_single_trace() -> Outcome {
    let cfg = with_beat(0.77, 0.0, 1);
    let trace = synthesize_trace(&cfg, &mut rng::stream(cfg.master_seed, 0), 0).unwrap();
    let reference = MeanTrace::from_config(&cfg).unwrap();
    let t = beat_period(&trace, Some(&reference)).unwrap();
    outcome((t - 1.30).abs() <= 0.03, format!("T = {t:.4} us"))
}

fn washout() -> Outcome {
    let base = ExperimentConfig::default();
    let beat = base.pair.observable_beat();
    let env = base.envelope_samples().unwrap();
    let modulation = 2.0 * (base.pair.i1 * base.pair.i2).sqrt();

    let cfg = ExperimentConfig {
        n_pulses: 2000,
        ..base.clone()
    };
    let rel2000 =
        residual_oscillation(&stream_mean(&cfg, Execution::Parallel).unwrap(), &env, beat).unwrap()
            / modulation;

    // RMS over repeated ensembles, so the slope reflects the scaling law
    // rather than one draw of the residual.
    let sizes = [100usize, 400, 1600, 6400];
    let repeats = 16u64;
    let mut ln_n = Vec::new();
    let mut ln_a = Vec::new();
    for &n in &sizes {
        let ms: f64 = (0..repeats)
            .map(|m| {
                let cfg = ExperimentConfig {
                    n_pulses: n,
                    master_seed: 1_000 + 97 * m + n as u64,
                    ..base.clone()
                };
                residual_oscillation(&stream_mean(&cfg, Execution::Parallel).unwrap(), &env, beat)
                    .unwrap()
                    .powi(2)
            })
            .sum::<f64>()
            / repeats as f64;
        ln_n.push((n as f64).ln());
        ln_a.push(0.5 * ms.ln());
    }
    let slope = fit_power_law(&ln_n, &ln_a).unwrap().slope;
    outcome(
        rel2000 < 0.05 && (slope + 0.5).abs() <= 0.1,
        format!("residual/modulation at N=2000 = {rel2000:.4}, log-log slope = {slope:.3}"),
    )
}

fn phase_uniformity() -> Outcome {
    let seeds = 50u64;
    let mut passed = 0;
    for s in 0..seeds {
        let cfg = ExperimentConfig {
            master_seed: 7_000 + s,
            ..with_beat(0.77, 0.0, 5000)
        };
        let ens = simulate_ensemble(&cfg).unwrap();
        let ext = extract_phases(&ens, PeriodSource::default()).unwrap();
        let h = phase_histogram(&ext.samples, 20).unwrap();
        if ext.failures.is_empty() && !h.rejects_uniform(0.01) {
            passed += 1;
        }
    }
    let frac = passed as f64 / seeds as f64;

    let ens = simulate_ensemble(&with_beat(0.77, 0.0, 5000)).unwrap();
    let ext = extract_phases(&ens, PeriodSource::default()).unwrap();
    let by_index: BTreeMap<usize, f64> = ens
        .traces
        .iter()
        .map(|t| (t.index, wrap_phase(-t.truth.unwrap().initial_phase)))
        .collect();
    let truth: Vec<f64> = ext.samples.iter().map(|s| by_index[&s.index]).collect();
    let got: Vec<f64> = ext.samples.iter().map(|s| s.phase).collect();
    let rho = circular_correlation(&truth, &got).unwrap();
    outcome(
        frac >= 0.95 && rho > 0.98,
        format!("uniform in {passed}/{seeds} seeds, truth correlation = {rho:.4}"),
    )
}

fn visibility(mode: AmplitudeMode) -> f64 {
    let cfg = ExperimentConfig {
        amplitude_mode: mode,
        ..with_beat(0.77, 0.0, 100_000)
    };
    let opts = FitOptions {
        free_baseline: true,
        ..Default::default()
    };
    g2_pipeline(&cfg, Execution::Parallel, &opts)
        .unwrap()
        .fit
        .params
        .v
}

fn thermal_vs_coherent() -> Outcome {
    let coherent = visibility(AmplitudeMode::Coherent);
    let thermal = visibility(AmplitudeMode::Thermal);
    outcome(
        (coherent - 0.5).abs() <= 0.015 && (thermal - 1.0 / 3.0).abs() <= 0.015,
        format!("coherent V = {coherent:.4}, thermal V = {thermal:.4}"),
    )
}

fn dephasing_calibration() -> Outcome {
    let gamma = 0.63;
    let paths = 1_000_000u64;
    // steps of γτ = 0.1; the checked lags are steps 1, 10 and 30
    let grid = TimeGrid {
        t0: 0.0,
        dt: 0.1 / gamma,
        len: 31,
    };
    let lags = [1usize, 10, 30];
    let mut sums = [(0.0f64, 0.0f64); 3];
    for i in 0..paths {
        let mut r = rng::stream(424_242, i);
        let start: f64 = r.random_range(0.0..TAU);
        let path = sample_phase_path(&mut r, gamma, start, &grid);
        for (s, &k) in sums.iter_mut().zip(&lags) {
            let d = path[k] - path[0];
            s.0 += d.cos();
            s.1 += d.sin();
        }
    }
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (s, &k) in sums.iter().zip(&lags) {
        let gt = 0.1 * k as f64;
        let re = s.0 / paths as f64;
        let im = s.1 / paths as f64;
        let err = ((re - (-gt).exp()).powi(2) + im * im).sqrt();
        worst = worst.max(err);
        parts.push(format!("gamma*tau={gt}: {re:.4} vs {:.4}", (-gt).exp()));
    }
    outcome(
        worst < 0.01,
        format!("{}; max error {worst:.2e}", parts.join(", ")),
    )
}

fn power_law() -> Outcome {
    let base = ExperimentConfig::default();
    let powers: Vec<f64> = (0..8).map(|k| 0.2 + 0.8 * k as f64 / 7.0).collect();
    let res = sweep_power(&base, &powers, &PowerSweepOptions::default()).unwrap();
    let dev = res.fit.slope / base.pair.kappa1 - 1.0;
    outcome(
        res.fit.r2 > 0.999 && dev.abs() <= 0.02,
        format!(
            "r2 = {:.5}, slope = {:.4} MHz/mW vs kappa1 = {} ({:+.2}%)",
            res.fit.r2,
            res.fit.slope,
            base.pair.kappa1,
            100.0 * dev
        ),
    )
}

fn temperature_trend() -> Outcome {
    let base = ExperimentConfig::default();
    let law = SqrtTemperatureLaw {
        gamma_ref: base.gamma,
        t_ref: 350.0,
    };
    let temps = [330.0, 340.0, 350.0, 360.0, 370.0];
    let res = sweep_temperature(&base, &temps, &law).unwrap();
    let gammas: Vec<f64> = res
        .gammas()
        .into_iter()
        .map(|g| g.unwrap_or(f64::NAN))
        .collect();
    let increasing = gammas.windows(2).all(|w| w[1] > w[0]);
    let devs: Vec<f64> = temps
        .iter()
        .zip(&gammas)
        .map(|(t, g)| g / gamma_temperature_model(*t, law.gamma_ref, law.t_ref).unwrap() - 1.0)
        .collect();
    let within = devs.iter().all(|d| d.abs() <= 0.15);
    outcome(
        increasing && within,
        format!(
            "gamma = [{}], deviations [{}]",
            gammas
                .iter()
                .map(|g| format!("{g:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            devs.iter()
                .map(|d| format!("{:+.1}%", 100.0 * d))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn exact_data_fitting() -> Outcome {
    let truths = [
        G2Params {
            v: 0.47,
            gamma: 0.63,
            delta_nu: 0.68,
        },
        G2Params {
            v: 0.9,
            gamma: 0.1,
            delta_nu: 1.5,
        },
        G2Params {
            v: 0.2,
            gamma: 1.2,
            delta_nu: 0.4,
        },
    ];
    let mut worst_fit: f64 = 0.0;
    for p in truths {
        let taus: Vec<f64> = (0..96).map(|k| 6.0 * k as f64 / 95.0).collect();
        let ys: Vec<f64> = taus.iter().map(|&t| g2_model(t, &p)).collect();
        let guess = G2Params {
            v: p.v * 0.8,
            gamma: p.gamma * 1.2,
            delta_nu: p.delta_nu * 1.1,
        };
        let f = fit_curve(&taus, &ys, guess, &FitOptions::default()).unwrap();
        for (a, b) in [
            (f.params.v, p.v),
            (f.params.gamma, p.gamma),
            (f.params.delta_nu, p.delta_nu),
        ] {
            worst_fit = worst_fit.max((a / b - 1.0).abs());
        }
    }

    let mut r = rng::stream(99, 0);
    let mut worst_jac: f64 = 0.0;
    for _ in 0..100 {
        let p = G2Params {
            v: r.random_range(0.05..1.0),
            gamma: r.random_range(0.0..2.0),
            delta_nu: r.random_range(0.1..2.0),
        };
        let tau = r.random_range(0.05..6.0);
        let d = model_jacobian(tau, &p);
        let h = 1e-6;
        let fd = |f: &dyn Fn(f64) -> G2Params, x: f64| {
            (g2_model(tau, &f(x + h)) - g2_model(tau, &f(x - h))) / (2.0 * h)
        };
        let num = [
            fd(&|x| G2Params { v: x, ..p }, p.v),
            fd(&|x| G2Params { gamma: x, ..p }, p.gamma),
            fd(&|x| G2Params { delta_nu: x, ..p }, p.delta_nu),
        ];
        for i in 0..3 {
            worst_jac = worst_jac.max((d[i] - num[i]).abs() / d[i].abs().max(1e-3));
        }
    }
    outcome(
        worst_fit < 1e-6 && worst_jac < 1e-6,
        format!("max parameter error {worst_fit:.1e}, max Jacobian error {worst_jac:.1e}"),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_beatlab"))
        .args(args)
        .stdout(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn pipeline(root: &Path, jobs: &str, config: &Path) -> bool {
    let d = |s: &str| root.join(s).display().to_string();
    let cfg = config.display().to_string();
    run_cli(&[
        "--jobs",
        jobs,
        "simulate",
        "--config",
        &cfg,
        "--out",
        &d("sim"),
    ]) && run_cli(&[
        "--jobs",
        jobs,
        "analyze",
        &d("sim"),
        "--out",
        &d("analysis"),
    ]) && run_cli(&[
        "--jobs",
        jobs,
        "fit",
        &d("analysis/g2.csv"),
        "--out",
        &d("fit"),
    ]) && run_cli(&[
        "--jobs",
        jobs,
        "sweep",
        "--config",
        &cfg,
        "--power",
        "0.2:1.0:8",
        "--out",
        &d("power"),
    ]) && run_cli(&[
        "--jobs",
        jobs,
        "sweep",
        "--config",
        &cfg,
        "--temperature",
        "330:370:5",
        "--out",
        &d("temperature"),
    ])
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect(root, &p, out);
        } else if p.file_name().unwrap() != "manifest.json" {
            out.insert(
                p.strip_prefix(root).unwrap().display().to_string(),
                fs::read(&p).unwrap(),
            );
        }
    }
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "n_pulses = 300\nmaster_seed = 31337\n").unwrap();
    let runs = ["serial", "parallel", "parallel-again"];
    let jobs = ["1", "4", "4"];
    let mut trees = Vec::new();
    for (name, j) in runs.iter().zip(jobs) {
        let root = tmp.path().join(name);
        if !pipeline(&root, j, &config) {
            return outcome(false, format!("CLI pipeline failed ({name})"));
        }
        let mut files = BTreeMap::new();
        collect(&root, &root, &mut files);
        trees.push(files);
    }
    let manifests = runs.iter().all(|r| {
        ["sim", "analysis", "fit", "power", "temperature"]
            .iter()
            .all(|d| tmp.path().join(r).join(d).join("manifest.json").exists())
    });
    let same = trees.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same && manifests && !trees[0].is_empty(),
        format!(
            "{} output files identical across --jobs 1 / 4 / 4 (manifests excluded)",
            trees[0].len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        (
            "fitted g2 round trip recovers V, gamma, delta_nu",
            g2_round_trip,
        ),
        (
            "single-trace beat period at 0.77 MHz",
            beat_period_single_trace,
        ),
        ("ensemble washout and 1/sqrt(N) scaling", washout),
        ("phase uniformity and truth correlation", phase_uniformity),
        (
            "thermal 1/3 versus coherent 1/2 visibility",
            thermal_vs_coherent,
        ),
        ("Monte-Carlo dephasing calibration", dephasing_calibration),
        ("beat frequency linear in write power", power_law),
        ("fitted gamma increases with temperature", temperature_trend),
        ("exact-data fit and analytic Jacobian", exact_data_fitting),
        (
            "byte-identical outputs serial versus parallel",
            reproducibility,
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

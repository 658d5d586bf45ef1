//! Subcommand drivers. Each writes its outputs plus one `manifest.json`
//! into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use beatlab::analyze::{
    self, ensemble_mean, estimate_g2, extract_phases, find_peak, phase_histogram,
    residual_oscillation, HistogramResult, MeanTrace, PeriodSource, PhaseSample,
};
use beatlab::fit::{
    fit_curve, guess_curve, scaled_model, sweep_power, sweep_temperature, DephasingLaw, FitOptions,
    G2Fit, PowerSweepOptions, PowerSweepResult, SqrtTemperatureLaw, TempSweepResult,
};
use beatlab::reduce::Execution;
use beatlab::simulate::{
    simulate_ensemble_with, AmplitudeMode, Ensemble, ExperimentConfig, PulseTrace,
};
use beatlab::{Error, Result};
use serde::Serialize;

use crate::io::{self, fmt_f64, write_table, DEFAULT_REFERENCE_K};
use crate::plot::{Plot, Series, BLUE, GREEN, GREY, RED};
use crate::{Cli, Command, Common, Format, RunConfig};

pub const MANIFEST: &str = "manifest.json";
pub const FIT_CSV: &str = "fit.csv";

/// Record of one CLI invocation.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub master_seed: Option<u64>,
    pub config: Option<ExperimentConfig>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

struct Run {
    command: &'static str,
    out: PathBuf,
    outputs: Vec<PathBuf>,
    inputs: Vec<PathBuf>,
    config_path: Option<PathBuf>,
    config: Option<ExperimentConfig>,
    start: Instant,
}

impl Run {
    fn new(command: &'static str, out: &Path) -> Result<Run> {
        fs::create_dir_all(out)?;
        Ok(Run {
            command,
            out: out.to_path_buf(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            config_path: None,
            config: None,
            start: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn add(&mut self, p: PathBuf) {
        self.outputs.push(p);
    }

    fn finish(self, args: &[String]) -> Result<()> {
        let rel = |p: &PathBuf| p.strip_prefix(&self.out).unwrap_or(p).display().to_string();
        let mut outputs: Vec<String> = self.outputs.iter().map(rel).collect();
        outputs.sort();
        let manifest = RunManifest {
            command: self.command.to_string(),
            args: args.to_vec(),
            config_path: self.config_path.map(|p| p.display().to_string()),
            inputs: self
                .inputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            outputs,
            master_seed: self.config.as_ref().map(|c| c.master_seed),
            config: self.config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        text.push('\n');
        fs::write(self.out.join(MANIFEST), text)?;
        Ok(())
    }
}

pub fn run(cli: &Cli, args: &[String]) -> Result<()> {
    match &cli.command {
        Command::Simulate { run, common } => simulate(run, common, args),
        Command::Analyze {
            ensemble,
            common,
            g2,
            phases,
            mean,
            tau_max,
            bins,
        } => {
            let all = !(*g2 || *phases || *mean);
            let what = Selection {
                g2: all || *g2,
                phases: all || *phases,
                mean: all || *mean,
            };
            analyze_cmd(ensemble, common, what, *tau_max, *bins, args)
        }
        Command::Fit {
            g2_csv,
            common,
            free_baseline,
            max_iterations,
        } => fit_cmd(g2_csv, common, *free_baseline, *max_iterations, args),
        Command::Sweep {
            run,
            common,
            power,
            temperature,
            traces,
        } => sweep_cmd(
            run,
            common,
            power.as_deref(),
            temperature.as_deref(),
            *traces,
            args,
        ),
        Command::Report { run, common } => report(run, common, args),
    }
}

pub fn resolve_config(rc: &RunConfig) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let mut cfg = match &rc.config {
        Some(p) => io::load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = rc.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = rc.pulses {
        cfg.n_pulses = n;
    }
    cfg.validate()?;
    Ok((cfg, rc.config.clone()))
}

/// Parses `start:stop:count` into `count` evenly spaced values.
pub fn parse_grid(spec: &str, name: &'static str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("--{name} expects start:stop:count, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(start.is_finite() && stop.is_finite()) {
        return Err(bad());
    }
    if count < 2 {
        return Err(Error::Config(format!(
            "--{name} grid needs at least 2 points, got {count}"
        )));
    }
    if !(stop > start) {
        return Err(Error::Config(format!("--{name} grid must be ascending")));
    }
    Ok((0..count)
        .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
        .collect())
}

fn simulate(rc: &RunConfig, common: &Common, args: &[String]) -> Result<()> {
    let (cfg, path) = resolve_config(rc)?;
    let mut r = Run::new("simulate", &common.out)?;
    r.config_path = path;
    r.config = Some(cfg.clone());
    let ens = simulate_ensemble_with(&cfg, Execution::Parallel)?;
    for p in io::write_ensemble(&r.out, &ens)? {
        r.add(p);
    }
    if common.format.svg() {
        let p = traces_plot(&ens.traces).write(&r.path("traces.svg"))?;
        r.add(p);
    }
    r.finish(args)
}

#[derive(Clone, Copy, Debug)]
struct Selection {
    g2: bool,
    phases: bool,
    mean: bool,
}

/// Scalar results of an analysis run, written to `analysis.json`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct AnalysisSummary {
    pub n_pulses: usize,
    pub t_p_us: f64,
    pub residual_oscillation: Option<f64>,
    /// Residual oscillation over the single-trace modulation `2 sqrt(i1 i2)`.
    pub residual_relative: Option<f64>,
    pub g2_points: Option<usize>,
    pub beat_period_us: Option<f64>,
    pub phases_extracted: Option<usize>,
    pub phase_failures: Option<usize>,
    pub chi_square: Option<f64>,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    pub uniform_at_1_percent: Option<bool>,
}

struct Outputs<'a> {
    run: &'a mut Run,
    format: Format,
}

impl Outputs<'_> {
    fn csv(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<PathBuf>) -> Result<()> {
        if self.format.csv() {
            let p = f(&self.run.path(name))?;
            self.run.add(p);
        }
        Ok(())
    }

    fn svg(&mut self, name: &str, plot: impl FnOnce() -> Plot) -> Result<()> {
        if self.format.svg() {
            let p = plot().write(&self.run.path(name))?;
            self.run.add(p);
        }
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.run.path(name);
        fs::write(&p, text)?;
        self.run.add(p);
        Ok(())
    }
}

fn analyze_cmd(
    dir: &Path,
    common: &Common,
    what: Selection,
    tau_max: Option<f64>,
    bins: usize,
    args: &[String],
) -> Result<()> {
    let ens = io::read_ensemble(dir)?;
    let mut r = Run::new("analyze", &common.out)?;
    r.inputs = vec![dir.join(io::ENSEMBLE_CSV), dir.join(io::ENSEMBLE_META)];
    r.config = Some(ens.config.clone());
    let fit_overlay = [common.out.join(FIT_CSV), dir.join(FIT_CSV)]
        .into_iter()
        .find(|p| p.exists())
        .and_then(|p| match io::read_fit_csv(&p) {
            Ok(f) => Some(f),
            Err(e) => {
                eprintln!("warning: ignoring fit overlay: {e}");
                None
            }
        });
    let mut out = Outputs {
        run: &mut r,
        format: common.format,
    };
    let summary = analyze_ensemble(&ens, &mut out, what, tau_max, bins, fit_overlay.as_ref())?;
    write_json(&mut out, "analysis.json", &summary)?;
    r.finish(args)
}

fn write_json<T: Serialize>(out: &mut Outputs, name: &str, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    out.text(name, &text)
}

fn g2_taus(ens: &Ensemble, mean: &MeanTrace, t_p: f64, tau_max: Option<f64>) -> Result<Vec<f64>> {
    let grid = mean.grid();
    match tau_max {
        Some(m) => {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::invalid("tau_max", format!("must be > 0, got {m}")));
            }
            let n = (m / grid.dt + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| k as f64 * grid.dt).collect())
        }
        None => Ok(analyze::default_taus(
            &grid,
            t_p,
            ens.config.effective_gamma()?,
        )),
    }
}

fn analyze_ensemble(
    ens: &Ensemble,
    out: &mut Outputs,
    what: Selection,
    tau_max: Option<f64>,
    bins: usize,
    fit_overlay: Option<&G2Fit>,
) -> Result<AnalysisSummary> {
    let mean = ensemble_mean(ens)?;
    let t_p = find_peak(&mean)?;
    let mut s = AnalysisSummary {
        n_pulses: ens.traces.len(),
        t_p_us: t_p,
        ..Default::default()
    };

    if what.mean {
        let beat = ens.config.pair.observable_beat();
        if beat > 0.0 {
            let env = ens.config.envelope_samples()?;
            let amp = residual_oscillation(&mean, &env, beat)?;
            let modulation = 2.0 * (ens.config.pair.i1 * ens.config.pair.i2).sqrt();
            s.residual_oscillation = Some(amp);
            s.residual_relative = (modulation > 0.0).then(|| amp / modulation);
        }
        out.csv("mean.csv", |p| io::write_mean_csv(p, &mean))?;
        out.svg("mean.svg", || mean_plot(&mean, ens.traces.first()))?;
    }

    if what.g2 {
        let taus = g2_taus(ens, &mean, t_p, tau_max)?;
        let est = estimate_g2(ens, t_p, &taus)?;
        s.g2_points = Some(est.taus.len());
        out.csv("g2.csv", |p| io::write_g2_csv(p, &est))?;
        out.svg("g2.svg", || g2_plot(&est.taus, &est.g2, fit_overlay))?;
    }

    if what.phases {
        let ext = extract_phases(ens, PeriodSource::default())?;
        s.phases_extracted = Some(ext.samples.len());
        s.phase_failures = Some(ext.failures.len());
        s.beat_period_us = ext.samples.first().map(|p| p.period);
        out.csv("phases.csv", |p| io::write_phases_csv(p, &ext.samples))?;
        if !ext.samples.is_empty() {
            let h = phase_histogram(&ext.samples, bins)?;
            s.chi_square = Some(h.chi_square);
            s.dof = Some(h.dof);
            s.p_value = Some(h.p_value());
            s.uniform_at_1_percent = Some(!h.rejects_uniform(0.01));
            out.csv("phase_hist.csv", |p| io::write_histogram_csv(p, &h))?;
            out.svg("phase_hist.svg", || histogram_plot(&h))?;
        }
        out.svg("phases.svg", || phases_plot(&ext.samples))?;
    }
    Ok(s)
}

fn fit_cmd(
    path: &Path,
    common: &Common,
    free_baseline: bool,
    max_iterations: usize,
    args: &[String],
) -> Result<()> {
    let (taus, g2) = io::read_g2_csv(path)?;
    let mut r = Run::new("fit", &common.out)?;
    r.inputs = vec![path.to_path_buf()];
    let f = fit_table(&taus, &g2, free_baseline, max_iterations)?;
    let mut out = Outputs {
        run: &mut r,
        format: common.format,
    };
    // the full input path lives in the manifest; the report stays location-independent
    let source = path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    write_fit(&mut out, &f, &source, &taus, &g2, free_baseline)?;
    r.finish(args)?;
    if !f.converged {
        eprintln!(
            "fit did not converge after {} iterations; last estimate V = {}, gamma = {}, delta_nu = {}, rss = {}",
            f.iterations, f.params.v, f.params.gamma, f.params.delta_nu, f.rss
        );
        return Err(Error::NotConverged {
            iterations: f.iterations,
        });
    }
    Ok(())
}

fn fit_table(
    taus: &[f64],
    g2: &[f64],
    free_baseline: bool,
    max_iterations: usize,
) -> Result<G2Fit> {
    let baseline = if free_baseline && !g2.is_empty() {
        g2.iter().sum::<f64>() / g2.len() as f64
    } else {
        1.0
    };
    let guess = guess_curve(taus, g2, baseline);
    let opts = FitOptions {
        free_baseline,
        max_iterations,
        ..Default::default()
    };
    fit_curve(taus, g2, guess, &opts)
}

fn write_fit(
    out: &mut Outputs,
    f: &G2Fit,
    source: &str,
    taus: &[f64],
    g2: &[f64],
    free_baseline: bool,
) -> Result<()> {
    out.text(
        "fit.txt",
        &io::fit_report_text(f, source, taus.len(), free_baseline),
    )?;
    out.csv(FIT_CSV, |p| io::write_fit_csv(p, f))?;
    out.svg("g2_fit.svg", || g2_plot(taus, g2, Some(f)))
}

fn sweep_cmd(
    rc: &RunConfig,
    common: &Common,
    power: Option<&str>,
    temperature: Option<&str>,
    traces: usize,
    args: &[String],
) -> Result<()> {
    let (cfg, path) = resolve_config(rc)?;
    let grid = match (power, temperature) {
        (Some(spec), None) => parse_grid(spec, "power")?,
        (None, Some(spec)) => parse_grid(spec, "temperature")?,
        _ => {
            return Err(Error::Config(
                "give exactly one of --power or --temperature".into(),
            ))
        }
    };
    if traces == 0 {
        return Err(Error::invalid("traces", "must be >= 1"));
    }
    let mut r = Run::new("sweep", &common.out)?;
    r.config_path = path;
    r.config = Some(cfg.clone());
    let mut out = Outputs {
        run: &mut r,
        format: common.format,
    };
    if power.is_some() {
        let res = sweep_power(
            &cfg,
            &grid,
            &PowerSweepOptions {
                traces_per_point: traces,
            },
        )?;
        write_power_sweep(&mut out, &res, cfg.pair.kappa1)?;
        println!(
            "slope {} MHz/mW (kappa1 = {}), intercept {} MHz, r2 {}",
            fmt_f64(res.fit.slope),
            fmt_f64(cfg.pair.kappa1),
            fmt_f64(res.fit.intercept),
            fmt_f64(res.fit.r2)
        );
    } else {
        let (res, law) = run_temperature_sweep(&cfg, &grid)?;
        write_temperature_sweep(&mut out, &res, &law)?;
        for p in &res.points {
            match &p.fit {
                Some(f) => println!(
                    "{} K: gamma {} 1/us",
                    fmt_f64(p.temperature),
                    fmt_f64(f.params.gamma)
                ),
                None => println!("{} K: failed", fmt_f64(p.temperature)),
            }
        }
    }
    r.finish(args)
}

fn run_temperature_sweep(
    cfg: &ExperimentConfig,
    grid: &[f64],
) -> Result<(TempSweepResult, SqrtTemperatureLaw)> {
    let law = SqrtTemperatureLaw {
        gamma_ref: cfg.gamma,
        t_ref: cfg.temperature.map_or(DEFAULT_REFERENCE_K, |t| t.reference),
    };
    let base = ExperimentConfig {
        temperature: None,
        ..cfg.clone()
    };
    let res = sweep_temperature(&base, grid, &law)?;
    if res.points.iter().all(|p| p.fit.is_none()) {
        let first = res
            .points
            .first()
            .and_then(|p| p.error.clone())
            .unwrap_or_default();
        return Err(Error::SweepFailed(format!(
            "every temperature point failed ({first})"
        )));
    }
    Ok((res, law))
}

fn write_power_sweep(out: &mut Outputs, res: &PowerSweepResult, kappa1: f64) -> Result<()> {
    out.csv("power_sweep.csv", |p| {
        write_table(
            p,
            &[
                "power_mw",
                "configured_beat_mhz",
                "measured_beat_mhz",
                "error",
            ],
            res.points.iter().map(|pt| {
                vec![
                    fmt_f64(pt.power),
                    fmt_f64(pt.configured_beat),
                    pt.measured_beat.map(fmt_f64).unwrap_or_default(),
                    pt.error.clone().unwrap_or_default(),
                ]
            }),
        )
    })?;
    out.csv("power_fit.csv", |p| {
        write_table(
            p,
            &[
                "slope_mhz_per_mw",
                "intercept_mhz",
                "r2",
                "kappa1_configured",
            ],
            [vec![
                fmt_f64(res.fit.slope),
                fmt_f64(res.fit.intercept),
                fmt_f64(res.fit.r2),
                fmt_f64(kappa1),
            ]],
        )
    })?;
    out.svg("power_sweep.svg", || {
        let (xs, ys): (Vec<f64>, Vec<f64>) = res
            .points
            .iter()
            .filter_map(|p| p.measured_beat.map(|b| (p.power, b)))
            .unzip();
        let lo = res.points.first().map_or(0.0, |p| p.power);
        let hi = res.points.last().map_or(1.0, |p| p.power);
        Plot::new(
            "Beat frequency against write power",
            "write power P_W1 [mW]",
            "beat frequency [MHz]",
        )
        .with(Series::points("measured", xs, ys, BLUE))
        .with(Series::line(
            &format!("fit, slope {:.4} MHz/mW", res.fit.slope),
            vec![lo, hi],
            vec![res.fit.predict(lo), res.fit.predict(hi)],
            RED,
        ))
    })
}

fn write_temperature_sweep(
    out: &mut Outputs,
    res: &TempSweepResult,
    law: &SqrtTemperatureLaw,
) -> Result<()> {
    out.csv("temperature_sweep.csv", |p| {
        write_table(
            p,
            &[
                "temperature_k",
                "injected_gamma_per_us",
                "fitted_gamma_per_us",
                "stderr_per_us",
                "v",
                "delta_nu_mhz",
                "error",
            ],
            res.points.iter().map(|pt| {
                let f = pt.fit.as_ref();
                vec![
                    fmt_f64(pt.temperature),
                    fmt_f64(pt.injected_gamma),
                    f.map(|f| fmt_f64(f.params.gamma)).unwrap_or_default(),
                    f.and_then(|f| f.std_errors.gamma)
                        .map(fmt_f64)
                        .unwrap_or_default(),
                    f.map(|f| fmt_f64(f.params.v)).unwrap_or_default(),
                    f.map(|f| fmt_f64(f.params.delta_nu)).unwrap_or_default(),
                    pt.error.clone().unwrap_or_default(),
                ]
            }),
        )
    })?;
    out.svg("temperature_sweep.svg", || {
        let (xs, ys): (Vec<f64>, Vec<f64>) = res
            .points
            .iter()
            .filter_map(|p| p.fit.as_ref().map(|f| (p.temperature, f.params.gamma)))
            .unzip();
        let lo = res.points.first().map_or(0.0, |p| p.temperature);
        let hi = res.points.last().map_or(1.0, |p| p.temperature);
        let gx: Vec<f64> = (0..=50).map(|k| lo + (hi - lo) * k as f64 / 50.0).collect();
        let gy: Vec<f64> = gx
            .iter()
            .map(|t| law.gamma(*t).unwrap_or(f64::NAN))
            .collect();
        Plot::new(
            "Dephasing rate against temperature",
            "temperature [K]",
            "gamma [1/us]",
        )
        .with(Series::points("fitted", xs, ys, BLUE))
        .with(Series::line("sqrt(T) guidance", gx, gy, GREY))
    })
}

fn report(rc: &RunConfig, common: &Common, args: &[String]) -> Result<()> {
    let (cfg, path) = resolve_config(rc)?;
    let mut r = Run::new("report", &common.out)?;
    r.config_path = path;
    r.config = Some(cfg.clone());
    let mut out = Outputs {
        run: &mut r,
        format: common.format,
    };
    let mut text = String::from("beatlab reproduction report\n\n");
    text.push_str(&format!(
        "pulses: {}  seed: {}  beat: {} MHz  gamma: {} 1/us  amplitudes: {:?}\n\n",
        cfg.n_pulses,
        cfg.master_seed,
        fmt_f64(cfg.pair.observable_beat()),
        fmt_f64(cfg.effective_gamma()?),
        cfg.amplitude_mode
    ));

    let ens = simulate_ensemble_with(&cfg, Execution::Parallel)?;
    out.svg("traces.svg", || traces_plot(&ens.traces))?;
    let all = Selection {
        g2: true,
        phases: true,
        mean: true,
    };
    let summary = analyze_ensemble(&ens, &mut out, all, None, 20, None)?;
    write_json(&mut out, "analysis.json", &summary)?;
    text.push_str("single traces and ensemble mean\n");
    if let Some(p) = summary.beat_period_us {
        text.push_str(&format!("  beat period: {} us\n", fmt_f64(p)));
    }
    text.push_str(&format!(
        "  mean-trace peak t_p: {} us\n",
        fmt_f64(summary.t_p_us)
    ));
    if let Some(v) = summary.residual_relative {
        text.push_str(&format!(
            "  residual oscillation / single-trace modulation: {}\n",
            fmt_f64(v)
        ));
    }
    text.push_str("\nphases\n");
    if let (Some(n), Some(c), Some(p)) = (
        summary.phases_extracted,
        summary.chi_square,
        summary.p_value,
    ) {
        text.push_str(&format!(
            "  extracted: {n}  failures: {}  chi-square: {}  p: {}\n",
            summary.phase_failures.unwrap_or(0),
            fmt_f64(c),
            fmt_f64(p)
        ));
    }

    let mean = ensemble_mean(&ens)?;
    let t_p = find_peak(&mean)?;
    let est = estimate_g2(&ens, t_p, &g2_taus(&ens, &mean, t_p, None)?)?;
    let free = cfg.amplitude_mode == AmplitudeMode::Thermal;
    let f = fit_table(
        &est.taus,
        &est.g2,
        free,
        FitOptions::default().max_iterations,
    )?;
    write_fit(&mut out, &f, "g2.csv", &est.taus, &est.g2, free)?;
    out.svg("g2.svg", || g2_plot(&est.taus, &est.g2, Some(&f)))?;
    text.push_str(&format!(
        "\ng2 fit\n  V: {}  gamma: {} 1/us  delta_nu: {} MHz  B: {}  converged: {}\n",
        fmt_f64(f.params.v),
        fmt_f64(f.params.gamma),
        fmt_f64(f.params.delta_nu),
        fmt_f64(f.baseline),
        f.converged
    ));

    let powers = parse_grid("0.2:1.0:8", "power")?;
    let pres = sweep_power(&cfg, &powers, &PowerSweepOptions::default())?;
    write_power_sweep(&mut out, &pres, cfg.pair.kappa1)?;
    text.push_str(&format!(
        "\npower sweep (P_W2 = {} mW)\n  slope: {} MHz/mW  intercept: {} MHz  r2: {}\n",
        fmt_f64(cfg.pair.p_w2),
        fmt_f64(pres.fit.slope),
        fmt_f64(pres.fit.intercept),
        fmt_f64(pres.fit.r2)
    ));

    let temps = parse_grid("330:370:5", "temperature")?;
    let (tres, law) = run_temperature_sweep(&cfg, &temps)?;
    write_temperature_sweep(&mut out, &tres, &law)?;
    text.push_str("\ntemperature sweep\n");
    for p in &tres.points {
        let g = p
            .fit
            .as_ref()
            .map_or("failed".to_string(), |f| fmt_f64(f.params.gamma));
        text.push_str(&format!(
            "  {} K: injected {} fitted {}\n",
            fmt_f64(p.temperature),
            fmt_f64(p.injected_gamma),
            g
        ));
    }
    out.text("report.txt", &text)?;
    r.finish(args)
}

fn traces_plot(traces: &[PulseTrace]) -> Plot {
    let colors = [BLUE, RED, GREEN];
    let mut plot = Plot::new("Single-pulse beat traces", "t [us]", "intensity");
    for (tr, c) in traces.iter().take(3).zip(colors) {
        let g = tr.grid();
        let xs = (0..g.len).map(|k| g.time(k)).collect();
        plot = plot.with(Series::line(
            &format!("pulse {}", tr.index),
            xs,
            tr.samples.clone(),
            c,
        ));
    }
    plot
}

fn mean_plot(mean: &MeanTrace, single: Option<&PulseTrace>) -> Plot {
    let g = mean.grid();
    let xs: Vec<f64> = (0..g.len).map(|k| g.time(k)).collect();
    let mut plot = Plot::new(
        &format!("Mean over {} pulses", mean.n_pulses),
        "t [us]",
        "intensity",
    );
    if let Some(tr) = single {
        plot = plot.with(Series::line(
            "single pulse",
            xs.clone(),
            tr.samples.clone(),
            GREY,
        ));
    }
    plot.with(Series::line(
        "ensemble mean",
        xs,
        mean.samples.clone(),
        BLUE,
    ))
}

fn g2_plot(taus: &[f64], g2: &[f64], f: Option<&G2Fit>) -> Plot {
    let mut plot = Plot::new(
        "Intensity correlation at the mean-trace peak",
        "tau [us]",
        "g2(tau)",
    )
    .with(Series::line("data", taus.to_vec(), g2.to_vec(), BLUE));
    if let (Some(f), Some(&last)) = (f, taus.last()) {
        let first = taus[0];
        let xs: Vec<f64> = (0..=400)
            .map(|k| first + (last - first) * k as f64 / 400.0)
            .collect();
        let ys = xs
            .iter()
            .map(|t| scaled_model(*t, &f.params, f.baseline))
            .collect();
        plot = plot.with(Series::line(
            &format!(
                "fit V={:.3} gamma={:.3} dnu={:.3}",
                f.params.v, f.params.gamma, f.params.delta_nu
            ),
            xs,
            ys,
            RED,
        ));
    }
    plot
}

fn phases_plot(samples: &[PhaseSample]) -> Plot {
    Plot::new(
        &format!("Extracted phases of {} pulses", samples.len()),
        "pulse index",
        "phase [rad]",
    )
    .with(Series::points(
        "",
        samples.iter().map(|s| s.index as f64).collect(),
        samples.iter().map(|s| s.phase).collect(),
        BLUE,
    ))
    .y_range(0.0, std::f64::consts::TAU)
}

fn histogram_plot(h: &HistogramResult) -> Plot {
    let width = h.edges[1] - h.edges[0];
    let centers: Vec<f64> = h.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let expected = h.total() as f64 / h.counts.len() as f64;
    Plot::new(
        &format!(
            "Phase histogram, chi-square {:.2}, p = {:.3}",
            h.chi_square,
            h.p_value()
        ),
        "phase [rad]",
        "count",
    )
    .with(Series::bars(
        "",
        centers,
        h.counts.iter().map(|c| *c as f64).collect(),
        width,
        BLUE,
    ))
    .with(Series::line(
        "uniform expectation",
        vec![h.edges[0], *h.edges.last().unwrap()],
        vec![expected, expected],
        RED,
    ))
}

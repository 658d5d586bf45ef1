//! File formats: the flat TOML run config, the ensemble CSV with its JSON
//! sidecar, and the result tables. Floats are written in the shortest
//! decimal form that parses back to the same value.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use beatlab::analyze::{G2Estimate, HistogramResult, MeanTrace, PhaseSample};
use beatlab::fit::{G2Fit, G2StdErrors};
use beatlab::model::{Envelope, FieldPair, G2Params};
use beatlab::simulate::{
    AmplitudeMode, Ensemble, ExperimentConfig, PulseTrace, TemperatureSetting, Truth,
};
use beatlab::{Error, Result};
use serde::{Deserialize, Serialize};

pub const ENSEMBLE_CSV: &str = "ensemble.csv";
pub const ENSEMBLE_META: &str = "ensemble.meta.json";
pub const DEFAULT_REFERENCE_K: f64 = 350.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Seed {
    Int(u64),
    Text(String),
}

/// On-disk run config: one flat table, every key optional, unknown keys
/// rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_w1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_w2: Option<f64>,
    /// `parametric` or `tabulated`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_rise_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_decay_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope_dt_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope_samples: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_mode: Option<AmplitudeMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_rms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_pulses: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    master_seed: Option<Seed>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_temperature_k: Option<f64>,
}

impl ConfigFile {
    pub fn from_config(c: &ExperimentConfig) -> Self {
        let mut f = ConfigFile {
            duration_us: Some(c.duration),
            dt_us: Some(c.dt),
            i1: Some(c.pair.i1),
            i2: Some(c.pair.i2),
            kappa1: Some(c.pair.kappa1),
            kappa2: Some(c.pair.kappa2),
            p_w1: Some(c.pair.p_w1),
            p_w2: Some(c.pair.p_w2),
            amplitude_mode: Some(c.amplitude_mode),
            gamma: Some(c.gamma),
            noise_rms: Some(c.noise_rms),
            n_pulses: Some(c.n_pulses),
            master_seed: Some(if c.master_seed <= i64::MAX as u64 {
                Seed::Int(c.master_seed)
            } else {
                Seed::Text(c.master_seed.to_string())
            }),
            temperature_k: c.temperature.map(|t| t.temperature),
            reference_temperature_k: c.temperature.map(|t| t.reference),
            ..Default::default()
        };
        match &c.envelope {
            Envelope::Parametric { t_rise, t_decay } => {
                f.envelope = Some("parametric".into());
                f.t_rise_us = Some(*t_rise);
                f.t_decay_us = Some(*t_decay);
            }
            Envelope::Tabulated { dt, samples } => {
                f.envelope = Some("tabulated".into());
                f.envelope_dt_us = Some(*dt);
                f.envelope_samples = Some(samples.clone());
            }
        }
        f
    }

    /// Fills unset keys from the defaults and validates the result.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let d = ExperimentConfig::default();
        let kind = self.envelope.as_deref().unwrap_or("parametric");
        let envelope = match kind {
            "parametric" => {
                if self.envelope_dt_us.is_some() || self.envelope_samples.is_some() {
                    return Err(Error::Config(
                        "`envelope_dt_us` and `envelope_samples` require envelope = \"tabulated\""
                            .into(),
                    ));
                }
                let (r0, d0) = match d.envelope {
                    Envelope::Parametric { t_rise, t_decay } => (t_rise, t_decay),
                    Envelope::Tabulated { .. } => unreachable!(),
                };
                Envelope::parametric(self.t_rise_us.unwrap_or(r0), self.t_decay_us.unwrap_or(d0))?
            }
            "tabulated" => {
                if self.t_rise_us.is_some() || self.t_decay_us.is_some() {
                    return Err(Error::Config(
                        "`t_rise_us` and `t_decay_us` require envelope = \"parametric\"".into(),
                    ));
                }
                let dt = self.envelope_dt_us.ok_or_else(|| {
                    Error::Config("tabulated envelope needs `envelope_dt_us`".into())
                })?;
                let samples = self.envelope_samples.clone().ok_or_else(|| {
                    Error::Config("tabulated envelope needs `envelope_samples`".into())
                })?;
                Envelope::tabulated(dt, samples)?
            }
            other => {
                return Err(Error::Config(format!(
                    "`envelope` must be \"parametric\" or \"tabulated\", got {other:?}"
                )))
            }
        };
        let master_seed = match &self.master_seed {
            None => d.master_seed,
            Some(Seed::Int(v)) => *v,
            Some(Seed::Text(s)) => s.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "`master_seed` is not an unsigned 64-bit integer: {s:?}"
                ))
            })?,
        };
        let temperature = match (self.temperature_k, self.reference_temperature_k) {
            (None, None) => None,
            (Some(t), r) => Some(TemperatureSetting {
                temperature: t,
                reference: r.unwrap_or(DEFAULT_REFERENCE_K),
            }),
            (None, Some(_)) => {
                return Err(Error::Config(
                    "`reference_temperature_k` requires `temperature_k`".into(),
                ))
            }
        };
        let c = ExperimentConfig {
            duration: self.duration_us.unwrap_or(d.duration),
            dt: self.dt_us.unwrap_or(d.dt),
            pair: FieldPair {
                i1: self.i1.unwrap_or(d.pair.i1),
                i2: self.i2.unwrap_or(d.pair.i2),
                kappa1: self.kappa1.unwrap_or(d.pair.kappa1),
                kappa2: self.kappa2.unwrap_or(d.pair.kappa2),
                p_w1: self.p_w1.unwrap_or(d.pair.p_w1),
                p_w2: self.p_w2.unwrap_or(d.pair.p_w2),
            },
            envelope,
            amplitude_mode: self.amplitude_mode.unwrap_or(d.amplitude_mode),
            gamma: self.gamma.unwrap_or(d.gamma),
            noise_rms: self.noise_rms.unwrap_or(d.noise_rms),
            n_pulses: self.n_pulses.unwrap_or(d.n_pulses),
            master_seed,
            temperature,
        };
        c.validate()?;
        Ok(c)
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.resolve()
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn config_to_toml(c: &ExperimentConfig) -> String {
    toml::to_string(&ConfigFile::from_config(c)).expect("flat config serializes")
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn parse_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes a CSV table, returning the path for bookkeeping.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// A parsed CSV table with named columns.
pub struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        if !path.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found", path.display()),
            )));
        }
        let mut r = csv::Reader::from_path(path).map_err(|e| parse_err(path, e.to_string()))?;
        let header = r
            .headers()
            .map_err(|e| parse_err(path, e.to_string()))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| parse_err(path, e.to_string()))?);
        }
        Ok(Table {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(&self.path, format!("missing column `{name}`")))
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s = r.get(j).unwrap_or("").trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_err(
                            &self.path,
                            format!("row {}: `{name}` = {s:?} is not a finite number", i + 2),
                        )
                    })
            })
            .collect()
    }

    pub fn usize_column(&self, name: &str) -> Result<Vec<usize>> {
        let j = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s = r.get(j).unwrap_or("").trim();
                s.parse::<usize>().map_err(|_| {
                    parse_err(
                        &self.path,
                        format!("row {}: `{name}` = {s:?} is not an index", i + 2),
                    )
                })
            })
            .collect()
    }

    pub fn str_column(&self, name: &str) -> Result<Vec<String>> {
        let j = self.index(name)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.get(j).unwrap_or("").trim().to_string())
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub index: usize,
    pub initial_phase: f64,
    pub i1: f64,
    pub i2: f64,
}

/// Sidecar of an ensemble CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub config: ExperimentConfig,
    pub t0: f64,
    pub dt: f64,
    pub n_samples: usize,
    pub n_pulses: usize,
    pub truth: Vec<TruthRow>,
}

/// Writes `ensemble.csv` and `ensemble.meta.json` into `dir`.
pub fn write_ensemble(dir: &Path, ens: &Ensemble) -> Result<Vec<PathBuf>> {
    let grid = ens.grid()?;
    let csv_path = dir.join(ENSEMBLE_CSV);
    let mut w = BufWriter::new(File::create(&csv_path)?);
    writeln!(w, "index,t_us,intensity")?;
    let times: Vec<String> = (0..grid.len).map(|k| fmt_f64(grid.time(k))).collect();
    for tr in &ens.traces {
        for (t, v) in times.iter().zip(&tr.samples) {
            writeln!(w, "{},{},{}", tr.index, t, v)?;
        }
    }
    w.flush()?;

    let meta = EnsembleMeta {
        config: ens.config.clone(),
        t0: grid.t0,
        dt: grid.dt,
        n_samples: grid.len,
        n_pulses: ens.traces.len(),
        truth: ens
            .traces
            .iter()
            .filter_map(|t| {
                t.truth.map(|tr| TruthRow {
                    index: t.index,
                    initial_phase: tr.initial_phase,
                    i1: tr.i1,
                    i2: tr.i2,
                })
            })
            .collect(),
    };
    let meta_path = dir.join(ENSEMBLE_META);
    let mut text =
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    fs::write(&meta_path, text)?;
    Ok(vec![csv_path, meta_path])
}

pub fn read_ensemble_meta(dir: &Path) -> Result<EnsembleMeta> {
    let path = dir.join(ENSEMBLE_META);
    let text = fs::read_to_string(&path)?;
    let meta: EnsembleMeta =
        serde_json::from_str(&text).map_err(|e| parse_err(&path, e.to_string()))?;
    meta.config.validate()?;
    Ok(meta)
}

/// Reads an ensemble directory written by [`write_ensemble`].
pub fn read_ensemble(dir: &Path) -> Result<Ensemble> {
    let meta = read_ensemble_meta(dir)?;
    let path = dir.join(ENSEMBLE_CSV);
    let table = Table::read(&path)?;
    let idx = table.usize_column("index")?;
    let ts = table.f64_column("t_us")?;
    let vals = table.f64_column("intensity")?;
    let n = meta.n_samples;
    if n == 0 || table.len() != n * meta.n_pulses {
        return Err(parse_err(
            &path,
            format!(
                "expected {} rows ({} pulses x {n} samples), found {}",
                n * meta.n_pulses,
                meta.n_pulses,
                table.len()
            ),
        ));
    }
    let truth: std::collections::HashMap<usize, Truth> = meta
        .truth
        .iter()
        .map(|r| {
            (
                r.index,
                Truth {
                    initial_phase: r.initial_phase,
                    i1: r.i1,
                    i2: r.i2,
                },
            )
        })
        .collect();
    let mut traces = Vec::with_capacity(meta.n_pulses);
    for p in 0..meta.n_pulses {
        let rows = p * n..(p + 1) * n;
        let index = idx[rows.start];
        for (k, r) in rows.clone().enumerate() {
            let expected = meta.t0 + k as f64 * meta.dt;
            if idx[r] != index || (ts[r] - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                return Err(parse_err(
                    &path,
                    format!("row {}: sample out of order", r + 2),
                ));
            }
        }
        traces.push(PulseTrace {
            index,
            t0: meta.t0,
            dt: meta.dt,
            samples: vals[rows].to_vec(),
            truth: truth.get(&index).copied(),
        });
    }
    Ok(Ensemble {
        config: meta.config,
        traces,
    })
}

pub fn write_g2_csv(path: &Path, est: &G2Estimate) -> Result<PathBuf> {
    write_table(
        path,
        &["tau_us", "g2"],
        est.taus
            .iter()
            .zip(&est.g2)
            .map(|(t, g)| vec![fmt_f64(*t), fmt_f64(*g)]),
    )
}

/// `(taus, g2)` columns of a correlation table.
pub fn read_g2_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = Table::read(path)?;
    if t.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    Ok((t.f64_column("tau_us")?, t.f64_column("g2")?))
}

pub fn write_mean_csv(path: &Path, mean: &MeanTrace) -> Result<PathBuf> {
    let grid = mean.grid();
    write_table(
        path,
        &["t_us", "intensity"],
        mean.samples
            .iter()
            .enumerate()
            .map(|(k, v)| vec![fmt_f64(grid.time(k)), fmt_f64(*v)]),
    )
}

pub fn read_mean_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = Table::read(path)?;
    Ok((t.f64_column("t_us")?, t.f64_column("intensity")?))
}

pub fn write_phases_csv(path: &Path, phases: &[PhaseSample]) -> Result<PathBuf> {
    write_table(
        path,
        &["index", "delta_t_us", "period_us", "phase_rad"],
        phases.iter().map(|p| {
            vec![
                p.index.to_string(),
                fmt_f64(p.delta_t),
                fmt_f64(p.period),
                fmt_f64(p.phase),
            ]
        }),
    )
}

pub fn read_phases_csv(path: &Path) -> Result<Vec<PhaseSample>> {
    let t = Table::read(path)?;
    let idx = t.usize_column("index")?;
    let dts = t.f64_column("delta_t_us")?;
    let periods = t.f64_column("period_us")?;
    let phases = t.f64_column("phase_rad")?;
    Ok((0..t.len())
        .map(|i| PhaseSample {
            index: idx[i],
            delta_t: dts[i],
            period: periods[i],
            phase: phases[i],
        })
        .collect())
}

pub fn write_histogram_csv(path: &Path, h: &HistogramResult) -> Result<PathBuf> {
    write_table(
        path,
        &["bin_start_rad", "bin_end_rad", "count"],
        h.counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![fmt_f64(h.edges[i]), fmt_f64(h.edges[i + 1]), c.to_string()]),
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_fit_csv(path: &Path, fit: &G2Fit) -> Result<PathBuf> {
    let p = &fit.params;
    let se = &fit.std_errors;
    let rows = vec![
        vec!["V".into(), fmt_f64(p.v), opt(se.v)],
        vec!["gamma_per_us".into(), fmt_f64(p.gamma), opt(se.gamma)],
        vec!["delta_nu_mhz".into(), fmt_f64(p.delta_nu), opt(se.delta_nu)],
        vec!["baseline".into(), fmt_f64(fit.baseline), opt(se.baseline)],
        vec!["rss".into(), fmt_f64(fit.rss), String::new()],
        vec![
            "iterations".into(),
            fit.iterations.to_string(),
            String::new(),
        ],
        vec!["converged".into(), fit.converged.to_string(), String::new()],
        vec![
            "delta_nu_identifiable".into(),
            fit.delta_nu_identifiable.to_string(),
            String::new(),
        ],
    ];
    write_table(path, &["parameter", "estimate", "stderr"], rows)
}

pub fn read_fit_csv(path: &Path) -> Result<G2Fit> {
    let t = Table::read(path)?;
    let names = t.str_column("parameter")?;
    let est = t.str_column("estimate")?;
    let se = t.str_column("stderr")?;
    let find = |name: &str| -> Result<(String, Option<f64>)> {
        let i = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| parse_err(path, format!("missing parameter `{name}`")))?;
        let s = se[i].parse::<f64>().ok();
        Ok((est[i].clone(), s))
    };
    let num = |name: &str| -> Result<(f64, Option<f64>)> {
        let (v, s) = find(name)?;
        let v = v
            .parse::<f64>()
            .map_err(|_| parse_err(path, format!("`{name}` is not a number")))?;
        Ok((v, s))
    };
    let flag = |name: &str| -> Result<bool> {
        find(name)?
            .0
            .parse::<bool>()
            .map_err(|_| parse_err(path, format!("`{name}` is not true/false")))
    };
    let (v, se_v) = num("V")?;
    let (gamma, se_g) = num("gamma_per_us")?;
    let (delta_nu, se_n) = num("delta_nu_mhz")?;
    let (baseline, se_b) = num("baseline")?;
    let iterations = find("iterations")?
        .0
        .parse::<usize>()
        .map_err(|_| parse_err(path, "`iterations` is not an integer"))?;
    Ok(G2Fit {
        params: G2Params { v, gamma, delta_nu },
        baseline,
        std_errors: G2StdErrors {
            v: se_v,
            gamma: se_g,
            delta_nu: se_n,
            baseline: se_b,
        },
        rss: num("rss")?.0,
        iterations,
        converged: flag("converged")?,
        delta_nu_identifiable: flag("delta_nu_identifiable")?,
    })
}

/// Human-readable fit summary.
pub fn fit_report_text(fit: &G2Fit, source: &str, n_points: usize, free_baseline: bool) -> String {
    let mut s = String::new();
    s.push_str("g2 fit report\n");
    s.push_str("model: g2(tau) = B * (1 + V * exp(-gamma * tau) * cos(2 * pi * delta_nu * tau))\n");
    s.push_str(&format!("input: {source}\n"));
    s.push_str(&format!("points: {n_points}\n"));
    s.push_str(&format!(
        "baseline B: {}\n\n",
        if free_baseline {
            "fitted"
        } else {
            "fixed at 1"
        }
    ));
    s.push_str(&format!(
        "{:<16}{:<24}{}\n",
        "parameter", "estimate", "stderr"
    ));
    let se = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "n/a".into());
    let p = &fit.params;
    for (name, v, e) in [
        ("V", p.v, fit.std_errors.v),
        ("gamma [1/us]", p.gamma, fit.std_errors.gamma),
        ("delta_nu [MHz]", p.delta_nu, fit.std_errors.delta_nu),
        ("B", fit.baseline, fit.std_errors.baseline),
    ] {
        s.push_str(&format!("{:<16}{:<24}{}\n", name, fmt_f64(v), se(e)));
    }
    s.push('\n');
    s.push_str(&format!("converged: {}\n", fit.converged));
    s.push_str(&format!("iterations: {}\n", fit.iterations));
    s.push_str(&format!("rss: {}\n", fmt_f64(fit.rss)));
    s.push_str(&format!(
        "delta_nu identifiable: {}\n",
        if fit.delta_nu_identifiable {
            "yes"
        } else {
            "no (visibility indistinguishable from zero)"
        }
    ));
    s
}

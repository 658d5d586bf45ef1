//! Seeded ensembles of single-pulse detector traces.
//!
//! One realization draws, in order: a uniform initial phase difference, the
//! two source intensities, a Wiener phase path and (if configured) additive
//! detector noise. The phase difference of the two fields is simulated
//! directly; the common phase never reaches the detector.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Envelope, FieldPair};
use crate::reduce::{self, Execution};
use crate::rng::{self, Stream};

/// Pulse-to-pulse amplitude statistics of the two sources.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeMode {
    /// Fixed intensities; only the phase fluctuates.
    #[default]
    Coherent,
    /// Independent exponentially distributed intensities per pulse.
    Thermal,
}

/// Cell temperature driving the dephasing rate through the square-root law.
/// When present, the configured `gamma` is the rate at `reference` kelvin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSetting {
    pub temperature: f64,
    pub reference: f64,
}

/// Full recipe for one ensemble run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Pulse window, μs.
    pub duration: f64,
    /// Sample spacing, μs.
    pub dt: f64,
    pub pair: FieldPair,
    pub envelope: Envelope,
    pub amplitude_mode: AmplitudeMode,
    /// Dephasing rate, μs⁻¹.
    pub gamma: f64,
    /// RMS of additive Gaussian detector noise.
    pub noise_rms: f64,
    pub n_pulses: usize,
    pub master_seed: u64,
    pub temperature: Option<TemperatureSetting>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            duration: 20.0,
            dt: 0.01,
            // 2.0 * 0.445 - 0.5 * 0.24 = 0.77 MHz
            pair: FieldPair {
                i1: 1.0,
                i2: 1.0,
                kappa1: 2.0,
                kappa2: 0.5,
                p_w1: 0.445,
                p_w2: 0.24,
            },
            envelope: Envelope::Parametric {
                t_rise: 3.0,
                t_decay: 4.0,
            },
            amplitude_mode: AmplitudeMode::Coherent,
            gamma: 0.63,
            noise_rms: 0.0,
            n_pulses: 2000,
            master_seed: 20_100_401,
            temperature: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples()?;
        self.pair.validate()?;
        self.envelope.validate()?;
        let last = self.dt * (n - 1) as f64;
        match &self.envelope {
            Envelope::Parametric { t_rise, .. } => {
                if *t_rise > last {
                    return Err(Error::invalid(
                        "t_rise_us",
                        format!("envelope peak at {t_rise} us lies outside the {last} us window"),
                    ));
                }
            }
            Envelope::Tabulated { .. } => {
                let end = self.envelope.end();
                if end < last * (1.0 - 1e-12) {
                    return Err(Error::invalid(
                        "envelope_samples",
                        format!("tabulated envelope ends at {end} us, window needs {last} us"),
                    ));
                }
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(
                "gamma",
                format!("must be >= 0, got {}", self.gamma),
            ));
        }
        if !(self.noise_rms.is_finite() && self.noise_rms >= 0.0) {
            return Err(Error::invalid(
                "noise_rms",
                format!("must be >= 0, got {}", self.noise_rms),
            ));
        }
        if self.n_pulses == 0 {
            return Err(Error::invalid("n_pulses", "must be >= 1"));
        }
        if let Some(ts) = &self.temperature {
            for (name, t) in [
                ("temperature_k", ts.temperature),
                ("reference_temperature_k", ts.reference),
            ] {
                if !(t.is_finite() && t > 0.0) {
                    return Err(Error::invalid(name, format!("must be > 0, got {t}")));
                }
            }
        }
        Ok(())
    }

    /// Samples per trace, `duration / dt`, which must be an integer >= 16.
    pub fn n_samples(&self) -> Result<usize> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(
                "duration_us",
                format!("must be > 0, got {}", self.duration),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(
                "dt_us",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        let ratio = self.duration / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::invalid(
                "dt_us",
                format!("duration / dt = {ratio} is not an integer"),
            ));
        }
        if n < 16.0 {
            return Err(Error::invalid(
                "dt_us",
                format!("need >= 16 samples, got {n}"),
            ));
        }
        Ok(n as usize)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid {
            t0: 0.0,
            dt: self.dt,
            len: self.n_samples()?,
        })
    }

    /// Dephasing rate after applying the temperature setting, if any.
    pub fn effective_gamma(&self) -> Result<f64> {
        match &self.temperature {
            None => Ok(self.gamma),
            Some(ts) => {
                crate::fit::gamma_temperature_model(ts.temperature, self.gamma, ts.reference)
            }
        }
    }

    /// `U(t_k)` on the trace grid.
    pub fn envelope_samples(&self) -> Result<Vec<f64>> {
        let grid = self.grid()?;
        (0..grid.len)
            .map(|k| self.envelope.value(grid.time(k)))
            .collect()
    }
}

/// Uniform sampling grid `t0 + k dt`, `k = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Nearest sample index to `t`, if it lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = ((t - self.t0) / self.dt).round();
        if pos >= 0.0 && (pos as usize) < self.len {
            Some(pos as usize)
        } else {
            None
        }
    }
}

/// Ground truth carried by synthesized traces for round-trip tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// Phase difference at `t = 0`, radians in `[0, 2π)`.
    pub initial_phase: f64,
    pub i1: f64,
    pub i2: f64,
}

/// Sampled detector intensity of one realization. `t0 = 0` is the
/// switch-on of the write pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseTrace {
    pub index: usize,
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub truth: Option<Truth>,
}

impl PulseTrace {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            dt: self.dt,
            len: self.samples.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub config: ExperimentConfig,
    pub traces: Vec<PulseTrace>,
}

impl Ensemble {
    pub fn grid(&self) -> Result<TimeGrid> {
        self.traces
            .first()
            .map(PulseTrace::grid)
            .ok_or(Error::EmptyEnsemble)
    }
}

/// Uniform phase on `[0, 2π)`.
pub fn sample_initial_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let phi = rng.random::<f64>() * TAU;
    if phi >= TAU {
        0.0
    } else {
        phi
    }
}

/// Generates the time-dependent phase difference of one pulse.
pub trait PhaseDiffusion: Sync {
    fn sample_path(&self, rng: &mut Stream, initial: f64, grid: &TimeGrid) -> Vec<f64>;
}

/// Brownian phase with increment variance `2 γ dt` per step, so that
/// `<exp(i[φ(t+τ) - φ(t)])> = exp(-γ τ)` exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wiener {
    pub gamma: f64,
}

impl PhaseDiffusion for Wiener {
    fn sample_path(&self, rng: &mut Stream, initial: f64, grid: &TimeGrid) -> Vec<f64> {
        sample_phase_path(rng, self.gamma, initial, grid)
    }
}

/// Wiener phase path starting at `initial`. A zero rate draws nothing.
pub fn sample_phase_path<R: Rng + ?Sized>(
    rng: &mut R,
    gamma: f64,
    initial: f64,
    grid: &TimeGrid,
) -> Vec<f64> {
    let mut path = Vec::with_capacity(grid.len);
    if grid.len == 0 {
        return path;
    }
    path.push(initial);
    if gamma == 0.0 {
        path.resize(grid.len, initial);
        return path;
    }
    let step = (2.0 * gamma * grid.dt).sqrt();
    let mut phase = initial;
    for _ in 1..grid.len {
        let z: f64 = StandardNormal.sample(rng);
        phase += step * z;
        path.push(phase);
    }
    path
}

/// Per-pulse source intensities: the means themselves in coherent mode,
/// independent exponential draws in thermal mode.
pub fn sample_intensities<R: Rng + ?Sized>(
    rng: &mut R,
    mode: AmplitudeMode,
    mean1: f64,
    mean2: f64,
) -> (f64, f64) {
    match mode {
        AmplitudeMode::Coherent => (mean1, mean2),
        AmplitudeMode::Thermal => {
            let a: f64 = Exp1.sample(rng);
            let b: f64 = Exp1.sample(rng);
            (mean1 * a, mean2 * b)
        }
    }
}

/// Validated config with the envelope pre-sampled on the grid.
pub struct TraceSynth<'a, D: PhaseDiffusion = Wiener> {
    config: &'a ExperimentConfig,
    grid: TimeGrid,
    envelope: Vec<f64>,
    beat: f64,
    diffusion: D,
}

impl<'a> TraceSynth<'a, Wiener> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let gamma = config.effective_gamma()?;
        TraceSynth::with_diffusion(config, Wiener { gamma })
    }
}

impl<'a, D: PhaseDiffusion> TraceSynth<'a, D> {
    pub fn with_diffusion(config: &'a ExperimentConfig, diffusion: D) -> Result<Self> {
        config.validate()?;
        Ok(TraceSynth {
            config,
            grid: config.grid()?,
            envelope: config.envelope_samples()?,
            beat: config.pair.observable_beat(),
            diffusion,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn generate(&self, rng: &mut Stream, index: usize) -> PulseTrace {
        let cfg = self.config;
        let initial_phase = sample_initial_phase(rng);
        let (i1, i2) = sample_intensities(rng, cfg.amplitude_mode, cfg.pair.i1, cfg.pair.i2);
        let path = self.diffusion.sample_path(rng, initial_phase, &self.grid);
        let cross = 2.0 * (i1 * i2).sqrt();
        let mut samples: Vec<f64> = (0..self.grid.len)
            .map(|k| {
                let t = self.grid.time(k);
                let u = self.envelope[k];
                (u * (i1 + i2 + cross * (TAU * self.beat * t + path[k]).cos())).max(0.0)
            })
            .collect();
        if cfg.noise_rms > 0.0 {
            for s in samples.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *s = (*s + cfg.noise_rms * z).max(0.0);
            }
        }
        PulseTrace {
            index,
            t0: self.grid.t0,
            dt: self.grid.dt,
            samples,
            truth: Some(Truth {
                initial_phase,
                i1,
                i2,
            }),
        }
    }

    /// Realization `index` on its own stream derived from the master seed.
    pub fn realization(&self, index: usize) -> PulseTrace {
        let mut rng = rng::stream(self.config.master_seed, index as u64);
        self.generate(&mut rng, index)
    }
}

/// One trace drawn from `stream`.
pub fn synthesize_trace(
    config: &ExperimentConfig,
    stream: &mut Stream,
    index: usize,
) -> Result<PulseTrace> {
    Ok(TraceSynth::new(config)?.generate(stream, index))
}

pub fn simulate_ensemble(config: &ExperimentConfig) -> Result<Ensemble> {
    simulate_ensemble_with(config, Execution::Parallel)
}

pub fn simulate_ensemble_with(config: &ExperimentConfig, exec: Execution) -> Result<Ensemble> {
    let synth = TraceSynth::new(config)?;
    let traces = reduce::map_chunks(config.n_pulses, exec, |range| {
        range.map(|k| synth.realization(k)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    Ok(Ensemble {
        config: config.clone(),
        traces,
    })
}

/// Streams every realization of `config` through `fold` without keeping
/// the traces, merging chunk accumulators in a fixed pairwise order.
pub fn fold_traces<A, I, F, M>(
    config: &ExperimentConfig,
    exec: Execution,
    init: I,
    fold: F,
    merge: M,
) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &PulseTrace) + Sync + Send,
    M: Fn(A, A) -> A,
{
    let synth = TraceSynth::new(config)?;
    let parts = reduce::map_chunks(config.n_pulses, exec, |range| {
        let mut acc = init();
        for k in range {
            fold(&mut acc, &synth.realization(k));
        }
        acc
    });
    reduce::pairwise(parts, &merge).ok_or(Error::EmptyEnsemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::beat_intensity;
    use approx::assert_relative_eq;

    fn mean_and_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    fn beat_config(beat: f64, gamma: f64) -> ExperimentConfig {
        ExperimentConfig {
            pair: FieldPair::with_beat(1.0, 1.0, beat).unwrap(),
            gamma,
            n_pulses: 8,
            ..Default::default()
        }
    }

    #[test]
    fn initial_phase_is_deterministic_and_in_range() {
        let a = sample_initial_phase(&mut rng::stream(1, 2));
        let b = sample_initial_phase(&mut rng::stream(1, 2));
        assert_eq!(a, b);

        let mut r = rng::stream(11, 0);
        let phases: Vec<f64> = (0..100_000).map(|_| sample_initial_phase(&mut r)).collect();
        assert!(phases.iter().all(|p| (0.0..TAU).contains(p)));
        let mc = phases.iter().map(|p| p.cos()).sum::<f64>() / phases.len() as f64;
        let ms = phases.iter().map(|p| p.sin()).sum::<f64>() / phases.len() as f64;
        assert!(mc.abs() < 0.01 && ms.abs() < 0.01, "{mc} {ms}");
    }

    #[test]
    fn frozen_path_without_dephasing() {
        let grid = TimeGrid {
            t0: 0.0,
            dt: 0.01,
            len: 100,
        };
        let path = sample_phase_path(&mut rng::stream(3, 0), 0.0, 1.25, &grid);
        assert!(path.iter().all(|&p| p == 1.25));
    }

    #[test]
    fn dephasing_characteristic_function() {
        // lag of 1 us as 10 steps of 0.1 us
        let gamma = 0.63;
        let grid = TimeGrid {
            t0: 0.0,
            dt: 0.1,
            len: 11,
        };
        let mut r = rng::stream(5, 0);
        let n = 1_000_000;
        let (mut c, mut s) = (0.0, 0.0);
        let mut incs = Vec::with_capacity(n);
        for _ in 0..n {
            let path = sample_phase_path(&mut r, gamma, 0.0, &grid);
            let d = path[10] - path[0];
            c += d.cos();
            s += d.sin();
            incs.push(d);
        }
        let re = c / n as f64;
        let im = s / n as f64;
        assert!(((re - (-gamma).exp()).powi(2) + im * im).sqrt() < 0.01);

        // increment variance 2 gamma tau, standard error sqrt(2 var^2 / n)
        let (m, _) = mean_and_se(incs.iter().cloned());
        let var = incs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let expected = 2.0 * gamma;
        let se = expected * (2.0 / n as f64).sqrt();
        assert!((var - expected).abs() < 3.0 * se, "{var} vs {expected}");
    }

    #[test]
    fn intensity_modes() {
        let mut r = rng::stream(9, 0);
        for _ in 0..10 {
            assert_eq!(
                sample_intensities(&mut r, AmplitudeMode::Coherent, 1.0, 2.0),
                (1.0, 2.0)
            );
        }
        let n = 1_000_000;
        let draws: Vec<(f64, f64)> = (0..n)
            .map(|_| sample_intensities(&mut r, AmplitudeMode::Thermal, 1.5, 0.5))
            .collect();
        let m1 = draws.iter().map(|d| d.0).sum::<f64>() / n as f64;
        let m2 = draws.iter().map(|d| d.1).sum::<f64>() / n as f64;
        let sq = draws.iter().map(|d| d.0 * d.0).sum::<f64>() / n as f64;
        assert!((m1 / 1.5 - 1.0).abs() < 0.01);
        assert!((m2 / 0.5 - 1.0).abs() < 0.01);
        assert!((sq / (2.0 * 1.5 * 1.5) - 1.0).abs() < 0.02);
    }

    #[test]
    fn noiseless_trace_matches_closed_form() {
        let cfg = beat_config(0.77, 0.0);
        let trace = synthesize_trace(&cfg, &mut rng::stream(1, 0), 0).unwrap();
        let phi = trace.truth.unwrap().initial_phase;
        for (k, &s) in trace.samples.iter().enumerate() {
            let t = k as f64 * cfg.dt;
            let expected = beat_intensity(t, &cfg.envelope, &cfg.pair, phi).unwrap();
            assert!((s - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_source_has_no_oscillation() {
        let mut cfg = beat_config(0.77, 0.63);
        cfg.pair.i2 = 0.0;
        let trace = synthesize_trace(&cfg, &mut rng::stream(1, 0), 0).unwrap();
        let env = cfg.envelope_samples().unwrap();
        for (s, u) in trace.samples.iter().zip(&env) {
            assert_relative_eq!(*s, u * cfg.pair.i1, epsilon = 1e-15);
        }
    }

    #[test]
    fn adjacent_maxima_spacing_matches_period() {
        let mut cfg = beat_config(0.77, 0.0);
        cfg.envelope = Envelope::flat(20.0).unwrap();
        let trace = synthesize_trace(&cfg, &mut rng::stream(2, 0), 0).unwrap();
        let y = &trace.samples;
        let maxima: Vec<f64> = (1..y.len() - 1)
            .filter(|&k| y[k - 1] < y[k] && y[k] >= y[k + 1])
            .map(|k| {
                let d = 0.5 * (y[k - 1] - y[k + 1]) / (y[k - 1] - 2.0 * y[k] + y[k + 1]);
                (k as f64 + d) * cfg.dt
            })
            .collect();
        assert!(maxima.len() > 10);
        let spacing = (maxima[maxima.len() - 1] - maxima[0]) / (maxima.len() - 1) as f64;
        assert!((spacing - 1.0 / 0.77).abs() < 1e-3, "{spacing}");
        assert!((spacing - 1.299).abs() < 1e-3);
    }

    #[test]
    fn noisy_traces_stay_nonnegative() {
        let mut cfg = beat_config(0.77, 0.63);
        cfg.noise_rms = 0.5;
        let ens = simulate_ensemble(&cfg).unwrap();
        assert!(ens
            .traces
            .iter()
            .flat_map(|t| &t.samples)
            .all(|&s| s >= 0.0));
    }

    #[test]
    fn ensemble_is_deterministic_and_schedule_independent() {
        let mut cfg = beat_config(0.77, 0.63);
        cfg.n_pulses = 150;
        cfg.noise_rms = 0.05;
        cfg.amplitude_mode = AmplitudeMode::Thermal;
        let a = simulate_ensemble_with(&cfg, Execution::Parallel).unwrap();
        let b = simulate_ensemble_with(&cfg, Execution::Parallel).unwrap();
        let c = simulate_ensemble_with(&cfg, Execution::Serial).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.traces.len(), 150);
        assert!(a
            .traces
            .iter()
            .enumerate()
            .all(|(k, t)| t.index == k && t.samples.len() == 2000));
    }

    #[test]
    fn initial_phases_uncorrelated_across_pulses() {
        let mut cfg = beat_config(0.77, 0.0);
        cfg.n_pulses = 5000;
        cfg.duration = 0.16;
        cfg.envelope = Envelope::flat(0.16).unwrap();
        let ens = simulate_ensemble(&cfg).unwrap();
        let phases: Vec<f64> = ens
            .traces
            .iter()
            .map(|t| t.truth.unwrap().initial_phase)
            .collect();
        let x = &phases[..phases.len() - 1];
        let y = &phases[1..];
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let r = cov / (vx * vy).sqrt();
        assert!(r.abs() < 3.0 / 5000f64.sqrt(), "{r}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.n_samples().unwrap(), 2000);
        cfg.dt = 0.03;
        assert!(cfg.validate().is_err());
        cfg.dt = 2.0;
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            envelope: Envelope::parametric(25.0, 4.0).unwrap(),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            n_pulses: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn temperature_scales_gamma() {
        let cfg = ExperimentConfig {
            temperature: Some(TemperatureSetting {
                temperature: 4.0 * 350.0,
                reference: 350.0,
            }),
            ..Default::default()
        };
        assert_relative_eq!(cfg.effective_gamma().unwrap(), 2.0 * 0.63);
    }

    #[test]
    fn fold_matches_materialized_ensemble() {
        let mut cfg = beat_config(0.77, 0.63);
        cfg.n_pulses = 130;
        let ens = simulate_ensemble(&cfg).unwrap();
        let direct: f64 = ens.traces.iter().map(|t| t.samples[300]).sum();
        let folded = fold_traces(
            &cfg,
            Execution::Parallel,
            || 0.0,
            |a, t| *a += t.samples[300],
            |a, b| a + b,
        )
        .unwrap();
        assert_relative_eq!(direct, folded, max_relative = 1e-12);
    }
}

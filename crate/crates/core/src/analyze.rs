//! Estimators that reduce ensembles to observables: the mean trace, the
//! peak reference time, the two-time intensity correlation, the beat period
//! and per-pulse phases, and a chi-square uniformity statistic.
//!
//! Sums over pulses go through [`crate::reduce`] so that in-memory and
//! streamed estimates agree bit for bit.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::reduce::{self, add_into, Execution};
use crate::simulate::{self, Ensemble, ExperimentConfig, PulseTrace, TimeGrid};

/// Relative floor below which a mean intensity is treated as zero when
/// normalizing.
pub const NORMALIZATION_FLOOR: f64 = 1e-6;

/// Fraction of the window at the start of a trace in which maxima are
/// ignored as switch-on transients.
pub const TRANSIENT_FRACTION: f64 = 0.02;

/// Pointwise mean over realizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanTrace {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    /// Realizations averaged; 0 for an analytic reference.
    pub n_pulses: usize,
}

impl MeanTrace {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            dt: self.dt,
            len: self.samples.len(),
        }
    }

    /// Analytic mean `U(t) (i1 + i2)` of a configuration.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let total = config.pair.i1 + config.pair.i2;
        let grid = config.grid()?;
        Ok(MeanTrace {
            t0: grid.t0,
            dt: grid.dt,
            samples: config
                .envelope_samples()?
                .into_iter()
                .map(|u| u * total)
                .collect(),
            n_pulses: 0,
        })
    }

    fn peak(&self) -> f64 {
        self.samples.iter().cloned().fold(0.0, f64::max)
    }
}

/// Running sum for [`MeanTrace`].
#[derive(Clone, Debug)]
pub struct MeanAccumulator {
    grid: TimeGrid,
    sums: Vec<f64>,
    n: usize,
}

impl MeanAccumulator {
    pub fn new(grid: TimeGrid) -> Self {
        MeanAccumulator {
            grid,
            sums: vec![0.0; grid.len],
            n: 0,
        }
    }

    pub fn add(&mut self, trace: &PulseTrace) -> Result<()> {
        check_grid(&self.grid, trace)?;
        add_into(&mut self.sums, &trace.samples);
        self.n += 1;
        Ok(())
    }

    pub fn merge(mut self, other: MeanAccumulator) -> Self {
        add_into(&mut self.sums, &other.sums);
        self.n += other.n;
        self
    }

    pub fn finish(self) -> Result<MeanTrace> {
        if self.n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let n = self.n as f64;
        Ok(MeanTrace {
            t0: self.grid.t0,
            dt: self.grid.dt,
            samples: self.sums.into_iter().map(|s| s / n).collect(),
            n_pulses: self.n,
        })
    }
}

fn check_grid(grid: &TimeGrid, trace: &PulseTrace) -> Result<()> {
    if trace.samples.len() != grid.len || trace.dt != grid.dt || trace.t0 != grid.t0 {
        return Err(Error::GridMismatch(format!(
            "trace {} has {} samples at dt = {} from t0 = {}, expected {} at dt = {} from t0 = {}",
            trace.index,
            trace.samples.len(),
            trace.dt,
            trace.t0,
            grid.len,
            grid.dt,
            grid.t0
        )));
    }
    Ok(())
}

pub fn ensemble_mean(ens: &Ensemble) -> Result<MeanTrace> {
    mean_of_traces(&ens.traces)
}

pub fn mean_of_traces(traces: &[PulseTrace]) -> Result<MeanTrace> {
    let grid = traces.first().ok_or(Error::EmptyEnsemble)?.grid();
    let parts = reduce::map_chunks(traces.len(), Execution::Parallel, |range| {
        let mut acc = MeanAccumulator::new(grid);
        for t in &traces[range] {
            acc.add(t)?;
        }
        Ok(acc)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    reduce::pairwise(parts, &MeanAccumulator::merge)
        .ok_or(Error::EmptyEnsemble)?
        .finish()
}

/// Mean trace of `config`'s ensemble without materializing it.
pub fn stream_mean(config: &ExperimentConfig, exec: Execution) -> Result<MeanTrace> {
    let grid = config.grid()?;
    simulate::fold_traces(
        config,
        exec,
        || MeanAccumulator::new(grid),
        |acc, t| add_unchecked(&mut acc.sums, &mut acc.n, t),
        MeanAccumulator::merge,
    )?
    .finish()
}

fn add_unchecked(sums: &mut [f64], n: &mut usize, trace: &PulseTrace) {
    add_into(sums, &trace.samples);
    *n += 1;
}

/// Time of the global maximum (earliest among ties), refined by a
/// three-point parabola when the maximum is interior.
pub fn find_peak(mt: &MeanTrace) -> Result<f64> {
    let y = &mt.samples;
    if y.is_empty() {
        return Err(Error::EmptyInput("mean trace"));
    }
    let mut k = 0;
    for (j, &v) in y.iter().enumerate() {
        if v > y[k] {
            k = j;
        }
    }
    if !(y[k] > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let offset = if k > 0 && k + 1 < y.len() {
        parabolic_offset(y[k - 1], y[k], y[k + 1])
    } else {
        0.0
    };
    Ok(mt.t0 + (k as f64 + offset) * mt.dt)
}

/// Vertex offset in `[-0.5, 0.5]` of the parabola through three equally
/// spaced points around a local maximum.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// Two-time intensity correlation at a fixed reference time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    /// Reference time, snapped to the sample grid, μs.
    pub t_p: f64,
    /// Delays, snapped to multiples of the sample spacing, μs.
    pub taus: Vec<f64>,
    /// `<I(t_p) I(t_p + τ)>`.
    pub gamma2_raw: Vec<f64>,
    /// `gamma2_raw / (<I(t_p)> <I(t_p + τ)>)`.
    pub g2: Vec<f64>,
    pub n_pulses: usize,
}

/// Running sums for [`G2Estimate`].
#[derive(Clone, Debug)]
pub struct G2Accumulator {
    grid: TimeGrid,
    ref_index: usize,
    lags: Vec<usize>,
    sum_ref: f64,
    sum_lag: Vec<f64>,
    sum_prod: Vec<f64>,
    n: usize,
}

impl G2Accumulator {
    pub fn new(grid: TimeGrid, t_p: f64, taus: &[f64]) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::EmptyInput("tau grid"));
        }
        let ref_index = grid.index_of(t_p).ok_or_else(|| {
            Error::invalid("t_p", format!("{t_p} us lies outside the pulse window"))
        })?;
        let lags = taus
            .iter()
            .map(|&tau| {
                if !(tau.is_finite() && tau >= 0.0) {
                    return Err(Error::invalid(
                        "tau",
                        format!("delays must be >= 0, got {tau}"),
                    ));
                }
                let lag = (tau / grid.dt).round() as usize;
                if ref_index + lag >= grid.len {
                    return Err(Error::TauOutOfWindow { tau });
                }
                Ok(lag)
            })
            .collect::<Result<Vec<_>>>()?;
        let m = lags.len();
        Ok(G2Accumulator {
            grid,
            ref_index,
            lags,
            sum_ref: 0.0,
            sum_lag: vec![0.0; m],
            sum_prod: vec![0.0; m],
            n: 0,
        })
    }

    pub fn add(&mut self, trace: &PulseTrace) -> Result<()> {
        check_grid(&self.grid, trace)?;
        self.add_unchecked(trace);
        Ok(())
    }

    fn add_unchecked(&mut self, trace: &PulseTrace) {
        let y = &trace.samples;
        let a = y[self.ref_index];
        self.sum_ref += a;
        for ((lag, sl), sp) in self
            .lags
            .iter()
            .zip(&mut self.sum_lag)
            .zip(&mut self.sum_prod)
        {
            let b = y[self.ref_index + lag];
            *sl += b;
            *sp += a * b;
        }
        self.n += 1;
    }

    pub fn merge(mut self, other: G2Accumulator) -> Self {
        self.sum_ref += other.sum_ref;
        add_into(&mut self.sum_lag, &other.sum_lag);
        add_into(&mut self.sum_prod, &other.sum_prod);
        self.n += other.n;
        self
    }

    /// Normalizes the sums. Delays whose mean intensity falls below
    /// `floor_rel` times the largest sampled mean are dropped.
    pub fn finish(self, floor_rel: f64) -> Result<G2Estimate> {
        if self.n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let n = self.n as f64;
        let mean_ref = self.sum_ref / n;
        let peak = self.sum_lag.iter().map(|s| s / n).fold(mean_ref, f64::max);
        let floor = floor_rel * peak;
        let t_p = self.grid.time(self.ref_index);
        if !(mean_ref > floor) || !(mean_ref > 0.0) {
            return Err(Error::BelowFloor {
                t: t_p,
                mean: mean_ref,
                floor,
            });
        }
        let mut est = G2Estimate {
            t_p,
            taus: Vec::new(),
            gamma2_raw: Vec::new(),
            g2: Vec::new(),
            n_pulses: self.n,
        };
        for ((lag, sl), sp) in self.lags.iter().zip(&self.sum_lag).zip(&self.sum_prod) {
            let mean_lag = sl / n;
            if !(mean_lag > floor) {
                continue;
            }
            let raw = sp / n;
            est.taus.push(*lag as f64 * self.grid.dt);
            est.gamma2_raw.push(raw);
            est.g2.push(raw / (mean_ref * mean_lag));
        }
        if est.taus.is_empty() {
            return Err(Error::BelowFloor {
                t: t_p,
                mean: 0.0,
                floor,
            });
        }
        Ok(est)
    }
}

pub fn estimate_g2(ens: &Ensemble, t_p: f64, taus: &[f64]) -> Result<G2Estimate> {
    let grid = ens.grid()?;
    let proto = G2Accumulator::new(grid, t_p, taus)?;
    let parts = reduce::map_chunks(ens.traces.len(), Execution::Parallel, |range| {
        let mut acc = proto.clone();
        for t in &ens.traces[range] {
            acc.add(t)?;
        }
        Ok(acc)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    reduce::pairwise(parts, &G2Accumulator::merge)
        .ok_or(Error::EmptyEnsemble)?
        .finish(NORMALIZATION_FLOOR)
}

/// [`estimate_g2`] over `config`'s ensemble without materializing it.
pub fn stream_g2(
    config: &ExperimentConfig,
    exec: Execution,
    t_p: f64,
    taus: &[f64],
) -> Result<G2Estimate> {
    let proto = G2Accumulator::new(config.grid()?, t_p, taus)?;
    simulate::fold_traces(
        config,
        exec,
        || proto.clone(),
        |acc, t| acc.add_unchecked(t),
        G2Accumulator::merge,
    )?
    .finish(NORMALIZATION_FLOOR)
}

/// Delays `0, dt, 2dt, ...` up to `min(5 / gamma_guess, window end - t_p)`.
/// A zero `gamma_guess` uses the rest of the window.
pub fn default_taus(grid: &TimeGrid, t_p: f64, gamma_guess: f64) -> Vec<f64> {
    let Some(ref_index) = grid.index_of(t_p) else {
        return Vec::new();
    };
    let mut max_lag = grid.len - 1 - ref_index;
    if gamma_guess > 0.0 {
        max_lag = max_lag.min((5.0 / gamma_guess / grid.dt + 1e-9).floor() as usize);
    }
    (0..=max_lag).map(|k| k as f64 * grid.dt).collect()
}

/// Frequency of the dominant nonzero spectral peak of `samples`.
///
/// The samples are mean-subtracted, Hann-windowed and zero-padded to at
/// least eight times their length; the peak bin is refined by a parabola
/// through the log power of its neighbours. Peaks below `min_freq` are
/// ignored, and a peak less than [`SPECTRAL_SNR`] times the median power
/// is rejected as noise.
pub fn dominant_frequency(samples: &[f64], dt: f64, min_freq: f64) -> Result<f64> {
    dominant_frequency_snr(samples, dt, min_freq, SPECTRAL_SNR)
}

/// [`dominant_frequency`] with an explicit peak-to-median threshold.
pub fn dominant_frequency_snr(samples: &[f64], dt: f64, min_freq: f64, snr: f64) -> Result<f64> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::TooFewPoints { needed: 8, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let m = (8 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (k, (b, &s)) in buf.iter_mut().zip(samples).enumerate() {
        let w = 0.5 * (1.0 - (TAU * k as f64 / (n - 1) as f64).cos());
        *b = Complex64::new(w * (s - mean), 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let power: Vec<f64> = buf[..=m / 2].iter().map(|c| c.norm_sqr()).collect();

    let df = 1.0 / (m as f64 * dt);
    let lo = ((min_freq / df).ceil() as usize).max(1);
    if lo + 2 >= power.len() {
        return Err(Error::NoSpectralPeak);
    }
    let band = &power[lo..];
    let (rel, &peak) =
        band.iter().enumerate().fold(
            (0, &band[0]),
            |best, (j, p)| if *p > *best.1 { (j, p) } else { best },
        );
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(peak > 0.0) || !(peak > snr * median) {
        return Err(Error::NoSpectralPeak);
    }
    let j = lo + rel;
    let offset = if j > lo && j + 1 < power.len() && power[j - 1] > 0.0 && power[j + 1] > 0.0 {
        parabolic_offset(power[j - 1].ln(), peak.ln(), power[j + 1].ln())
    } else {
        0.0
    };
    Ok((j as f64 + offset) * df)
}

/// Minimum ratio of spectral peak power to median power.
pub const SPECTRAL_SNR: f64 = 1000.0;

/// `trace / reference`, with `None` where the reference is below the
/// normalization floor. Without a reference the raw samples are returned.
pub fn normalize_trace(
    trace: &PulseTrace,
    reference: Option<&MeanTrace>,
) -> Result<Vec<Option<f64>>> {
    match reference {
        None => Ok(trace.samples.iter().map(|&s| Some(s)).collect()),
        Some(r) => {
            if r.samples.len() != trace.samples.len() || r.dt != trace.dt || r.t0 != trace.t0 {
                return Err(Error::GridMismatch(format!(
                    "reference has {} samples at dt = {}, trace {} has {} at dt = {}",
                    r.samples.len(),
                    r.dt,
                    trace.index,
                    trace.samples.len(),
                    trace.dt
                )));
            }
            let floor = NORMALIZATION_FLOOR * r.peak();
            Ok(trace
                .samples
                .iter()
                .zip(&r.samples)
                .map(|(&s, &m)| {
                    if m > floor && m > 0.0 {
                        Some(s / m)
                    } else {
                        None
                    }
                })
                .collect())
        }
    }
}

/// Beat period from the dominant spectral peak of the envelope-normalized,
/// mean-subtracted trace.
pub fn beat_period(trace: &PulseTrace, reference: Option<&MeanTrace>) -> Result<f64> {
    let norm = normalize_trace(trace, reference)?;
    let valid: Vec<f64> = norm.iter().flatten().cloned().collect();
    if valid.is_empty() {
        return Err(Error::NoSpectralPeak);
    }
    let fill = valid.iter().sum::<f64>() / valid.len() as f64;
    let y: Vec<f64> = norm.iter().map(|v| v.unwrap_or(fill)).collect();
    let window = y.len() as f64 * trace.dt;
    let f = dominant_frequency(&y, trace.dt, 2.0 / window)?;
    Ok(1.0 / f)
}

/// Phase of one pulse from the position of its first interference maximum
/// relative to the write switch-on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub index: usize,
    /// Offset of the first maximum from `t = 0`, μs.
    pub delta_t: f64,
    /// Beat period used, μs.
    pub period: f64,
    /// `2π delta_t / period` reduced to `[0, 2π)`.
    pub phase: f64,
}

/// Locates the first interference maximum of the envelope-normalized
/// trace after the switch-on transient and converts its offset to a phase.
///
/// A maximum must dominate every sample within a quarter period on either
/// side and lie above the trace mean.
pub fn extract_phase(
    trace: &PulseTrace,
    period: f64,
    reference: Option<&MeanTrace>,
) -> Result<PhaseSample> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::invalid(
            "period",
            format!("must be > 0, got {period}"),
        ));
    }
    let y = normalize_trace(trace, reference)?;
    let valid: Vec<f64> = y.iter().flatten().cloned().collect();
    if valid.len() < 3 {
        return Err(Error::NoMaxima { index: trace.index });
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let (lo, hi) = valid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !(hi - lo > 1e-9 * mean.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::NoMaxima { index: trace.index });
    }

    let n = y.len();
    let half = ((period / (4.0 * trace.dt)).floor() as usize).max(1);
    let skip = (TRANSIENT_FRACTION * n as f64).ceil() as usize;
    let is_max = |k: usize| -> bool {
        let Some(v) = y[k] else { return false };
        if v <= mean || y[k - 1].is_none() || y[k + 1].is_none() {
            return false;
        }
        let lo = k.saturating_sub(half);
        let hi = (k + half).min(n - 1);
        (lo..k).all(|j| y[j].is_none_or(|w| w < v))
            && (k + 1..=hi).all(|j| y[j].is_none_or(|w| w <= v))
    };
    let k = (skip.max(1)..n - 1)
        .find(|&k| is_max(k))
        .ok_or(Error::NoMaxima { index: trace.index })?;
    let offset = parabolic_offset(y[k - 1].unwrap(), y[k].unwrap(), y[k + 1].unwrap());
    let delta_t = (k as f64 + offset) * trace.dt;
    Ok(PhaseSample {
        index: trace.index,
        delta_t,
        period,
        phase: wrap_phase(TAU * delta_t / period),
    })
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed angular difference `a - b` reduced to `[-π, π)`.
pub fn circular_difference(a: f64, b: f64) -> f64 {
    wrap_phase(a - b + std::f64::consts::PI) - std::f64::consts::PI
}

/// Where the beat period used for phase extraction comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PeriodSource {
    /// Mean of the per-trace beat periods of the first `max_traces` traces.
    Average { max_traces: usize },
    /// Each trace's own beat period, falling back to the configured beat.
    PerTrace,
    /// A fixed period in μs.
    Fixed(f64),
}

impl Default for PeriodSource {
    fn default() -> Self {
        PeriodSource::Average { max_traces: 256 }
    }
}

impl PeriodSource {
    /// Period `1 / |Δν|` of the configured beat.
    pub fn configured(config: &ExperimentConfig) -> Result<Self> {
        let beat = config.pair.observable_beat();
        if !(beat > 0.0) {
            return Err(Error::invalid("beat", "configured beat frequency is zero"));
        }
        Ok(PeriodSource::Fixed(1.0 / beat))
    }
}

/// Phases of every pulse of an ensemble, plus the pulses that failed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseExtraction {
    pub samples: Vec<PhaseSample>,
    pub failures: Vec<(usize, String)>,
}

/// Mean per-trace beat period over the first `max_traces` traces whose
/// spectrum has a clear peak.
pub fn average_period(
    traces: &[PulseTrace],
    reference: Option<&MeanTrace>,
    max_traces: usize,
) -> Result<f64> {
    let periods: Vec<f64> = traces
        .iter()
        .take(max_traces.max(1))
        .filter_map(|t| beat_period(t, reference).ok())
        .collect();
    if periods.is_empty() {
        return Err(Error::NoSpectralPeak);
    }
    Ok(periods.iter().sum::<f64>() / periods.len() as f64)
}

pub fn extract_phases(ens: &Ensemble, source: PeriodSource) -> Result<PhaseExtraction> {
    let reference = ensemble_mean(ens)?;
    let fixed = match source {
        PeriodSource::Average { max_traces } => {
            Some(average_period(&ens.traces, Some(&reference), max_traces)?)
        }
        PeriodSource::Fixed(p) => Some(p),
        PeriodSource::PerTrace => None,
    };
    let fallback = PeriodSource::configured(&ens.config).ok();
    let parts = reduce::map_chunks(ens.traces.len(), Execution::Parallel, |range| {
        ens.traces[range]
            .iter()
            .map(|t| {
                let period = match fixed {
                    Some(p) => Ok(p),
                    None => beat_period(t, Some(&reference)).or(match fallback {
                        Some(PeriodSource::Fixed(p)) => Ok(p),
                        _ => Err(Error::NoSpectralPeak),
                    }),
                };
                (
                    t.index,
                    period.and_then(|p| extract_phase(t, p, Some(&reference))),
                )
            })
            .collect::<Vec<_>>()
    });
    let mut out = PhaseExtraction::default();
    for (index, res) in parts.into_iter().flatten() {
        match res {
            Ok(s) => out.samples.push(s),
            Err(e) => out.failures.push((index, e.to_string())),
        }
    }
    Ok(out)
}

/// Equal-width histogram of phases on `[0, 2π)` with a chi-square test
/// against the uniform distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramResult {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub chi_square: f64,
    pub dof: usize,
}

impl HistogramResult {
    /// Upper-tail probability of the statistic under the uniform null.
    pub fn p_value(&self) -> f64 {
        ChiSquared::new(self.dof as f64)
            .map(|d| d.sf(self.chi_square))
            .unwrap_or(f64::NAN)
    }

    /// True when uniformity is rejected at significance `alpha`.
    pub fn rejects_uniform(&self, alpha: f64) -> bool {
        self.p_value() < alpha
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn phase_histogram(phases: &[PhaseSample], n_bins: usize) -> Result<HistogramResult> {
    let angles: Vec<f64> = phases.iter().map(|p| p.phase).collect();
    angle_histogram(&angles, n_bins)
}

pub fn angle_histogram(angles: &[f64], n_bins: usize) -> Result<HistogramResult> {
    if angles.is_empty() {
        return Err(Error::EmptyInput("phases"));
    }
    if n_bins < 4 {
        return Err(Error::invalid(
            "n_bins",
            format!("need at least 4 bins, got {n_bins}"),
        ));
    }
    let width = TAU / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &a in angles {
        let bin = ((wrap_phase(a) / width) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let expected = angles.len() as f64 / n_bins as f64;
    let chi_square = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    Ok(HistogramResult {
        edges: (0..=n_bins).map(|k| k as f64 * width).collect(),
        counts,
        chi_square,
        dof: n_bins - 1,
    })
}

/// Fisher-Lee circular correlation of two angle samples. Unlike the
/// mean-direction based coefficient it stays well defined when both samples
/// are uniform; it is 1 when `b = a + const`.
pub fn circular_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("angles", "samples differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let mut s = [0.0f64; 8];
    for (x, y) in a.iter().zip(b) {
        let (sx, cx) = x.sin_cos();
        let (sy, cy) = y.sin_cos();
        s[0] += cx * cy;
        s[1] += sx * sy;
        s[2] += cx * sy;
        s[3] += sx * cy;
        s[4] += (2.0 * x).cos();
        s[5] += (2.0 * x).sin();
        s[6] += (2.0 * y).cos();
        s[7] += (2.0 * y).sin();
    }
    let num = 4.0 * (s[0] * s[1] - s[2] * s[3]);
    let den = ((n * n - s[4] * s[4] - s[5] * s[5]) * (n * n - s[6] * s[6] - s[7] * s[7])).sqrt();
    if !(den > 0.0) {
        return Err(Error::invalid("angles", "a sample has no angular spread"));
    }
    Ok(num / den)
}

/// Amplitude of the residual oscillation at `freq` left in a mean trace,
/// from a linear least-squares fit of `mean ≈ U (c + a cos 2πft + b sin 2πft)`
/// with the known envelope `U`. Returned in the mean's intensity units.
pub fn residual_oscillation(mean: &MeanTrace, envelope: &[f64], freq: f64) -> Result<f64> {
    if envelope.len() != mean.samples.len() {
        return Err(Error::GridMismatch(format!(
            "envelope has {} samples, mean trace {}",
            envelope.len(),
            mean.samples.len()
        )));
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for (k, (&y, &u)) in mean.samples.iter().zip(envelope).enumerate() {
        let arg = TAU * freq * (mean.t0 + k as f64 * mean.dt);
        let row = Vector3::new(u, u * arg.cos(), u * arg.sin());
        ata += row * row.transpose();
        aty += row * y;
    }
    let coef = ata
        .cholesky()
        .ok_or_else(|| Error::invalid("freq", "oscillation regressors are degenerate"))?
        .solve(&aty);
    Ok(coef[1].hypot(coef[2]))
}

//! Parameter recovery: the dephased two-photon beat fit, the linear
//! beat-versus-power law and temperature sweeps of the dephasing rate.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analyze::{self, G2Estimate, MeanTrace};
use crate::error::{Error, Result};
use crate::model::{g2_model, G2Params};
use crate::reduce::{self, Execution};
use crate::simulate::{simulate_ensemble_with, ExperimentConfig};

/// Relative parameter step below which the fit is converged.
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Gradient norm below which the fit is converged.
pub const GRADIENT_TOLERANCE: f64 = 1e-12;

/// Scaled model `B (1 + V e^{-γτ} cos 2πΔντ)`; `B = 1` is the plain
/// dephased-beat law.
pub fn scaled_model(tau: f64, p: &G2Params, baseline: f64) -> f64 {
    baseline * g2_model(tau, p)
}

/// Partial derivatives of `1 + V e^{-γτ} cos 2πΔντ` with respect to
/// `(V, γ, Δν)`.
pub fn model_jacobian(tau: f64, p: &G2Params) -> [f64; 3] {
    let e = (-p.gamma * tau).exp();
    let arg = TAU * p.delta_nu * tau;
    let (s, c) = arg.sin_cos();
    [e * c, -p.v * tau * e * c, -p.v * e * s * TAU * tau]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2StdErrors {
    pub v: Option<f64>,
    pub gamma: Option<f64>,
    pub delta_nu: Option<f64>,
    pub baseline: Option<f64>,
}

/// Result of fitting the dephased beat law to a correlation estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    pub params: G2Params,
    /// Fitted overall scale; exactly 1 unless fitted as a free parameter.
    pub baseline: f64,
    pub std_errors: G2StdErrors,
    /// Residual sum of squares (weighted if weights were given).
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False when the visibility is indistinguishable from zero, leaving
    /// the beat frequency and dephasing rate undetermined.
    pub delta_nu_identifiable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Fit the overall scale `B` instead of fixing it at 1.
    pub free_baseline: bool,
    /// Per-point weights, typically inverse variances.
    pub weights: Option<Vec<f64>>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            free_baseline: false,
            weights: None,
            max_iterations: 200,
        }
    }
}

struct Problem<'a> {
    taus: &'a [f64],
    values: &'a [f64],
    weights: Option<&'a [f64]>,
    free_baseline: bool,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        if self.free_baseline {
            4
        } else {
            3
        }
    }

    fn unpack(&self, x: &[f64]) -> (G2Params, f64) {
        let p = G2Params {
            v: x[0],
            gamma: x[1],
            delta_nu: x[2],
        };
        (p, if self.free_baseline { x[3] } else { 1.0 })
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        match i {
            0 => (0.0, 1.0),
            _ => (0.0, f64::INFINITY),
        }
    }

    fn weight(&self, k: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[k])
    }

    fn rss(&self, x: &[f64]) -> f64 {
        let (p, b) = self.unpack(x);
        self.taus
            .iter()
            .zip(self.values)
            .enumerate()
            .map(|(k, (&tau, &y))| self.weight(k) * (y - scaled_model(tau, &p, b)).powi(2))
            .sum()
    }

    /// `(JᵀWJ, JᵀWr)` at `x`, with `r = y - f`.
    fn normal_equations(&self, x: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let np = self.n_params();
        let (p, b) = self.unpack(x);
        let mut jtj = DMatrix::zeros(np, np);
        let mut jtr = DVector::zeros(np);
        let mut row = [0.0; 4];
        for (k, (&tau, &y)) in self.taus.iter().zip(self.values).enumerate() {
            let w = self.weight(k);
            let d = model_jacobian(tau, &p);
            row[0] = b * d[0];
            row[1] = b * d[1];
            row[2] = b * d[2];
            row[3] = g2_model(tau, &p);
            let r = y - b * row[3];
            for i in 0..np {
                jtr[i] += w * row[i] * r;
                for j in 0..np {
                    jtj[(i, j)] += w * row[i] * row[j];
                }
            }
        }
        (jtj, jtr)
    }

    /// Parameters pinned at a bound that the descent direction pushes
    /// outward.
    fn active(&self, x: &[f64], jtr: &DVector<f64>) -> Vec<bool> {
        (0..self.n_params())
            .map(|i| {
                let (lo, hi) = self.bounds(i);
                (x[i] <= lo && jtr[i] <= 0.0) || (x[i] >= hi && jtr[i] >= 0.0)
            })
            .collect()
    }

    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let (lo, hi) = self.bounds(i);
            *v = v.clamp(lo, hi);
        }
    }
}

struct Run {
    x: Vec<f64>,
    rss: f64,
    iterations: usize,
    converged: bool,
}

/// Bound-constrained Levenberg-Marquardt with diagonal scaling. Steps that
/// do not lower the residual are rejected, so the residual never rises
/// above its starting value.
fn levenberg_marquardt(prob: &Problem, start: Vec<f64>, max_iterations: usize) -> Run {
    let np = prob.n_params();
    let mut x = start;
    prob.project(&mut x);
    let mut rss = prob.rss(&x);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iterations {
        iterations += 1;
        let (jtj, jtr) = prob.normal_equations(&x);
        let active = prob.active(&x, &jtr);
        let free: Vec<usize> = (0..np).filter(|&i| !active[i]).collect();
        let grad_norm = free.iter().map(|&i| jtr[i] * jtr[i]).sum::<f64>().sqrt();
        if free.is_empty() || grad_norm < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }

        let nf = free.len();
        let max_diag = free.iter().map(|&i| jtj[(i, i)]).fold(0.0, f64::max);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = DMatrix::zeros(nf, nf);
            let mut g = DVector::zeros(nf);
            for (r, &i) in free.iter().enumerate() {
                g[r] = jtr[i];
                for (c, &j) in free.iter().enumerate() {
                    a[(r, c)] = jtj[(i, j)];
                }
                a[(r, r)] += lambda * jtj[(i, i)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = x.clone();
            for (r, &i) in free.iter().enumerate() {
                trial[i] += step[r];
            }
            prob.project(&mut trial);
            let moved = trial
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let small = moved <= STEP_TOLERANCE * (scale + STEP_TOLERANCE);
            let trial_rss = prob.rss(&trial);
            if trial_rss <= rss {
                x = trial;
                rss = trial_rss;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            if small {
                // no representable improvement left along the damped path
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    Run {
        x,
        rss,
        iterations,
        converged,
    }
}

/// Seed for the dephased-beat fit read off the estimate itself.
///
/// Δν comes from the dominant spectral peak of the mean-subtracted `g2`,
/// `V` from the largest excursion from 1 within the first half period, and
/// `γ` from a log-linear fit to the successive extrema of `|g2 - 1|`. A
/// curve without oscillation yields the flat guess `(0, 0, 0)`.
pub fn initial_guess(est: &G2Estimate) -> G2Params {
    guess_curve(&est.taus, &est.g2, 1.0)
}

/// [`initial_guess`] for raw `(taus, values)` columns around a known
/// overall scale `baseline`.
pub fn guess_curve(taus: &[f64], values: &[f64], baseline: f64) -> G2Params {
    let flat = G2Params {
        v: 0.0,
        gamma: 0.0,
        delta_nu: 0.0,
    };
    let n = taus.len();
    if n < 4 || values.len() != n {
        return flat;
    }
    let dev: Vec<f64> = values.iter().map(|y| y / baseline - 1.0).collect();
    if dev.iter().all(|d| d.abs() < 1e-12) {
        return flat;
    }
    let (grid_dt, resampled) = uniform_resample(taus, values);
    let span = grid_dt * (resampled.len() - 1) as f64;
    let Ok(delta_nu) = analyze::dominant_frequency_snr(&resampled, grid_dt, 1.0 / span, 10.0)
    else {
        return flat;
    };

    let half_period = 0.5 / delta_nu;
    let v = taus
        .iter()
        .zip(&dev)
        .filter(|(t, _)| **t - taus[0] <= half_period)
        .map(|(_, d)| d.abs())
        .fold(0.0, f64::max)
        .min(1.0);

    // extrema of |g2 - 1|, one per half period
    let abs: Vec<f64> = dev.iter().map(|d| d.abs()).collect();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    if abs[0] > 0.0 && abs[0] >= abs[1] {
        pts.push((taus[0], abs[0].ln()));
    }
    for k in 1..n - 1 {
        if abs[k] > 0.0 && abs[k] > abs[k - 1] && abs[k] >= abs[k + 1] {
            if let Some(&(t_last, _)) = pts.last() {
                if taus[k] - t_last < 0.25 / delta_nu {
                    continue;
                }
            }
            pts.push((taus[k], abs[k].ln()));
        }
    }
    let gamma = if pts.len() >= 2 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        ols(&xs, &ys).map_or(0.0, |(slope, _)| (-slope).max(0.0))
    } else {
        0.0
    };
    G2Params { v, gamma, delta_nu }
}

/// Linear interpolation of `values` onto a uniform grid spanning `taus`.
fn uniform_resample(taus: &[f64], values: &[f64]) -> (f64, Vec<f64>) {
    let n = taus.len();
    let dt = (taus[n - 1] - taus[0]) / (n - 1) as f64;
    let uniform = taus
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt);
    if uniform {
        return (dt, values.to_vec());
    }
    let mut j = 0;
    let out = (0..n)
        .map(|k| {
            let t = taus[0] + k as f64 * dt;
            while j + 2 < n && taus[j + 1] < t {
                j += 1;
            }
            let f = ((t - taus[j]) / (taus[j + 1] - taus[j])).clamp(0.0, 1.0);
            values[j] + f * (values[j + 1] - values[j])
        })
        .collect();
    (dt, out)
}

/// Fits `1 + V e^{-γτ} cos 2πΔντ` to the estimate, starting from `guess`.
/// Fails if the fit does not converge.
pub fn fit_g2(est: &G2Estimate, guess: G2Params) -> Result<G2Fit> {
    let fit = fit_curve(&est.taus, &est.g2, guess, &FitOptions::default())?;
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        });
    }
    Ok(fit)
}

/// Fits the (optionally scaled) dephased-beat law to `(taus, values)`.
///
/// Besides `guess`, the optimizer is also started from the three best
/// frequencies of a coarse scan over `[0.5, 1.5] Δν_guess`; the start
/// reaching the lowest residual wins. Non-convergence is reported through
/// [`G2Fit::converged`].
pub fn fit_curve(
    taus: &[f64],
    values: &[f64],
    guess: G2Params,
    opts: &FitOptions,
) -> Result<G2Fit> {
    if taus.len() != values.len() {
        return Err(Error::invalid(
            "g2",
            "tau and value columns differ in length",
        ));
    }
    if taus.len() < 8 {
        return Err(Error::TooFewPoints {
            needed: 8,
            got: taus.len(),
        });
    }
    if ![guess.v, guess.gamma, guess.delta_nu]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::invalid("guess", "initial guess must be finite"));
    }
    if taus.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::invalid("g2", "data must be finite"));
    }
    if let Some(w) = &opts.weights {
        if w.len() != taus.len() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "weights",
                "need one finite nonnegative weight per point",
            ));
        }
    }
    let prob = Problem {
        taus,
        values,
        weights: opts.weights.as_deref(),
        free_baseline: opts.free_baseline,
    };

    let baseline0 = if opts.free_baseline {
        (values.iter().sum::<f64>() / values.len() as f64).max(f64::MIN_POSITIVE)
    } else {
        1.0
    };
    let pack = |p: &G2Params| {
        let mut x = vec![p.v, p.gamma, p.delta_nu];
        if opts.free_baseline {
            x.push(baseline0);
        }
        x
    };

    let mut starts = vec![pack(&guess)];
    if guess.delta_nu > 0.0 && guess.v > 0.0 {
        let mut scan: Vec<(f64, Vec<f64>)> = (0..=60)
            .map(|k| {
                let p = G2Params {
                    delta_nu: guess.delta_nu * (0.5 + k as f64 / 60.0),
                    ..guess
                };
                let x = pack(&p);
                (prob.rss(&x), x)
            })
            .collect();
        scan.sort_by(|a, b| a.0.total_cmp(&b.0));
        starts.extend(scan.into_iter().take(3).map(|s| s.1));
    }

    let best = starts
        .into_iter()
        .map(|s| levenberg_marquardt(&prob, s, opts.max_iterations))
        .reduce(|a, b| if b.rss < a.rss { b } else { a })
        .expect("at least one start");

    let (params, baseline) = prob.unpack(&best.x);
    let std_errors = standard_errors(&prob, &best.x, best.rss);
    let identifiable = params.v > 1e-6 && std_errors.v.is_none_or(|se| params.v > 2.0 * se);
    Ok(G2Fit {
        params,
        baseline,
        std_errors,
        rss: best.rss,
        iterations: best.iterations,
        converged: best.converged,
        delta_nu_identifiable: identifiable,
    })
}

/// Gauss-Newton covariance `s² (JᵀWJ)⁻¹`, `s² = RSS / (m - p)`.
fn standard_errors(prob: &Problem, x: &[f64], rss: f64) -> G2StdErrors {
    let np = prob.n_params();
    let m = prob.taus.len();
    let (jtj, _) = prob.normal_equations(x);
    let s2 = if m > np {
        rss / (m - np) as f64
    } else {
        f64::NAN
    };
    let se = |i: usize, cov: &DMatrix<f64>| {
        let v = cov[(i, i)] * s2;
        (v.is_finite() && v >= 0.0).then(|| v.sqrt())
    };
    match jtj
        .clone()
        .try_inverse()
        .filter(|c| c.iter().all(|v| v.is_finite()))
    {
        Some(cov) if prob.normal_equations(x).0.determinant().abs() > 0.0 => G2StdErrors {
            v: se(0, &cov),
            gamma: se(1, &cov),
            delta_nu: se(2, &cov),
            baseline: if np == 4 { se(3, &cov) } else { None },
        },
        _ => G2StdErrors {
            v: None,
            gamma: None,
            delta_nu: None,
            baseline: None,
        },
    }
}

/// Ordinary least-squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// MHz/mW for a power sweep.
    pub slope: f64,
    /// MHz for a power sweep.
    pub intercept: f64,
    pub r2: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Beat frequency against write power. The slope estimates `kappa1`; with
/// the second beam fixed the intercept estimates `-kappa2 * p_w2`.
pub fn fit_power_law(powers: &[f64], beats: &[f64]) -> Result<LinearFit> {
    if powers.len() != beats.len() {
        return Err(Error::invalid("beats", "powers and beats differ in length"));
    }
    if powers.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: powers.len(),
        });
    }
    if powers.iter().chain(beats).any(|v| !v.is_finite()) {
        return Err(Error::invalid("beats", "data must be finite"));
    }
    let (slope, intercept) = ols(powers, beats).ok_or(Error::DegenerateRegressor)?;
    let my = beats.iter().sum::<f64>() / beats.len() as f64;
    let ss_tot: f64 = beats.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = powers
        .iter()
        .zip(beats)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
    })
}

/// Dephasing rate as a function of cell temperature.
pub trait DephasingLaw: Sync {
    fn gamma(&self, temperature: f64) -> Result<f64>;
}

/// `γ(T) = γ_ref sqrt(T / T_ref)`, following the mean thermal speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqrtTemperatureLaw {
    pub gamma_ref: f64,
    pub t_ref: f64,
}

impl DephasingLaw for SqrtTemperatureLaw {
    fn gamma(&self, temperature: f64) -> Result<f64> {
        gamma_temperature_model(temperature, self.gamma_ref, self.t_ref)
    }
}

pub fn gamma_temperature_model(t: f64, gamma_ref: f64, t_ref: f64) -> Result<f64> {
    for v in [t, t_ref] {
        if !(v > 0.0) {
            return Err(Error::NonpositiveTemperature(v));
        }
    }
    Ok(gamma_ref * (t / t_ref).sqrt())
}

/// Output of [`g2_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct G2Run {
    pub mean: MeanTrace,
    pub t_p: f64,
    pub estimate: G2Estimate,
    pub fit: G2Fit,
}

/// Simulate, average, locate the peak, estimate `g2` there and fit it.
/// Traces are streamed twice (mean, then correlation) so memory stays
/// bounded for large ensembles.
pub fn g2_pipeline(config: &ExperimentConfig, exec: Execution, opts: &FitOptions) -> Result<G2Run> {
    let mean = analyze::stream_mean(config, exec)?;
    let t_p = analyze::find_peak(&mean)?;
    let taus = analyze::default_taus(&mean.grid(), t_p, config.effective_gamma()?);
    let estimate = analyze::stream_g2(config, exec, t_p, &taus)?;
    let baseline = if opts.free_baseline {
        estimate.g2.iter().sum::<f64>() / estimate.g2.len() as f64
    } else {
        1.0
    };
    let guess = guess_curve(&estimate.taus, &estimate.g2, baseline);
    let fit = fit_curve(&estimate.taus, &estimate.g2, guess, opts)?;
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        });
    }
    Ok(G2Run {
        mean,
        t_p: estimate.t_p,
        estimate,
        fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TempPoint {
    pub temperature: f64,
    pub injected_gamma: f64,
    pub fit: Option<G2Fit>,
    pub error: Option<String>,
}

/// Fitted dephasing rates over an ascending temperature grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TempSweepResult {
    pub points: Vec<TempPoint>,
}

impl TempSweepResult {
    pub fn temperatures(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.temperature).collect()
    }

    pub fn gammas(&self) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.fit.as_ref().map(|f| f.params.gamma))
            .collect()
    }

    pub fn std_errors(&self) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.fit.as_ref().and_then(|f| f.std_errors.gamma))
            .collect()
    }
}

/// For each temperature: set `γ` from `law`, simulate with the base
/// config's seed, estimate `g2` at the mean-trace peak and fit. Failures
/// are recorded per point and the sweep continues.
///
/// Every point reuses the same master seed, so the underlying random draws
/// are shared and the fitted rates vary smoothly with temperature.
pub fn sweep_temperature(
    base: &ExperimentConfig,
    temperatures: &[f64],
    law: &dyn DephasingLaw,
) -> Result<TempSweepResult> {
    base.validate()?;
    if temperatures.is_empty() {
        return Err(Error::EmptyInput("temperature grid"));
    }
    if temperatures.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "temperatures",
            "grid must be strictly ascending",
        ));
    }
    let points = reduce::map_items(temperatures.len(), Execution::Parallel, |k| {
        let temperature = temperatures[k];
        let run = law.gamma(temperature).and_then(|gamma| {
            let cfg = ExperimentConfig {
                gamma,
                temperature: None,
                ..base.clone()
            };
            g2_pipeline(&cfg, Execution::Parallel, &FitOptions::default()).map(|r| (gamma, r.fit))
        });
        match run {
            Ok((gamma, fit)) => TempPoint {
                temperature,
                injected_gamma: gamma,
                fit: Some(fit),
                error: None,
            },
            Err(e) => TempPoint {
                temperature,
                injected_gamma: law.gamma(temperature).unwrap_or(f64::NAN),
                fit: None,
                error: Some(e.to_string()),
            },
        }
    });
    Ok(TempSweepResult { points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepOptions {
    /// Traces synthesized per power; their beat periods are averaged.
    pub traces_per_point: usize,
}

impl Default for PowerSweepOptions {
    fn default() -> Self {
        PowerSweepOptions {
            traces_per_point: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub power: f64,
    /// Configured beat `|kappa1 P - kappa2 p_w2|`, MHz.
    pub configured_beat: f64,
    /// Beat measured from the synthesized traces, MHz.
    pub measured_beat: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepResult {
    pub points: Vec<PowerPoint>,
    /// Linear fit over the points that yielded a beat.
    pub fit: LinearFit,
}

/// Varies `p_w1` over `powers` with the second beam fixed, measures the
/// beat of synthesized traces from their spectra and fits a line.
pub fn sweep_power(
    base: &ExperimentConfig,
    powers: &[f64],
    opts: &PowerSweepOptions,
) -> Result<PowerSweepResult> {
    base.validate()?;
    if powers.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: powers.len(),
        });
    }
    let points = reduce::map_items(powers.len(), Execution::Parallel, |k| {
        let power = powers[k];
        let cfg = ExperimentConfig {
            pair: crate::model::FieldPair {
                p_w1: power,
                ..base.pair
            },
            n_pulses: opts.traces_per_point.max(1),
            ..base.clone()
        };
        let measured = cfg.validate().and_then(|_| {
            let ens = simulate_ensemble_with(&cfg, Execution::Serial)?;
            let reference = MeanTrace::from_config(&cfg)?;
            let period = analyze::average_period(&ens.traces, Some(&reference), ens.traces.len())?;
            Ok(1.0 / period)
        });
        PowerPoint {
            power,
            configured_beat: cfg.pair.observable_beat(),
            measured_beat: measured.as_ref().ok().copied(),
            error: measured.err().map(|e| e.to_string()),
        }
    });
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.measured_beat.map(|b| (p.power, b)))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::SweepFailed(format!(
            "only {} of {} powers yielded a beat",
            xs.len(),
            powers.len()
        )));
    }
    let fit = fit_power_law(&xs, &ys)?;
    Ok(PowerSweepResult { points, fit })
}

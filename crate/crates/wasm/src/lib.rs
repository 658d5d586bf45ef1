//! Browser bindings: one beat trace, the washed-out ensemble mean, and a
//! fitted g2 curve. All work runs serially on the page's thread.

use beatlab::analyze::{residual_oscillation, stream_mean, MeanTrace};
use beatlab::fit::{g2_pipeline, FitOptions};
use beatlab::model::{g2_model, FieldPair};
use beatlab::reduce::Execution;
use beatlab::simulate::{AmplitudeMode, ExperimentConfig, TraceSynth};
use wasm_bindgen::prelude::*;

/// Largest ensemble the page may request; keeps a click under a few seconds.
pub const MAX_PULSES: usize = 20_000;

fn config(beat: f64, gamma: f64, n_pulses: usize, seed: u64) -> beatlab::Result<ExperimentConfig> {
    if n_pulses > MAX_PULSES {
        return Err(beatlab::Error::invalid(
            "n_pulses",
            format!("at most {MAX_PULSES} in the browser"),
        ));
    }
    let cfg = ExperimentConfig {
        pair: FieldPair::with_beat(1.0, 1.0, beat)?,
        gamma,
        n_pulses,
        master_seed: seed,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn js(e: beatlab::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Trace {
    times: Vec<f64>,
    intensity: Vec<f64>,
    mean: Vec<f64>,
}

#[wasm_bindgen]
impl Trace {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.intensity.clone()
    }

    /// Analytic ensemble mean on the same grid.
    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }
}

pub fn build_trace(beat: f64, gamma: f64, seed: u64) -> beatlab::Result<Trace> {
    let cfg = config(beat, gamma, 1, seed)?;
    let trace = TraceSynth::new(&cfg)?.realization(0);
    let grid = trace.grid();
    Ok(Trace {
        times: (0..grid.len).map(|k| grid.time(k)).collect(),
        intensity: trace.samples,
        mean: MeanTrace::from_config(&cfg)?.samples,
    })
}

/// A single pulse with the given beat (MHz) and dephasing rate (1/us).
#[wasm_bindgen]
pub fn single_trace(beat: f64, gamma: f64, seed: u64) -> Result<Trace, JsError> {
    build_trace(beat, gamma, seed).map_err(js)
}

#[wasm_bindgen]
pub struct Washout {
    times: Vec<f64>,
    mean: Vec<f64>,
    reference: Vec<f64>,
    residual: f64,
}

#[wasm_bindgen]
impl Washout {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }

    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }

    /// Leftover beat amplitude relative to the single-pulse modulation.
    #[wasm_bindgen(getter)]
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

pub fn build_washout(
    beat: f64,
    gamma: f64,
    n_pulses: usize,
    seed: u64,
) -> beatlab::Result<Washout> {
    let cfg = config(beat, gamma, n_pulses, seed)?;
    let mean = stream_mean(&cfg, Execution::Serial)?;
    let env = cfg.envelope_samples()?;
    let modulation = 2.0 * (cfg.pair.i1 * cfg.pair.i2).sqrt();
    let residual = residual_oscillation(&mean, &env, cfg.pair.observable_beat())? / modulation;
    let grid = mean.grid();
    Ok(Washout {
        times: (0..grid.len).map(|k| grid.time(k)).collect(),
        reference: MeanTrace::from_config(&cfg)?.samples,
        mean: mean.samples,
        residual,
    })
}

/// Average of `n_pulses` traces against the analytic mean.
#[wasm_bindgen]
pub fn ensemble_mean(
    beat: f64,
    gamma: f64,
    n_pulses: usize,
    seed: u64,
) -> Result<Washout, JsError> {
    build_washout(beat, gamma, n_pulses, seed).map_err(js)
}

#[wasm_bindgen]
pub struct G2Demo {
    taus: Vec<f64>,
    g2: Vec<f64>,
    fitted: Vec<f64>,
    v: f64,
    gamma: f64,
    delta_nu: f64,
    baseline: f64,
    identifiable: bool,
}

#[wasm_bindgen]
impl G2Demo {
    pub fn taus(&self) -> Vec<f64> {
        self.taus.clone()
    }

    pub fn g2(&self) -> Vec<f64> {
        self.g2.clone()
    }

    pub fn fitted(&self) -> Vec<f64> {
        self.fitted.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn v(&self) -> f64 {
        self.v
    }

    #[wasm_bindgen(getter)]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[wasm_bindgen(getter)]
    pub fn delta_nu(&self) -> f64 {
        self.delta_nu
    }

    #[wasm_bindgen(getter)]
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    #[wasm_bindgen(getter)]
    pub fn identifiable(&self) -> bool {
        self.identifiable
    }
}

pub fn build_g2(
    beat: f64,
    gamma: f64,
    n_pulses: usize,
    thermal: bool,
    seed: u64,
) -> beatlab::Result<G2Demo> {
    let cfg = ExperimentConfig {
        amplitude_mode: if thermal {
            AmplitudeMode::Thermal
        } else {
            AmplitudeMode::Coherent
        },
        ..config(beat, gamma, n_pulses, seed)?
    };
    let opts = FitOptions {
        free_baseline: thermal,
        ..FitOptions::default()
    };
    let run = g2_pipeline(&cfg, Execution::Serial, &opts)?;
    let fit = run.fit;
    let baseline = fit.baseline;
    let fitted = run
        .estimate
        .taus
        .iter()
        .map(|t| baseline * g2_model(*t, &fit.params))
        .collect();
    Ok(G2Demo {
        taus: run.estimate.taus,
        g2: run.estimate.g2,
        fitted,
        v: fit.params.v,
        gamma: fit.params.gamma,
        delta_nu: fit.params.delta_nu,
        baseline,
        identifiable: fit.delta_nu_identifiable,
    })
}

/// Estimate g2 at the mean-intensity peak and fit the dephased beat law.
/// Thermal amplitudes fit a free overall scale.
#[wasm_bindgen]
pub fn g2_fit(
    beat: f64,
    gamma: f64,
    n_pulses: usize,
    thermal: bool,
    seed: u64,
) -> Result<G2Demo, JsError> {
    build_g2(beat, gamma, n_pulses, thermal, seed).map_err(js)
}

//! Closed-form beat and correlation laws.
//!
//! Everything here is a pure function of its arguments. The simulator and
//! the estimators in the rest of the crate are tested against these.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two interfering sources: mean intensities and the write powers that set
/// their light-shift induced frequency difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    /// Mean intensity of source 1 (detector units).
    pub i1: f64,
    /// Mean intensity of source 2 (detector units).
    pub i2: f64,
    /// Frequency shift per unit write power for source 1, MHz/mW.
    pub kappa1: f64,
    /// Frequency shift per unit write power for source 2, MHz/mW.
    pub kappa2: f64,
    /// Write power 1, mW.
    pub p_w1: f64,
    /// Write power 2, mW.
    pub p_w2: f64,
}

impl FieldPair {
    pub fn new(i1: f64, i2: f64, kappa1: f64, kappa2: f64, p_w1: f64, p_w2: f64) -> Result<Self> {
        let pair = FieldPair {
            i1,
            i2,
            kappa1,
            kappa2,
            p_w1,
            p_w2,
        };
        pair.validate()?;
        Ok(pair)
    }

    /// A pair whose write powers are chosen so that the signed beat equals
    /// `beat` MHz. Handy when only the beat frequency matters.
    pub fn with_beat(i1: f64, i2: f64, beat: f64) -> Result<Self> {
        if beat >= 0.0 {
            FieldPair::new(i1, i2, beat, 0.0, 1.0, 0.0)
        } else {
            FieldPair::new(i1, i2, 0.0, -beat, 0.0, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("i1", self.i1),
            ("i2", self.i2),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("p_w1", self.p_w1),
            ("p_w2", self.p_w2),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and >= 0, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// Signed beat frequency in MHz.
    pub fn beat_frequency(&self) -> f64 {
        beat_frequency(self)
    }

    /// Magnitude of the beat frequency, the quantity a detector observes.
    pub fn observable_beat(&self) -> f64 {
        beat_frequency(self).abs()
    }
}

/// Signed beat frequency `kappa1 * p_w1 - kappa2 * p_w2` in MHz.
pub fn beat_frequency(pair: &FieldPair) -> f64 {
    pair.kappa1 * pair.p_w1 - pair.kappa2 * pair.p_w2
}

/// Common temporal intensity profile of both sources, peak-normalized to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Envelope {
    /// `U(t) = (t/t_rise)^a * exp(a - t/t_decay)` with `a = t_rise/t_decay`.
    /// Rises from zero at `t = 0` and peaks at exactly 1 at `t = t_rise`.
    Parametric { t_rise: f64, t_decay: f64 },
    /// Samples on the uniform grid `k * dt`, `k = 0..len`, linearly
    /// interpolated in between.
    Tabulated { dt: f64, samples: Vec<f64> },
}

impl Envelope {
    pub fn parametric(t_rise: f64, t_decay: f64) -> Result<Self> {
        let env = Envelope::Parametric { t_rise, t_decay };
        env.validate()?;
        Ok(env)
    }

    /// Builds a tabulated envelope, rescaling the samples so the peak is 1.
    pub fn tabulated(dt: f64, samples: Vec<f64>) -> Result<Self> {
        let peak = samples.iter().cloned().fold(0.0_f64, f64::max);
        if !(peak > 0.0) {
            return Err(Error::invalid(
                "envelope_samples",
                "need at least one positive sample",
            ));
        }
        let samples = samples.into_iter().map(|s| s / peak).collect();
        let env = Envelope::Tabulated { dt, samples };
        env.validate()?;
        Ok(env)
    }

    /// Flat envelope `U = 1` on `[0, end]`.
    pub fn flat(end: f64) -> Result<Self> {
        Envelope::tabulated(end, vec![1.0, 1.0])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Envelope::Parametric { t_rise, t_decay } => {
                if !(t_rise.is_finite() && *t_rise > 0.0) {
                    return Err(Error::invalid(
                        "t_rise_us",
                        format!("must be > 0, got {t_rise}"),
                    ));
                }
                if !(t_decay.is_finite() && *t_decay > 0.0) {
                    return Err(Error::invalid(
                        "t_decay_us",
                        format!("must be > 0, got {t_decay}"),
                    ));
                }
            }
            Envelope::Tabulated { dt, samples } => {
                if !(dt.is_finite() && *dt > 0.0) {
                    return Err(Error::invalid(
                        "envelope_dt_us",
                        format!("must be > 0, got {dt}"),
                    ));
                }
                if samples.len() < 2 {
                    return Err(Error::invalid(
                        "envelope_samples",
                        "need at least two samples",
                    ));
                }
                if samples.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Error::invalid(
                        "envelope_samples",
                        "samples must be finite and >= 0",
                    ));
                }
                let peak = samples.iter().cloned().fold(0.0_f64, f64::max);
                if (peak - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(
                        "envelope_samples",
                        format!("peak must be 1, got {peak}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Upper end of the domain on which the envelope is defined.
    pub fn end(&self) -> f64 {
        match self {
            Envelope::Parametric { .. } => f64::INFINITY,
            Envelope::Tabulated { dt, samples } => dt * (samples.len() - 1) as f64,
        }
    }

    /// `U(t)`. Fails outside `[0, end]`.
    pub fn value(&self, t: f64) -> Result<f64> {
        let end = self.end();
        if !(t >= 0.0 && t <= end) {
            return Err(Error::Domain { t, start: 0.0, end });
        }
        Ok(match self {
            Envelope::Parametric { t_rise, t_decay } => {
                if t == 0.0 {
                    return Ok(0.0);
                }
                let a = t_rise / t_decay;
                let x = t / t_rise;
                (a * (1.0 + x.ln() - x)).exp()
            }
            Envelope::Tabulated { dt, samples } => {
                let pos = t / dt;
                let k = (pos.floor() as usize).min(samples.len() - 2);
                let frac = pos - k as f64;
                samples[k] + frac * (samples[k + 1] - samples[k])
            }
        })
    }
}

/// Parameters of the dephased two-photon beat `1 + V e^{-γτ} cos 2πΔντ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Params {
    /// Visibility, in `[0, 1]`.
    pub v: f64,
    /// Dephasing rate, μs⁻¹.
    pub gamma: f64,
    /// Beat frequency magnitude, MHz.
    pub delta_nu: f64,
}

impl G2Params {
    pub fn new(v: f64, gamma: f64, delta_nu: f64) -> Result<Self> {
        let p = G2Params { v, gamma, delta_nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v.is_finite() && (0.0..=1.0).contains(&self.v)) {
            return Err(Error::invalid(
                "v",
                format!("must lie in [0, 1], got {}", self.v),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(
                "gamma",
                format!("must be >= 0, got {}", self.gamma),
            ));
        }
        if !(self.delta_nu.is_finite() && self.delta_nu >= 0.0) {
            return Err(Error::invalid(
                "delta_nu",
                format!("must be >= 0, got {}", self.delta_nu),
            ));
        }
        Ok(())
    }
}

/// Single-realization detector intensity
/// `U(t) [i1 + i2 + 2 sqrt(i1 i2) cos(2π Δν t + Δφ)]` with the signed beat of
/// `pair`.
pub fn beat_intensity(t: f64, env: &Envelope, pair: &FieldPair, delta_phi: f64) -> Result<f64> {
    let u = env.value(t)?;
    let cross = 2.0 * (pair.i1 * pair.i2).sqrt();
    let phase = TAU * beat_frequency(pair) * t + delta_phi;
    Ok((u * (pair.i1 + pair.i2 + cross * phase.cos())).max(0.0))
}

/// Two-photon visibility `2 i1 i2 / (i1 + i2)^2`; 1/2 at balance.
pub fn visibility(i1: f64, i2: f64) -> Result<f64> {
    let total = i1 + i2;
    if !(total > 0.0) {
        return Err(Error::ZeroIntensity);
    }
    Ok(2.0 * i1 * i2 / (total * total))
}

/// Normalized correlation `1 + V e^{-γτ} cos(2π Δν τ)`.
pub fn g2_model(tau: f64, p: &G2Params) -> f64 {
    1.0 + p.v * dephasing_factor(p.gamma, tau) * (TAU * p.delta_nu * tau).cos()
}

/// Phase-coherence decay `e^{-γτ}`.
pub fn dephasing_factor(gamma: f64, tau: f64) -> f64 {
    (-gamma * tau).exp()
}

/// Unnormalized two-time correlation
/// `U(t_p) U(t_p+τ) [(i1+i2)^2 + 2 i1 i2 e^{-γτ} cos(2π Δν τ)]`.
pub fn gamma2_model(tau: f64, u_tp: f64, u_tp_tau: f64, pair: &FieldPair, gamma: f64) -> f64 {
    let total = pair.i1 + pair.i2;
    let osc = 2.0
        * pair.i1
        * pair.i2
        * dephasing_factor(gamma, tau)
        * (TAU * beat_frequency(pair) * tau).cos();
    u_tp * u_tp_tau * (total * total + osc)
}

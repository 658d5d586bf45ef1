use beatlab::analyze::{find_peak, mean_of_traces, stream_g2, stream_mean};
use beatlab::fit::{g2_pipeline, FitOptions};
use beatlab::model::{g2_model, visibility, Envelope, FieldPair, G2Params};
use beatlab::reduce::Execution;
use beatlab::simulate::{simulate_ensemble, AmplitudeMode, ExperimentConfig};

fn short_config(n_pulses: usize, mode: AmplitudeMode) -> ExperimentConfig {
    ExperimentConfig {
        duration: 10.0,
        dt: 0.02,
        pair: FieldPair::with_beat(1.0, 1.0, 0.8).unwrap(),
        envelope: Envelope::parametric(1.5, 2.0).unwrap(),
        amplitude_mode: mode,
        gamma: 0.5,
        n_pulses,
        master_seed: 77,
        ..ExperimentConfig::default()
    }
}

#[test]
fn g2_estimator_converges_with_ensemble_size() {
    let taus: Vec<f64> = (0..=60).map(|k| 0.05 * k as f64).collect();
    let mut errors = Vec::new();
    for n in [1_000, 10_000, 100_000] {
        let cfg = short_config(n, AmplitudeMode::Coherent);
        let t_p = 2.0;
        let est = stream_g2(&cfg, Execution::Parallel, t_p, &taus).unwrap();
        let truth = G2Params {
            v: visibility(1.0, 1.0).unwrap(),
            gamma: cfg.gamma,
            delta_nu: cfg.pair.beat_frequency(),
        };
        let sup = est
            .taus
            .iter()
            .zip(&est.g2)
            .map(|(t, g)| (g - g2_model(*t, &truth)).abs())
            .fold(0.0, f64::max);
        errors.push(sup);
    }
    assert!(errors[2] < errors[1] && errors[1] < errors[0], "{errors:?}");
    assert!(errors[2] < 0.02, "{errors:?}");
}

#[test]
fn zero_delay_bunching_respects_classical_bound() {
    for mode in [AmplitudeMode::Coherent, AmplitudeMode::Thermal] {
        let cfg = short_config(4_000, mode);
        let ens = simulate_ensemble(&cfg).unwrap();
        let mean = mean_of_traces(&ens.traces).unwrap();
        let t_p = find_peak(&mean).unwrap();
        let k = ((t_p - ens.traces[0].t0) / cfg.dt).round() as usize;
        let xs: Vec<f64> = ens.traces.iter().map(|t| t.samples[k]).collect();
        let n = xs.len() as f64;
        let m1 = xs.iter().sum::<f64>() / n;
        let sq: Vec<f64> = xs.iter().map(|x| x * x / (m1 * m1)).collect();
        let g0 = sq.iter().sum::<f64>() / n;
        let var = sq.iter().map(|s| (s - g0).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(g0 >= 1.0 - 3.0 * se, "{mode:?}: g2(0) = {g0}, se = {se}");
    }
}

#[test]
fn pipeline_recovers_parameters_end_to_end() {
    let cfg = short_config(20_000, AmplitudeMode::Coherent);
    let run = g2_pipeline(&cfg, Execution::Parallel, &FitOptions::default()).unwrap();
    let p = run.fit.params;
    assert!(run.fit.converged && run.fit.delta_nu_identifiable);
    assert!((p.v - 0.5).abs() < 0.05, "{p:?}");
    assert!((p.gamma / 0.5 - 1.0).abs() < 0.2, "{p:?}");
    assert!((p.delta_nu / 0.8 - 1.0).abs() < 0.03, "{p:?}");
}

#[test]
fn serial_and_parallel_means_agree_bitwise() {
    let cfg = short_config(300, AmplitudeMode::Thermal);
    let a = stream_mean(&cfg, Execution::Serial).unwrap();
    let b = stream_mean(&cfg, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

//! Browser bindings: simulate a stream and watch online imputation error,
//! run change-point detection, and compare a fitted correlation with the
//! generating one.

use copula_stream::cpd::{online_cpd_loop, BatchStatus, CpdLoopConfig};
use copula_stream::em::{batch_bounds, fit_minibatch, MinibatchConfig};
use copula_stream::metrics::{column_medians, smae};
use copula_stream::synth::{generate_stream, SynthConfig, SynthStream};
use copula_stream::{CopulaModel, EmConfig, OnlineEmState, StepSize};
use wasm_bindgen::prelude::*;

fn js_err(e: copula_stream::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn stream(n_per_segment: usize, changes: usize, missing_ratio: f64, seed: u64) -> Result<SynthStream, JsError> {
    let cfg = SynthConfig {
        missing_ratio,
        ..SynthConfig::segmented(n_per_segment, changes, seed)
    };
    cfg.validate().map_err(js_err)?;
    generate_stream(&cfg).map_err(js_err)
}

/// Per-batch SMAE (mean over kinds) of online imputation with a constant
/// step `gamma`, batches of 40. NaN marks a batch with nothing to score.
#[wasm_bindgen]
pub fn online_error_curve(
    n_per_segment: usize,
    changes: usize,
    missing_ratio: f64,
    gamma: f64,
    window: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let s = stream(n_per_segment, changes, missing_ratio, seed)?;
    let obs = s.observed();
    let p = s.kinds.len();
    let medians = column_medians(obs.view());
    let config = EmConfig {
        step: StepSize::Constant(gamma),
        ..EmConfig::default()
    };
    let model = CopulaModel::new(&s.kinds, window).map_err(js_err)?;
    let mut st = OnlineEmState::new(model, config).map_err(js_err)?;
    let mut curve = Vec::new();
    for (a, b) in batch_bounds(obs.nrows(), 40, p) {
        let out = st.process_batch(obs.slice(a, b)).map_err(js_err)?;
        let truth = s.truth.slice(a, b).to_owned();
        let r = smae(&out.imputed, &truth, &s.mask[a * p..b * p], &s.kinds, &medians).map_err(js_err)?;
        curve.push(r.mean_present().unwrap_or(f64::NAN));
    }
    Ok(curve)
}

/// Online detection over a segmented stream. Returns five numbers per
/// batch: end row, statistic, p-value, level and decision. The last three
/// are NaN for batches that were not tested.
#[wasm_bindgen]
pub fn detect_changes(
    n_per_segment: usize,
    changes: usize,
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let s = stream(n_per_segment, changes, 0.4, seed)?;
    let obs = s.observed();
    let model = CopulaModel::new(&s.kinds, 200).map_err(js_err)?;
    let st = OnlineEmState::new(model, EmConfig::default()).map_err(js_err)?;
    let cfg = CpdLoopConfig {
        replicates,
        alpha,
        seed,
        ..CpdLoopConfig::default()
    };
    let report = online_cpd_loop(st, obs.view(), &cfg).map_err(js_err)?;
    let mut out = Vec::with_capacity(report.records.len() * 5);
    for r in &report.records {
        let tested = r.status == BatchStatus::Tested;
        out.push(r.end_row as f64);
        out.push(r.statistic.unwrap_or(f64::NAN));
        out.push(r.p_value.unwrap_or(f64::NAN));
        out.push(r.alpha_t.unwrap_or(f64::NAN));
        out.push(if tested { f64::from(u8::from(r.decision)) } else { f64::NAN });
    }
    Ok(out)
}

/// Fits a stationary stream of `n` rows with minibatch EM. Returns the
/// generating correlation followed by the estimate, both row-major `p × p`
/// with `p = 15`.
#[wasm_bindgen]
pub fn fit_correlation(n: usize, missing_ratio: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let s = stream(n, 0, missing_ratio, seed)?;
    let obs = s.observed();
    let model = fit_minibatch(&s.kinds, obs.view(), &MinibatchConfig::default()).map_err(js_err)?;
    let truth = &s.sigmas[0];
    Ok(truth
        .transpose()
        .iter()
        .chain(model.sigma.transpose().iter())
        .copied()
        .collect())
}

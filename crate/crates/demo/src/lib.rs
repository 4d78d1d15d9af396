//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export is a thin wrapper over a plain function so the logic is
//! testable natively; JS numbers cross the boundary as `f64` or `u32`.

use icfinv_core::data::{Dataset, Regime, Simulator, NUM_PARAMS};
use icfinv_core::sensitivity::{build_report, SensitivityConfig, SensitivityReport};
use icfinv_core::training::{lr_at, LrSchedule, MIN_LR};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js(e: icfinv_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Noisy simulator observation as JSON:
/// `{"size", "bands", "image", "scalars"}` with the image band-fastest.
pub fn sample_json(params: &[f64], size: usize, noise_seed: u64) -> icfinv_core::Result<String> {
    if params.len() != NUM_PARAMS {
        return Err(icfinv_core::Error::Dimension(format!(
            "expected {NUM_PARAMS} parameters, got {}",
            params.len()
        )));
    }
    let obs = Simulator::new(size)?.forward(params, noise_seed)?;
    Ok(json!({ "size": size, "bands": 4, "image": obs.image, "scalars": obs.scalars }).to_string())
}

/// Learning rate of every epoch under warmup then cosine decay.
pub fn schedule(
    base_lr: f64,
    warmup_epochs: usize,
    epochs: usize,
) -> icfinv_core::Result<Vec<f64>> {
    let s = LrSchedule::new(base_lr, MIN_LR, warmup_epochs, epochs)?;
    (0..epochs).map(|e| lr_at(&s, e)).collect()
}

/// Sensitivity report on a freshly simulated finetune-regime dataset.
pub fn sensitivity(
    n: usize,
    size: usize,
    seed: u64,
    k: usize,
    lambda: f64,
) -> icfinv_core::Result<SensitivityReport> {
    let data = Dataset::generate(n, size, seed, Regime::Finetune)?;
    let cfg = SensitivityConfig {
        k,
        lambda,
        ..SensitivityConfig::default()
    };
    build_report(&data, &cfg)
}

#[wasm_bindgen]
pub fn render_sample(params: Vec<f64>, size: usize, noise_seed: u32) -> Result<String, JsError> {
    sample_json(&params, size, noise_seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn lr_curve(base_lr: f64, warmup_epochs: usize, epochs: usize) -> Result<Vec<f64>, JsError> {
    schedule(base_lr, warmup_epochs, epochs).map_err(js)
}

/// Report as JSON (coefficients are row per feature, column per parameter).
#[wasm_bindgen]
pub fn sensitivity_map(
    n: usize,
    size: usize,
    seed: u32,
    k: usize,
    lambda: f64,
) -> Result<String, JsError> {
    let report = sensitivity(n, size, seed.into(), k, lambda).map_err(js)?;
    serde_json::to_string(&report).map_err(|e| JsError::new(&e.to_string()))
}

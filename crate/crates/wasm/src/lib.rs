//! wasm-bindgen bindings for the static demo page in `www/`.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(e: rulepilot_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// A synthetic rule system held in memory between calls.
#[wasm_bindgen]
pub struct RuleLab(demo::Demo);

#[wasm_bindgen]
impl RuleLab {
    #[wasm_bindgen(constructor)]
    pub fn new(rows: usize, seed: u64) -> Result<RuleLab, JsError> {
        demo::Demo::new(rows, seed).map(RuleLab).map_err(js)
    }

    pub fn summary(&self) -> Result<String, JsError> {
        self.0.summary().map_err(js)
    }

    pub fn optimize(&self, config: &str) -> Result<String, JsError> {
        self.0.optimize(config).map_err(js)
    }

    #[wasm_bindgen(js_name = rhoSweep)]
    pub fn rho_sweep(&self, step: f64, evaluations: u64, seed: u64) -> Result<String, JsError> {
        self.0.rho_sweep(step, evaluations, seed).map_err(js)
    }
}

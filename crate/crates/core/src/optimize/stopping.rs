use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_EVALUATIONS: u64 = 10_000;

/// When a search stops. A search ends as soon as any configured bound is hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingCriteria {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_evaluations: Option<u64>,
    /// Wall-clock budget. Results then depend on machine speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
    /// Stop when the best loss improved by less than `epsilon` over the last
    /// `window` evaluations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
}

impl Default for StoppingCriteria {
    fn default() -> Self {
        Self::evaluations(DEFAULT_MAX_EVALUATIONS)
    }
}

impl StoppingCriteria {
    pub fn evaluations(n: u64) -> Self {
        Self {
            max_evaluations: Some(n),
            max_seconds: None,
            epsilon: None,
            window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("stopping: {m}")));
        if self.max_evaluations.is_none() && self.max_seconds.is_none() && self.epsilon.is_none() {
            return bad("at least one criterion is required");
        }
        if self.max_seconds.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return bad("max_seconds must be positive");
        }
        match (self.epsilon, self.window) {
            (Some(e), Some(w)) if e.is_finite() && e >= 0.0 && w > 0 => {}
            (None, None) => {}
            _ => return bad("epsilon needs a non-negative value and a positive window"),
        }
        Ok(())
    }
}

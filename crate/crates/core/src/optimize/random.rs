use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream, RANDOM_SEARCH};
use super::shuffle::random_priority_shuffle;
use super::{SearchContext, Tracker};
use crate::error::{Error, Result};
use crate::model::{Dataset, PriorityVector, INACTIVE};

const BATCH: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomParams {
    /// Probability a rule is switched off.
    #[serde(rename = "rho")]
    pub shutoff: f64,
    /// Probability a rule gets another priority of the same action.
    #[serde(rename = "gamma", default)]
    pub shuffle: f64,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            shutoff: 0.4,
            shuffle: 0.0,
        }
    }
}

impl RandomParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.shutoff), ("gamma", self.shuffle)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidTheta(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Candidate number `ordinal`: a perturbed copy of the original vector.
pub fn candidate(params: &RandomParams, data: &Dataset, seed: u64, ordinal: u64) -> PriorityVector {
    let mut rng = stream(seed, RANDOM_SEARCH, ordinal);
    let mut p = data.initial.clone();
    for (i, r) in data.rules.rules().iter().enumerate() {
        if r.frozen {
            continue;
        }
        // fixed number of draws per rule keeps streams aligned across settings
        let u_shuffle: f64 = rng.random();
        let u_off: f64 = rng.random();
        if u_shuffle < params.shuffle {
            let alphabet = data.action_map.alphabet(r.action);
            p.set(i, random_priority_shuffle(p.get(i), alphabet, &mut rng));
        }
        if u_off < params.shutoff && !r.mandatory {
            p.set(i, INACTIVE);
        }
    }
    p
}

pub(crate) fn search(params: &RandomParams, ctx: &SearchContext<'_>, tracker: &mut Tracker<'_>, seed: u64) -> Result<()> {
    let mut next = 0u64;
    while !tracker.should_stop() {
        let size = BATCH.min(tracker.remaining());
        let cands: Vec<PriorityVector> = (next..next + size)
            .map(|i| candidate(params, ctx.data(), seed, i))
            .collect();
        let reports = ctx.evaluate_batch(&cands)?;
        let done = tracker.record_batch(&cands, &reports);
        next += size;
        if done < cands.len() {
            break;
        }
    }
    Ok(())
}

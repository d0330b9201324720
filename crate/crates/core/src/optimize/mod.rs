//! Search over priority vectors.
//!
//! Every method starts from the deployed configuration and its baseline
//! report, generates candidate vectors, and keeps the one with the strictly
//! lowest loss. Candidates are produced in batches that may be evaluated in
//! parallel; bookkeeping always happens in candidate order, so a fixed seed
//! yields the same result whatever the worker count.

pub mod arp;
pub mod genetic;
pub mod greedy;
pub mod random;
pub mod rng;
pub mod shuffle;
pub mod stopping;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use arp::augment_rules_pool;
pub use genetic::{GeneticParams, MutationKind};
pub use greedy::GreedyParams;
pub use random::RandomParams;
pub use shuffle::random_priority_shuffle;
pub use stopping::StoppingCriteria;

use crate::error::{Error, Result};
use crate::eval::{EvaluationReport, Evaluator};
use crate::loss::LossSpec;
use crate::model::{Dataset, PriorityVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "theta", rename_all = "lowercase")]
pub enum Method {
    Random(RandomParams),
    Greedy(GreedyParams),
    Genetic(GeneticParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Random(_) => "random",
            Method::Greedy(_) => "greedy",
            Method::Genetic(_) => "genetic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::Random(p) => p.validate(),
            Method::Greedy(p) => p.validate(),
            Method::Genetic(p) => p.validate(),
        }
    }
}

/// Everything a search needs besides its parameters.
pub struct SearchContext<'a> {
    pub evaluator: &'a Evaluator<'a>,
    pub loss: &'a LossSpec,
    /// Report of the deployed configuration.
    pub baseline: &'a EvaluationReport,
}

impl<'a> SearchContext<'a> {
    pub fn data(&self) -> &Dataset {
        self.evaluator.data()
    }

    pub fn evaluate(&self, p: &PriorityVector) -> Result<EvaluationReport> {
        self.evaluator.evaluate(p, self.loss, Some(self.baseline))
    }

    pub fn evaluate_batch(&self, candidates: &[PriorityVector]) -> Result<Vec<EvaluationReport>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            candidates.par_iter().map(|p| self.evaluate(p)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            candidates.iter().map(|p| self.evaluate(p)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub eval_index: u64,
    pub candidate_loss: f64,
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub best: PriorityVector,
    pub best_report: EvaluationReport,
    pub trace: Vec<TraceRecord>,
    pub evaluations: u64,
    /// Greedy only: rule indices in the order they were switched on.
    pub inclusion_order: Vec<usize>,
}

pub type Observer<'o> = dyn FnMut(&PriorityVector, &EvaluationReport) + 'o;

/// Best-so-far bookkeeping, budget and stopping checks.
pub(crate) struct Tracker<'o> {
    best: PriorityVector,
    best_report: EvaluationReport,
    trace: Vec<TraceRecord>,
    stopping: StoppingCriteria,
    started: Option<Instant>,
    observer: Option<&'o mut Observer<'o>>,
}

impl<'o> Tracker<'o> {
    fn new(
        initial: &PriorityVector,
        baseline: &EvaluationReport,
        stopping: StoppingCriteria,
        observer: Option<&'o mut Observer<'o>>,
    ) -> Self {
        Self {
            best: initial.clone(),
            best_report: baseline.clone(),
            trace: Vec::new(),
            stopping,
            // Instant is unavailable on some targets; only read it when asked to
            started: stopping.max_seconds.map(|_| Instant::now()),
            observer,
        }
    }

    pub(crate) fn evaluations(&self) -> u64 {
        self.trace.len() as u64
    }

    pub(crate) fn remaining(&self) -> u64 {
        self.stopping
            .max_evaluations
            .map_or(u64::MAX, |n| n.saturating_sub(self.evaluations()))
    }

    pub(crate) fn should_stop(&self) -> bool {
        if self.remaining() == 0 {
            return true;
        }
        if let (Some(limit), Some(t0)) = (self.stopping.max_seconds, self.started) {
            if t0.elapsed().as_secs_f64() >= limit {
                return true;
            }
        }
        if let (Some(eps), Some(window)) = (self.stopping.epsilon, self.stopping.window) {
            let n = self.trace.len() as u64;
            if n > window {
                let then = self.trace[(n - 1 - window) as usize].best_loss;
                let now = self.trace[(n - 1) as usize].best_loss;
                if then - now < eps {
                    return true;
                }
            }
        }
        false
    }

    /// Records one evaluated candidate; true when it became the new best.
    pub(crate) fn record(&mut self, p: &PriorityVector, r: &EvaluationReport) -> bool {
        if let Some(obs) = self.observer.as_mut() {
            obs(p, r);
        }
        let improved = r.loss < self.best_report.loss;
        if improved {
            self.best = p.clone();
            self.best_report = r.clone();
        }
        self.trace.push(TraceRecord {
            eval_index: self.trace.len() as u64,
            candidate_loss: r.loss,
            best_loss: self.best_report.loss,
        });
        improved
    }

    /// Records candidates in order, stopping early when a criterion fires.
    /// Returns how many were recorded.
    pub(crate) fn record_batch(&mut self, cands: &[PriorityVector], reports: &[EvaluationReport]) -> usize {
        for (i, (p, r)) in cands.iter().zip(reports).enumerate() {
            if self.should_stop() {
                return i;
            }
            self.record(p, r);
        }
        cands.len()
    }

    fn finish(self, inclusion_order: Vec<usize>) -> SearchResult {
        SearchResult {
            evaluations: self.trace.len() as u64,
            best: self.best,
            best_report: self.best_report,
            trace: self.trace,
            inclusion_order,
        }
    }
}

pub fn optimize(
    method: &Method,
    ctx: &SearchContext<'_>,
    stopping: &StoppingCriteria,
    seed: u64,
) -> Result<SearchResult> {
    run_search(method, ctx, stopping, seed, None)
}

/// Like [`optimize`], calling `observer` on every evaluated candidate in
/// evaluation order.
pub fn optimize_observed<'o>(
    method: &Method,
    ctx: &SearchContext<'_>,
    stopping: &StoppingCriteria,
    seed: u64,
    observer: &'o mut Observer<'o>,
) -> Result<SearchResult> {
    run_search(method, ctx, stopping, seed, Some(observer))
}

fn run_search<'o>(
    method: &Method,
    ctx: &SearchContext<'_>,
    stopping: &StoppingCriteria,
    seed: u64,
    observer: Option<&'o mut Observer<'o>>,
) -> Result<SearchResult> {
    method.validate()?;
    stopping.validate()?;
    let data = ctx.data();
    if data.initial.len() != data.rules.len() {
        return Err(Error::InvalidTheta("initial vector does not match rule pool".into()));
    }
    let mut tracker = Tracker::new(&data.initial, ctx.baseline, *stopping, observer);
    let order = match method {
        Method::Random(p) => {
            random::search(p, ctx, &mut tracker, seed)?;
            Vec::new()
        }
        Method::Greedy(p) => greedy::search(p, ctx, &mut tracker)?,
        Method::Genetic(p) => {
            genetic::search(p, ctx, &mut tracker, seed)?;
            Vec::new()
        }
    };
    Ok(tracker.finish(order))
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream, GENETIC};
use super::shuffle::random_priority_shuffle;
use super::{SearchContext, Tracker};
use crate::error::{Error, Result};
use crate::model::{Dataset, PriorityVector, INACTIVE};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutationKind {
    /// Toggle between inactive and the rule's own priority.
    #[default]
    Flip,
    /// Move the rule to another priority of the same action.
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneticParams {
    #[serde(rename = "psi")]
    pub population: usize,
    /// Fraction of each generation that survives.
    #[serde(rename = "alpha")]
    pub survivors: f64,
    /// Per-gene shut-off probability at start and mutation probability after.
    #[serde(rename = "rho")]
    pub mutation: f64,
    /// Number of generations; unbounded when absent.
    #[serde(rename = "r", default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<u64>,
    #[serde(rename = "operator", default)]
    pub mutation_kind: MutationKind,
}

impl Default for GeneticParams {
    fn default() -> Self {
        Self {
            population: 30,
            survivors: 0.05,
            mutation: 0.1,
            runs: None,
            mutation_kind: MutationKind::Flip,
        }
    }
}

impl GeneticParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTheta(m));
        if self.population < 2 {
            return bad(format!("psi must be at least 2, got {}", self.population));
        }
        if !(self.survivors > 0.0 && self.survivors < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.survivors));
        }
        if !(0.0..=1.0).contains(&self.mutation) {
            return bad(format!("rho must lie in [0, 1], got {}", self.mutation));
        }
        Ok(())
    }

    pub fn survivor_count(&self) -> usize {
        // guard against products like 0.1 * 30 = 3.0000000000000004
        let k = (self.survivors * self.population as f64 - 1e-9).ceil() as usize;
        k.clamp(1, self.population)
    }
}

pub fn initial_population(params: &GeneticParams, data: &Dataset, seed: u64) -> Vec<PriorityVector> {
    let mut rng = stream(seed, GENETIC, 0);
    (0..params.population)
        .map(|_| {
            let mut p = data.initial.clone();
            for (i, r) in data.rules.rules().iter().enumerate() {
                let u: f64 = rng.random();
                if u < params.mutation && !r.mandatory && !r.frozen {
                    p.set(i, INACTIVE);
                }
            }
            p
        })
        .collect()
}

/// One child: uniform crossover of two parents, then per-gene mutation.
pub fn breed<R: Rng + ?Sized>(
    params: &GeneticParams,
    data: &Dataset,
    mother: &PriorityVector,
    father: &PriorityVector,
    rng: &mut R,
) -> PriorityVector {
    let mut child = mother.clone();
    for i in 0..child.len() {
        if rng.random_bool(0.5) {
            child.set(i, father.get(i));
        }
    }
    for (i, r) in data.rules.rules().iter().enumerate() {
        let u: f64 = rng.random();
        if u >= params.mutation || r.frozen {
            continue;
        }
        match params.mutation_kind {
            MutationKind::Flip => {
                if r.mandatory {
                    continue;
                }
                let home = data.home_priority(i);
                child.set(i, if child.is_active(i) { INACTIVE } else { home });
            }
            MutationKind::Shuffle => {
                let alphabet = data.action_map.alphabet(r.action);
                child.set(i, random_priority_shuffle(data.home_priority(i), alphabet, rng));
            }
        }
    }
    child
}

pub(crate) fn search(params: &GeneticParams, ctx: &SearchContext<'_>, tracker: &mut Tracker<'_>, seed: u64) -> Result<()> {
    let data = ctx.data();
    let keep = params.survivor_count();
    let mut population = initial_population(params, data, seed);
    let mut generation = 0u64;
    while !tracker.should_stop() && params.runs.is_none_or(|r| generation < r) {
        let n = (tracker.remaining().min(population.len() as u64)) as usize;
        let reports = ctx.evaluate_batch(&population[..n])?;
        if tracker.record_batch(&population[..n], &reports) < population.len() {
            break;
        }
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| reports[a].loss.total_cmp(&reports[b].loss).then(a.cmp(&b)));
        let survivors: Vec<PriorityVector> = ranked[..keep].iter().map(|&i| population[i].clone()).collect();

        generation += 1;
        let mut rng = stream(seed, GENETIC, generation);
        let mut next = survivors.clone();
        while next.len() < params.population {
            let mother = &survivors[rng.random_range(0..keep)];
            let father = &survivors[rng.random_range(0..keep)];
            next.push(breed(params, data, mother, father, &mut rng));
        }
        population = next;
    }
    Ok(())
}

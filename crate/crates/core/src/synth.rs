//! Synthetic benchmark generator.
//!
//! Labels are placed uniformly at random; each rule gets a support and a
//! target precision (negative predictive value for accepts) from normal
//! distributions, and fires on exactly that many rows split between correct
//! and incorrect labels.

use std::ops::Range;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::bits::BitColumn;
use crate::model::{Action, ActionMap, Dataset, Rule, RuleSet, TriggerMatrix};
use crate::optimize::rng::{stream, SYNTH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Normal::new(self.mean, self.sd).expect("finite, non-negative sd").sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub rows: usize,
    pub frauds: usize,
    pub accept_rules: usize,
    pub alert_rules: usize,
    pub decline_rules: usize,
    pub accept_support: Gaussian,
    pub other_support: Gaussian,
    /// Share of legitimate rows among an accept rule's firings.
    pub accept_npv: Gaussian,
    /// Share of fraud among an alert or decline rule's firings.
    pub other_precision: Gaussian,
    pub accept_priorities: Vec<u32>,
    pub alert_priorities: Vec<u32>,
    pub decline_priorities: Vec<u32>,
    pub splits: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 225_000,
            frauds: 11_250,
            accept_rules: 8,
            alert_rules: 30,
            decline_rules: 60,
            accept_support: Gaussian {
                mean: 45_000.0,
                sd: 22_500.0,
            },
            other_support: Gaussian { mean: 22.5, sd: 225.0 },
            accept_npv: Gaussian { mean: 0.75, sd: 0.20 },
            other_precision: Gaussian { mean: 0.17, sd: 0.05 },
            accept_priorities: vec![0, 1, 5, 6, 10],
            alert_priorities: vec![2, 4, 7, 9],
            decline_priorities: vec![3, 8],
            splits: 3,
        }
    }
}

impl SynthConfig {
    /// Same shape at `rows` transactions; accept supports shrink in
    /// proportion, the rest is unchanged.
    pub fn small(rows: usize) -> Self {
        let d = Self::default();
        let f = rows as f64 / d.rows as f64;
        Self {
            rows,
            frauds: rows / 20,
            accept_support: Gaussian {
                mean: d.accept_support.mean * f,
                sd: d.accept_support.sd * f,
            },
            ..d
        }
    }

    pub fn action_map(&self) -> ActionMap {
        ActionMap::from_pairs(
            [
                (&self.accept_priorities, Action::Accept),
                (&self.alert_priorities, Action::Alert),
                (&self.decline_priorities, Action::Decline),
            ]
            .into_iter()
            .flat_map(|(ps, a)| ps.iter().map(move |&p| (p, a))),
        )
    }
}

/// What the generator aimed for, per rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleSpec {
    pub id: String,
    pub action: Action,
    pub priority: u32,
    /// Support after rounding and clamping.
    pub support: usize,
    /// Target precision (NPV for accepts) after clamping.
    pub quality: f64,
    pub correct: usize,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    /// Contiguous train, validation and test row ranges.
    pub splits: Vec<Range<usize>>,
    pub specs: Vec<RuleSpec>,
}

pub fn generate(seed: u64) -> SynthData {
    generate_with(&SynthConfig::default(), seed)
}

pub fn generate_with(cfg: &SynthConfig, seed: u64) -> SynthData {
    let n = cfg.rows;
    let mut rng = stream(seed, SYNTH, 0);

    let mut fraud_rows = sample(&mut rng, n, cfg.frauds).into_vec();
    fraud_rows.sort_unstable();
    let labels = BitColumn::from_indices(n, fraud_rows.iter().copied());
    let legit_rows: Vec<usize> = (0..n).filter(|&i| !labels.get(i)).collect();

    let total = cfg.accept_rules + cfg.alert_rules + cfg.decline_rules;
    let width = total.to_string().len().max(2);
    let kinds = [
        (Action::Accept, cfg.accept_rules, &cfg.accept_priorities),
        (Action::Alert, cfg.alert_rules, &cfg.alert_priorities),
        (Action::Decline, cfg.decline_rules, &cfg.decline_priorities),
    ];

    let mut rules = Vec::with_capacity(total);
    let mut columns = Vec::with_capacity(total);
    let mut specs = Vec::with_capacity(total);
    for (action, count, alphabet) in kinds {
        let (support_dist, quality_dist, correct_pool, wrong_pool) = match action {
            Action::Accept => (&cfg.accept_support, &cfg.accept_npv, &legit_rows, &fraud_rows),
            _ => (&cfg.other_support, &cfg.other_precision, &fraud_rows, &legit_rows),
        };
        for _ in 0..count {
            let id = format!("R{:0width$}", rules.len() + 1);
            let s = (support_dist.draw(&mut rng).round()).clamp(1.0, n as f64) as usize;
            let q = quality_dist.draw(&mut rng).clamp(0.01, 0.99);
            let s = fit_support(s, q, correct_pool.len(), wrong_pool.len());
            let correct = (q * s as f64).round() as usize;
            let priority = alphabet[rng.random_range(0..alphabet.len())];

            let mut fired: Vec<usize> = sample(&mut rng, correct_pool.len(), correct)
                .into_iter()
                .map(|i| correct_pool[i])
                .collect();
            fired.extend(
                sample(&mut rng, wrong_pool.len(), s - correct)
                    .into_iter()
                    .map(|i| wrong_pool[i]),
            );
            columns.push(BitColumn::from_indices(n, fired));
            rules.push(Rule::new(id.clone(), action, priority));
            specs.push(RuleSpec {
                id,
                action,
                priority,
                support: s,
                quality: q,
                correct,
            });
        }
    }

    let timestamps = (0..n as i64).map(|i| i * 1000).collect();
    let triggers = TriggerMatrix::new(columns, timestamps, labels, Vec::new()).expect("generated shapes agree");
    let dataset =
        Dataset::validate(RuleSet::new(rules), cfg.action_map(), triggers).expect("generated rules are consistent");
    let part = n / cfg.splits.max(1);
    let splits = (0..cfg.splits)
        .map(|k| k * part..if k + 1 == cfg.splits { n } else { (k + 1) * part })
        .collect();
    SynthData {
        dataset,
        splits,
        specs,
    }
}

/// Largest support not above `s` whose correct/incorrect split at quality
/// `q` fits in the available label pools.
fn fit_support(s: usize, q: f64, correct_pool: usize, wrong_pool: usize) -> usize {
    let fits = |s: usize| {
        let c = (q * s as f64).round() as usize;
        c <= correct_pool && s - c <= wrong_pool
    };
    if fits(s) {
        return s;
    }
    let bound = (correct_pool as f64 / q).min(wrong_pool as f64 / (1.0 - q));
    let mut t = (bound.floor() as usize + 3).min(s);
    while t > 1 && !fits(t) {
        t -= 1;
    }
    t
}

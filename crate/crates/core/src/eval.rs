//! Candidate evaluation.
//!
//! [`Evaluator`] resolves decisions for 64 transactions at a time: active
//! rule columns are OR-ed into one bitmap per priority level, then levels are
//! scanned from the highest priority down and each transaction takes the
//! action of the first level that covers it. [`evaluate_rowwise`] walks the
//! same pipeline one transaction at a time (mask, blacklist filter, decision,
//! outcome) and serves as the reference path.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bits::BitColumn;
use crate::blacklist::{handle_bd, DependencyIndex};
use crate::error::{Error, Result, Violation};
use crate::loss::LossSpec;
use crate::model::{mask, Action, ActionMap, Dataset, Priority, PriorityVector, INACTIVE};

/// Action of the highest active priority; accept when nothing is active.
pub fn decide(resolved: &[Priority], amap: &ActionMap) -> Action {
    match resolved.iter().copied().max() {
        Some(p) if p > INACTIVE => amap
            .get(p)
            .unwrap_or_else(|| panic!("priority {p} has no action")),
        _ => Action::Accept,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

pub fn get_truth_value(decision: Action, fraud: bool) -> Outcome {
    match (decision, fraud) {
        (Action::Accept, false) => Outcome::TrueNegative,
        (Action::Accept, true) => Outcome::FalseNegative,
        (_, false) => Outcome::FalsePositive,
        (_, true) => Outcome::TruePositive,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub legit: u64,
    pub fraud: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.legit + self.fraud
    }
}

/// Decision-by-label counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub accept: LabelCounts,
    pub alert: LabelCounts,
    pub decline: LabelCounts,
}

impl DecisionCounts {
    pub fn add(&mut self, decision: Action, fraud: bool) {
        let cell = match decision {
            Action::Accept => &mut self.accept,
            Action::Alert => &mut self.alert,
            Action::Decline => &mut self.decline,
        };
        if fraud {
            cell.fraud += 1;
        } else {
            cell.legit += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.accept.total() + self.alert.total() + self.decline.total()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub counts: DecisionCounts,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub recall: f64,
    pub fpr: f64,
    pub alert_rate: f64,
    pub rules_active_fraction: f64,
    pub active_rules: usize,
    pub pool_rules: usize,
    pub loss: f64,
    /// No fraud labels; recall reported as 0.
    pub recall_undefined: bool,
    /// No legitimate labels; FPR reported as 0.
    pub fpr_undefined: bool,
}

impl EvaluationReport {
    /// Metrics from counts; `loss` is left at zero.
    pub fn from_counts(counts: DecisionCounts, active_rules: usize, pool_rules: usize) -> Self {
        let tp = counts.alert.fraud + counts.decline.fraud;
        let fp = counts.alert.legit + counts.decline.legit;
        let tn = counts.accept.legit;
        let fn_ = counts.accept.fraud;
        let n = counts.total();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            counts,
            tp,
            fp,
            tn,
            fn_,
            recall: ratio(tp, tp + fn_),
            fpr: ratio(fp, fp + tn),
            alert_rate: ratio(counts.alert.total(), n),
            rules_active_fraction: ratio(active_rules as u64, pool_rules as u64),
            active_rules,
            pool_rules,
            loss: 0.0,
            recall_undefined: tp + fn_ == 0,
            fpr_undefined: fp + tn == 0,
        }
    }

    pub fn rows(&self) -> u64 {
        self.counts.total()
    }
}

/// Distinct base rules with at least one active column.
pub fn active_base_rules(data: &Dataset, p: &PriorityVector) -> usize {
    let mut seen = vec![false; data.rules.base_count()];
    for i in 0..p.len() {
        if p.is_active(i) {
            seen[data.rules.origin(i)] = true;
        }
    }
    seen.into_iter().filter(|&b| b).count()
}

/// Reference evaluation, one transaction at a time.
pub fn evaluate_rowwise(data: &Dataset, deps: &DependencyIndex, p: &PriorityVector) -> DecisionCounts {
    let mut counts = DecisionCounts::default();
    for (row, d) in decisions_rowwise(data, deps, p).into_iter().enumerate() {
        counts.add(d, data.triggers.label(row));
    }
    counts
}

pub fn decisions_rowwise(data: &Dataset, deps: &DependencyIndex, p: &PriorityVector) -> Vec<Action> {
    let is_checker: Vec<bool> = data.rules.rules().iter().map(|r| r.is_checker()).collect();
    (0..data.triggers.rows())
        .map(|row| {
            let masked = mask(&data.triggers.row_firings(row), p);
            let resolved = handle_bd(&masked, deps.pairs(row), p, &is_checker);
            decide(&resolved, &data.action_map)
        })
        .collect()
}

struct CheckerSources {
    // (source rule, rows where that source enabled the checker)
    sources: Vec<(usize, BitColumn)>,
}

/// Prepared evaluator over one dataset and its blacklist dependencies.
pub struct Evaluator<'a> {
    data: &'a Dataset,
    words: usize,
    /// Priority levels, highest first.
    levels: Vec<(u32, Action)>,
    level_of: HashMap<u32, usize>,
    checkers: Vec<Option<CheckerSources>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(data: &'a Dataset, deps: &DependencyIndex) -> Self {
        let n = data.triggers.rows();
        let levels: Vec<(u32, Action)> = data
            .action_map
            .entries()
            .iter()
            .rev()
            .map(|(&p, &a)| (p, a))
            .collect();
        let level_of = levels.iter().enumerate().map(|(i, &(p, _))| (p, i)).collect();

        let mut checkers: Vec<Option<CheckerSources>> = data
            .rules
            .rules()
            .iter()
            .map(|r| r.is_checker().then(|| CheckerSources { sources: Vec::new() }))
            .collect();
        for (row, pairs) in deps.rows() {
            for d in pairs {
                let Some(c) = checkers[d.checker].as_mut() else {
                    continue;
                };
                let slot = match c.sources.iter().position(|(s, _)| *s == d.source) {
                    Some(i) => i,
                    None => {
                        c.sources.push((d.source, BitColumn::zeros(n)));
                        c.sources.len() - 1
                    }
                };
                c.sources[slot].1.set(row, true);
            }
        }
        for c in checkers.iter_mut().flatten() {
            c.sources.sort_by_key(|(s, _)| *s);
        }
        Self {
            data,
            words: n.div_ceil(64),
            levels,
            level_of,
            checkers,
        }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    /// Runs the level scan and hands each 64-row block's alert and decline
    /// masks to `sink`.
    fn sweep(&self, p: &PriorityVector, mut sink: impl FnMut(usize, u64, u64)) -> Result<()> {
        let k = self.data.rules.len();
        if p.len() != k {
            return Err(Error::violations(vec![Violation::VectorLength {
                expected: k,
                found: p.len(),
            }]));
        }
        let mut level_bits: Vec<Option<Vec<u64>>> = vec![None; self.levels.len()];
        let mut effective = Vec::new();
        for j in 0..k {
            let pj = p.get(j);
            if pj <= INACTIVE {
                continue;
            }
            let level = *self.level_of.get(&(pj as u32)).ok_or_else(|| {
                Error::violations(vec![Violation::UnmappedPriority {
                    rule: self.data.rules.get(j).id.clone(),
                    priority: pj as i64,
                }])
            })?;
            let words: &[u64] = match &self.checkers[j] {
                Some(c) => {
                    effective.clear();
                    effective.resize(self.words, 0u64);
                    for (s, rows) in &c.sources {
                        if p.is_active(*s) {
                            for (e, w) in effective.iter_mut().zip(rows.words()) {
                                *e |= w;
                            }
                        }
                    }
                    &effective
                }
                None => self.data.triggers.column(j).words(),
            };
            let acc = level_bits[level].get_or_insert_with(|| vec![0; self.words]);
            for (a, w) in acc.iter_mut().zip(words) {
                *a |= w;
            }
        }
        let used: Vec<(Action, &[u64])> = level_bits
            .iter()
            .zip(&self.levels)
            .filter_map(|(bits, &(_, a))| bits.as_deref().map(|b| (a, b)))
            .collect();
        for w in 0..self.words {
            let mut decided = 0u64;
            let mut alert = 0u64;
            let mut decline = 0u64;
            for &(action, bits) in &used {
                let fresh = bits[w] & !decided;
                match action {
                    Action::Alert => alert |= fresh,
                    Action::Decline => decline |= fresh,
                    Action::Accept => {}
                }
                decided |= bits[w];
            }
            sink(w, alert, decline);
        }
        Ok(())
    }

    pub fn counts(&self, p: &PriorityVector) -> Result<DecisionCounts> {
        let n = self.data.triggers.rows();
        let labels = self.data.triggers.labels().words();
        let mut c = DecisionCounts::default();
        self.sweep(p, |w, alert, decline| {
            let valid = if w + 1 == self.words {
                BitColumn::tail_mask(n)
            } else {
                u64::MAX
            };
            let fraud = labels[w];
            let legit = !fraud & valid;
            c.alert.fraud += (alert & fraud).count_ones() as u64;
            c.alert.legit += (alert & legit).count_ones() as u64;
            c.decline.fraud += (decline & fraud).count_ones() as u64;
            c.decline.legit += (decline & legit).count_ones() as u64;
        })?;
        let frauds = self.data.triggers.fraud_count() as u64;
        c.accept.fraud = frauds - c.alert.fraud - c.decline.fraud;
        c.accept.legit = (n as u64 - frauds) - c.alert.legit - c.decline.legit;
        Ok(c)
    }

    pub fn decisions(&self, p: &PriorityVector) -> Result<Vec<Action>> {
        let n = self.data.triggers.rows();
        let mut out = vec![Action::Accept; n];
        self.sweep(p, |w, alert, decline| {
            for b in 0..64 {
                let row = w * 64 + b;
                if row >= n {
                    break;
                }
                if alert >> b & 1 == 1 {
                    out[row] = Action::Alert;
                } else if decline >> b & 1 == 1 {
                    out[row] = Action::Decline;
                }
            }
        })?;
        Ok(out)
    }

    /// Report without a loss value.
    pub fn metrics(&self, p: &PriorityVector) -> Result<EvaluationReport> {
        let counts = self.counts(p)?;
        Ok(EvaluationReport::from_counts(
            counts,
            active_base_rules(self.data, p),
            self.data.rules.base_count(),
        ))
    }

    pub fn evaluate(
        &self,
        p: &PriorityVector,
        loss: &LossSpec,
        baseline: Option<&EvaluationReport>,
    ) -> Result<EvaluationReport> {
        if loss.needs_baseline() && baseline.is_none() {
            return Err(Error::MissingBaseline);
        }
        let mut r = self.metrics(p)?;
        r.loss = loss.apply(&r, baseline)?;
        Ok(r)
    }

    /// Evaluates a configuration against itself, as done for the deployed
    /// system before any search.
    pub fn evaluate_baseline(&self, p: &PriorityVector, loss: &LossSpec) -> Result<EvaluationReport> {
        let mut r = self.metrics(p)?;
        r.loss = loss.apply(&r, Some(&r))?;
        Ok(r)
    }

    /// Per-rule diagnostics: how often each rule fires, and on how much fraud.
    pub fn rule_statistics(&self) -> Vec<RuleStatistics> {
        let labels = self.data.triggers.labels().words();
        self.data
            .rules
            .rules()
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let col = self.data.triggers.column(j).words();
                let fraud = col.iter().zip(labels).map(|(c, l)| (c & l).count_ones() as u64).sum();
                let fired = self.data.triggers.column(j).count_ones() as u64;
                RuleStatistics {
                    id: r.id.clone(),
                    action: r.action,
                    fired,
                    fraud,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleStatistics {
    pub id: String,
    pub action: Action,
    pub fired: u64,
    pub fraud: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_ruleset, Rule, RuleSet, TriggerMatrix};
    use proptest::prelude::*;

    fn amap() -> ActionMap {
        ActionMap::from_pairs([(1, Action::Accept), (2, Action::Alert), (3, Action::Decline), (5, Action::Alert), (8, Action::Decline)])
    }

    fn three_rows() -> Dataset {
        let rules = RuleSet::new(vec![
            Rule::new("R1", Action::Decline, 3),
            Rule::new("R2", Action::Accept, 1),
        ]);
        let m = TriggerMatrix::from_rows(
            &[vec![true, true], vec![false, true], vec![false, false]],
            vec![1, 2, 3],
            &[true, false, true],
        )
        .unwrap();
        validate_ruleset(rules, amap(), m).unwrap()
    }

    #[test]
    fn decide_examples() {
        let m = amap();
        assert_eq!(decide(&[-1, 5, 3], &m), Action::Alert);
        assert_eq!(decide(&[-1, -1, -1], &m), Action::Accept);
        assert_eq!(decide(&[8], &m), Action::Decline);
    }

    #[test]
    fn truth_values() {
        assert_eq!(get_truth_value(Action::Accept, true), Outcome::FalseNegative);
        assert_eq!(get_truth_value(Action::Accept, false), Outcome::TrueNegative);
        assert_eq!(get_truth_value(Action::Alert, false), Outcome::FalsePositive);
        assert_eq!(get_truth_value(Action::Decline, true), Outcome::TruePositive);
    }

    #[test]
    fn three_transaction_example() {
        let d = three_rows();
        let ev = Evaluator::new(&d, &DependencyIndex::empty());
        let r = ev.evaluate(&d.initial, &LossSpec::Synthetic, None).unwrap();
        assert_eq!(
            ev.decisions(&d.initial).unwrap(),
            vec![Action::Decline, Action::Accept, Action::Accept]
        );
        assert_eq!((r.tp, r.tn, r.fn_, r.fp), (1, 1, 1, 0));
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.fpr, 0.0);

        let off = PriorityVector::new(vec![-1, 1]);
        let r = ev.metrics(&off).unwrap();
        assert_eq!(r.fn_, 2);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.rules_active_fraction, 0.5);
    }

    #[test]
    fn all_inactive_legit_only() {
        let rules = RuleSet::new(vec![Rule::new("R1", Action::Decline, 3)]);
        let m = TriggerMatrix::from_rows(&[vec![true], vec![true]], vec![1, 2], &[false, false]).unwrap();
        let d = validate_ruleset(rules, amap(), m).unwrap();
        let ev = Evaluator::new(&d, &DependencyIndex::empty());
        let r = ev.metrics(&PriorityVector::inactive(1)).unwrap();
        assert_eq!(r.counts.accept.legit, 2);
        assert_eq!(r.fpr, 0.0);
        assert_eq!(r.recall, 0.0);
        assert!(r.recall_undefined);
    }

    #[test]
    fn constrained_loss_needs_baseline() {
        let d = three_rows();
        let ev = Evaluator::new(&d, &DependencyIndex::empty());
        assert!(matches!(ev.evaluate(&d.initial, &LossSpec::D1, None), Err(Error::MissingBaseline)));
        let base = ev.evaluate_baseline(&d.initial, &LossSpec::D1).unwrap();
        assert!(ev.evaluate(&d.initial, &LossSpec::D1, Some(&base)).is_ok());
    }

    // random dataset: k rules over a fixed action map, n rows
    fn dataset_strategy() -> impl Strategy<Value = (Dataset, Vec<PriorityVector>)> {
        let levels: Vec<(u32, Action)> = vec![(0, Action::Accept), (1, Action::Accept), (2, Action::Alert), (3, Action::Decline), (4, Action::Alert), (6, Action::Decline)];
        (1usize..8, 1usize..200).prop_flat_map(move |(k, n)| {
            let levels = levels.clone();
            (
                proptest::collection::vec(0..levels.len(), k),
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), k), n),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(proptest::collection::vec(proptest::option::of(0..levels.len()), k), 1..5),
            )
                .prop_map(move |(rule_levels, rows, labels, cands)| {
                    let rules = RuleSet::new(
                        rule_levels
                            .iter()
                            .enumerate()
                            .map(|(i, &l)| Rule::new(format!("R{i}"), levels[l].1, levels[l].0))
                            .collect(),
                    );
                    let m = TriggerMatrix::from_rows(&rows, (0..rows.len() as i64).collect(), &labels).unwrap();
                    let d = validate_ruleset(rules, ActionMap::from_pairs(levels.clone()), m).unwrap();
                    // candidate priorities restricted to the rule's own action
                    let cands = cands
                        .into_iter()
                        .map(|c| {
                            PriorityVector::new(
                                c.iter()
                                    .enumerate()
                                    .map(|(i, o)| match o {
                                        Some(l) if levels[*l].1 == d.rules.get(i).action => levels[*l].0 as i32,
                                        Some(_) => d.rules.get(i).priority as i32,
                                        None => -1,
                                    })
                                    .collect(),
                            )
                        })
                        .collect();
                    (d, cands)
                })
        })
    }

    proptest! {
        #[test]
        fn bitmap_engine_matches_rowwise((d, cands) in dataset_strategy()) {
            let deps = DependencyIndex::empty();
            let ev = Evaluator::new(&d, &deps);
            for p in &cands {
                prop_assert_eq!(ev.counts(p).unwrap(), evaluate_rowwise(&d, &deps, p));
                prop_assert_eq!(ev.decisions(p).unwrap(), decisions_rowwise(&d, &deps, p));
                prop_assert_eq!(ev.counts(p).unwrap().total(), d.triggers.rows() as u64);
            }
        }

        #[test]
        fn column_permutation_is_harmless((d, cands) in dataset_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let k = d.rules.len();
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let rules = RuleSet::new(perm.iter().map(|&j| d.rules.get(j).clone()).collect());
            let cols = perm.iter().map(|&j| d.triggers.column(j).clone()).collect();
            let m = TriggerMatrix::new(cols, d.triggers.timestamps().to_vec(), d.triggers.labels().clone(), vec![]).unwrap();
            let shuffled = validate_ruleset(rules, d.action_map.clone(), m).unwrap();
            let deps = DependencyIndex::empty();
            let (a, b) = (Evaluator::new(&d, &deps), Evaluator::new(&shuffled, &deps));
            for p in &cands {
                let q = PriorityVector::new(perm.iter().map(|&j| p.get(j)).collect());
                prop_assert_eq!(a.metrics(p).unwrap(), b.metrics(&q).unwrap());
            }
        }

        #[test]
        fn silent_rule_deactivation_keeps_counts((d, cands) in dataset_strategy()) {
            let deps = DependencyIndex::empty();
            let ev = Evaluator::new(&d, &deps);
            for p in &cands {
                for j in 0..d.rules.len() {
                    if d.triggers.column(j).count_ones() == 0 {
                        let mut q = p.clone();
                        q.set(j, -1);
                        prop_assert_eq!(ev.counts(p).unwrap(), ev.counts(&q).unwrap());
                    }
                }
            }
        }

        #[test]
        fn zeroing_a_non_maximal_cell_keeps_the_decision(
            cells in proptest::collection::vec(-1i32..7, 1..10),
            idx in any::<proptest::sample::Index>(),
        ) {
            let m = ActionMap::from_pairs([(0, Action::Accept), (1, Action::Accept), (2, Action::Alert), (3, Action::Decline), (4, Action::Alert), (5, Action::Accept), (6, Action::Decline)]);
            let i = idx.index(cells.len());
            let max = *cells.iter().max().unwrap();
            let mut zeroed = cells.clone();
            zeroed[i] = -1;
            if cells[i] < max || cells.iter().filter(|&&c| c == max).count() > 1 {
                prop_assert_eq!(decide(&cells, &m), decide(&zeroed, &m));
            }
        }
    }
}

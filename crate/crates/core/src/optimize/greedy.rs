use serde::{Deserialize, Serialize};

use super::{SearchContext, Tracker};
use crate::error::{Error, Result};
use crate::eval::EvaluationReport;
use crate::model::{PriorityVector, INACTIVE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyParams {
    #[serde(default)]
    pub backtracking: bool,
    /// Expansions between contractions; `None` means a tenth of the pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every: Option<usize>,
    /// Rules removed per contraction.
    #[serde(default = "one")]
    pub remove: usize,
}

fn one() -> usize {
    1
}

impl Default for GreedyParams {
    fn default() -> Self {
        Self {
            backtracking: false,
            every: None,
            remove: 1,
        }
    }
}

impl GreedyParams {
    pub fn validate(&self) -> Result<()> {
        if self.every == Some(0) {
            return Err(Error::InvalidTheta("every must be positive".into()));
        }
        if self.remove == 0 {
            return Err(Error::InvalidTheta("remove must be positive".into()));
        }
        Ok(())
    }
}

/// Returns the inclusion order.
pub(crate) fn search(params: &GreedyParams, ctx: &SearchContext<'_>, tracker: &mut Tracker<'_>) -> Result<Vec<usize>> {
    let data = ctx.data();
    let rules = data.rules.rules();
    let mut state = PriorityVector::new(
        rules
            .iter()
            .enumerate()
            .map(|(i, r)| if r.mandatory || r.frozen { data.initial.get(i) } else { INACTIVE })
            .collect(),
    );
    let pool: Vec<usize> = (0..rules.len()).filter(|&i| !rules[i].mandatory && !rules[i].frozen).collect();
    let mut eligible = vec![false; rules.len()];
    for &i in &pool {
        eligible[i] = true;
    }
    let mut order = Vec::new();
    let mut on = Vec::new();

    // the forced rules alone are a configuration too
    if tracker.should_stop() {
        return Ok(order);
    }
    let mut state_report = ctx.evaluate(&state)?;
    tracker.record(&state, &state_report);

    let every = params.every.unwrap_or((pool.len() / 10).max(1));
    while !tracker.should_stop() {
        let remaining: Vec<usize> = pool.iter().copied().filter(|&i| eligible[i]).collect();
        if remaining.is_empty() {
            break;
        }
        let cands: Vec<PriorityVector> = remaining
            .iter()
            .map(|&j| {
                let mut c = state.clone();
                c.set(j, data.home_priority(j));
                c
            })
            .collect();
        let reports = evaluate_limited(ctx, tracker, &cands)?;
        let done = tracker.record_batch(&cands[..reports.len()], &reports);
        if done < cands.len() {
            break;
        }
        let k = argmin(&reports);
        let j = remaining[k];
        state = cands[k].clone();
        state_report = reports[k].clone();
        eligible[j] = false;
        order.push(j);
        on.push(j);

        if params.backtracking && order.len() % every == 0 {
            for _ in 0..params.remove {
                if on.len() < 2 || tracker.should_stop() {
                    break;
                }
                let cands: Vec<PriorityVector> = on
                    .iter()
                    .map(|&j| {
                        let mut c = state.clone();
                        c.set(j, INACTIVE);
                        c
                    })
                    .collect();
                let reports = evaluate_limited(ctx, tracker, &cands)?;
                let done = tracker.record_batch(&cands[..reports.len()], &reports);
                if done < cands.len() {
                    return Ok(order);
                }
                let k = argmin(&reports);
                if reports[k].loss >= state_report.loss {
                    break;
                }
                state = cands[k].clone();
                state_report = reports[k].clone();
                on.remove(k);
            }
        }
    }
    Ok(order)
}

/// Evaluates at most as many candidates as the budget allows.
fn evaluate_limited(
    ctx: &SearchContext<'_>,
    tracker: &Tracker<'_>,
    cands: &[PriorityVector],
) -> Result<Vec<EvaluationReport>> {
    let n = (tracker.remaining().min(cands.len() as u64)) as usize;
    ctx.evaluate_batch(&cands[..n])
}

/// First index of the smallest loss.
fn argmin(reports: &[EvaluationReport]) -> usize {
    let mut k = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.loss < reports[k].loss {
            k = i;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blacklist::DependencyIndex;
    use crate::eval::Evaluator;
    use crate::loss::{GenericLoss, LossSpec, Metric, Term};
    use crate::model::{Action, ActionMap, Dataset, Rule, RuleSet, TriggerMatrix};
    use crate::optimize::{optimize, Method, SearchResult, StoppingCriteria};

    fn run(d: &Dataset, loss: &LossSpec, params: GreedyParams) -> SearchResult {
        let ev = Evaluator::new(d, &DependencyIndex::empty());
        let base = ev.evaluate_baseline(&d.initial, loss).unwrap();
        let ctx = SearchContext {
            evaluator: &ev,
            loss,
            baseline: &base,
        };
        optimize(&Method::Greedy(params), &ctx, &StoppingCriteria::evaluations(10_000), 0).unwrap()
    }

    fn linear(terms: &[(Metric, f64)]) -> LossSpec {
        LossSpec::Generic(GenericLoss {
            objective: terms.iter().map(|&(metric, weight)| Term { metric, weight }).collect(),
            ..GenericLoss::default()
        })
    }

    fn alerts(n: usize, fired: &[Vec<usize>], labels: &[bool]) -> Dataset {
        let amap = ActionMap::from_pairs([(1, Action::Alert)]);
        let rules = RuleSet::new((0..fired.len()).map(|j| Rule::new(format!("R{}", j + 1), Action::Alert, 1)).collect());
        let mut rows = vec![vec![false; fired.len()]; n];
        for (j, f) in fired.iter().enumerate() {
            for &i in f {
                rows[i][j] = true;
            }
        }
        let t = TriggerMatrix::from_rows(&rows, (0..n as i64).collect(), labels).unwrap();
        Dataset::validate(rules, amap, t).unwrap()
    }

    /// Recalls 70%, 69% and 20%; R2 and R3 each hurt R1 through shared
    /// false positives but together they beat it.
    #[test]
    fn greedy_can_miss_a_better_pair() {
        let labels: Vec<bool> = (0..200).map(|i| i < 100).collect();
        let r1: Vec<usize> = (0..70).chain(100..105).collect();
        let r2: Vec<usize> = (11..80).chain(105..120).collect();
        let r3: Vec<usize> = (0..11).chain(80..89).chain(105..120).collect();
        let d = alerts(200, &[r1, r2, r3], &labels);
        let loss = linear(&[(Metric::Recall, -1.0), (Metric::Fpr, 1.0)]);
        let r = run(&d, &loss, GreedyParams::default());
        assert_eq!(r.inclusion_order[0], 0);
        let ev = Evaluator::new(&d, &DependencyIndex::empty());
        let mut pair = ev.metrics(&PriorityVector::new(vec![-1, 1, 1])).unwrap();
        pair.loss = loss.apply(&pair, None).unwrap();
        assert!((pair.loss - (-0.74)).abs() < 1e-12);
        assert!(r.best_report.loss > pair.loss + 0.01);
    }

    #[test]
    fn single_rule_system() {
        let d = alerts(2, &[vec![0]], &[true, false]);
        let r = run(&d, &linear(&[(Metric::Recall, -1.0)]), GreedyParams::default());
        assert_eq!(r.inclusion_order, vec![0]);
        assert_eq!(r.evaluations, 2);
        assert_eq!(r.best.as_slice(), &[1]);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let d = alerts(2, &[vec![1], vec![0], vec![0]], &[true, false]);
        let r = run(&d, &linear(&[(Metric::Recall, -1.0)]), GreedyParams::default());
        assert_eq!(r.inclusion_order, vec![1, 0, 2]);
    }

    #[test]
    fn contraction_drops_a_rule_that_became_redundant() {
        let d = alerts(5, &[vec![0, 1, 2], vec![0, 1, 3], vec![2, 4]], &[true; 5]);
        let loss = linear(&[(Metric::Recall, -1.0), (Metric::RulesPct, 0.1)]);
        let plain = run(&d, &loss, GreedyParams::default());
        let bt = run(
            &d,
            &loss,
            GreedyParams {
                backtracking: true,
                every: Some(1),
                remove: 1,
            },
        );
        assert_eq!(plain.inclusion_order, vec![0, 1, 2]);
        assert!((plain.best_report.loss - (-0.9)).abs() < 1e-12);
        assert_eq!(bt.best.as_slice(), &[-1, 1, 1]);
        assert!(bt.best_report.loss < plain.best_report.loss);
    }

    #[test]
    fn budget_cuts_a_round_short() {
        let d = alerts(5, &[vec![0], vec![1], vec![2]], &[true; 5]);
        let loss = linear(&[(Metric::Recall, -1.0)]);
        let ev = Evaluator::new(&d, &DependencyIndex::empty());
        let base = ev.evaluate_baseline(&d.initial, &loss).unwrap();
        let ctx = SearchContext {
            evaluator: &ev,
            loss: &loss,
            baseline: &base,
        };
        let r = optimize(&Method::Greedy(GreedyParams::default()), &ctx, &StoppingCriteria::evaluations(3), 0).unwrap();
        assert_eq!(r.evaluations, 3);
        assert!(r.inclusion_order.is_empty());
    }
}

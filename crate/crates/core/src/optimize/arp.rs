//! Augmented rules pool.
//!
//! Every rule is cloned once for each other priority its action allows. A
//! clone shares the firings of its parent, starts inactive and is never
//! mandatory, so on/off searches can explore priority changes.

use crate::blacklist::DependencyIndex;
use crate::model::{Dataset, Priority, PriorityVector, RuleSet, INACTIVE};

#[derive(Debug, Clone)]
pub struct AugmentedPool {
    pub dataset: Dataset,
    pub dependencies: DependencyIndex,
}

impl AugmentedPool {
    /// Pads a vector over the base pool with inactive clones.
    pub fn lift(&self, base: &PriorityVector) -> PriorityVector {
        let mut v = base.as_slice().to_vec();
        v.resize(self.dataset.len_rules(), INACTIVE);
        PriorityVector::new(v)
    }
}

/// Builds the augmented pool. Frozen rules are not cloned: their priority is
/// fixed, so a clone would only be a way around that.
pub fn augment_rules_pool(data: &Dataset, deps: &DependencyIndex) -> AugmentedPool {
    let base = data.rules.rules();
    let mut rules = base.to_vec();
    let mut origin: Vec<usize> = (0..base.len()).collect();
    let mut sources = Vec::new();
    for (i, r) in base.iter().enumerate() {
        if r.frozen {
            continue;
        }
        for &p in data.action_map.alphabet(r.action) {
            if p == r.priority {
                continue;
            }
            let mut c = r.clone();
            c.id = format!("{}@{}", r.id, p);
            c.priority = p;
            c.mandatory = false;
            rules.push(c);
            origin.push(i);
            sources.push(i);
        }
    }
    let mut initial = data.initial.as_slice().to_vec();
    initial.resize(rules.len(), INACTIVE as Priority);
    let rules = RuleSet::with_origins(rules, origin, base.len());
    let dependencies = deps.expand(&rules);
    AugmentedPool {
        dataset: Dataset {
            triggers: data.triggers.with_cloned_columns(&sources),
            rules,
            action_map: data.action_map.clone(),
            initial: PriorityVector::new(initial),
        },
        dependencies,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Evaluator;
    use crate::loss::LossSpec;
    use crate::model::{Action, ActionMap, Rule, TriggerMatrix};

    fn one_rule() -> Dataset {
        let amap = ActionMap::from_pairs([(2, Action::Alert), (4, Action::Alert), (1, Action::Accept)]);
        let rules = RuleSet::new(vec![Rule::new("A", Action::Alert, 2)]);
        let t = TriggerMatrix::from_rows(&[vec![true], vec![false], vec![true]], vec![0, 1, 2], &[true, false, false]).unwrap();
        Dataset::validate(rules, amap, t).unwrap()
    }

    #[test]
    fn single_rule_gets_one_clone() {
        let d = one_rule();
        let a = augment_rules_pool(&d, &DependencyIndex::empty());
        let r = &a.dataset.rules;
        assert_eq!(r.len(), 2);
        assert_eq!(r.get(1).id, "A@4");
        assert_eq!(r.get(1).priority, 4);
        assert_eq!(r.origin(1), 0);
        assert_eq!(a.dataset.triggers.column(0), a.dataset.triggers.column(1));
        assert_eq!(a.dataset.initial.as_slice(), &[2, -1]);
    }

    #[test]
    fn singleton_alphabets_leave_pool_unchanged() {
        let amap = ActionMap::from_pairs([(1, Action::Accept), (2, Action::Decline)]);
        let rules = RuleSet::new(vec![Rule::new("a", Action::Accept, 1), Rule::new("d", Action::Decline, 2)]);
        let t = TriggerMatrix::from_rows(&[vec![true, false]], vec![0], &[false]).unwrap();
        let d = Dataset::validate(rules, amap, t).unwrap();
        let a = augment_rules_pool(&d, &DependencyIndex::empty());
        assert_eq!(a.dataset.rules.len(), 2);
        assert!(!a.dataset.rules.is_augmented());
    }

    #[test]
    fn frozen_rules_are_not_cloned_and_clones_are_optional() {
        let amap = ActionMap::from_pairs([(2, Action::Alert), (4, Action::Alert)]);
        let rules = RuleSet::new(vec![
            Rule::new("f", Action::Alert, 2).frozen(),
            Rule::new("m", Action::Alert, 4).mandatory(),
        ]);
        let t = TriggerMatrix::from_rows(&[vec![true, true]], vec![0], &[true]).unwrap();
        let d = Dataset::validate(rules, amap, t).unwrap();
        let a = augment_rules_pool(&d, &DependencyIndex::empty());
        assert_eq!(a.dataset.rules.len(), 3);
        assert_eq!(a.dataset.rules.get(2).id, "m@2");
        assert!(!a.dataset.rules.get(2).mandatory);
    }

    #[test]
    fn clone_swap_reproduces_a_priority_change() {
        let d = one_rule();
        let a = augment_rules_pool(&d, &DependencyIndex::empty());
        let base_ev = Evaluator::new(&d, &DependencyIndex::empty());
        let aug_ev = Evaluator::new(&a.dataset, &a.dependencies);
        let base = base_ev.evaluate_baseline(&d.initial, &LossSpec::Synthetic).unwrap();
        let moved = base_ev
            .evaluate(&PriorityVector::new(vec![4]), &LossSpec::Synthetic, Some(&base))
            .unwrap();
        let swapped = aug_ev
            .evaluate(&PriorityVector::new(vec![-1, 4]), &LossSpec::Synthetic, Some(&base))
            .unwrap();
        assert_eq!(moved, swapped);
        let lifted = aug_ev.evaluate(&a.lift(&d.initial), &LossSpec::Synthetic, Some(&base)).unwrap();
        assert_eq!(lifted, base);
    }
}

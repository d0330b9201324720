//! Blacklist dependency tracking.
//!
//! Updater rules blacklist field values when they fire and checker rules fire
//! on transactions carrying a blacklisted value. Switching an updater off can
//! therefore silence a checker later in time. A single forward pass over the
//! deployed configuration records, per transaction, which updaters enabled
//! each checker firing; evaluation of a candidate then only has to look up
//! whether any of those updaters is still active.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Priority, PriorityVector, RuleSet, TriggerMatrix, INACTIVE};

/// Half-open `[start, end)`; `end == None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: i64,
    pub end: Option<i64>,
}

impl Interval {
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && self.end.is_none_or(|e| t < e)
    }

    pub fn is_open(&self) -> bool {
        self.end.is_none()
    }
}

/// Blacklist entries keyed by (field, value) and then by updater rule.
#[derive(Debug, Default, Clone)]
pub struct BlacklistStore {
    entries: HashMap<(String, String), BTreeMap<usize, Vec<Interval>>>,
}

impl BlacklistStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens `[t, +inf)` unless the key already has an open interval.
    pub fn open(&mut self, updater: usize, field: &str, value: &str, t: i64) {
        let list = self
            .entries
            .entry((field.to_owned(), value.to_owned()))
            .or_default()
            .entry(updater)
            .or_default();
        if list.last().is_none_or(|iv| !iv.is_open()) {
            list.push(Interval { start: t, end: None });
        }
    }

    pub fn contains(&self, updater: usize, field: &str, value: &str, t: i64) -> bool {
        self.intervals(updater, field, value)
            .iter()
            .any(|iv| iv.contains(t))
    }

    /// True when any updater's entry for (field, value) covers `t`.
    pub fn any_contains(&self, field: &str, value: &str, t: i64) -> bool {
        self.entries
            .get(&(field.to_owned(), value.to_owned()))
            .is_some_and(|m| m.values().flatten().any(|iv| iv.contains(t)))
    }

    /// Closes the open interval of every updater holding (field, value).
    pub fn close(&mut self, field: &str, value: &str, t: i64) {
        if let Some(m) = self.entries.get_mut(&(field.to_owned(), value.to_owned())) {
            for list in m.values_mut() {
                if let Some(last) = list.last_mut().filter(|iv| iv.is_open()) {
                    last.end = Some(t);
                }
            }
        }
    }

    pub fn intervals(&self, updater: usize, field: &str, value: &str) -> &[Interval] {
        self.entries
            .get(&(field.to_owned(), value.to_owned()))
            .and_then(|m| m.get(&updater))
            .map_or(&[], Vec::as_slice)
    }
}

/// `source ≺ checker`: the checker's firing on this transaction depends on
/// `source` being active. `via_updater == false` marks a self-pair for a
/// checker whose blacklist entry no rule is responsible for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Dependency {
    pub source: usize,
    pub checker: usize,
    pub via_updater: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyIndex {
    rows: BTreeMap<usize, Vec<Dependency>>,
}

impl DependencyIndex {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn pairs(&self, row: usize) -> &[Dependency] {
        self.rows.get(&row).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[Dependency])> {
        self.rows.iter().map(|(&r, v)| (r, v.as_slice()))
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            rows: self
                .rows
                .range(range.clone())
                .map(|(&r, v)| (r - range.start, v.clone()))
                .collect(),
        }
    }

    /// Re-targets the index to an augmented pool: a dependency between two
    /// base rules holds for every pair of their clones, and a self-pair holds
    /// for each clone of the checker.
    pub fn expand(&self, rules: &RuleSet) -> Self {
        let mut clones: Vec<Vec<usize>> = vec![Vec::new(); rules.base_count()];
        for (i, &o) in rules.origins().iter().enumerate() {
            clones[o].push(i);
        }
        let rows = self
            .rows
            .iter()
            .map(|(&r, deps)| {
                let mut out = Vec::new();
                for d in deps {
                    for &q in &clones[d.checker] {
                        if d.via_updater {
                            out.extend(clones[d.source].iter().map(|&s| Dependency {
                                source: s,
                                checker: q,
                                via_updater: true,
                            }));
                        } else {
                            out.push(Dependency {
                                source: q,
                                checker: q,
                                via_updater: false,
                            });
                        }
                    }
                }
                out.sort();
                out.dedup();
                (r, out)
            })
            .collect();
        Self { rows }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingFieldValue {
    pub row: usize,
    pub rule: String,
    pub field: String,
}

#[derive(Debug, Clone)]
pub struct BlacklistAnalysis {
    pub index: DependencyIndex,
    /// Checker firings on transactions lacking the checked field; these are
    /// treated as not matching any updater entry.
    pub missing_values: Vec<MissingFieldValue>,
}

/// Single forward pass over the deployed configuration `original`.
pub fn compute_blacklist_dependencies(
    triggers: &TriggerMatrix,
    rules: &RuleSet,
    original: &PriorityVector,
) -> Result<BlacklistAnalysis> {
    let known = triggers.field_names();
    for r in rules.rules() {
        for f in r.updates_fields.iter().chain(&r.checks_fields) {
            if !known.contains(f.as_str()) {
                return Err(Error::UnknownField {
                    rule: r.id.clone(),
                    field: f.clone(),
                });
            }
        }
    }

    let updaters: Vec<usize> = (0..rules.len())
        .filter(|&j| rules.get(j).is_updater() && original.get(j) > INACTIVE)
        .collect();
    let checkers: Vec<usize> = (0..rules.len())
        .filter(|&q| rules.get(q).is_checker())
        .collect();
    let mut checkers_of: HashMap<&str, Vec<usize>> = HashMap::new();
    for &q in &checkers {
        for f in &rules.get(q).checks_fields {
            checkers_of.entry(f.as_str()).or_default().push(q);
        }
    }
    let any_checker_active = checkers.iter().any(|&q| original.get(q) > INACTIVE);

    let mut store = BlacklistStore::new();
    let mut index = DependencyIndex::empty();
    let mut missing_values = Vec::new();
    if updaters.is_empty() && checkers.is_empty() {
        return Ok(BlacklistAnalysis {
            index,
            missing_values,
        });
    }

    for x in 0..triggers.rows() {
        let t = triggers.timestamps()[x];
        let mut deps = Vec::new();

        for &j in &updaters {
            let fired = triggers.fired(x, j);
            for f in &rules.get(j).updates_fields {
                let Some(v) = triggers.field(x, f) else {
                    continue;
                };
                // a live entry counts as a firing for dependency purposes
                let active = fired || store.contains(j, f, v, t);
                if fired {
                    store.open(j, f, v, t);
                }
                if active {
                    for &q in checkers_of.get(f.as_str()).into_iter().flatten() {
                        if triggers.fired(x, q) {
                            deps.push(Dependency {
                                source: j,
                                checker: q,
                                via_updater: true,
                            });
                        }
                    }
                }
            }
        }

        if !any_checker_active {
            for (f, v) in triggers.fields(x) {
                if store.any_contains(f, v, t) {
                    store.close(f, v, t);
                }
            }
        }

        for &q in &checkers {
            if !triggers.fired(x, q) {
                continue;
            }
            for f in &rules.get(q).checks_fields {
                if triggers.field(x, f).is_none() {
                    missing_values.push(MissingFieldValue {
                        row: x,
                        rule: rules.get(q).id.clone(),
                        field: f.clone(),
                    });
                }
            }
            if !deps.iter().any(|d| d.checker == q) {
                deps.push(Dependency {
                    source: q,
                    checker: q,
                    via_updater: false,
                });
            }
        }

        if !deps.is_empty() {
            deps.sort();
            deps.dedup();
            index.rows.insert(x, deps);
        }
    }

    Ok(BlacklistAnalysis {
        index,
        missing_values,
    })
}

/// Switches off checker entries of `masked` whose enabling rules are all
/// inactive under `p`. Never switches anything on.
pub fn handle_bd(
    masked: &[Priority],
    deps: &[Dependency],
    p: &PriorityVector,
    is_checker: &[bool],
) -> Vec<Priority> {
    masked
        .iter()
        .enumerate()
        .map(|(q, &r)| {
            if r > INACTIVE
                && is_checker[q]
                && !deps
                    .iter()
                    .any(|d| d.checker == q && p.get(d.source) > INACTIVE)
            {
                INACTIVE
            } else {
                r
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitColumn;
    use crate::model::{Action, Rule};

    fn fields(pairs: &[&[(&str, &str)]]) -> Vec<Vec<(String, String)>> {
        pairs
            .iter()
            .map(|row| row.iter().map(|(f, v)| (f.to_string(), v.to_string())).collect())
            .collect()
    }

    // rules: U updates email, C checks email
    fn rules() -> RuleSet {
        RuleSet::new(vec![
            Rule::new("U", Action::Alert, 2).updates("email"),
            Rule::new("C", Action::Decline, 3).checks("email"),
        ])
    }

    fn matrix(fired: &[[bool; 2]], ts: Vec<i64>, f: Vec<Vec<(String, String)>>) -> TriggerMatrix {
        let cols = (0..2)
            .map(|j| BitColumn::from_bools(fired.iter().map(|r| r[j])))
            .collect();
        let n = ts.len();
        TriggerMatrix::new(cols, ts, BitColumn::zeros(n), f).unwrap()
    }

    #[test]
    fn updater_enables_later_checker() {
        let m = matrix(
            &[[true, false], [false, true]],
            vec![1, 2],
            fields(&[&[("email", "e")], &[("email", "e")]]),
        );
        let p = PriorityVector::new(vec![2, 3]);
        let bd = compute_blacklist_dependencies(&m, &rules(), &p).unwrap().index;
        assert!(bd.pairs(0).is_empty());
        assert_eq!(
            bd.pairs(1),
            &[Dependency {
                source: 0,
                checker: 1,
                via_updater: true
            }]
        );
    }

    #[test]
    fn unblacklisted_value_gets_self_pair() {
        let m = matrix(
            &[[true, false], [false, true]],
            vec![1, 5],
            fields(&[&[("email", "e")], &[("email", "other")]]),
        );
        let p = PriorityVector::new(vec![2, 3]);
        let bd = compute_blacklist_dependencies(&m, &rules(), &p).unwrap().index;
        assert_eq!(
            bd.pairs(1),
            &[Dependency {
                source: 1,
                checker: 1,
                via_updater: false
            }]
        );
    }

    #[test]
    fn no_blacklist_rules_no_dependencies() {
        let rs = RuleSet::new(vec![Rule::new("A", Action::Alert, 2)]);
        let m = TriggerMatrix::from_rows(&[vec![true], vec![true]], vec![1, 2], &[false, true]).unwrap();
        let bd = compute_blacklist_dependencies(&m, &rs, &PriorityVector::new(vec![2])).unwrap();
        assert!(bd.index.is_empty());
    }

    #[test]
    fn unknown_field_is_an_error() {
        let m = matrix(&[[true, false]], vec![1], fields(&[&[("card", "c")]]));
        let err = compute_blacklist_dependencies(&m, &rules(), &PriorityVector::new(vec![2, 3])).unwrap_err();
        assert!(matches!(err, Error::UnknownField { .. }));
    }

    #[test]
    fn missing_checked_value_reported_and_self_paired() {
        let m = matrix(
            &[[true, false], [false, true]],
            vec![1, 2],
            fields(&[&[("email", "e")], &[]]),
        );
        let a = compute_blacklist_dependencies(&m, &rules(), &PriorityVector::new(vec![2, 3])).unwrap();
        assert_eq!(a.missing_values.len(), 1);
        assert!(!a.index.pairs(1)[0].via_updater);
    }

    #[test]
    fn inactive_updater_never_blacklists() {
        let m = matrix(
            &[[true, false], [false, true]],
            vec![1, 2],
            fields(&[&[("email", "e")], &[("email", "e")]]),
        );
        let bd = compute_blacklist_dependencies(&m, &rules(), &PriorityVector::new(vec![-1, 3]))
            .unwrap()
            .index;
        assert!(!bd.pairs(1)[0].via_updater);
    }

    #[test]
    fn closing_applies_only_without_active_checkers() {
        // checker inactive in the deployed system: the entry opened at t=1
        // is closed by the next transaction carrying the value
        let m = matrix(
            &[[true, false], [false, false], [false, true]],
            vec![1, 2, 3],
            fields(&[&[("email", "e")], &[("email", "e")], &[("email", "e")]]),
        );
        let bd = compute_blacklist_dependencies(&m, &rules(), &PriorityVector::new(vec![2, -1]))
            .unwrap()
            .index;
        assert!(!bd.pairs(2)[0].via_updater);

        let bd = compute_blacklist_dependencies(&m, &rules(), &PriorityVector::new(vec![2, 3]))
            .unwrap()
            .index;
        assert!(bd.pairs(2)[0].via_updater);
    }

    #[test]
    fn interval_half_open() {
        let mut s = BlacklistStore::new();
        s.open(0, "email", "e", 10);
        s.open(0, "email", "e", 12);
        assert_eq!(s.intervals(0, "email", "e").len(), 1);
        assert!(s.contains(0, "email", "e", 10));
        s.close("email", "e", 15);
        assert!(s.contains(0, "email", "e", 14));
        assert!(!s.contains(0, "email", "e", 15));
        s.open(0, "email", "e", 20);
        assert_eq!(s.intervals(0, "email", "e").len(), 2);
        assert!(!s.contains(0, "email", "e", 17));
    }

    #[test]
    fn handle_bd_examples() {
        let checker = [false, true];
        let pair = |s, c, u| Dependency {
            source: s,
            checker: c,
            via_updater: u,
        };
        // updater off: checker forced off
        let p = PriorityVector::new(vec![-1, 3]);
        assert_eq!(handle_bd(&[-1, 3], &[pair(0, 1, true)], &p, &checker), vec![-1, -1]);
        // self pair keeps the trigger
        assert_eq!(handle_bd(&[-1, 3], &[pair(1, 1, false)], &p, &checker), vec![-1, 3]);
        // nothing recorded: identity
        let p = PriorityVector::new(vec![2, 3]);
        assert_eq!(handle_bd(&[2, -1], &[], &p, &checker), vec![2, -1]);
    }

    #[test]
    fn expansion_covers_clones() {
        let base = DependencyIndex {
            rows: [(
                0,
                vec![
                    Dependency {
                        source: 0,
                        checker: 1,
                        via_updater: true,
                    },
                    Dependency {
                        source: 1,
                        checker: 1,
                        via_updater: false,
                    },
                ],
            )]
            .into(),
        };
        let rs = RuleSet::with_origins(
            vec![
                Rule::new("U", Action::Alert, 2),
                Rule::new("C", Action::Decline, 3),
                Rule::new("U@4", Action::Alert, 4),
                Rule::new("C@8", Action::Decline, 8),
            ],
            vec![0, 1, 0, 1],
            2,
        );
        let e = base.expand(&rs);
        let got: Vec<(usize, usize)> = e.pairs(0).iter().map(|d| (d.source, d.checker)).collect();
        assert_eq!(got, vec![(0, 1), (0, 3), (1, 1), (2, 1), (2, 3), (3, 3)]);
    }
}

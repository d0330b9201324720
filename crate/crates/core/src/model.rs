//! Rules, actions, priorities and trigger data.
//!
//! Firings are stored as one bit column per rule. The priority a rule acts
//! with lives in a separate [`PriorityVector`], so a candidate configuration
//! is a cheap vector edit rather than a rewrite of the trigger matrix.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::BitColumn;
use crate::error::{Error, Result, Violation};

/// Rule priority. `-1` marks an inactive rule.
pub type Priority = i32;

pub const INACTIVE: Priority = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Accept,
    Alert,
    Decline,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Accept, Action::Alert, Action::Decline];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Accept => "accept",
            Action::Alert => "alert",
            Action::Decline => "decline",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" => Ok(Action::Accept),
            "alert" | "review" => Ok(Action::Alert),
            "decline" => Ok(Action::Decline),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub action: Action,
    /// Priority the rule carries when active.
    pub priority: u32,
    /// Cannot be deactivated.
    pub mandatory: bool,
    /// Excluded from optimization; always keeps its deployed priority.
    pub frozen: bool,
    /// Fields whose values this rule blacklists when it fires.
    pub updates_fields: Vec<String>,
    /// Fields whose blacklist membership this rule checks.
    pub checks_fields: Vec<String>,
}

impl Rule {
    pub fn new(id: impl Into<String>, action: Action, priority: u32) -> Self {
        Self {
            id: id.into(),
            action,
            priority,
            mandatory: false,
            frozen: false,
            updates_fields: Vec::new(),
            checks_fields: Vec::new(),
        }
    }

    pub fn mandatory(mut self) -> Self {
        self.mandatory = true;
        self
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn updates(mut self, field: impl Into<String>) -> Self {
        self.updates_fields.push(field.into());
        self
    }

    pub fn checks(mut self, field: impl Into<String>) -> Self {
        self.checks_fields.push(field.into());
        self
    }

    pub fn is_updater(&self) -> bool {
        !self.updates_fields.is_empty()
    }

    pub fn is_checker(&self) -> bool {
        !self.checks_fields.is_empty()
    }
}

/// Total map from priority level to action, plus the per-action alphabet of
/// levels used by priority shuffling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMap {
    entries: BTreeMap<u32, Action>,
    alphabets: [Vec<u32>; 3],
}

impl ActionMap {
    pub fn new(entries: BTreeMap<u32, Action>) -> Self {
        let mut alphabets: [Vec<u32>; 3] = Default::default();
        for (&p, &a) in &entries {
            alphabets[a.index()].push(p);
        }
        Self { entries, alphabets }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, Action)>) -> Self {
        Self::new(pairs.into_iter().collect())
    }

    pub fn get(&self, p: Priority) -> Option<Action> {
        u32::try_from(p).ok().and_then(|p| self.entries.get(&p).copied())
    }

    /// Ascending priority levels carrying `action`.
    pub fn alphabet(&self, action: Action) -> &[u32] {
        &self.alphabets[action.index()]
    }

    pub fn entries(&self) -> &BTreeMap<u32, Action> {
        &self.entries
    }
}

/// The pool of rules under evaluation, possibly augmented with clones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    // index of the base rule each column derives from
    origin: Vec<usize>,
    base_count: usize,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        let n = rules.len();
        Self {
            rules,
            origin: (0..n).collect(),
            base_count: n,
        }
    }

    pub(crate) fn with_origins(rules: Vec<Rule>, origin: Vec<usize>, base_count: usize) -> Self {
        debug_assert_eq!(rules.len(), origin.len());
        Self {
            rules,
            origin,
            base_count,
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, i: usize) -> &Rule {
        &self.rules[i]
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Base rule a column was cloned from (itself for base rules).
    pub fn origin(&self, i: usize) -> usize {
        self.origin[i]
    }

    pub fn origins(&self) -> &[usize] {
        &self.origin
    }

    /// Number of distinct rules before any pool augmentation.
    pub fn base_count(&self) -> usize {
        self.base_count
    }

    pub fn is_augmented(&self) -> bool {
        self.rules.len() != self.base_count
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorityVector(Vec<Priority>);

impl PriorityVector {
    pub fn new(values: Vec<Priority>) -> Self {
        Self(values)
    }

    pub fn inactive(k: usize) -> Self {
        Self(vec![INACTIVE; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Priority {
        self.0[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, p: Priority) {
        self.0[i] = p;
    }

    #[inline]
    pub fn is_active(&self, i: usize) -> bool {
        self.0[i] > INACTIVE
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&p| p > INACTIVE).count()
    }

    pub fn as_slice(&self) -> &[Priority] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Priority> {
        self.0
    }
}

impl From<Vec<Priority>> for PriorityVector {
    fn from(v: Vec<Priority>) -> Self {
        Self(v)
    }
}

/// n transactions by k rules of firings, with row-aligned timestamps, labels
/// and the sparse blacklist-relevant field values of each transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerMatrix {
    rows: usize,
    columns: Vec<BitColumn>,
    timestamps: Vec<i64>,
    labels: BitColumn,
    fields: Vec<Vec<(String, String)>>,
}

impl TriggerMatrix {
    /// `fields` may be empty (no field data) or hold one entry per row.
    pub fn new(
        columns: Vec<BitColumn>,
        timestamps: Vec<i64>,
        labels: BitColumn,
        fields: Vec<Vec<(String, String)>>,
    ) -> Result<Self> {
        let rows = timestamps.len();
        let mut bad = Vec::new();
        if labels.len() != rows {
            bad.push(Violation::RowCountMismatch {
                what: "labels",
                expected: rows,
                found: labels.len(),
            });
        }
        for c in &columns {
            if c.len() != rows {
                bad.push(Violation::RowCountMismatch {
                    what: "trigger column",
                    expected: rows,
                    found: c.len(),
                });
                break;
            }
        }
        if !fields.is_empty() && fields.len() != rows {
            bad.push(Violation::RowCountMismatch {
                what: "fields",
                expected: rows,
                found: fields.len(),
            });
        }
        if !bad.is_empty() {
            return Err(Error::violations(bad));
        }
        let fields = if fields.is_empty() {
            vec![Vec::new(); rows]
        } else {
            fields
                .into_iter()
                .map(|mut f| {
                    f.sort();
                    f
                })
                .collect()
        };
        Ok(Self {
            rows,
            columns,
            timestamps,
            labels,
            fields,
        })
    }

    /// Builds a matrix from per-row firing vectors; handy for small fixtures.
    pub fn from_rows(firings: &[Vec<bool>], timestamps: Vec<i64>, labels: &[bool]) -> Result<Self> {
        let k = firings.first().map_or(0, Vec::len);
        let columns = (0..k)
            .map(|j| BitColumn::from_bools(firings.iter().map(|row| row[j])))
            .collect();
        Self::new(
            columns,
            timestamps,
            BitColumn::from_bools(labels.iter().copied()),
            Vec::new(),
        )
    }

    pub fn with_fields(mut self, fields: Vec<Vec<(String, String)>>) -> Result<Self> {
        if fields.len() != self.rows {
            return Err(Error::violations(vec![Violation::RowCountMismatch {
                what: "fields",
                expected: self.rows,
                found: fields.len(),
            }]));
        }
        self.fields = fields
            .into_iter()
            .map(|mut f| {
                f.sort();
                f
            })
            .collect();
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &BitColumn {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[BitColumn] {
        &self.columns
    }

    #[inline]
    pub fn fired(&self, row: usize, j: usize) -> bool {
        self.columns[j].get(row)
    }

    pub fn row_firings(&self, row: usize) -> Vec<bool> {
        self.columns.iter().map(|c| c.get(row)).collect()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn labels(&self) -> &BitColumn {
        &self.labels
    }

    #[inline]
    pub fn label(&self, row: usize) -> bool {
        self.labels.get(row)
    }

    pub fn fraud_count(&self) -> usize {
        self.labels.count_ones()
    }

    pub fn fields(&self, row: usize) -> &[(String, String)] {
        &self.fields[row]
    }

    pub fn field(&self, row: usize, name: &str) -> Option<&str> {
        self.fields[row]
            .iter()
            .find(|(f, _)| f == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn has_field_data(&self) -> bool {
        self.fields.iter().any(|f| !f.is_empty())
    }

    pub fn fields_by_row(&self) -> Vec<Vec<(String, String)>> {
        self.fields.clone()
    }

    /// Every field name present on any transaction.
    pub fn field_names(&self) -> HashSet<&str> {
        self.fields
            .iter()
            .flat_map(|f| f.iter().map(|(k, _)| k.as_str()))
            .collect()
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            rows: range.len(),
            columns: self.columns.iter().map(|c| c.slice(range.clone())).collect(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            labels: self.labels.slice(range.clone()),
            fields: self.fields[range].to_vec(),
        }
    }

    /// Appends columns that share the firings of existing columns.
    pub(crate) fn with_cloned_columns(&self, sources: &[usize]) -> Self {
        let mut out = self.clone();
        out.columns
            .extend(sources.iter().map(|&j| self.columns[j].clone()));
        out
    }
}

/// `r'_j = p_j` when rule j fired and is active, else -1.
pub fn mask(fired: &[bool], p: &PriorityVector) -> Vec<Priority> {
    assert_eq!(fired.len(), p.len(), "firing/priority length mismatch");
    fired
        .iter()
        .zip(p.as_slice())
        .map(|(&f, &pj)| if f && pj > INACTIVE { pj } else { INACTIVE })
        .collect()
}

/// A rule set, action map and trigger matrix known to be mutually consistent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub rules: RuleSet,
    pub action_map: ActionMap,
    pub triggers: TriggerMatrix,
    /// The deployed configuration (clones start inactive).
    pub initial: PriorityVector,
}

/// Checks every rules-core invariant and reports all violations at once.
pub fn validate_ruleset(
    rules: RuleSet,
    action_map: ActionMap,
    triggers: TriggerMatrix,
) -> Result<Dataset> {
    let mut bad = Vec::new();
    let mut seen = HashSet::new();
    for r in rules.rules() {
        if !seen.insert(r.id.as_str()) {
            bad.push(Violation::DuplicateRuleId { rule: r.id.clone() });
        }
        check_rule_priority(r, r.priority as i64, &action_map, &mut bad);
    }
    if triggers.cols() != rules.len() {
        bad.push(Violation::ColumnCountMismatch {
            expected: rules.len(),
            found: triggers.cols(),
        });
    }
    if let Some(row) = triggers.timestamps().windows(2).position(|w| w[1] < w[0]) {
        bad.push(Violation::UnsortedTimestamps { row: row + 1 });
    }
    if !bad.is_empty() {
        return Err(Error::violations(bad));
    }
    let initial = PriorityVector::new(rules.rules().iter().map(|r| r.priority as Priority).collect());
    Ok(Dataset {
        rules,
        action_map,
        triggers,
        initial,
    })
}

fn check_rule_priority(r: &Rule, p: i64, amap: &ActionMap, bad: &mut Vec<Violation>) {
    match u32::try_from(p).ok().and_then(|p| amap.entries().get(&p)) {
        None => bad.push(Violation::UnmappedPriority {
            rule: r.id.clone(),
            priority: p,
        }),
        Some(&mapped) if mapped != r.action => bad.push(Violation::ActionMismatch {
            rule: r.id.clone(),
            priority: p,
            rule_action: r.action,
            mapped,
        }),
        Some(_) => {}
    }
}

impl Dataset {
    pub fn validate(rules: RuleSet, action_map: ActionMap, triggers: TriggerMatrix) -> Result<Self> {
        validate_ruleset(rules, action_map, triggers)
    }

    pub fn len_rules(&self) -> usize {
        self.rules.len()
    }

    /// Priority a rule takes when switched on.
    pub fn home_priority(&self, i: usize) -> Priority {
        self.rules.get(i).priority as Priority
    }

    /// Rules a search is allowed to touch.
    pub fn is_optimizable(&self, i: usize) -> bool {
        !self.rules.get(i).frozen
    }

    pub fn check_vector(&self, p: &PriorityVector) -> Result<()> {
        let mut bad = Vec::new();
        if p.len() != self.rules.len() {
            return Err(Error::violations(vec![Violation::VectorLength {
                expected: self.rules.len(),
                found: p.len(),
            }]));
        }
        for (i, r) in self.rules.rules().iter().enumerate() {
            let pi = p.get(i);
            if pi < INACTIVE {
                bad.push(Violation::InvalidPriority {
                    rule: r.id.clone(),
                    priority: pi as i64,
                });
                continue;
            }
            if r.frozen && pi != self.initial.get(i) {
                bad.push(Violation::FrozenChanged {
                    rule: r.id.clone(),
                    expected: self.initial.get(i) as i64,
                    found: pi as i64,
                });
            }
            if pi == INACTIVE {
                if r.mandatory {
                    bad.push(Violation::MandatoryInactive { rule: r.id.clone() });
                }
            } else {
                check_rule_priority(r, pi as i64, &self.action_map, &mut bad);
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::violations(bad))
        }
    }

    /// Priority vector from an id → priority map. Rules absent from the map
    /// are reported in the second return value and set inactive (mandatory
    /// and frozen rules keep their deployed priority).
    pub fn vector_from_map(&self, map: &HashMap<String, Priority>) -> (PriorityVector, Vec<String>) {
        let mut missing = Vec::new();
        let v = self
            .rules
            .rules()
            .iter()
            .enumerate()
            .map(|(i, r)| match map.get(&r.id) {
                Some(&p) => p,
                None => {
                    missing.push(r.id.clone());
                    if r.mandatory || r.frozen {
                        self.initial.get(i)
                    } else {
                        INACTIVE
                    }
                }
            })
            .collect();
        (PriorityVector::new(v), missing)
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        Self {
            rules: self.rules.clone(),
            action_map: self.action_map.clone(),
            triggers: self.triggers.slice(range),
            initial: self.initial.clone(),
        }
    }
}

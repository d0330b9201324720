//! Loss functions over evaluation reports.
//!
//! Three built-in losses are provided (`synthetic`, `d1`, `d2`) together with
//! a generic weighted form: a linear objective used while every constraint
//! holds, and a penalty expression otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvaluationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "rules%")]
    RulesPct,
    #[serde(rename = "recall")]
    Recall,
    #[serde(rename = "alerts%")]
    AlertsPct,
    #[serde(rename = "fpr")]
    Fpr,
}

impl Metric {
    pub fn of(self, r: &EvaluationReport) -> f64 {
        match self {
            Metric::RulesPct => r.rules_active_fraction,
            Metric::Recall => r.recall,
            Metric::AlertsPct => r.alert_rate,
            Metric::Fpr => r.fpr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub metric: Metric,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRef {
    pub metric: Metric,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// `scale · baseline[metric] + constant`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bound {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineRef>,
    #[serde(default)]
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub metric: Metric,
    pub cmp: Comparator,
    pub bound: Bound,
}

/// `weight · candidate[metric] + baseline_weight · baseline[metric]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTerm {
    pub metric: Metric,
    #[serde(default)]
    pub weight: f64,
    #[serde(default)]
    pub baseline_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Penalty {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<PenaltyTerm>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenericLoss {
    #[serde(default)]
    pub objective: Vec<Term>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    #[serde(default)]
    pub penalty: Penalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossRepr", into = "LossRepr")]
pub enum LossSpec {
    /// 0.1·rules% − 0.5·recall + 0.4·alerts%
    Synthetic,
    /// Minimize rules and alerts while keeping 95% of the baseline recall.
    D1,
    /// Minimize rules and maximize recall without exceeding the baseline FPR.
    D2,
    Generic(GenericLoss),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LossRepr {
    Named(String),
    Generic(GenericLoss),
}

impl TryFrom<LossRepr> for LossSpec {
    type Error = String;

    fn try_from(r: LossRepr) -> std::result::Result<Self, String> {
        let spec = match r {
            LossRepr::Named(n) => match n.as_str() {
                "synthetic" => LossSpec::Synthetic,
                "d1" => LossSpec::D1,
                "d2" => LossSpec::D2,
                other => return Err(format!("unknown built-in loss {other:?}")),
            },
            LossRepr::Generic(g) => LossSpec::Generic(g),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl From<LossSpec> for LossRepr {
    fn from(s: LossSpec) -> Self {
        match s {
            LossSpec::Synthetic => LossRepr::Named("synthetic".into()),
            LossSpec::D1 => LossRepr::Named("d1".into()),
            LossSpec::D2 => LossRepr::Named("d2".into()),
            LossSpec::Generic(g) => LossRepr::Generic(g),
        }
    }
}

pub const SYNTHETIC_WEIGHTS: (f64, f64, f64) = (0.1, 0.5, 0.4);
pub const D1_WEIGHTS: (f64, f64) = (0.5, 0.5);
pub const D1_RECALL_KEEP: f64 = 0.95;
pub const D2_WEIGHTS: (f64, f64) = (0.05, 0.95);

pub fn loss_synthetic(r: &EvaluationReport) -> f64 {
    let (a, b, g) = SYNTHETIC_WEIGHTS;
    a * r.rules_active_fraction - b * r.recall + g * r.alert_rate
}

pub fn loss_d1(r: &EvaluationReport, baseline: Option<&EvaluationReport>) -> Result<f64> {
    let base = baseline.ok_or(Error::MissingBaseline)?;
    let (a, b) = D1_WEIGHTS;
    Ok(if r.recall >= D1_RECALL_KEEP * base.recall {
        a * r.rules_active_fraction + b * r.alert_rate
    } else {
        a + b + (base.recall - r.recall)
    })
}

pub fn loss_d2(r: &EvaluationReport, baseline: Option<&EvaluationReport>) -> Result<f64> {
    let base = baseline.ok_or(Error::MissingBaseline)?;
    let (a, b) = D2_WEIGHTS;
    // the penalty can undercut feasible values; kept as printed
    Ok(if r.fpr <= base.fpr {
        a * r.rules_active_fraction - b * r.recall
    } else {
        a + (base.fpr - r.fpr)
    })
}

pub fn loss_generic(
    spec: &GenericLoss,
    r: &EvaluationReport,
    baseline: Option<&EvaluationReport>,
) -> Result<f64> {
    if spec.needs_baseline() && baseline.is_none() {
        return Err(Error::MissingBaseline);
    }
    let base_metric = |m: Metric| baseline.map_or(0.0, |b| m.of(b));
    let feasible = spec.constraints.iter().all(|c| {
        let bound = c
            .bound
            .baseline
            .map_or(0.0, |b| b.scale * base_metric(b.metric))
            + c.bound.constant;
        let v = c.metric.of(r);
        match c.cmp {
            Comparator::Ge => v >= bound,
            Comparator::Le => v <= bound,
        }
    });
    if feasible {
        Ok(spec
            .objective
            .iter()
            .fold(0.0, |acc, t| acc + t.weight * t.metric.of(r)))
    } else {
        let gap = spec.penalty.terms.iter().fold(0.0, |acc, t| {
            let mut acc = acc;
            if t.weight != 0.0 {
                acc += t.weight * t.metric.of(r);
            }
            if t.baseline_weight != 0.0 {
                acc += t.baseline_weight * base_metric(t.metric);
            }
            acc
        });
        Ok(spec.penalty.constant + gap)
    }
}

impl GenericLoss {
    pub fn needs_baseline(&self) -> bool {
        self.constraints.iter().any(|c| c.bound.baseline.is_some())
            || self.penalty.terms.iter().any(|t| t.baseline_weight != 0.0)
    }

    fn validate(&self) -> Result<()> {
        let finite = self.objective.iter().all(|t| t.weight.is_finite())
            && self.penalty.constant.is_finite()
            && self
                .penalty
                .terms
                .iter()
                .all(|t| t.weight.is_finite() && t.baseline_weight.is_finite())
            && self.constraints.iter().all(|c| {
                c.bound.constant.is_finite() && c.bound.baseline.is_none_or(|b| b.scale.is_finite())
            });
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidLoss("weights must be finite".into()))
        }
    }
}

impl LossSpec {
    pub fn needs_baseline(&self) -> bool {
        match self {
            LossSpec::Synthetic => false,
            LossSpec::D1 | LossSpec::D2 => true,
            LossSpec::Generic(g) => g.needs_baseline(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::Generic(g) => g.validate(),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, r: &EvaluationReport, baseline: Option<&EvaluationReport>) -> Result<f64> {
        match self {
            LossSpec::Synthetic => Ok(loss_synthetic(r)),
            LossSpec::D1 => loss_d1(r, baseline),
            LossSpec::D2 => loss_d2(r, baseline),
            LossSpec::Generic(g) => loss_generic(g, r, baseline),
        }
    }

    /// The built-in losses written in the generic form.
    pub fn to_generic(&self) -> GenericLoss {
        use Metric::*;
        let term = |metric, weight| Term { metric, weight };
        match self {
            LossSpec::Synthetic => {
                let (a, b, g) = SYNTHETIC_WEIGHTS;
                GenericLoss {
                    objective: vec![term(RulesPct, a), term(Recall, -b), term(AlertsPct, g)],
                    ..Default::default()
                }
            }
            LossSpec::D1 => {
                let (a, b) = D1_WEIGHTS;
                GenericLoss {
                    objective: vec![term(RulesPct, a), term(AlertsPct, b)],
                    constraints: vec![Constraint {
                        metric: Recall,
                        cmp: Comparator::Ge,
                        bound: Bound {
                            baseline: Some(BaselineRef {
                                metric: Recall,
                                scale: D1_RECALL_KEEP,
                            }),
                            constant: 0.0,
                        },
                    }],
                    penalty: Penalty {
                        constant: a + b,
                        terms: vec![PenaltyTerm {
                            metric: Recall,
                            weight: -1.0,
                            baseline_weight: 1.0,
                        }],
                    },
                }
            }
            LossSpec::D2 => {
                let (a, b) = D2_WEIGHTS;
                GenericLoss {
                    objective: vec![term(RulesPct, a), term(Recall, -b)],
                    constraints: vec![Constraint {
                        metric: Fpr,
                        cmp: Comparator::Le,
                        bound: Bound {
                            baseline: Some(BaselineRef { metric: Fpr, scale: 1.0 }),
                            constant: 0.0,
                        },
                    }],
                    penalty: Penalty {
                        constant: a,
                        terms: vec![PenaltyTerm {
                            metric: Fpr,
                            weight: -1.0,
                            baseline_weight: 1.0,
                        }],
                    },
                }
            }
            LossSpec::Generic(g) => g.clone(),
        }
    }
}

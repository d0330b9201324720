//! End-to-end runs: blacklist analysis, optional pool augmentation, search
//! on a training range and evaluation of the result on held-out ranges.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::blacklist::{compute_blacklist_dependencies, DependencyIndex, MissingFieldValue};
use crate::error::{Error, Result};
use crate::eval::{EvaluationReport, Evaluator};
use crate::loss::LossSpec;
use crate::model::{Dataset, Priority, PriorityVector};
use crate::optimize::{
    augment_rules_pool, optimize, GeneticParams, GreedyParams, Method, RandomParams, SearchContext, SearchResult,
    StoppingCriteria, TraceRecord,
};
use crate::tcv::{BaselineConfig, FoldSpec};

/// A run configuration as read from JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub loss: LossSpec,
    pub arp: bool,
    pub seed: u64,
    pub stopping: StoppingCriteria,
    pub folds: Option<FoldSpec>,
    pub baselines: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Genetic(GeneticParams::default()),
            loss: LossSpec::Synthetic,
            arp: false,
            seed: 0,
            stopping: StoppingCriteria::default(),
            folds: None,
            baselines: BaselineConfig::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<serde_json::Value>,
    #[serde(default = "synthetic")]
    loss: LossSpec,
    #[serde(default)]
    arp: bool,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    stopping: StoppingCriteria,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    folds: Option<FoldSpec>,
    #[serde(default)]
    baselines: BaselineConfig,
}

fn synthetic() -> LossSpec {
    LossSpec::Synthetic
}

fn theta<T: serde::de::DeserializeOwned + Default>(v: Option<serde_json::Value>) -> Result<T> {
    match v {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v).map_err(|e| Error::InvalidTheta(e.to_string())),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawRunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let method = match raw.method.as_str() {
            "random" => Method::Random(theta::<RandomParams>(raw.theta)?),
            "greedy" => Method::Greedy(theta::<GreedyParams>(raw.theta)?),
            "genetic" => Method::Genetic(theta::<GeneticParams>(raw.theta)?),
            other => return Err(Error::Config(format!("unknown method {other:?}"))),
        };
        let cfg = Self {
            method,
            loss: raw.loss,
            arp: raw.arp,
            seed: raw.seed,
            stopping: raw.stopping,
            folds: raw.folds,
            baselines: raw.baselines,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        self.loss.validate()?;
        self.stopping.validate()?;
        if let Some(f) = &self.folds {
            f.validate()?;
        }
        self.baselines.validate()
    }

    /// Canonical JSON, stable across runs.
    pub fn to_json(&self) -> String {
        let theta = match &self.method {
            Method::Random(p) => serde_json::to_value(p),
            Method::Greedy(p) => serde_json::to_value(p),
            Method::Genetic(p) => serde_json::to_value(p),
        }
        .expect("parameters serialize");
        let raw = RawRunConfig {
            method: self.method.name().to_string(),
            theta: Some(theta),
            loss: self.loss.clone(),
            arp: self.arp,
            seed: self.seed,
            stopping: self.stopping,
            folds: self.folds.clone(),
            baselines: self.baselines.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("config serializes") + "\n"
    }
}

/// A dataset with its blacklist dependencies resolved, possibly augmented.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub deps: DependencyIndex,
    pub missing: Vec<MissingFieldValue>,
}

impl Prepared {
    pub fn new(data: Dataset, arp: bool) -> Result<Self> {
        let analysis = compute_blacklist_dependencies(&data.triggers, &data.rules, &data.initial)?;
        let (dataset, deps) = if arp {
            let pool = augment_rules_pool(&data, &analysis.index);
            (pool.dataset, pool.dependencies)
        } else {
            (data, analysis.index)
        };
        Ok(Self {
            dataset,
            deps,
            missing: analysis.missing_values,
        })
    }

    pub fn slice(&self, range: Range<usize>) -> (Dataset, DependencyIndex) {
        (self.dataset.slice_rows(range.clone()), self.deps.slice(range))
    }

    pub fn rows(&self) -> usize {
        self.dataset.triggers.rows()
    }

    /// id → priority for every rule in the pool.
    pub fn priorities(&self, p: &PriorityVector) -> BTreeMap<String, Priority> {
        self.dataset.rules.ids().map(str::to_string).zip(p.as_slice().iter().copied()).collect()
    }

    /// Base rules with no active column left.
    pub fn removed(&self, p: &PriorityVector) -> Vec<String> {
        let rules = &self.dataset.rules;
        let mut on = vec![false; rules.base_count()];
        for i in 0..rules.len() {
            if p.is_active(i) {
                on[rules.origin(i)] = true;
            }
        }
        (0..rules.base_count())
            .filter(|&i| !on[i])
            .map(|i| rules.get(i).id.clone())
            .collect()
    }

    /// Deployed configuration and `p`, both scored on `range` against the
    /// deployed configuration.
    pub fn evaluate_on(
        &self,
        p: &PriorityVector,
        loss: &LossSpec,
        range: Range<usize>,
    ) -> Result<(EvaluationReport, EvaluationReport)> {
        let (data, deps) = self.slice(range);
        let ev = Evaluator::new(&data, &deps);
        let base = ev.evaluate_baseline(&data.initial, loss)?;
        let r = ev.evaluate(p, loss, Some(&base))?;
        Ok((base, r))
    }

    pub fn search(
        &self,
        method: &Method,
        loss: &LossSpec,
        stopping: &StoppingCriteria,
        seed: u64,
        range: Range<usize>,
    ) -> Result<(EvaluationReport, SearchResult)> {
        let (data, deps) = self.slice(range);
        let ev = Evaluator::new(&data, &deps);
        let base = ev.evaluate_baseline(&data.initial, loss)?;
        let ctx = SearchContext {
            evaluator: &ev,
            loss,
            baseline: &base,
        };
        let res = optimize(method, &ctx, stopping, seed)?;
        Ok((base, res))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitOutcome {
    pub split: String,
    pub rows: usize,
    /// The deployed configuration on this split.
    pub original: EvaluationReport,
    pub optimized: EvaluationReport,
    pub delta_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub method: Method,
    pub loss: LossSpec,
    pub arp: bool,
    pub seed: u64,
    pub rules: usize,
    pub pool: usize,
    pub evaluations: u64,
    pub splits: Vec<SplitOutcome>,
    pub p_best: BTreeMap<String, Priority>,
    pub removed: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inclusion_order: Vec<String>,
    pub missing_field_values: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Vec<TraceRecord>,
    pub best: PriorityVector,
}

/// Searches on `train` and scores the result there and on each named
/// held-out range.
pub fn run(prep: &Prepared, cfg: &RunConfig, train: Range<usize>, held_out: &[(&str, Range<usize>)]) -> Result<RunOutput> {
    cfg.validate()?;
    let rows = train.len();
    let (base, res) = prep.search(&cfg.method, &cfg.loss, &cfg.stopping, cfg.seed, train)?;
    let mut splits = vec![SplitOutcome {
        split: "train".into(),
        rows,
        delta_loss: res.best_report.loss - base.loss,
        original: base,
        optimized: res.best_report.clone(),
    }];
    for (name, range) in held_out {
        let (original, optimized) = prep.evaluate_on(&res.best, &cfg.loss, range.clone())?;
        splits.push(SplitOutcome {
            split: name.to_string(),
            rows: range.len(),
            delta_loss: optimized.loss - original.loss,
            original,
            optimized,
        });
    }
    let rules = &prep.dataset.rules;
    let report = RunReport {
        method: cfg.method.clone(),
        loss: cfg.loss.clone(),
        arp: cfg.arp,
        seed: cfg.seed,
        rules: rules.base_count(),
        pool: rules.len(),
        evaluations: res.evaluations,
        splits,
        p_best: prep.priorities(&res.best),
        removed: prep.removed(&res.best),
        inclusion_order: res.inclusion_order.iter().map(|&i| rules.get(i).id.clone()).collect(),
        missing_field_values: prep.missing.len(),
    };
    Ok(RunOutput {
        report,
        trace: res.trace,
        best: res.best,
    })
}

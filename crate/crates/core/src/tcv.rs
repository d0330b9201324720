//! Temporal cross-validation: sliding train/validation/test folds, baseline
//! systems, and consistency of results across folds.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvaluationReport;
use crate::loss::LossSpec;
use crate::model::{Priority, PriorityVector};
use crate::optimize::{Method, RandomParams, StoppingCriteria};
use crate::pipeline::{run, Prepared, RunConfig, RunReport};

/// Period length (rows or milliseconds) and how many periods each fold
/// advances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<i64>,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl FoldSpec {
    pub fn rows(n: usize) -> Self {
        Self {
            period_rows: Some(n),
            period_ms: None,
            stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.period_rows, self.period_ms) {
            (Some(n), None) if n > 0 => {}
            (None, Some(ms)) if ms > 0 => {}
            _ => return Err(Error::Config("folds: give exactly one positive period_rows or period_ms".into())),
        }
        if self.stride == 0 {
            return Err(Error::Config("folds: stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub index: usize,
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

/// Cuts sorted timestamps into periods; a trailing partial period counts.
pub fn periods(timestamps: &[i64], spec: &FoldSpec) -> Result<Vec<Range<usize>>> {
    spec.validate()?;
    let n = timestamps.len();
    let mut out = Vec::new();
    if let Some(size) = spec.period_rows {
        let mut start = 0;
        while start < n {
            out.push(start..(start + size).min(n));
            start += size;
        }
    } else if let (Some(ms), Some(&t0)) = (spec.period_ms, timestamps.first()) {
        let mut start = 0;
        let mut k = 1i64;
        while start < n {
            let end = start + timestamps[start..].partition_point(|&t| t < t0 + k * ms);
            out.push(start..end);
            start = end;
            k += 1;
        }
    }
    Ok(out)
}

pub fn make_folds(timestamps: &[i64], spec: &FoldSpec) -> Result<Vec<Fold>> {
    let p = periods(timestamps, spec)?;
    if p.len() < 3 {
        return Err(Error::Folds(format!(
            "need at least 3 periods for one fold, found {}",
            p.len()
        )));
    }
    Ok((0..=p.len() - 3)
        .step_by(spec.stride)
        .enumerate()
        .map(|(index, s)| Fold {
            index,
            train: p[s].clone(),
            validation: p[s + 1].clone(),
            test: p[s + 2].clone(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Spacing of the shut-off probability grid for the random baseline.
    #[serde(default = "rho_step")]
    pub rho_step: f64,
    /// Evaluations per grid point.
    #[serde(default = "grid_evaluations")]
    pub evaluations: u64,
}

fn yes() -> bool {
    true
}
fn rho_step() -> f64 {
    0.04
}
fn grid_evaluations() -> u64 {
    10_000
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rho_step: rho_step(),
            evaluations: grid_evaluations(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_step > 0.0 && self.rho_step <= 1.0) {
            return Err(Error::Config("baselines: rho_step must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let steps = (1.0 / self.rho_step + 1e-9).floor() as usize;
        (0..=steps).map(|k| (k as f64 * self.rho_step).min(1.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineScore {
    pub split: &'static str,
    pub report: EvaluationReport,
    /// Loss minus the all-on loss on the same split.
    pub delta_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRun {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub scores: Vec<BaselineScore>,
}

/// All rules on, mandatory-only, and random search with the shut-off
/// probability chosen on validation.
pub fn run_baselines(prep: &Prepared, fold: &Fold, loss: &LossSpec, cfg: &BaselineConfig, seed: u64) -> Result<Vec<BaselineRun>> {
    let data = &prep.dataset;
    let all_on = data.initial.clone();
    let all_off = PriorityVector::new(
        data.rules
            .rules()
            .iter()
            .enumerate()
            .map(|(i, r)| if r.mandatory || r.frozen { data.initial.get(i) } else { -1 })
            .collect(),
    );
    let score = |p: &PriorityVector| -> Result<Vec<BaselineScore>> {
        [("train", &fold.train), ("validation", &fold.validation), ("test", &fold.test)]
            .into_iter()
            .map(|(split, range)| {
                let (base, report) = prep.evaluate_on(p, loss, range.clone())?;
                Ok(BaselineScore {
                    split,
                    delta_loss: report.loss - base.loss,
                    report,
                })
            })
            .collect()
    };

    let mut best: Option<(f64, f64, PriorityVector)> = None;
    for rho in cfg.grid() {
        let method = Method::Random(RandomParams {
            shutoff: rho,
            shuffle: 0.0,
        });
        let (_, res) = prep.search(&method, loss, &StoppingCriteria::evaluations(cfg.evaluations), seed, fold.train.clone())?;
        let (_, val) = prep.evaluate_on(&res.best, loss, fold.validation.clone())?;
        if best.as_ref().is_none_or(|(l, _, _)| val.loss < *l) {
            best = Some((val.loss, rho, res.best));
        }
    }
    let (_, rho, random_p) = best.expect("grid is never empty");
    Ok(vec![
        BaselineRun {
            name: "all_on".into(),
            rho: None,
            scores: score(&all_on)?,
        },
        BaselineRun {
            name: "all_off".into(),
            rho: None,
            scores: score(&all_off)?,
        },
        BaselineRun {
            name: "random".into(),
            rho: Some(rho),
            scores: score(&random_p)?,
        },
    ])
}

/// Jaccard similarity of two sets of removed rule ids; 1 when both are empty.
pub fn jaccard_removed(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// NDCG of `other` against `reference`. A rule at 1-based rank k in the
/// reference has relevance |reference| − k; rules missing from it have 0.
pub fn ndcg_consistency(reference: &[String], other: &[String]) -> Result<f64> {
    if reference.is_empty() || other.is_empty() {
        return Err(Error::EmptyOrder);
    }
    let n = reference.len();
    let rel: HashMap<&str, f64> = reference
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), (n - k - 1) as f64))
        .collect();
    let dcg = |gains: &mut dyn Iterator<Item = f64>| -> f64 {
        gains
            .enumerate()
            .map(|(i, g)| g / ((i + 2) as f64).log2())
            .sum()
    };
    let ideal = dcg(&mut (0..n).map(|k| (n - k - 1) as f64));
    if ideal == 0.0 {
        return Ok(1.0);
    }
    let got = dcg(&mut other.iter().map(|id| rel.get(id.as_str()).copied().unwrap_or(0.0)));
    Ok(got / ideal)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossFoldTable {
    /// `losses[i][j]`: configuration from fold i on the test set of fold
    /// i + j.
    pub losses: Vec<Vec<f64>>,
    /// Rule ids a configuration did not mention, per source fold.
    pub missing: Vec<Vec<String>>,
}

/// Scores each fold's best configuration on its own and every later test set.
pub fn cross_fold_eval(
    prep: &Prepared,
    folds: &[Fold],
    configs: &[HashMap<String, Priority>],
    loss: &LossSpec,
) -> Result<CrossFoldTable> {
    let mut losses = Vec::with_capacity(configs.len());
    let mut missing = Vec::with_capacity(configs.len());
    for (i, map) in configs.iter().enumerate() {
        let (p, absent) = prep.dataset.vector_from_map(map);
        let row = folds[i..]
            .iter()
            .map(|f| prep.evaluate_on(&p, loss, f.test.clone()).map(|(_, r)| r.loss))
            .collect::<Result<Vec<_>>>()?;
        losses.push(row);
        missing.push(absent);
    }
    Ok(CrossFoldTable { losses, missing })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: Fold,
    pub run: RunReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TcvReport {
    pub folds: Vec<FoldReport>,
    /// Pairwise Jaccard similarity of removed rules.
    pub jaccard: Vec<Vec<f64>>,
    /// NDCG of each fold's inclusion order against the first fold's (greedy
    /// only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ndcg: Vec<f64>,
    pub cross_fold: CrossFoldTable,
}

pub fn run_tcv(prep: &Prepared, cfg: &RunConfig) -> Result<TcvReport> {
    let spec = cfg
        .folds
        .as_ref()
        .ok_or_else(|| Error::Config("cross-validation needs a folds section".into()))?;
    let folds = make_folds(prep.dataset.triggers.timestamps(), spec)?;
    let mut reports = Vec::with_capacity(folds.len());
    for f in &folds {
        let out = run(
            prep,
            cfg,
            f.train.clone(),
            &[("validation", f.validation.clone()), ("test", f.test.clone())],
        )?;
        let baselines = if cfg.baselines.enabled {
            run_baselines(prep, f, &cfg.loss, &cfg.baselines, cfg.seed)?
        } else {
            Vec::new()
        };
        reports.push(FoldReport {
            fold: f.clone(),
            run: out.report,
            baselines,
        });
    }
    let removed: Vec<BTreeSet<String>> = reports.iter().map(|r| r.run.removed.iter().cloned().collect()).collect();
    let jaccard = removed
        .iter()
        .map(|a| removed.iter().map(|b| jaccard_removed(a, b)).collect())
        .collect();
    let ndcg = match reports.first() {
        Some(first) if !first.run.inclusion_order.is_empty() => reports
            .iter()
            .map(|r| ndcg_consistency(&first.run.inclusion_order, &r.run.inclusion_order))
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let configs: Vec<HashMap<String, Priority>> = reports
        .iter()
        .map(|r| r.run.p_best.iter().map(|(k, &v)| (k.clone(), v)).collect())
        .collect();
    let cross_fold = cross_fold_eval(prep, &folds, &configs, &cfg.loss)?;
    Ok(TcvReport {
        folds: reports,
        jaccard,
        ndcg,
        cross_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::GreedyParams;
    use crate::synth::{generate_with, SynthConfig};

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fold_counts() {
        let ts: Vec<i64> = (0..60).collect();
        assert_eq!(make_folds(&ts, &FoldSpec::rows(10)).unwrap().len(), 4);
        assert_eq!(make_folds(&ts, &FoldSpec::rows(20)).unwrap().len(), 1);
        assert!(matches!(make_folds(&ts, &FoldSpec::rows(30)), Err(Error::Folds(_))));
        let f = make_folds(&ts, &FoldSpec::rows(10)).unwrap();
        assert_eq!(f[1].train, 10..20);
        assert_eq!(f[1].validation, 20..30);
        assert_eq!(f[1].test, 30..40);
        let strided = FoldSpec {
            stride: 2,
            ..FoldSpec::rows(10)
        };
        assert_eq!(make_folds(&ts, &strided).unwrap().len(), 2);
    }

    #[test]
    fn duration_periods_and_partial_tail() {
        let ts = vec![0, 5, 10, 15, 20, 31, 35];
        let spec = FoldSpec {
            period_rows: None,
            period_ms: Some(10),
            stride: 1,
        };
        assert_eq!(periods(&ts, &spec).unwrap(), vec![0..2, 2..4, 4..5, 5..7]);
        let p = periods(&(0..25).collect::<Vec<_>>(), &FoldSpec::rows(10)).unwrap();
        assert_eq!(p, vec![0..10, 10..20, 20..25]);
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard_removed(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert!((jaccard_removed(&set(&["a", "b"]), &set(&["b", "c"])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard_removed(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard_removed(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn ndcg_cases() {
        let q = ids(&["a", "b", "c"]);
        assert_eq!(ndcg_consistency(&q, &q).unwrap(), 1.0);
        let rev = ids(&["c", "b", "a"]);
        let dcg = 1.0 / 3f64.log2() + 2.0 / 2.0;
        let idcg = 2.0 + 1.0 / 3f64.log2();
        let got = ndcg_consistency(&q, &rev).unwrap();
        assert!((got - dcg / idcg).abs() < 1e-12);
        assert!((got - 0.6199).abs() < 5e-5);
        assert_eq!(ndcg_consistency(&ids(&["a"]), &ids(&["a"])).unwrap(), 1.0);
        assert!(matches!(ndcg_consistency(&[], &q), Err(Error::EmptyOrder)));
    }

    #[test]
    fn grid_spacing() {
        let g = BaselineConfig::default().grid();
        assert_eq!(g.len(), 26);
        assert_eq!(g[0], 0.0);
        assert!((g[25] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tcv_on_stationary_data() {
        let s = generate_with(&SynthConfig::small(8000), 4);
        let prep = Prepared::new(s.dataset, false).unwrap();
        let cfg = RunConfig {
            method: Method::Greedy(GreedyParams::default()),
            stopping: StoppingCriteria::evaluations(3000),
            folds: Some(FoldSpec::rows(2000)),
            baselines: BaselineConfig {
                enabled: true,
                rho_step: 0.25,
                evaluations: 50,
            },
            ..RunConfig::default()
        };
        let r = run_tcv(&prep, &cfg).unwrap();
        assert_eq!(r.folds.len(), 2);
        assert_eq!(r.jaccard[0][0], 1.0);
        assert_eq!(r.jaccard[0][1], r.jaccard[1][0]);
        assert_eq!(r.ndcg[0], 1.0);
        assert_eq!(r.cross_fold.losses.len(), 2);
        assert_eq!(r.cross_fold.losses[0].len(), 2);
        assert_eq!(r.cross_fold.losses[1].len(), 1);
        // diagonal equals each fold's own test score
        for (i, f) in r.folds.iter().enumerate() {
            assert_eq!(r.cross_fold.losses[i][0], f.run.splits[2].optimized.loss);
            let on = &f.baselines[0];
            assert_eq!(on.name, "all_on");
            assert!(on.scores.iter().all(|s| s.delta_loss == 0.0));
        }
    }
}

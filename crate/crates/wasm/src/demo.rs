//! Browser-independent part of the demo: everything returns JSON text.

use std::ops::Range;

use rulepilot_core::loss::LossSpec;
use rulepilot_core::optimize::{Method, RandomParams, StoppingCriteria};
use rulepilot_core::pipeline::{run, Prepared, RunConfig};
use rulepilot_core::synth::{generate_with, SynthConfig};
use rulepilot_core::{Error, Result};
use serde_json::json;

/// Largest dataset the page will generate.
pub const MAX_ROWS: usize = 60_000;

pub struct Demo {
    plain: Prepared,
    arp: Prepared,
    splits: Vec<Range<usize>>,
    seed: u64,
}

impl Demo {
    pub fn new(rows: usize, seed: u64) -> Result<Self> {
        if !(300..=MAX_ROWS).contains(&rows) {
            return Err(Error::Config(format!("rows must be in 300..={MAX_ROWS}, got {rows}")));
        }
        let synth = generate_with(&SynthConfig::small(rows), seed);
        Ok(Self {
            arp: Prepared::new(synth.dataset.clone(), true)?,
            plain: Prepared::new(synth.dataset, false)?,
            splits: synth.splits,
            seed,
        })
    }

    fn prepared(&self, arp: bool) -> &Prepared {
        if arp {
            &self.arp
        } else {
            &self.plain
        }
    }

    /// Rule counts and the deployed configuration on each split.
    pub fn summary(&self) -> Result<String> {
        let d = &self.plain.dataset;
        let loss = LossSpec::Synthetic;
        let mut splits = Vec::new();
        for (name, r) in ["train", "validation", "test"].iter().zip(&self.splits) {
            let (base, _) = self.plain.evaluate_on(&d.initial, &loss, r.clone())?;
            splits.push(json!({ "split": name, "rows": r.len(), "original": base }));
        }
        Ok(json!({
            "seed": self.seed,
            "rows": self.plain.rows(),
            "rules": d.len_rules(),
            "arp_pool": self.arp.dataset.len_rules(),
            "splits": splits,
        })
        .to_string())
    }

    /// Runs a search on train and scores it on validation and test. `config`
    /// uses the run-config format; the wall-clock limit is not available.
    pub fn optimize(&self, config: &str) -> Result<String> {
        let cfg = RunConfig::from_json(config)?;
        if cfg.stopping.max_seconds.is_some() {
            return Err(Error::Config("max_seconds is not supported here".into()));
        }
        let out = run(
            self.prepared(cfg.arp),
            &cfg,
            self.splits[0].clone(),
            &[("validation", self.splits[1].clone()), ("test", self.splits[2].clone())],
        )?;
        Ok(json!({ "report": out.report, "trace": out.trace }).to_string())
    }

    /// Random search at each shut-off probability on the grid, scored on
    /// train and validation.
    pub fn rho_sweep(&self, step: f64, evaluations: u64, seed: u64) -> Result<String> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::Config(format!("step must be in (0, 1], got {step}")));
        }
        let count = (1.0 / step + 1e-9).floor() as usize;
        let mut points = Vec::with_capacity(count + 1);
        for i in 0..=count {
            let rho = (i as f64 * step).min(1.0);
            let cfg = RunConfig {
                method: Method::Random(RandomParams {
                    shutoff: rho,
                    shuffle: 0.0,
                }),
                seed,
                stopping: StoppingCriteria::evaluations(evaluations),
                ..RunConfig::default()
            };
            let out = run(&self.plain, &cfg, self.splits[0].clone(), &[("validation", self.splits[1].clone())])?;
            let s = &out.report.splits;
            points.push(json!({
                "rho": rho,
                "train": s[0].optimized.loss,
                "validation": s[1].optimized.loss,
                "rules_off": out.report.removed.len(),
            }));
        }
        Ok(json!({ "evaluations": evaluations, "points": points }).to_string())
    }
}

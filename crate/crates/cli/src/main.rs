use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rulepilot_core::eval::EvaluationReport;
use rulepilot_core::io;
use rulepilot_core::loss::LossSpec;
use rulepilot_core::model::Priority;
use rulepilot_core::pipeline::{run, Prepared, RunConfig, RunReport};
use rulepilot_core::synth::{generate_with, SynthConfig};
use rulepilot_core::tcv::{run_tcv, TcvReport};
use rulepilot_core::{Error, Result};

#[derive(Parser)]
#[command(name = "rulepilot", version, about = "Evaluate and optimize priority-based fraud rule systems")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the seed from the run configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Score one configuration (the deployed one by default).
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// JSON map of rule id to priority, or a report.json from a run.
        #[arg(long)]
        priorities: Option<PathBuf>,
        /// Built-in loss name (synthetic, d1, d2) or a generic loss as JSON.
        #[arg(long)]
        loss: Option<String>,
    },
    /// Search for a better configuration.
    Optimize {
        #[arg(long)]
        data: PathBuf,
        /// Cut the rows into this many equal contiguous parts; the first is
        /// used for the search and the rest for held-out scoring.
        #[arg(long, default_value_t = 1)]
        splits: usize,
    },
    /// Write a synthetic benchmark dataset.
    Synth {
        #[arg(long, default_value_t = 225_000)]
        rows: usize,
    },
    /// Temporal cross-validation with baselines.
    Tcv {
        #[arg(long)]
        data: PathBuf,
    },
    /// Print summary tables for a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let g = cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("threads: {e}")))?;
    }
    match cli.command {
        Command::Evaluate { data, priorities, loss } => evaluate(&g, &data, priorities.as_deref(), loss.as_deref()),
        Command::Optimize { data, splits } => optimize(&g, &data, splits),
        Command::Synth { rows } => synth(&g, rows),
        Command::Tcv { data } => tcv(&g, &data),
        Command::Report { run } => report(&run),
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(g: &Global) -> Result<PathBuf> {
    let dir = g
        .out
        .clone()
        .ok_or_else(|| Error::Config("--out is required for this command".into()))?;
    io::ensure_dir(&dir)
}

fn parse_loss(text: &str) -> Result<LossSpec> {
    let json = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        format!("{:?}", text.trim())
    };
    let loss: LossSpec = serde_json::from_str(&json).map_err(|e| Error::InvalidLoss(e.to_string()))?;
    loss.validate()?;
    Ok(loss)
}

fn read_priorities(path: &Path) -> Result<HashMap<String, Priority>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some(p) = v.get_mut("p_best") {
        v = p.take();
    }
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: expected id → priority map: {e}", path.display())))
}

fn evaluate(g: &Global, data: &Path, priorities: Option<&Path>, loss: Option<&str>) -> Result<()> {
    let cfg = load_config(g)?;
    let loss = match loss {
        Some(l) => parse_loss(l)?,
        None => cfg.loss.clone(),
    };
    let dataset = io::load_dataset_cached(data)?;
    let map = priorities.map(read_priorities).transpose()?;
    // clone ids only exist in the augmented pool
    let arp = cfg.arp || map.as_ref().is_some_and(|m| m.keys().any(|id| dataset.rules.index_of(id).is_none()));
    let prep = Prepared::new(dataset, arp)?;
    let p = match &map {
        Some(m) => {
            let (p, missing) = prep.dataset.vector_from_map(m);
            let unknown: Vec<&String> = m.keys().filter(|id| prep.dataset.rules.index_of(id).is_none()).collect();
            if !unknown.is_empty() {
                return Err(Error::Config(format!("unknown rule ids in priorities: {unknown:?}")));
            }
            if !missing.is_empty() && !arp {
                eprintln!("note: {} rules absent from the priorities file are treated as inactive", missing.len());
            }
            prep.dataset.check_vector(&p)?;
            p
        }
        None => prep.dataset.initial.clone(),
    };
    let (base, r) = prep.evaluate_on(&p, &loss, 0..prep.rows())?;
    print_reports(&[("original", &base), ("candidate", &r)]);
    if g.out.is_some() {
        let dir = out_dir(g)?;
        io::write_json(&dir.join("evaluation.json"), &r)?;
    }
    Ok(())
}

fn optimize(g: &Global, data: &Path, splits: usize) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = out_dir(g)?;
    if splits == 0 {
        return Err(Error::Config("--splits must be positive".into()));
    }
    let prep = Prepared::new(io::load_dataset_cached(data)?, cfg.arp)?;
    let n = prep.rows();
    let part = n / splits;
    let range = |k: usize| k * part..if k + 1 == splits { n } else { (k + 1) * part };
    let names = ["validation", "test"];
    let held: Vec<(String, std::ops::Range<usize>)> = (1..splits)
        .map(|k| (names.get(k - 1).map_or(format!("split{k}"), |s| s.to_string()), range(k)))
        .collect();
    let held_ref: Vec<(&str, std::ops::Range<usize>)> = held.iter().map(|(s, r)| (s.as_str(), r.clone())).collect();
    let out = run(&prep, &cfg, range(0), &held_ref)?;
    io::write_json(&dir.join("report.json"), &out.report)?;
    io::write_text(&dir.join("trace.csv"), &io::trace_csv(&out.trace))?;
    io::write_text(&dir.join("config.json"), &cfg.to_json())?;
    print_run(&out.report);
    Ok(())
}

fn synth(g: &Global, rows: usize) -> Result<()> {
    let dir = out_dir(g)?;
    let cfg = if rows == SynthConfig::default().rows {
        SynthConfig::default()
    } else {
        SynthConfig::small(rows)
    };
    let s = generate_with(&cfg, g.seed.unwrap_or(0));
    io::write_dataset(&dir, &s.dataset)?;
    println!(
        "wrote {} transactions ({} fraud), {} rules to {}",
        s.dataset.triggers.rows(),
        s.dataset.triggers.fraud_count(),
        s.dataset.len_rules(),
        dir.display()
    );
    Ok(())
}

fn tcv(g: &Global, data: &Path) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = out_dir(g)?;
    let prep = Prepared::new(io::load_dataset_cached(data)?, cfg.arp)?;
    let r = run_tcv(&prep, &cfg)?;
    io::write_json(&dir.join("tcv.json"), &r)?;
    io::write_text(&dir.join("config.json"), &cfg.to_json())?;
    print_tcv(&r);
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let read = |name: &str| -> Result<Option<serde_json::Value>> {
        let path = dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    };
    let mut found = false;
    if let Some(v) = read("report.json")? {
        found = true;
        println!("method {}  evaluations {}", v["method"]["method"], v["evaluations"]);
        print_split_table(v["splits"].as_array().map(Vec::as_slice).unwrap_or(&[]));
        println!("removed {} of {} rules", v["removed"].as_array().map_or(0, Vec::len), v["rules"]);
    }
    if let Some(v) = read("tcv.json")? {
        found = true;
        for f in v["folds"].as_array().into_iter().flatten() {
            println!("fold {}", f["fold"]["index"]);
            print_split_table(f["run"]["splits"].as_array().map(Vec::as_slice).unwrap_or(&[]));
        }
        println!("cross-fold test losses: {}", v["cross_fold"]["losses"]);
    }
    if !found {
        return Err(Error::io(
            dir.join("report.json"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no report.json or tcv.json in run directory"),
        ));
    }
    Ok(())
}

fn print_split_table(splits: &[serde_json::Value]) {
    println!("{:<12} {:>10} {:>10} {:>10} {:>10} {:>8}", "split", "loss", "recall", "alerts%", "fpr", "rules%");
    for s in splits {
        let o = &s["optimized"];
        println!(
            "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8.3}",
            s["split"].as_str().unwrap_or("?"),
            o["loss"].as_f64().unwrap_or(f64::NAN),
            o["recall"].as_f64().unwrap_or(f64::NAN),
            o["alert_rate"].as_f64().unwrap_or(f64::NAN),
            o["fpr"].as_f64().unwrap_or(f64::NAN),
            o["rules_active_fraction"].as_f64().unwrap_or(f64::NAN),
        );
    }
}

fn print_reports(rows: &[(&str, &EvaluationReport)]) {
    println!("{:<12} {:>10} {:>10} {:>10} {:>10} {:>8}", "system", "loss", "recall", "alerts%", "fpr", "rules%");
    for (name, r) in rows {
        println!(
            "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8.3}",
            name, r.loss, r.recall, r.alert_rate, r.fpr, r.rules_active_fraction
        );
    }
}

fn print_run(r: &RunReport) {
    println!("{} after {} evaluations (pool {} rules)", r.method.name(), r.evaluations, r.pool);
    println!(
        "{:<12} {:>10} {:>10} {:>10} {:>10}",
        "split", "original", "optimized", "delta", "recall"
    );
    for s in &r.splits {
        println!(
            "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            s.split, s.original.loss, s.optimized.loss, s.delta_loss, s.optimized.recall
        );
    }
    println!("removed {} of {} rules", r.removed.len(), r.rules);
}

fn print_tcv(r: &TcvReport) {
    for f in &r.folds {
        println!("fold {}", f.fold.index);
        print_run(&f.run);
        for b in &f.baselines {
            let deltas: Vec<String> = b.scores.iter().map(|s| format!("{}={:+.4}", s.split, s.delta_loss)).collect();
            println!("  baseline {:<8} {}", b.name, deltas.join(" "));
        }
    }
    println!("jaccard of removed rules: {:?}", r.jaccard);
    if !r.ndcg.is_empty() {
        println!("ndcg vs first fold: {:?}", r.ndcg);
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpl::pipeline::{self, CorpusSource, PipelineConfig, RunDir, StageOutcome};
use cpl::{Error, Result};

#[derive(Parser)]
#[command(name = "cpl", version, about = "Cross-condition preference learning pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory shared by all stages.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Print one JSON object instead of a table.
    #[arg(long, global = true)]
    json: bool,
    /// Override a config key, e.g. `--set beta=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Summary,
    DeltaBins,
    Oracle,
    Rerank,
}

#[derive(Subcommand)]
enum Command {
    /// Split a corpus into train/pref/test and build the vocabulary.
    Prepare {
        /// Corpus JSONL, one sentence unit per line.
        #[arg(long, conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        /// Generate the synthetic context-dependent corpus instead.
        #[arg(long)]
        synthetic: bool,
    },
    /// Likelihood training on both conditions.
    Sft,
    /// Sample and score candidates with the SFT checkpoint.
    Candidates,
    /// Build intra- and cross-condition preference pairs.
    Pairs {
        #[arg(long, value_name = "full|drop_wl_plus|drop_wl_minus")]
        ablation: Option<String>,
    },
    /// Preference training from the SFT checkpoint.
    Train {
        #[arg(long, value_name = "cpl|intra_only|cross_only")]
        objective: Option<String>,
    },
    /// Decode the test split and report.
    Eval {
        #[arg(long, default_value = "cpl")]
        checkpoint: String,
        #[arg(long, value_enum, default_value = "summary")]
        report: Report,
    },
    /// Synthetic-task analysis over every available checkpoint.
    Analyze,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(StageOutcome, Option<Report>)> {
    let mut cfg = load_config(&cli.common)?;
    let out = &cli.common.out;
    let outcome = match &cli.command {
        Command::Prepare { input, synthetic } => {
            let source = match (input, synthetic) {
                (Some(p), _) => CorpusSource::File(p.clone()),
                (None, true) => CorpusSource::Synthetic,
                (None, false) => return Err(Error::Usage("prepare needs --input PATH or --synthetic".into())),
            };
            pipeline::prepare(&RunDir::create(out)?, &cfg, &source)?
        }
        Command::Sft => pipeline::run_sft(&RunDir::open(out)?, &cfg)?,
        Command::Candidates => pipeline::candidates(&RunDir::open(out)?, &cfg)?,
        Command::Pairs { ablation } => {
            if let Some(a) = ablation {
                cfg.set("ablation", a)?;
            }
            pipeline::pairs(&RunDir::open(out)?, &cfg)?
        }
        Command::Train { objective } => {
            if let Some(o) = objective {
                cfg.set("objective", o)?;
            }
            pipeline::train(&RunDir::open(out)?, &cfg)?
        }
        Command::Eval { checkpoint, report } => {
            let o = pipeline::eval(&RunDir::open(out)?, &cfg, checkpoint)?;
            return Ok((o, Some(*report)));
        }
        Command::Analyze => pipeline::analyze(&RunDir::open(out)?, &cfg)?,
    };
    Ok((outcome, None))
}

fn report_view(summary: &serde_json::Value, report: Report) -> serde_json::Value {
    match report {
        Report::Summary => summary.clone(),
        Report::DeltaBins => summary["delta_bins"].clone(),
        Report::Oracle => summary["oracle"].clone(),
        Report::Rerank => summary["rerank"].clone(),
    }
}

fn print_table(prefix: &str, v: &serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                print_table(&key, x);
            }
        }
        serde_json::Value::Array(xs) if xs.iter().any(|x| x.is_object()) => {
            for (i, x) in xs.iter().enumerate() {
                print_table(&format!("{prefix}[{i}]"), x);
            }
        }
        other => println!("{prefix:<40} {other}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((outcome, report)) => {
            let mut view = outcome.to_json();
            if let Some(r) = report {
                view["summary"] = report_view(&outcome.summary, r);
            }
            if cli.common.json {
                println!("{view}");
            } else {
                print_table("", &view);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.common.json {
                println!("{}", serde_json::json!({ "error": e.to_string(), "validation": e.is_validation() }));
            }
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

//! On-disk pipeline stages. Every stage reads its inputs from a run
//! directory, checks them against the upstream manifests and writes its
//! outputs together with a manifest of its own.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{
    build_vocab, corpus_to_jsonl, encode_corpus, gen_synthetic_corpus, parse_corpus_jsonl, split_documents,
    validate_documents, SyntheticLexicon, TextDocument, Vocab,
};
use crate::evalkit::{
    context_dependent_keys, context_robustness, corpus_eval, delta_bins, delta_histogram_csv, eval_rows,
    non_ambiguous_keys, oracle_select, rerank, restrict_rows, rows_to_csv, CorpusSummary, DeltaBin, DeltaBins,
    EvalRow, OracleSummary, RerankStrategy, RerankSummary, RobustnessSummary,
};
use crate::pairs::{build_pair_corpus, candidates_to_jsonl, pairs_to_jsonl, parse_candidates_jsonl, parse_pairs_jsonl};
use crate::policy::{parse_checkpoint, write_checkpoint, PolicyParams};
use crate::trainer::{
    generate_candidates, prepare_pairs, ranking_accuracy, sft, train_cpl, unit_inputs, ObjectiveMode, PreparedPairs,
    TrainConfig, UnitInputs,
};
use crate::{Error, Result};

pub use config::PipelineConfig;
pub use manifest::{derive_seed, sha256_hex, Artifact, RunDir, RunManifest, Timing};

pub const SPLITS: [&str; 3] = ["train", "pref", "test"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusSource {
    Synthetic,
    File(PathBuf),
}

/// What a finished stage reports back to its caller.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub manifest: RunManifest,
    pub summary: serde_json::Value,
}

impl StageOutcome {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "stage": self.manifest.command,
            "seed": self.manifest.seed,
            "outputs": self.manifest.outputs,
            "summary": self.summary,
        })
    }
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

struct Stage<'a> {
    run: &'a RunDir,
    name: String,
    cfg: &'a PipelineConfig,
    started: f64,
    inputs: Vec<Artifact>,
    outputs: Vec<Artifact>,
    params: BTreeMap<String, String>,
}

impl<'a> Stage<'a> {
    fn new(run: &'a RunDir, name: impl Into<String>, cfg: &'a PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Stage {
            run,
            name: name.into(),
            cfg,
            started: now_unix(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            params: BTreeMap::new(),
        })
    }

    fn seed(&self) -> u64 {
        self.cfg.train.seed
    }

    fn input_text(&mut self, upstream: &RunManifest, name: &str) -> Result<String> {
        let (text, art) = self.run.read_verified_text(upstream, name)?;
        self.inputs.push(art);
        Ok(text)
    }

    fn input_bytes(&mut self, upstream: &RunManifest, name: &str) -> Result<Vec<u8>> {
        let (bytes, art) = self.run.read_verified(upstream, name)?;
        self.inputs.push(art);
        Ok(bytes)
    }

    fn output(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let art = self.run.write(name, bytes)?;
        self.outputs.push(art);
        Ok(())
    }

    fn param(&mut self, key: &str, value: impl ToString) {
        self.params.insert(key.to_string(), value.to_string());
    }

    fn finish(self, summary: serde_json::Value) -> Result<StageOutcome> {
        let manifest = RunManifest {
            command: self.name.clone(),
            seed: self.seed(),
            config: self.cfg.snapshot(),
            inputs: self.inputs,
            outputs: self.outputs,
            params: self.params,
        };
        let timing = Timing {
            started_unix: self.started,
            finished_unix: now_unix(),
        };
        self.run.write_manifest(&self.name, &manifest, timing)?;
        Ok(StageOutcome { manifest, summary })
    }
}

struct Prepared {
    manifest: RunManifest,
    vocab: Vocab,
}

fn load_prepared(stage: &mut Stage<'_>) -> Result<Prepared> {
    let manifest = stage.run.manifest("prepare")?;
    let vocab = Vocab::parse(&stage.input_text(&manifest, "vocab.txt")?)?;
    Ok(Prepared { manifest, vocab })
}

fn load_split(stage: &mut Stage<'_>, prep: &Prepared, split: &str) -> Result<Vec<TextDocument>> {
    let docs = parse_corpus_jsonl(&stage.input_text(&prep.manifest, &format!("corpus.{split}.jsonl"))?)?;
    validate_documents(&docs)?;
    Ok(docs)
}

fn load_units(stage: &mut Stage<'_>, prep: &Prepared, split: &str) -> Result<(Vec<TextDocument>, Vec<UnitInputs>)> {
    let docs = load_split(stage, prep, split)?;
    let enc = encode_corpus(&docs, &prep.vocab)?;
    let units = unit_inputs(&enc, &prep.vocab, stage.cfg.train.context_tokens)?;
    Ok((docs, units))
}

/// Manifest name of the stage that writes checkpoint `tag`.
pub fn checkpoint_stage(tag: &str) -> Result<String> {
    match tag {
        "sft" => Ok("sft".into()),
        "cpl" => Ok("train".into()),
        other => match other.strip_prefix("cpl_") {
            Some(rest) if rest.parse::<ObjectiveMode>().is_ok() => Ok(format!("train_{rest}")),
            _ => Err(Error::Usage(format!("unknown checkpoint {other:?}"))),
        },
    }
}

/// Checkpoint tag written by preference training under `mode`.
pub fn checkpoint_tag(mode: ObjectiveMode) -> String {
    match mode {
        ObjectiveMode::Cpl => "cpl".into(),
        other => format!("cpl_{}", other.as_str()),
    }
}

fn load_checkpoint(stage: &mut Stage<'_>, tag: &str, vocab: &Vocab) -> Result<PolicyParams> {
    let upstream = stage.run.manifest(&checkpoint_stage(tag)?)?;
    let bytes = stage.input_bytes(&upstream, &format!("{tag}.ckpt"))?;
    let params = parse_checkpoint(&bytes, Some(vocab.len()))?;
    if params.embed_dim != stage.cfg.train.embed_dim || params.hidden_dim != stage.cfg.train.hidden_dim {
        return Err(Error::Config(format!(
            "checkpoint {tag} has dims {}x{}, config asks for {}x{}",
            params.embed_dim, params.hidden_dim, stage.cfg.train.embed_dim, stage.cfg.train.hidden_dim
        )));
    }
    Ok(params)
}

fn stage_train_config(cfg: &PipelineConfig, label: &str) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.train.seed, label),
        ..cfg.train.clone()
    }
}

/// Writes the corpus splits and the vocabulary.
pub fn prepare(run: &RunDir, cfg: &PipelineConfig, source: &CorpusSource) -> Result<StageOutcome> {
    let mut stage = Stage::new(run, "prepare", cfg)?;
    let seed = stage.seed();
    let docs = match source {
        CorpusSource::Synthetic => {
            stage.param("source", "synthetic");
            gen_synthetic_corpus(&cfg.synth, derive_seed(seed, "corpus"))?.docs
        }
        CorpusSource::File(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            stage.inputs.push(Artifact {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
            stage.param("source", "file");
            let text = String::from_utf8(bytes).map_err(|_| Error::parse(1, "corpus is not UTF-8"))?;
            parse_corpus_jsonl(&text)?
        }
    };
    validate_documents(&docs)?;
    let vocab = build_vocab(&docs, cfg.max_vocab)?;
    encode_corpus(&docs, &vocab)?;
    let parts = split_documents(&docs, &cfg.split, derive_seed(seed, "split"))?;
    let mut sizes = BTreeMap::new();
    for (name, part) in SPLITS.iter().zip(&parts) {
        stage.output(&format!("corpus.{name}.jsonl"), corpus_to_jsonl(part))?;
        stage.param(&format!("docs_{name}"), part.len());
        sizes.insert(*name, part.len());
    }
    stage.output("vocab.txt", vocab.to_text())?;
    stage.param("vocab_size", vocab.len());
    let summary = json!({ "docs": docs.len(), "splits": sizes, "vocab_size": vocab.len() });
    stage.finish(summary)
}

fn write_last_good(run: &RunDir, tag: &str, err: &Error) {
    if let Error::Diverged { last_good, .. } = err {
        let _ = run.write(&format!("{tag}.last_good.ckpt"), write_checkpoint(last_good));
    }
}

/// Likelihood training on both conditions of the train split.
pub fn run_sft(run: &RunDir, cfg: &PipelineConfig) -> Result<StageOutcome> {
    let mut stage = Stage::new(run, "sft", cfg)?;
    let prep = load_prepared(&mut stage)?;
    let (_, units) = load_units(&mut stage, &prep, "train")?;
    let tc = stage_train_config(cfg, "sft");
    let init = PolicyParams::init(prep.vocab.len(), tc.embed_dim, tc.hidden_dim, derive_seed(stage.seed(), "init"));
    let (params, report) = sft(&init, &units, &tc).inspect_err(|e| write_last_good(run, "sft", e))?;
    stage.output("sft.ckpt", write_checkpoint(&params))?;
    stage.output("sft_curve.csv", report.to_csv())?;
    stage.param("units", units.len());
    stage.param("steps", report.steps.len());
    let summary = json!({ "units": units.len(), "steps": report.steps.len(), "epoch_means": report.epoch_means });
    stage.finish(summary)
}

fn scores_csv(sets: &[crate::pairs::CandidateSet]) -> String {
    let mut out = String::from("doc_id,index,condition,candidate_idx,s,d,select,bleu\n");
    for set in sets {
        for (i, c) in set.candidates().iter().enumerate() {
            let k = set.unit_key();
            let cells = match &c.card {
                Some(card) => format!(
                    "{:?},{:?},{:?},{:?}",
                    card.s.value(),
                    card.d.value(),
                    card.select.value(),
                    card.bleu.value()
                ),
                None => ",,,".into(),
            };
            let _ = writeln!(out, "{},{},{},{i},{cells}", k.doc_id, k.index, c.condition.tag());
        }
    }
    out
}

/// Samples and scores four candidates per unit of the preference split, and
/// of the test split for held-out pair evaluation.
pub fn candidates(run: &RunDir, cfg: &PipelineConfig) -> Result<StageOutcome> {
    let mut stage = Stage::new(run, "candidates", cfg)?;
    let prep = load_prepared(&mut stage)?;
    let params = load_checkpoint(&mut stage, "sft", &prep.vocab)?;
    let seed = stage.seed();
    let mut summary = serde_json::Map::new();
    for (split, file, label) in [("pref", "candidates.jsonl", "candidates"), ("test", "candidates.test.jsonl", "candidates_test")] {
        let (_, units) = load_units(&mut stage, &prep, split)?;
        let sets = generate_candidates(&params, &units, &prep.vocab, &cfg.train, derive_seed(seed, label))?;
        stage.output(file, candidates_to_jsonl(&sets))?;
        if split == "pref" {
            stage.output("scores.csv", scores_csv(&sets))?;
        }
        stage.param(&format!("sets_{split}"), sets.len());
        summary.insert(format!("sets_{split}"), json!(sets.len()));
    }
    stage.finish(summary.into())
}

/// Labels and filters preference pairs from the scored candidates.
pub fn pairs(run: &RunDir, cfg: &PipelineConfig) -> Result<StageOutcome> {
    let mut stage = Stage::new(run, "pairs", cfg)?;
    let upstream = run.manifest("candidates")?;
    stage.param("ablation", cfg.ablation);
    let mut summary = serde_json::Map::new();
    for (input, output, suffix) in [
        ("candidates.jsonl", "pairs.jsonl", ""),
        ("candidates.test.jsonl", "pairs.test.jsonl", "_test"),
    ] {
        let sets = parse_candidates_jsonl(&stage.input_text(&upstream, input)?)?;
        let corpus = build_pair_corpus(&sets, &cfg.filter, cfg.ablation)?;
        stage.output(output, pairs_to_jsonl(&corpus))?;
        if suffix.is_empty() {
            stage.output("pair_counts.csv", corpus.counts.to_csv())?;
        }
        for (k, v) in [("intra_s", corpus.intra_s.len()), ("intra_c", corpus.intra_c.len()), ("cross", corpus.cross.len())] {
            stage.param(&format!("{k}{suffix}"), v);
            summary.insert(format!("{k}{suffix}"), json!(v));
        }
    }
    summary.insert("ablation".into(), json!(cfg.ablation.to_string()));
    stage.finish(summary.into())
}

/// Preference training from the SFT checkpoint; `cfg.train.objective`
/// picks full CPL or a single-loss ablation.
pub fn train(run: &RunDir, cfg: &PipelineConfig) -> Result<StageOutcome> {
    let mode = cfg.train.objective;
    let tag = checkpoint_tag(mode);
    let mut stage = Stage::new(run, checkpoint_stage(&tag)?, cfg)?;
    let prep = load_prepared(&mut stage)?;
    let init = load_checkpoint(&mut stage, "sft", &prep.vocab)?;
    let (_, units) = load_units(&mut stage, &prep, "pref")?;
    let upstream = run.manifest("pairs")?;
    let corpus = parse_pairs_jsonl(&stage.input_text(&upstream, "pairs.jsonl")?)?;
    let prepared = prepare_pairs(&corpus, &units, &prep.vocab)?;
    let tc = stage_train_config(cfg, "cpl");
    let (params, report) = train_cpl(&init, &prepared, &tc).inspect_err(|e| write_last_good(run, &tag, e))?;
    stage.output(&format!("{tag}.ckpt"), write_checkpoint(&params))?;
    stage.output(&format!("{tag}_curve.csv"), report.to_csv())?;
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    stage.output(&format!("{tag}_report.json"), report_json)?;
    stage.param("objective", mode.as_str());
    stage.param("steps", report.steps.len());
    let summary = json!({
        "objective": mode.as_str(),
        "pair_sizes": report.pair_sizes,
        "steps": report.steps.len(),
        "epoch_means": report.epoch_means,
    });
    stage.finish(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub checkpoint: String,
    pub corpus: CorpusSummary,
    /// Mean of the two conditions' mean s-proxy.
    pub combined: f64,
    pub oracle: OracleSummary,
    pub delta_bins: DeltaBins,
    pub rerank: Vec<RerankSummary>,
}

fn rerank_all(rows: &[EvalRow], cfg: &PipelineConfig) -> Result<Vec<RerankSummary>> {
    let seed = cfg.train.seed;
    [
        RerankStrategy::Oracle,
        RerankStrategy::Qe {
            sigma: cfg.qe_sigma,
            seed: derive_seed(seed, "qe"),
        },
        RerankStrategy::Prob,
        RerankStrategy::Random {
            seed: derive_seed(seed, "random_rerank"),
        },
    ]
    .into_iter()
    .map(|s| rerank(rows, s, cfg.rerank_length_norm, cfg.eval_metric))
    .collect()
}

fn summarize(tag: &str, rows: &[EvalRow], cfg: &PipelineConfig) -> Result<EvalSummary> {
    let corpus = corpus_eval(rows)?;
    Ok(EvalSummary {
        checkpoint: tag.to_string(),
        corpus,
        combined: (corpus.mean_s_sent + corpus.mean_s_ctx) / 2.0,
        oracle: oracle_select(rows, cfg.eval_metric)?,
        delta_bins: delta_bins(rows, cfg.eval_metric, cfg.thresholds()?)?,
        rerank: rerank_all(rows, cfg)?,
    })
}

pub const HIST_BINS: usize = 40;

/// Greedy decoding of the test split under both conditions with checkpoint
/// `tag`, plus corpus, oracle, Δ-bin and reranking reports.
pub fn eval(run: &RunDir, cfg: &PipelineConfig, tag: &str) -> Result<StageOutcome> {
    let mut stage = Stage::new(run, format!("eval_{tag}"), cfg)?;
    let prep = load_prepared(&mut stage)?;
    let params = load_checkpoint(&mut stage, tag, &prep.vocab)?;
    let (_, units) = load_units(&mut stage, &prep, "test")?;
    let rows = eval_rows(&params, &units, &prep.vocab, cfg.train.max_len)?;
    let summary = summarize(tag, &rows, cfg)?;
    stage.output(&format!("eval_{tag}_rows.csv"), rows_to_csv(&rows))?;
    stage.output(&format!("eval_{tag}_delta_bins.csv"), summary.delta_bins.to_csv())?;
    stage.output(
        &format!("eval_{tag}_delta_hist.csv"),
        delta_histogram_csv(&rows, cfg.eval_metric, HIST_BINS)?,
    )?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    stage.output(&format!("eval_{tag}_summary.json"), text)?;
    stage.param("checkpoint", tag);
    stage.param("rows", rows.len());
    stage.finish(serde_json::to_value(&summary).expect("summary serializes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAnalysis {
    pub checkpoint: String,
    /// Held-out pairs ranked correctly under their own conditions; `None`
    /// if no held-out pair survived the filter.
    pub ranking_accuracy: Option<f64>,
    /// On the context-dependent test sentences; `None` if there are none.
    pub robustness: Option<RobustnessSummary>,
    pub eval: EvalSummary,
    /// On-par Δ-bin share over the non-ambiguous test sentences.
    pub on_par_non_ambiguous: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub seed: u64,
    pub test_units: usize,
    pub context_dependent_units: usize,
    pub non_ambiguous_units: usize,
    /// `[P_s, P_c, P_cr(plus), P_cr(minus)]` of the held-out pairs.
    pub heldout_pair_sizes: [usize; 4],
    pub models: Vec<ModelAnalysis>,
}

impl Analysis {
    pub fn model(&self, tag: &str) -> Option<&ModelAnalysis> {
        self.models.iter().find(|m| m.checkpoint == tag)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }
}

/// Every checkpoint tag whose producing manifest is present, SFT first.
pub fn available_checkpoints(run: &RunDir) -> Vec<String> {
    let mut tags = vec!["sft".to_string()];
    for mode in [ObjectiveMode::Cpl, ObjectiveMode::IntraOnly, ObjectiveMode::CrossOnly] {
        let tag = checkpoint_tag(mode);
        let stage = checkpoint_stage(&tag).expect("known tag");
        if run.exists(&format!("{stage}.manifest.json")) {
            tags.push(tag);
        }
    }
    tags
}

/// Synthetic-task analysis of every available checkpoint on the test split.
pub fn analyze(run: &RunDir, cfg: &PipelineConfig) -> Result<StageOutcome> {
    let mut stage = Stage::new(run, "analyze", cfg)?;
    let prep = load_prepared(&mut stage)?;
    if prep.manifest.params.get("source").map(String::as_str) != Some("synthetic") {
        return Err(Error::Usage("analyze needs a synthetic corpus".into()));
    }
    let mut data_cfg = PipelineConfig::default();
    for (k, v) in &prep.manifest.config {
        data_cfg.set(k, v)?;
    }
    let lexicon = SyntheticLexicon::new(&data_cfg.synth);
    let (docs, units) = load_units(&mut stage, &prep, "test")?;
    let enc = encode_corpus(&docs, &prep.vocab)?;
    let dependent = context_dependent_keys(&docs, &lexicon);
    let plain = non_ambiguous_keys(&docs, &lexicon);
    let upstream = run.manifest("pairs")?;
    let heldout = parse_pairs_jsonl(&stage.input_text(&upstream, "pairs.test.jsonl")?)?;
    let heldout: PreparedPairs = prepare_pairs(&heldout, &units, &prep.vocab)?;
    let seed = stage.seed();
    let mut models = Vec::new();
    for tag in available_checkpoints(run) {
        let params = load_checkpoint(&mut stage, &tag, &prep.vocab)?;
        let rows = eval_rows(&params, &units, &prep.vocab, cfg.train.max_len)?;
        let robustness = if dependent.is_empty() {
            None
        } else {
            Some(context_robustness(
                &params,
                &enc,
                &prep.vocab,
                &dependent,
                cfg.train.context_tokens,
                derive_seed(seed, "robustness"),
                cfg.train.max_len,
            )?)
        };
        let plain_rows = restrict_rows(&rows, &plain);
        let on_par_non_ambiguous = if plain_rows.is_empty() {
            None
        } else {
            Some(delta_bins(&plain_rows, cfg.eval_metric, cfg.thresholds()?)?.fraction(DeltaBin::OnPar))
        };
        let ranking_accuracy = if heldout.is_empty() { None } else { Some(ranking_accuracy(&params, &heldout)?) };
        models.push(ModelAnalysis {
            eval: summarize(&tag, &rows, cfg)?,
            checkpoint: tag,
            ranking_accuracy,
            robustness,
            on_par_non_ambiguous,
        });
    }
    let analysis = Analysis {
        seed,
        test_units: units.len(),
        context_dependent_units: dependent.len(),
        non_ambiguous_units: plain.len(),
        heldout_pair_sizes: heldout.sizes(),
        models,
    };
    let text = serde_json::to_string_pretty(&analysis).expect("analysis serializes") + "\n";
    stage.output("analysis.json", text)?;
    stage.finish(serde_json::to_value(&analysis).expect("analysis serializes"))
}

/// Runs every stage on a synthetic corpus, including both single-loss
/// ablations when `ablations` is set, and returns the analysis.
pub fn run_all(root: &Path, cfg: &PipelineConfig, ablations: bool) -> Result<Analysis> {
    let run = RunDir::create(root)?;
    prepare(&run, cfg, &CorpusSource::Synthetic)?;
    run_sft(&run, cfg)?;
    candidates(&run, cfg)?;
    pairs(&run, cfg)?;
    let mut modes = vec![ObjectiveMode::Cpl];
    if ablations {
        modes.extend([ObjectiveMode::IntraOnly, ObjectiveMode::CrossOnly]);
    }
    for mode in modes {
        let mut c = cfg.clone();
        c.train.objective = mode;
        train(&run, &c)?;
    }
    eval(&run, cfg, "cpl")?;
    let out = analyze(&run, cfg)?;
    serde_json::from_value(out.summary).map_err(|e| Error::Usage(format!("analysis: {e}")))
}

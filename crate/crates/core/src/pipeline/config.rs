use std::collections::BTreeMap;
use std::str::FromStr;

use crate::corpus::SynthConfig;
use crate::evalkit::{DeltaThresholds, RowMetric};
use crate::pairs::{CrossAblation, FilterConfig};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Every tunable of a pipeline run, read from one flat `key = value` file.
///
/// Keys are those of [`TrainConfig`] plus the filter, data and evaluation
/// keys listed in [`PipelineConfig::set`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub filter: FilterConfig,
    pub ablation: CrossAblation,
    pub max_vocab: usize,
    /// Train / preference / test document fractions.
    pub split: [f64; 3],
    pub synth: SynthConfig,
    pub qe_sigma: f64,
    /// Δ-bin thresholds on the 0–100 scale.
    pub delta_t1: f64,
    pub delta_t2: f64,
    pub rerank_length_norm: bool,
    pub eval_metric: RowMetric,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            filter: FilterConfig::default(),
            ablation: CrossAblation::Full,
            max_vocab: 512,
            split: [0.5, 0.3, 0.2],
            synth: SynthConfig::default(),
            qe_sigma: 0.02,
            delta_t1: 0.5,
            delta_t2: 1.0,
            rerank_length_norm: true,
            eval_metric: RowMetric::S,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn metric_name(m: RowMetric) -> &'static str {
    match m {
        RowMetric::S => "s",
        RowMetric::D => "d",
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "min_words" => self.filter.min_words = num(key, value)?,
            "max_words" => self.filter.max_words = num(key, value)?,
            "min_score" => self.filter.min_score = num(key, value)?,
            "margin_lo" => self.filter.margin_lo = num(key, value)?,
            "margin_hi" => self.filter.margin_hi = num(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "max_vocab" => self.max_vocab = num(key, value)?,
            "split" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| num(key, p.trim()))
                    .collect::<Result<_>>()?;
                self.split = parts
                    .try_into()
                    .map_err(|_| Error::Config("split needs three comma-separated fractions".into()))?;
            }
            "synth_docs" => self.synth.n_docs = num(key, value)?,
            "synth_min_sentences" => self.synth.min_sentences = num(key, value)?,
            "synth_max_sentences" => self.synth.max_sentences = num(key, value)?,
            "synth_min_len" => self.synth.min_len = num(key, value)?,
            "synth_max_len" => self.synth.max_len = num(key, value)?,
            "synth_plain" => self.synth.n_plain = num(key, value)?,
            "synth_ambiguous" => self.synth.n_ambiguous = num(key, value)?,
            "synth_senses" => self.synth.senses = num(key, value)?,
            "synth_rho" => self.synth.rho = num(key, value)?,
            "qe_sigma" => self.qe_sigma = num(key, value)?,
            "delta_t1" => self.delta_t1 = num(key, value)?,
            "delta_t2" => self.delta_t2 = num(key, value)?,
            "rerank_length_norm" => self.rerank_length_norm = num(key, value)?,
            "eval_metric" => self.eval_metric = value.parse()?,
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected key = value"))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.filter.validate()?;
        self.synth.validate()?;
        self.thresholds()?;
        if self.max_vocab == 0 {
            return Err(Error::Config("max_vocab must be positive".into()));
        }
        if !(self.qe_sigma >= 0.0 && self.qe_sigma.is_finite()) {
            return Err(Error::Config("qe_sigma must be finite and non-negative".into()));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split {:?} must be non-negative and sum to 1", self.split)));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Result<DeltaThresholds> {
        DeltaThresholds::from_percent_scale(self.delta_t1, self.delta_t2)
    }

    /// Every key with its current value, sorted; parses back to `self`.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = self
            .train
            .to_text()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let f = &self.filter;
        let s = &self.synth;
        let extra: [(&str, String); 21] = [
            ("min_words", f.min_words.to_string()),
            ("max_words", f.max_words.to_string()),
            ("min_score", format!("{:?}", f.min_score)),
            ("margin_lo", format!("{:?}", f.margin_lo)),
            ("margin_hi", format!("{:?}", f.margin_hi)),
            ("ablation", self.ablation.to_string()),
            ("max_vocab", self.max_vocab.to_string()),
            ("split", self.split.map(|x| format!("{x:?}")).join(",")),
            ("synth_docs", s.n_docs.to_string()),
            ("synth_min_sentences", s.min_sentences.to_string()),
            ("synth_max_sentences", s.max_sentences.to_string()),
            ("synth_min_len", s.min_len.to_string()),
            ("synth_max_len", s.max_len.to_string()),
            ("synth_plain", s.n_plain.to_string()),
            ("synth_ambiguous", s.n_ambiguous.to_string()),
            ("synth_senses", s.senses.to_string()),
            ("synth_rho", format!("{:?}", s.rho)),
            ("qe_sigma", format!("{:?}", self.qe_sigma)),
            ("delta_t1", format!("{:?}", self.delta_t1)),
            ("delta_t2", format!("{:?}", self.delta_t2)),
            ("rerank_length_norm", self.rerank_length_norm.to_string()),
        ];
        for (k, v) in extra {
            out.insert(k.to_string(), v);
        }
        out.insert("eval_metric".into(), metric_name(self.eval_metric).into());
        out
    }

    pub fn to_text(&self) -> String {
        self.snapshot()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

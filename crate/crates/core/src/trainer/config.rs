use std::fmt::Write as _;
use std::str::FromStr;

use crate::scoring::MetricKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Momentum(f64),
}

/// Which loss terms preference training optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveMode {
    #[default]
    Cpl,
    /// Cross-condition pairs removed before batching.
    IntraOnly,
    /// Intra-condition pairs removed before batching.
    CrossOnly,
}

impl FromStr for ObjectiveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpl" => Ok(ObjectiveMode::Cpl),
            "intra_only" | "drop_cross" => Ok(ObjectiveMode::IntraOnly),
            "cross_only" | "drop_intra" => Ok(ObjectiveMode::CrossOnly),
            other => Err(Error::Config(format!("unknown objective {other:?}"))),
        }
    }
}

impl ObjectiveMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveMode::Cpl => "cpl",
            ObjectiveMode::IntraOnly => "intra_only",
            ObjectiveMode::CrossOnly => "cross_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub sft_epochs: usize,
    pub cpl_epochs: usize,
    pub batch_size: usize,
    pub cpl_batch_size: usize,
    /// Learning rate of the likelihood stage.
    pub learning_rate: f64,
    /// Learning rate of the preference stage.
    pub cpl_learning_rate: f64,
    pub beta: f64,
    pub optimizer: Optimizer,
    /// Maximum global L2 gradient norm; `0` disables clipping.
    pub grad_clip: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Context budget K in tokens.
    pub context_tokens: usize,
    pub temperature: f64,
    pub max_len: usize,
    pub metric: MetricKind,
    pub intra_weight: f64,
    pub cross_weight: f64,
    /// Divide sequence log-probabilities by their length inside the objective.
    pub length_norm: bool,
    pub objective: ObjectiveMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            sft_epochs: 1,
            cpl_epochs: 2,
            batch_size: 128,
            cpl_batch_size: 128,
            learning_rate: 1e-2,
            cpl_learning_rate: 1e-2,
            beta: 0.1,
            optimizer: Optimizer::Momentum(0.9),
            grad_clip: 5.0,
            embed_dim: 32,
            hidden_dim: 64,
            context_tokens: crate::corpus::DEFAULT_CONTEXT_TOKENS,
            temperature: 1.0,
            max_len: 64,
            metric: MetricKind::SelectAvg,
            intra_weight: 1.0,
            cross_weight: 1.0,
            length_norm: false,
            objective: ObjectiveMode::Cpl,
        }
    }
}

const KEYS: &[&str] = &[
    "seed", "sft_epochs", "cpl_epochs", "batch_size", "cpl_batch_size", "learning_rate", "cpl_learning_rate", "beta",
    "optimizer", "momentum", "grad_clip", "embed_dim", "hidden_dim", "context_tokens", "temperature",
    "max_len", "metric", "intra_weight", "cross_weight", "length_norm", "objective",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) || !(self.cpl_learning_rate > 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.beta > 0.0) {
            return fail("beta must be positive");
        }
        if self.cpl_epochs == 0 {
            return fail("cpl_epochs must be at least 1");
        }
        if self.batch_size == 0 || self.cpl_batch_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 || self.max_len == 0 {
            return fail("batch sizes, embed_dim, hidden_dim and max_len must be positive");
        }
        if !(self.grad_clip >= 0.0) {
            return fail("grad_clip must be non-negative");
        }
        if let Optimizer::Momentum(mu) = self.optimizer {
            if !(0.0..1.0).contains(&mu) {
                return fail("momentum must lie in [0, 1)");
            }
        }
        if !(self.intra_weight >= 0.0 && self.cross_weight >= 0.0) {
            return fail("loss weights must be non-negative");
        }
        if !(self.temperature >= crate::policy::MIN_TEMPERATURE) {
            return fail("temperature below minimum");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "sft_epochs" => self.sft_epochs = num(key, value)?,
            "cpl_epochs" => self.cpl_epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "cpl_batch_size" => self.cpl_batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "cpl_learning_rate" => self.cpl_learning_rate = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "sgd" | "plain-sgd" => Optimizer::Sgd,
                    "momentum" | "momentum-sgd" => Optimizer::Momentum(match self.optimizer {
                        Optimizer::Momentum(mu) => mu,
                        Optimizer::Sgd => 0.9,
                    }),
                    other => return Err(Error::Config(format!("unknown optimizer {other:?}"))),
                }
            }
            "momentum" => {
                let mu = num(key, value)?;
                self.optimizer = Optimizer::Momentum(mu);
            }
            "grad_clip" => self.grad_clip = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "context_tokens" => self.context_tokens = num(key, value)?,
            "temperature" => self.temperature = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            "metric" => self.metric = value.parse()?,
            "intra_weight" => self.intra_weight = num(key, value)?,
            "cross_weight" => self.cross_weight = num(key, value)?,
            "length_norm" => self.length_norm = num(key, value)?,
            "objective" => self.objective = value.parse()?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` text on top of `self`. `#` starts a comment.
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
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` rendering; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &key in KEYS {
            let value = match key {
                "seed" => self.seed.to_string(),
                "sft_epochs" => self.sft_epochs.to_string(),
                "cpl_epochs" => self.cpl_epochs.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "cpl_batch_size" => self.cpl_batch_size.to_string(),
                "learning_rate" => format!("{:?}", self.learning_rate),
                "cpl_learning_rate" => format!("{:?}", self.cpl_learning_rate),
                "beta" => format!("{:?}", self.beta),
                "optimizer" => match self.optimizer {
                    Optimizer::Sgd => "sgd".into(),
                    Optimizer::Momentum(_) => "momentum".into(),
                },
                "momentum" => match self.optimizer {
                    Optimizer::Sgd => continue,
                    Optimizer::Momentum(mu) => format!("{mu:?}"),
                },
                "grad_clip" => format!("{:?}", self.grad_clip),
                "embed_dim" => self.embed_dim.to_string(),
                "hidden_dim" => self.hidden_dim.to_string(),
                "context_tokens" => self.context_tokens.to_string(),
                "temperature" => format!("{:?}", self.temperature),
                "max_len" => self.max_len.to_string(),
                "metric" => self.metric.to_string(),
                "intra_weight" => format!("{:?}", self.intra_weight),
                "cross_weight" => format!("{:?}", self.cross_weight),
                "length_norm" => self.length_norm.to_string(),
                "objective" => self.objective.as_str().into(),
                _ => unreachable!("every key is rendered"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

//! Plain-text `key = value` run configuration.
//!
//! Every key has a default, unknown or duplicate keys are rejected, and
//! [`RunConfig::canonical_text`] emits a fixed-order form whose reparse is
//! the identity. Sizes that depend on the dataset accept the literal
//! `auto`: `k_attn` resolves to a quarter of the lookback, `d_hidden` to
//! four times the channel count, and the split row counts to the benchmark
//! table for known dataset stems (7:1:2 otherwise).

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sdmixer_core::model::Variant;
use sdmixer_core::train::TrainConfig;

/// A size that may defer to a dataset-dependent default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutoUsize {
    Auto,
    Fixed(usize),
}

impl AutoUsize {
    pub fn resolve(self, auto_value: usize) -> usize {
        match self {
            AutoUsize::Auto => auto_value,
            AutoUsize::Fixed(n) => n,
        }
    }
}

impl fmt::Display for AutoUsize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoUsize::Auto => f.write_str("auto"),
            AutoUsize::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for AutoUsize {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(AutoUsize::Auto)
        } else {
            Ok(AutoUsize::Fixed(
                s.parse().with_context(|| format!("not a size: {s:?}"))?,
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub variant: Variant,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
    pub grad_clip: f64,
    pub k_freq: usize,
    pub alpha: f64,
    pub k_attn: AutoUsize,
    pub d_hidden: AutoUsize,
    pub n_train: AutoUsize,
    pub n_val: AutoUsize,
    pub n_test: AutoUsize,
    pub ma_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lookback: 96,
            horizon: 96,
            variant: Variant::Full,
            batch_size: 32,
            epochs: 10,
            learning_rate: 1e-3,
            patience: 3,
            seed: 42,
            grad_clip: 5.0,
            k_freq: 8,
            alpha: 0.5,
            k_attn: AutoUsize::Auto,
            d_hidden: AutoUsize::Auto,
            n_train: AutoUsize::Auto,
            n_val: AutoUsize::Auto,
            n_test: AutoUsize::Auto,
            ma_window: 25,
        }
    }
}

/// Key names in canonical emission order.
const KEYS: [&str; 17] = [
    "lookback",
    "horizon",
    "variant",
    "batch_size",
    "epochs",
    "learning_rate",
    "patience",
    "seed",
    "grad_clip",
    "k_freq",
    "alpha",
    "k_attn",
    "d_hidden",
    "n_train",
    "n_val",
    "n_test",
    "ma_window",
];

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                bail!("line {}: unknown key {key:?}", lineno + 1);
            }
            if seen.contains(&key.to_string()) {
                bail!("line {}: key {key:?} given twice", lineno + 1);
            }
            seen.push(key.to_string());
            cfg.set(key, value)
                .with_context(|| format!("line {}: bad value for {key}", lineno + 1))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lookback" => self.lookback = value.parse()?,
            "horizon" => self.horizon = value.parse()?,
            "variant" => self.variant = value.parse().map_err(|e| anyhow!("{e}"))?,
            "batch_size" => self.batch_size = value.parse()?,
            "epochs" => self.epochs = value.parse()?,
            "learning_rate" => self.learning_rate = value.parse()?,
            "patience" => self.patience = value.parse()?,
            "seed" => self.seed = value.parse()?,
            "grad_clip" => self.grad_clip = value.parse()?,
            "k_freq" => self.k_freq = value.parse()?,
            "alpha" => self.alpha = value.parse()?,
            "k_attn" => self.k_attn = value.parse()?,
            "d_hidden" => self.d_hidden = value.parse()?,
            "n_train" => self.n_train = value.parse()?,
            "n_val" => self.n_val = value.parse()?,
            "n_test" => self.n_test = value.parse()?,
            "ma_window" => self.ma_window = value.parse()?,
            other => bail!("unknown key {other:?}"),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "lookback" => self.lookback.to_string(),
            "horizon" => self.horizon.to_string(),
            "variant" => self.variant.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "patience" => self.patience.to_string(),
            "seed" => self.seed.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            "k_freq" => self.k_freq.to_string(),
            "alpha" => self.alpha.to_string(),
            "k_attn" => self.k_attn.to_string(),
            "d_hidden" => self.d_hidden.to_string(),
            "n_train" => self.n_train.to_string(),
            "n_val" => self.n_val.to_string(),
            "n_test" => self.n_test.to_string(),
            "ma_window" => self.ma_window.to_string(),
            other => unreachable!("unknown key {other:?}"),
        }
    }

    /// Fixed-order text form; parsing it back yields an equal config.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key));
            out.push('\n');
        }
        out
    }

    /// Training configuration with the dataset-independent autos resolved.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = TrainConfig::new(self.lookback, self.horizon);
        t.variant = self.variant;
        t.batch_size = self.batch_size;
        t.epochs = self.epochs;
        t.learning_rate = self.learning_rate;
        t.patience = self.patience;
        t.seed = self.seed;
        t.grad_clip = self.grad_clip;
        t.k_freq = self.k_freq;
        t.alpha = self.alpha;
        t.k_attn = self.k_attn.resolve((self.lookback / 4).max(1));
        // Zero tells the trainer to use four channels' worth of width once
        // the dataset's channel count is known.
        t.d_hidden = match self.d_hidden {
            AutoUsize::Auto => 0,
            AutoUsize::Fixed(n) => n,
        };
        t
    }
}

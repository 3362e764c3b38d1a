//! Flat `key = value` run configuration. Command-line flags use the same
//! keys and override the file.

use std::path::{Path, PathBuf};

use triage_core::config::{ModelConfig, Threshold, Variant};
use triage_core::train::Sgd;

use crate::error::CliError;

pub const DEFAULT_EPOCHS: usize = 14;
pub const DEFAULT_STEP: f64 = 0.02;
pub const DEFAULT_CLIP: f64 = 10.0;
pub const DEFAULT_PARAGRAPHS: usize = 10;
pub const DEFAULT_BUCKETS: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

/// Every setting is optional so that a later source only overrides what it
/// names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub d: Option<usize>,
    pub layers: Option<usize>,
    /// More than one value is only meaningful for `sweep`.
    pub triage_layers: Option<Vec<usize>>,
    pub k: Option<usize>,
    pub threshold: Option<Threshold>,
    pub l_max: Option<usize>,
    pub variant: Option<Variant>,
    pub weight_sharing: Option<bool>,
    pub shared_norm: Option<bool>,
    pub paras: Option<usize>,
    pub epochs: Option<usize>,
    pub step: Option<f64>,
    /// Per-sample gradient-norm cap; `inf` disables clipping.
    pub clip: Option<f64>,
    pub jobs: Option<usize>,
    pub no_triage: Option<bool>,
    pub corpus: Option<PathBuf>,
    pub eval_corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub buckets: Option<Vec<f64>>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid value {value:?} for {key} (expected true/false)"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

impl RunConfig {
    /// Applies one `key = value` setting. Keys are the long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = Some(parse(key, value)?),
            "d" => self.d = Some(parse(key, value)?),
            "L" => self.layers = Some(parse(key, value)?),
            "T" => self.triage_layers = Some(parse_list(key, value)?),
            "K" => self.k = Some(parse(key, value)?),
            "t" => {
                self.threshold =
                    Some(value.trim().parse().map_err(|e| CliError::Usage(format!("invalid value for t: {e}")))?)
            }
            "lmax" => self.l_max = Some(parse(key, value)?),
            "variant" => {
                self.variant = Some(value.trim().parse().map_err(|e| CliError::Usage(format!("{e}")))?)
            }
            "weight-sharing" => self.weight_sharing = Some(parse_bool(key, value)?),
            "shared-norm" => self.shared_norm = Some(parse_bool(key, value)?),
            "paras" => self.paras = Some(parse(key, value)?),
            "epochs" => self.epochs = Some(parse(key, value)?),
            "step" => self.step = Some(parse(key, value)?),
            "clip" => {
                let c: f64 = parse(key, value)?;
                if c.is_nan() || c <= 0.0 {
                    return Err(CliError::Usage(format!("clip must be positive, got {value}")));
                }
                self.clip = Some(c);
            }
            "jobs" => self.jobs = Some(parse(key, value)?),
            "no-triage" => self.no_triage = Some(parse_bool(key, value)?),
            "corpus" => self.corpus = Some(value.trim().into()),
            "eval-corpus" => self.eval_corpus = Some(value.trim().into()),
            "checkpoint" => self.checkpoint = Some(value.trim().into()),
            "out" => self.out = Some(value.trim().into()),
            "buckets" => self.buckets = Some(parse_list(key, value)?),
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse_file_contents(text: &str) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if key == "config" {
                return Err(CliError::Usage(format!("config line {}: nested config files are not supported", n + 1)));
            }
            cfg.set(key, value).map_err(|e| match e {
                CliError::Usage(m) => CliError::Usage(format!("config line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        RunConfig::parse_file_contents(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overridden_by(self, over: RunConfig) -> RunConfig {
        RunConfig {
            seed: over.seed.or(self.seed),
            d: over.d.or(self.d),
            layers: over.layers.or(self.layers),
            triage_layers: over.triage_layers.or(self.triage_layers),
            k: over.k.or(self.k),
            threshold: over.threshold.or(self.threshold),
            l_max: over.l_max.or(self.l_max),
            variant: over.variant.or(self.variant),
            weight_sharing: over.weight_sharing.or(self.weight_sharing),
            shared_norm: over.shared_norm.or(self.shared_norm),
            paras: over.paras.or(self.paras),
            epochs: over.epochs.or(self.epochs),
            step: over.step.or(self.step),
            clip: over.clip.or(self.clip),
            jobs: over.jobs.or(self.jobs),
            no_triage: over.no_triage.or(self.no_triage),
            corpus: over.corpus.or(self.corpus),
            eval_corpus: over.eval_corpus.or(self.eval_corpus),
            checkpoint: over.checkpoint.or(self.checkpoint),
            out: over.out.or(self.out),
            buckets: over.buckets.or(self.buckets),
        }
    }

    fn single_triage_layer(&self) -> Result<Option<usize>, CliError> {
        match self.triage_layers.as_deref() {
            None => Ok(None),
            Some([t]) => Ok(Some(*t)),
            Some(_) => Err(CliError::Usage("T takes a single value outside sweep".into())),
        }
    }

    fn apply_runtime(&self, mut config: ModelConfig) -> ModelConfig {
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(t) = self.threshold {
            config.threshold = t;
        }
        if let Some(l) = self.l_max {
            config.l_max = l;
        }
        if let Some(s) = self.shared_norm {
            config.shared_norm = s;
        }
        config
    }

    /// Model configuration for a fresh model: defaults overridden by every
    /// setting present.
    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let mut config = self.apply_runtime(ModelConfig::default());
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(d) = self.d {
            config.d = d;
        }
        if let Some(l) = self.layers {
            config.layers = l;
        }
        if let Some(t) = self.single_triage_layer()? {
            config.triage_layer = t;
        }
        if let Some(v) = self.variant {
            config.variant = v;
        }
        if let Some(w) = self.weight_sharing {
            config.weight_sharing = w;
        }
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    /// Configuration for running a stored model. Inference knobs may change;
    /// architecture settings that disagree with the checkpoint are rejected.
    pub fn runtime_config(&self, stored: &ModelConfig) -> Result<ModelConfig, CliError> {
        let mismatch = |what: &str, asked: String, stored: String| {
            CliError::Compat(format!("{what} = {asked} requested but the checkpoint has {stored}"))
        };
        let checks = [
            ("d", self.d, stored.d),
            ("L", self.layers, stored.layers),
            ("T", self.single_triage_layer()?, stored.triage_layer),
        ];
        for (what, asked, have) in checks {
            if let Some(a) = asked {
                if a != have {
                    return Err(mismatch(what, a.to_string(), have.to_string()));
                }
            }
        }
        if let Some(v) = self.variant {
            if v != stored.variant {
                return Err(mismatch("variant", v.to_string(), stored.variant.to_string()));
            }
        }
        if let Some(w) = self.weight_sharing {
            if w != stored.weight_sharing {
                return Err(mismatch("weight-sharing", w.to_string(), stored.weight_sharing.to_string()));
            }
        }
        let config = self.apply_runtime(stored.clone());
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(DEFAULT_EPOCHS)
    }

    pub fn step(&self) -> f64 {
        self.step.unwrap_or(DEFAULT_STEP)
    }

    pub fn sgd(&self) -> Sgd {
        match self.clip.unwrap_or(DEFAULT_CLIP) {
            c if c.is_finite() => Sgd::clipped(self.step(), c),
            _ => Sgd::plain(self.step()),
        }
    }

    pub fn paras(&self) -> usize {
        self.paras.unwrap_or(DEFAULT_PARAGRAPHS)
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }

    pub fn buckets(&self) -> Vec<f64> {
        self.buckets.clone().unwrap_or_else(|| DEFAULT_BUCKETS.to_vec())
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or_else(|| CliError::Usage(format!("missing --{key}")))
    }
}

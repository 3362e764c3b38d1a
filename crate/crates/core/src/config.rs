use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Output-layer family shared by the triage head and the final head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Start and end scored independently from the context features.
    Independent,
    /// Bilinear start scoring; the end scorer sees a start-weighted summary.
    Conditional,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Independent => "independent",
            Variant::Conditional => "conditional",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Variant::Independent),
            "conditional" => Ok(Variant::Conditional),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Early-exit threshold. The triage answer is returned when its confidence
/// is strictly greater than the threshold; `Threshold::NEVER` disables exits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub const NEVER: Threshold = Threshold(f64::INFINITY);

    pub fn new(t: f64) -> Result<Self> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Config(format!("threshold must be >= 0, got {t}")));
        }
        Ok(Threshold(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_never(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn passes(self, confidence: f64) -> bool {
        confidence > self.0
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_never() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinity" | "∞" => Ok(Threshold::NEVER),
            _ => s
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad threshold {s:?}")))
                .and_then(Threshold::new),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Feature width.
    pub d: usize,
    /// Total number of encoding layers.
    pub layers: usize,
    /// Layer after which the triage head runs, `1 <= triage_layer < layers`.
    pub triage_layer: usize,
    /// Maximum answer length in tokens (`e - b < l_max`).
    pub l_max: usize,
    /// Number of candidate spans whose sentences survive pruning.
    pub k: usize,
    pub threshold: Threshold,
    pub variant: Variant,
    pub weight_sharing: bool,
    pub shared_norm: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            layers: 6,
            triage_layer: 2,
            l_max: 15,
            k: 5,
            threshold: Threshold(0.4),
            variant: Variant::Independent,
            weight_sharing: false,
            shared_norm: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be >= 1".into()));
        }
        if self.triage_layer < 1 || self.triage_layer >= self.layers {
            return Err(Error::Config(format!(
                "need 1 <= T < L, got T={} L={}",
                self.triage_layer, self.layers
            )));
        }
        if self.l_max == 0 {
            return Err(Error::Config("l_max must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        Ok(())
    }
}

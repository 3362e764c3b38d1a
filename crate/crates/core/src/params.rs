//! Model parameters, laid out as named dense tensors.
//!
//! Gradients reuse the same type, so a gradient is congruent with the
//! parameters it was taken against by construction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::tensor::Mat;

/// One scan direction of a gated recurrent block. Matrices are `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub w: Mat,
    pub wf: Mat,
    pub bf: Mat,
    pub wr: Mat,
    pub br: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentLayer {
    pub fwd: Direction,
    pub bwd: Direction,
    /// Projects `[h_fwd ; h_bwd]` (2d) back to d.
    pub proj: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Independent {
        w_start: Mat,
        w_end: Mat,
    },
    Conditional {
        w_query: Mat,
        w_start: Mat,
        w_end: Mat,
        /// Maps `[q̃ ; v]` (2d) to the updated question summary.
        w_update: Mat,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub d: usize,
    pub vocab_size: usize,
    pub embedding: Mat,
    pub question_layers: Vec<RecurrentLayer>,
    pub context_layers: Vec<RecurrentLayer>,
    /// Projects `[C ; A·Q]` (2d) back to d before the triage layer.
    pub interaction: Mat,
    pub model_head: Head,
    /// `None` when the triage head shares the model head's weights.
    pub triage_head: Option<Head>,
}

impl Direction {
    fn zeros(d: usize) -> Self {
        Direction {
            w: Mat::zeros(d, d),
            wf: Mat::zeros(d, d),
            bf: Mat::zeros(1, d),
            wr: Mat::zeros(d, d),
            br: Mat::zeros(1, d),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Mat)>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.wf"), &self.wf));
        out.push((format!("{prefix}.bf"), &self.bf));
        out.push((format!("{prefix}.wr"), &self.wr));
        out.push((format!("{prefix}.br"), &self.br));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Mat)>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        out.push((format!("{prefix}.wf"), &mut self.wf));
        out.push((format!("{prefix}.bf"), &mut self.bf));
        out.push((format!("{prefix}.wr"), &mut self.wr));
        out.push((format!("{prefix}.br"), &mut self.br));
    }
}

impl RecurrentLayer {
    fn zeros(d: usize) -> Self {
        RecurrentLayer { fwd: Direction::zeros(d), bwd: Direction::zeros(d), proj: Mat::zeros(2 * d, d) }
    }
}

impl Head {
    pub fn zeros(variant: Variant, d: usize) -> Self {
        match variant {
            Variant::Independent => Head::Independent { w_start: Mat::zeros(1, d), w_end: Mat::zeros(1, d) },
            Variant::Conditional => Head::Conditional {
                w_query: Mat::zeros(1, d),
                w_start: Mat::zeros(d, d),
                w_end: Mat::zeros(d, d),
                w_update: Mat::zeros(2 * d, d),
            },
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Head::Independent { .. } => Variant::Independent,
            Head::Conditional { .. } => Variant::Conditional,
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Mat)>) {
        match self {
            Head::Independent { w_start, w_end } => {
                out.push((format!("{prefix}.w_start"), w_start));
                out.push((format!("{prefix}.w_end"), w_end));
            }
            Head::Conditional { w_query, w_start, w_end, w_update } => {
                out.push((format!("{prefix}.w_query"), w_query));
                out.push((format!("{prefix}.w_start"), w_start));
                out.push((format!("{prefix}.w_end"), w_end));
                out.push((format!("{prefix}.w_update"), w_update));
            }
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Mat)>) {
        match self {
            Head::Independent { w_start, w_end } => {
                out.push((format!("{prefix}.w_start"), w_start));
                out.push((format!("{prefix}.w_end"), w_end));
            }
            Head::Conditional { w_query, w_start, w_end, w_update } => {
                out.push((format!("{prefix}.w_query"), w_query));
                out.push((format!("{prefix}.w_start"), w_start));
                out.push((format!("{prefix}.w_end"), w_end));
                out.push((format!("{prefix}.w_update"), w_update));
            }
        }
    }
}

impl Parameters {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        let d = config.d;
        Parameters {
            d,
            vocab_size,
            embedding: Mat::zeros(vocab_size, d),
            question_layers: (0..config.layers).map(|_| RecurrentLayer::zeros(d)).collect(),
            context_layers: (0..config.layers).map(|_| RecurrentLayer::zeros(d)).collect(),
            interaction: Mat::zeros(2 * d, d),
            model_head: Head::zeros(config.variant, d),
            triage_head: (!config.weight_sharing).then(|| Head::zeros(config.variant, d)),
        }
    }

    pub fn layers(&self) -> usize {
        self.context_layers.len()
    }

    /// The head used by the triage stage (the model head when shared).
    pub fn triage(&self) -> &Head {
        self.triage_head.as_ref().unwrap_or(&self.model_head)
    }

    pub fn weight_sharing(&self) -> bool {
        self.triage_head.is_none()
    }

    /// Every tensor with its stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        out.push((String::from("embedding"), &self.embedding));
        for (stream, layers) in [("q", &self.question_layers), ("c", &self.context_layers)] {
            for (i, l) in layers.iter().enumerate() {
                l.fwd.visit(&format!("{stream}.{i}.fwd"), &mut out);
                l.bwd.visit(&format!("{stream}.{i}.bwd"), &mut out);
                out.push((format!("{stream}.{i}.proj"), &l.proj));
            }
        }
        out.push((String::from("interaction.proj"), &self.interaction));
        self.model_head.visit("head.model", &mut out);
        if let Some(h) = &self.triage_head {
            h.visit("head.triage", &mut out);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out = Vec::new();
        out.push((String::from("embedding"), &mut self.embedding));
        for (stream, layers) in [("q", &mut self.question_layers), ("c", &mut self.context_layers)] {
            for (i, l) in layers.iter_mut().enumerate() {
                l.fwd.visit_mut(&format!("{stream}.{i}.fwd"), &mut out);
                l.bwd.visit_mut(&format!("{stream}.{i}.bwd"), &mut out);
                out.push((format!("{stream}.{i}.proj"), &mut l.proj));
            }
        }
        out.push((String::from("interaction.proj"), &mut self.interaction));
        self.model_head.visit_mut("head.model", &mut out);
        if let Some(h) = &mut self.triage_head {
            h.visit_mut("head.triage", &mut out);
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.as_mut_slice().fill(0.0);
        }
        z
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    /// `self += scale * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) -> Result<()> {
        let theirs = other.tensors();
        let mut mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::ShapeMismatch { name: "parameter set".into() });
        }
        for ((name, a), (_, b)) in mine.iter_mut().zip(&theirs) {
            if a.as_slice().len() != b.as_slice().len() {
                return Err(Error::ShapeMismatch { name: name.clone() });
            }
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.all_finite())
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".bf") || name.ends_with(".br")
}

/// Hash buckets used unless a caller asks for another table size.
pub const DEFAULT_VOCAB_SIZE: usize = 4096;

/// Uniform `[-1/sqrt(d), 1/sqrt(d)]` weights from ChaCha8 seeded with
/// `config.seed`; biases start at zero. Tensors are filled in name order.
pub fn init_params(config: &ModelConfig, vocab_size: usize) -> Result<Parameters> {
    config.validate()?;
    if vocab_size == 0 {
        return Err(Error::Config("vocab_size must be >= 1".into()));
    }
    let bound = 1.0 / libm::sqrt(config.d as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Parameters::zeros(config, vocab_size);
    for (name, t) in params.tensors_mut() {
        if is_bias(&name) {
            continue;
        }
        for v in t.as_mut_slice() {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    Ok(params)
}

//! `ITRC1` checkpoints.
//!
//! Layout, all little-endian: the magic bytes, a config header, a name table
//! of `(name, rows, cols)` entries, then every tensor as raw `f64` values in
//! row-major order, in name-table order.

use std::io::{Read, Write};
use std::path::Path;

use triage_core::config::{ModelConfig, Threshold, Variant};
use triage_core::Parameters;

use crate::error::CliError;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"ITRC1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Parameters,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode(config: &ModelConfig, params: &Parameters) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_params() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [config.d, config.layers, config.triage_layer, config.l_max, config.k] {
        put_u64(&mut out, v as u64);
    }
    out.extend_from_slice(&config.threshold.value().to_le_bytes());
    out.push(match config.variant {
        Variant::Independent => 0,
        Variant::Conditional => 1,
    });
    out.push(config.weight_sharing as u8);
    out.push(config.shared_norm as u8);
    put_u64(&mut out, config.seed);
    put_u64(&mut out, params.vocab_size as u64);

    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        put_u64(&mut out, t.rows() as u64);
        put_u64(&mut out, t.cols() as u64);
    }
    for (_, t) in &tensors {
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CliError> {
        if self.bytes.len() < n {
            return Err(CliError::Input("checkpoint truncated".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CliError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, CliError> {
        usize::try_from(self.u64()?).map_err(|_| CliError::Input("checkpoint field overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> Result<bool, CliError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(CliError::Input(format!("checkpoint flag byte {b} is not 0 or 1"))),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CliError> {
    let mut r = Reader { bytes };
    if r.take(CHECKPOINT_MAGIC.len()).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(CliError::Input("not an ITRC1 checkpoint".into()));
    }
    let (d, layers, triage_layer, l_max, k) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let threshold = Threshold::new(r.f64()?).map_err(|e| CliError::Input(format!("checkpoint header: {e}")))?;
    let variant = match r.u8()? {
        0 => Variant::Independent,
        1 => Variant::Conditional,
        v => return Err(CliError::Input(format!("checkpoint header: unknown variant tag {v}"))),
    };
    let (weight_sharing, shared_norm) = (r.flag()?, r.flag()?);
    let seed = r.u64()?;
    let vocab_size = r.usize()?;
    let config = ModelConfig { d, layers, triage_layer, l_max, k, threshold, variant, weight_sharing, shared_norm, seed };
    config.validate().map_err(|e| CliError::Input(format!("checkpoint header: {e}")))?;
    if vocab_size == 0 {
        return Err(CliError::Input("checkpoint header: vocab_size is 0".into()));
    }

    let mut params = Parameters::zeros(&config, vocab_size);
    let count = r.u32()? as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| CliError::Input("checkpoint name table is not UTF-8".into()))?;
        table.push((name, r.usize()?, r.usize()?));
    }
    let mut slots = params.tensors_mut();
    if slots.len() != table.len() {
        return Err(CliError::Compat(format!(
            "checkpoint holds {} tensors, its header implies {}",
            table.len(),
            slots.len()
        )));
    }
    for ((name, rows, cols), (expected, slot)) in table.iter().zip(&slots) {
        if name != expected || (*rows, *cols) != (slot.rows(), slot.cols()) {
            return Err(CliError::Compat(format!(
                "tensor {name} ({rows}x{cols}) does not match expected {expected} ({}x{})",
                slot.rows(),
                slot.cols()
            )));
        }
    }
    for (_, slot) in slots.iter_mut() {
        for v in slot.as_mut_slice() {
            *v = r.f64()?;
        }
    }
    drop(slots);
    if !r.bytes.is_empty() {
        return Err(CliError::Input(format!("{} trailing bytes after checkpoint tensors", r.bytes.len())));
    }
    Ok(Checkpoint { config, params })
}

pub fn save(path: &Path, config: &ModelConfig, params: &Parameters) -> Result<(), CliError> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&encode(config, params)))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Checkpoint, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        CliError::Compat(m) => CliError::Compat(format!("{}: {m}", path.display())),
        other => other,
    })
}

//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "CPLPARAM"
//! version  u32 LE
//! V, d, h  u64 LE each
//! tensors  f64 LE, row-major, in declaration order
//! ```

use super::PolicyParams;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CPLPARAM";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 3 * 8;
/// Guards allocation on corrupt headers.
const MAX_DIM: u64 = 1 << 16;

pub fn write_checkpoint(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + params.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for dim in [params.vocab_size, params.embed_dim, params.hidden_dim] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for t in params.tensors() {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Parses a checkpoint. When `expected_vocab` is given, the stored
/// vocabulary size must match it.
pub fn parse_checkpoint(bytes: &[u8], expected_vocab: Option<usize>) -> Result<PolicyParams> {
    let bad = |msg: String| Error::Usage(format!("checkpoint: {msg}"));
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("missing header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().expect("8 bytes"));
    let (v, d, h) = (dim(0), dim(1), dim(2));
    if [v, d, h].iter().any(|&x| x == 0 || x > MAX_DIM) {
        return Err(bad(format!("implausible dimensions V={v} d={d} h={h}")));
    }
    let (v, d, h) = (v as usize, d as usize, h as usize);
    if let Some(want) = expected_vocab {
        if want != v {
            return Err(bad(format!("vocabulary size {v} does not match vocabulary of {want}")));
        }
    }
    let mut params = PolicyParams::zeros(v, d, h);
    let body = &bytes[HEADER_LEN..];
    if body.len() != params.num_params() * 8 {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            params.num_params() * 8,
            body.len()
        )));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = values.next().expect("length checked above");
        }
    }
    params.validate()?;
    Ok(params)
}

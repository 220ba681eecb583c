//! `SGW1` parameter checkpoints: magic, little-endian `u32` layer count, then
//! per tensor `u32` name length, UTF-8 name, `u32` rank, `u32` dims and
//! `f32` values in row-major order.

use super::{NetworkParams, NnetError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGW1";

/// Values are narrowed to `f32`; re-encoding a decoded checkpoint
/// reproduces the input bytes exactly.
pub fn encode_checkpoint(params: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_params() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, params.tensors.len());
    for (name, t) in &params.tensors {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetworkParams, NnetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(NnetError::Checkpoint("bad magic, expected SGW1".into()));
    }
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| NnetError::Checkpoint(format!("layer name: {e}")))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| NnetError::Checkpoint(format!("{name}: dims overflow")))?;
        let raw = r.take(len.checked_mul(4).ok_or_else(|| {
            NnetError::Checkpoint(format!("{name}: dims overflow"))
        })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        tensors.push((name, Tensor::from_vec(shape, data)));
    }
    if r.pos != bytes.len() {
        return Err(NnetError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(NetworkParams {
        tensors,
        rng_seed: None,
    })
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnetError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize, NnetError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

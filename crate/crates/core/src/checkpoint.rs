//! `.oknt` model files.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic      4 bytes  "OKNT"
//! version    u32      1
//! spec       u32 length + UTF-8 JSON ModelSpec
//! tensors    u32 count, then per tensor:
//!              u32 name length + UTF-8 name
//!              u32 rank, rank × u64 dims
//!              u64 element count, count × f32
//! metadata   u32 length + UTF-8 JSON CheckpointMeta
//! ```
//!
//! Tensors are stored in [`Network::named_state`] order, which includes batch-norm running
//! statistics. Nothing time-dependent is written, so identical training runs produce
//! identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Error, Result};
use crate::metrics::MetricsRecord;
use crate::model::{ModelSpec, Network};
use crate::train::TrainConfig;

pub const MAGIC: [u8; 4] = *b"OKNT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub class_names: Vec<String>,
    pub config: Option<TrainConfig>,
    pub final_metrics: Option<FinalMetrics>,
}

/// Test-set metrics stored with a model. Training time is deliberately not part of it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub f1: f64,
}

impl From<&MetricsRecord> for FinalMetrics {
    fn from(r: &MetricsRecord) -> Self {
        FinalMetrics { accuracy: r.accuracy, macro_precision: r.macro_precision, macro_recall: r.macro_recall, f1: r.f1 }
    }
}

pub fn encode(model: &Network, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_blob(&mut out, &to_json(model.spec())?)?;
    let state = model.named_state();
    put_u32(&mut out, state.len())?;
    for (name, t) in state {
        put_blob(&mut out, name.as_bytes())?;
        put_u32(&mut out, t.dims().len())?;
        for &d in t.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    put_blob(&mut out, &to_json(meta)?)?;
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Network, CheckpointMeta)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic).into());
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    let spec: ModelSpec = from_json(r.blob("model spec")?)?;
    let mut model = Network::from_spec(spec, 0).map_err(|e| corrupt(format!("invalid model spec: {e}")))?;

    let count = r.u32("tensor count")? as usize;
    let mut slots = model.named_state_mut();
    if count != slots.len() {
        return Err(corrupt(format!("{count} tensors stored, model has {}", slots.len())));
    }
    for slot in slots.iter_mut() {
        let name = String::from_utf8(r.blob("tensor name")?.to_vec()).map_err(|_| corrupt("tensor name is not UTF-8"))?;
        if name != slot.0 {
            return Err(corrupt(format!("expected tensor {}, found {name}", slot.0)));
        }
        let rank = r.u32("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u64("tensor dims")? as usize);
        }
        if dims != slot.1.dims() {
            return Err(corrupt(format!("{name} has dims {dims:?}, expected {:?}", slot.1.dims())));
        }
        let n = r.u64("tensor length")? as usize;
        if n != slot.1.len() {
            return Err(corrupt(format!("{name} stores {n} values, expected {}", slot.1.len())));
        }
        let raw = r.take(n.checked_mul(4).ok_or_else(|| corrupt("tensor too large"))?, "tensor data")?;
        for (dst, src) in slot.1.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(src.try_into().expect("4 bytes"));
        }
    }
    drop(slots);
    let meta: CheckpointMeta = from_json(r.blob("metadata")?)?;
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((model, meta))
}

pub fn save_checkpoint(model: &Network, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    fs::write(path, encode(model, meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    decode(&fs::read(path)?)
}

fn corrupt(msg: impl Into<String>) -> Error {
    CheckpointError::Corrupt(msg.into()).into()
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    serde_json::to_vec(v).map_err(|e| corrupt(e.to_string()))
}

fn from_json<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| corrupt("length exceeds u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_blob(out: &mut Vec<u8>, data: &[u8]) -> Result<()> {
    put_u32(out, data.len())?;
    out.extend_from_slice(data);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn blob(&mut self, what: &'static str) -> Result<&'a [u8]> {
        let n = self.u32(what)? as usize;
        self.take(n, what)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_okannet;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            class_names: vec!["a".into(), "b".into(), "c".into()],
            config: Some(TrainConfig::default()),
            final_metrics: None,
        }
    }

    fn trained_like(seed: u64) -> Network {
        let mut m = build_okannet(3, 8, seed).unwrap();
        for (i, (_, t)) in m.named_state_mut().into_iter().enumerate() {
            for (j, v) in t.data_mut().iter_mut().enumerate() {
                *v += ((i * 31 + j) % 11) as f32 * 0.01;
            }
        }
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = trained_like(4);
        let bytes = encode(&m, &meta()).unwrap();
        let (back, meta_back) = decode(&bytes).unwrap();
        assert_eq!(meta_back, meta());
        assert_eq!(back.spec(), m.spec());
        for ((n1, a), (n2, b)) in m.named_state().iter().zip(back.named_state()) {
            assert_eq!(n1, &n2);
            let bits = |t: &crate::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(encode(&back, &meta()).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&trained_like(0), &meta()).unwrap();
        assert_eq!(&bytes[..4], b"OKNT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    }

    #[test]
    fn every_truncation_is_a_clean_error() {
        let bytes = encode(&trained_like(1), &meta()).unwrap();
        for cut in (0..bytes.len()).step_by(97).chain([bytes.len() - 1]) {
            let err = decode(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, Error::Checkpoint(CheckpointError::Truncated(_))),
                "cut {cut}: {err}"
            );
        }
    }

    #[test]
    fn bad_magic_version_and_trailing_bytes() {
        let mut bytes = encode(&trained_like(2), &meta()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(CheckpointError::BadMagic(_)))));
        bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(CheckpointError::UnsupportedVersion(9)))));
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::Checkpoint(CheckpointError::Corrupt(_)))));
    }
}

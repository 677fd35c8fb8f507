//! Binary snapshot files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic       8 bytes  "GMEDLDA\0"
//! version     u32      currently 1
//! count       u32      number of snapshots that follow
//! per snapshot:
//!   task_kind u32      0 binary, 1 multiclass, 2 multilabel, 3 regression
//!   k, v, l   u64 x 3  topics, vocabulary size, number of weight rows
//!   hyper     f64 x 6  alpha, beta, nu2, c, ell, epsilon
//!   seed      u64
//!   burn_in   u64
//!   phi_hat   f64 x k*v  row-major
//!   etas      f64 x l*k  row-major
//! checksum    u64      FNV-1a over every preceding byte
//! ```
//!
//! A one-vs-all ensemble is stored as several snapshots in one file.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::predict::{ModelSnapshot, TaskKind};
use crate::topic_state::Hyperparams;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GMEDLDA\0";
pub const FORMAT_VERSION: u32 = 1;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_snapshots(snapshots: &[ModelSnapshot]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, u32::try_from(snapshots.len()).map_err(|_| Error::Snapshot("too many snapshots".into()))?);
    for s in snapshots {
        let (k, v) = (s.num_topics(), s.vocab_size());
        if s.etas.iter().any(|e| e.len() != k) {
            return Err(Error::Dimension("weight rows must have one entry per topic".into()));
        }
        put_u32(&mut out, s.task_kind.code());
        put_u64(&mut out, k as u64);
        put_u64(&mut out, v as u64);
        put_u64(&mut out, s.etas.len() as u64);
        let h = &s.hyper;
        for x in [h.alpha, h.beta, h.nu2, h.c, h.ell, h.epsilon] {
            put_f64(&mut out, x);
        }
        put_u64(&mut out, s.seed);
        put_u64(&mut out, s.burn_in as u64);
        for r in 0..k {
            for c in 0..v {
                put_f64(&mut out, s.phi_hat[(r, c)]);
            }
        }
        for x in s.etas.iter().flatten() {
            put_f64(&mut out, *x);
        }
    }
    let sum = fnv1a64(&out);
    put_u64(&mut out, sum);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Snapshot("dimension does not fit in memory".into()))
    }
}

pub fn decode_snapshots(bytes: &[u8]) -> Result<Vec<ModelSnapshot>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { bytes, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: FORMAT_VERSION });
    }
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Truncated);
    }
    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    let computed = fnv1a64(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: &bytes[..body_end], pos: r.pos };
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let code = r.u32()?;
        let task_kind = TaskKind::from_code(code).ok_or_else(|| Error::Snapshot(format!("unknown task kind {code}")))?;
        let (k, v, l) = (r.usize()?, r.usize()?, r.usize()?);
        let mut vals = [0.0; 6];
        for x in &mut vals {
            *x = r.f64()?;
        }
        let [alpha, beta, nu2, c, ell, epsilon] = vals;
        let hyper = Hyperparams { k, alpha, beta, nu2, c, ell, epsilon };
        let seed = r.u64()?;
        let burn_in = r.usize()?;
        let cells = k.checked_mul(v).ok_or(Error::Truncated)?;
        if cells.checked_mul(8).is_none_or(|b| b > r.bytes.len() - r.pos) {
            return Err(Error::Truncated);
        }
        let mut phi = Vec::with_capacity(cells);
        for _ in 0..cells {
            phi.push(r.f64()?);
        }
        let phi_hat = DMatrix::from_row_slice(k, v, &phi);
        let mut etas = Vec::with_capacity(l.min(1 << 16));
        for _ in 0..l {
            let mut row = Vec::with_capacity(k);
            for _ in 0..k {
                row.push(r.f64()?);
            }
            etas.push(row);
        }
        out.push(ModelSnapshot { task_kind, hyper, seed, burn_in, phi_hat, etas });
    }
    if r.pos != r.bytes.len() {
        return Err(Error::Snapshot("trailing bytes after the last snapshot".into()));
    }
    Ok(out)
}

pub fn save_snapshots(snapshots: &[ModelSnapshot], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_snapshots(snapshots)?)?;
    Ok(())
}

pub fn load_snapshots(path: impl AsRef<Path>) -> Result<Vec<ModelSnapshot>> {
    decode_snapshots(&fs::read(path)?)
}

pub fn save_snapshot(snapshot: &ModelSnapshot, path: impl AsRef<Path>) -> Result<()> {
    save_snapshots(std::slice::from_ref(snapshot), path)
}

/// Loads a file holding exactly one snapshot.
pub fn load_snapshot(path: impl AsRef<Path>) -> Result<ModelSnapshot> {
    let mut all = load_snapshots(path)?;
    if all.len() != 1 {
        return Err(Error::Snapshot(format!("expected one snapshot, file holds {}", all.len())));
    }
    Ok(all.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelSnapshot {
        ModelSnapshot {
            task_kind: TaskKind::Multilabel,
            hyper: Hyperparams { epsilon: 0.25, ..Hyperparams::multiclass(2) },
            seed: u64::MAX,
            burn_in: 40,
            phi_hat: DMatrix::from_row_slice(2, 3, &[0.2, 0.3, 0.5, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
            etas: vec![vec![-0.0, 1e-300], vec![f64::MAX, -2.5]],
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let s = sample();
        save_snapshot(&s, &path).unwrap();
        let back = load_snapshot(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.etas[0][0].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_snapshots(&[sample()]).unwrap();
        let mut bad = bytes.clone();
        bad[40] ^= 1;
        assert!(matches!(decode_snapshots(&bad), Err(Error::Checksum { .. })));
        assert!(matches!(decode_snapshots(&bytes[..bytes.len() - 3]), Err(Error::Checksum { .. }) | Err(Error::Truncated)));
        assert!(matches!(decode_snapshots(b"nope"), Err(Error::BadMagic)));
    }

    #[test]
    fn other_versions_are_rejected() {
        let mut bytes = encode_snapshots(&[sample()]).unwrap();
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        match decode_snapshots(&bytes) {
            Err(Error::UnsupportedVersion { found: 0, expected: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}

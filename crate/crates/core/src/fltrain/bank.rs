//! Binary module-bank file.
//!
//! Layout, all little-endian: magic `FSGT`, version `u32`, then `L`, `B`,
//! `d`, `k` as `u32`, the `k·d` backbone doubles, and for each sequence and
//! phase in order a record of group `u32`, samples `u64` and `k·d` doubles.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ids::GroupId;

use super::model::{AdapterModule, Matrix, ModuleBank};

pub const BANK_MAGIC: &[u8; 4] = b"FSGT";
pub const BANK_VERSION: u32 = 1;

pub fn encode_bank(bank: &ModuleBank) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BANK_MAGIC);
    for v in [
        BANK_VERSION,
        bank.group_count() as u32,
        bank.budget() as u32,
        bank.feature_dim() as u32,
        bank.label_count() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&bank.backbone.to_le_bytes());
    for seq in &bank.sequences {
        for m in seq {
            out.extend_from_slice(&m.to_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt(format!("bank truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let raw = self.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn decode_bank(bytes: &[u8]) -> Result<ModuleBank> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != BANK_MAGIC {
        return Err(Error::Corrupt("bad magic, not a module bank".into()));
    }
    let version = cur.u32()?;
    if version != BANK_VERSION {
        return Err(Error::Corrupt(format!("unsupported bank version {version}")));
    }
    let groups = cur.u32()? as usize;
    let budget = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    let k = cur.u32()? as usize;
    if groups == 0 || budget == 0 || d == 0 || k == 0 {
        return Err(Error::Corrupt("bank header has a zero dimension".into()));
    }
    let record = 12usize
        .checked_add(k.saturating_mul(d).saturating_mul(8))
        .and_then(|r| r.checked_mul(groups))
        .and_then(|r| r.checked_mul(budget));
    let expected = record.and_then(|r| r.checked_add(24 + k * d * 8));
    if expected != Some(bytes.len()) {
        return Err(Error::Corrupt(format!(
            "bank is {} bytes, header implies {}",
            bytes.len(),
            expected.map_or("overflow".to_string(), |e| e.to_string())
        )));
    }
    let backbone = cur.matrix(k, d)?;
    let mut sequences = Vec::with_capacity(budget);
    for b in 0..budget {
        let mut seq = Vec::with_capacity(groups);
        for p in 0..groups {
            let group = cur.u32()? as usize;
            if group >= groups {
                return Err(Error::Corrupt(format!("sequence {b} phase {p} names group {group}")));
            }
            let samples = cur.u64()?;
            let weights = cur.matrix(k, d)?;
            seq.push(AdapterModule {
                group: GroupId(group),
                samples,
                weights,
            });
        }
        sequences.push(seq);
    }
    Ok(ModuleBank { backbone, sequences })
}

pub fn write_bank(path: &Path, bank: &ModuleBank) -> Result<()> {
    fs::write(path, encode_bank(bank))?;
    Ok(())
}

pub fn read_bank(path: &Path) -> Result<ModuleBank> {
    decode_bank(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_bank() -> ModuleBank {
        let m = |g: usize, v: f64| AdapterModule {
            group: GroupId(g),
            samples: 10 + g as u64,
            weights: Matrix::from_vec(2, 3, vec![v, -v, 0.5, 1e-300, f64::MAX, v]).unwrap(),
        };
        ModuleBank {
            backbone: Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap(),
            sequences: vec![vec![m(0, 1.0), m(1, 2.0)], vec![m(1, 3.0), m(0, 4.0)]],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let bank = sample_bank();
        let bytes = encode_bank(&bank);
        assert_eq!(decode_bank(&bytes).unwrap(), bank);
        assert_eq!(encode_bank(&decode_bank(&bytes).unwrap()), bytes);
    }

    #[test]
    fn truncation_and_bad_magic_are_corrupt() {
        let bytes = encode_bank(&sample_bank());
        for cut in [0, 3, 10, 24, bytes.len() - 1] {
            assert!(matches!(decode_bank(&bytes[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_bank(&bad), Err(Error::Corrupt(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode_bank(&long), Err(Error::Corrupt(_))));
    }

    #[test]
    fn out_of_range_group_is_corrupt() {
        let mut bytes = encode_bank(&sample_bank());
        bytes[24 + 48] = 7;
        assert!(matches!(decode_bank(&bytes), Err(Error::Corrupt(_))));
    }
}

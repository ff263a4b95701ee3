//! Ensemble serialization: CSV and the `TRWL1` binary layout.
//!
//! Binary layout (little endian): magic `TRWL1`, `n_paths: u64`, `n_times: u64`,
//! `master_seed: u64`, `hash_len: u32`, hash bytes (UTF-8), `n_times` times,
//! then `n_paths × n_times` values row-major, all as `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnsembleMeta, PathEnsemble, ProcessKind};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"TRWL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleFormat {
    #[default]
    Csv,
    Bin,
}

impl EnsembleFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            EnsembleFormat::Csv => "csv",
            EnsembleFormat::Bin => "bin",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EnsembleFormat::Csv),
            "bin" => Ok(EnsembleFormat::Bin),
            other => Err(Error::Validation(format!(
                "unknown format {other:?}, expected csv or bin"
            ))),
        }
    }
}

impl PathEnsemble {
    /// `time,t_0,...,t_m` followed by one `path_index,v_0,...,v_m` row per path.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time");
        for t in self.times() {
            write!(s, ",{t}").unwrap();
        }
        s.push('\n');
        for (i, p) in self.paths().enumerate() {
            write!(s, "{i}").unwrap();
            for v in p {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let hash = self.meta.config_hash.as_bytes();
        let mut out = Vec::with_capacity(33 + hash.len() + 8 * (self.n_times() + self.values().len()));
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.n_paths() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_times() as u64).to_le_bytes());
        out.extend_from_slice(&self.meta.master_seed.to_le_bytes());
        out.extend_from_slice(&(hash.len() as u32).to_le_bytes());
        out.extend_from_slice(hash);
        for v in self.times().iter().chain(self.values()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn encode(&self, format: EnsembleFormat) -> Vec<u8> {
        match format {
            EnsembleFormat::Csv => self.to_csv().into_bytes(),
            EnsembleFormat::Bin => self.to_binary(),
        }
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
        let mut cells = header.split(',');
        if cells.next().map(str::trim) != Some("time") {
            return Err(Error::Format("CSV header must start with `time`".into()));
        }
        let times = cells.map(parse_f64).collect::<Result<Vec<_>>>()?;
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let mut cells = line.split(',');
            cells.next();
            let before = values.len();
            for c in cells {
                values.push(parse_f64(c)?);
            }
            if values.len() - before != times.len() {
                return Err(Error::Format(format!(
                    "CSV row {} has {} values, expected {}",
                    row + 1,
                    values.len() - before,
                    times.len()
                )));
            }
        }
        PathEnsemble::new(times, values, unknown_meta(0, String::new())).map_err(as_format)
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..5] != BINARY_MAGIC {
            return Err(Error::Format("bad magic: not a TRWL1 ensemble file".into()));
        }
        let mut cur = Cursor { bytes, pos: 5 };
        let n_paths = cur.u64()? as usize;
        let n_times = cur.u64()? as usize;
        let seed = cur.u64()?;
        let hash_len = cur.u32()? as usize;
        let hash = std::str::from_utf8(cur.take(hash_len)?)
            .map_err(|_| Error::Format("config hash is not UTF-8".into()))?
            .to_string();
        let count = n_paths
            .checked_add(1)
            .and_then(|r| r.checked_mul(n_times))
            .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
        if cur.remaining() != count * 8 {
            return Err(Error::Format(format!(
                "payload has {} bytes, header implies {}",
                cur.remaining(),
                count * 8
            )));
        }
        let mut floats = Vec::with_capacity(count);
        for _ in 0..count {
            floats.push(cur.f64()?);
        }
        let values = floats.split_off(n_times);
        PathEnsemble::new(floats, values, unknown_meta(seed, hash)).map_err(as_format)
    }

    /// Detects the format from the leading bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(BINARY_MAGIC) {
            Self::from_binary(bytes)
        } else if bytes.starts_with(b"time") {
            let text = std::str::from_utf8(bytes).map_err(|_| Error::Format("CSV is not UTF-8".into()))?;
            Self::from_csv(text)
        } else {
            Err(Error::Format(
                "unrecognized ensemble file: neither TRWL1 magic nor a `time` CSV header".into(),
            ))
        }
    }
}

fn as_format(e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Format(m),
        other => other,
    }
}

fn unknown_meta(master_seed: u64, config_hash: String) -> EnsembleMeta {
    EnsembleMeta {
        master_seed,
        config_hash,
        process_kind: ProcessKind::Unknown,
        truncation: None,
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated binary ensemble".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_ensemble(ensemble: &PathEnsemble, path: &Path, format: EnsembleFormat) -> Result<Vec<u8>> {
    let bytes = ensemble.encode(format);
    crate::config::atomic_write(path, &bytes)?;
    Ok(bytes)
}

pub fn read_ensemble(path: &Path) -> Result<PathEnsemble> {
    let bytes = fs::read(path)?;
    if path.extension().is_some_and(|e| e == "bin") {
        PathEnsemble::from_binary(&bytes)
    } else {
        PathEnsemble::decode(&bytes)
    }
}

//! Binary dataset container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "PUFDSET\0"
//! 8       1     version (1)
//! 9       4     num_classes   u32
//! 13      4     feature_dim   u32
//! 17      4     num_clients   u32
//! 21      16*(num_clients+1)
//!               section index: (offset u64, rows u64) per client, then the
//!               test split
//! ...           sections, back to back in index order; each row is
//!               id u64, label u32, feature_dim x f64
//! ```
//!
//! Readers reject trailing bytes, sections that do not start exactly where
//! the previous one ended, and data that violates the dataset invariants.

use std::fs;
use std::path::Path;

use super::FederatedDataset;
use crate::error::{Error, Result};
use crate::nn::LabeledBatch;

pub const MAGIC: [u8; 8] = *b"PUFDSET\0";
pub const VERSION: u8 = 1;
const HEADER_LEN: u64 = 21;

pub fn write_dataset(fd: &FederatedDataset) -> Vec<u8> {
    let d = fd.feature_dim();
    let row_len = 12 + 8 * d as u64;
    let sections: Vec<&LabeledBatch> = fd.clients().iter().chain([fd.test()]).collect();

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(fd.num_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(fd.num_clients() as u32).to_le_bytes());

    let mut offset = HEADER_LEN + 16 * sections.len() as u64;
    for s in &sections {
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(s.len() as u64).to_le_bytes());
        offset += row_len * s.len() as u64;
    }
    for s in &sections {
        for i in 0..s.len() {
            out.extend_from_slice(&s.ids()[i].to_le_bytes());
            out.extend_from_slice(&(s.labels()[i] as u32).to_le_bytes());
            for v in s.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn save_dataset(fd: &FederatedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_dataset(fd)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<FederatedDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_dataset(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "unexpected end of file reading {what} ({n} bytes needed, {} left)",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_dataset(bytes: &[u8]) -> Result<FederatedDataset> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8, "magic")? != MAGIC {
        cur.pos = 0;
        return Err(cur.err("bad magic, not a dataset container"));
    }
    let version = cur.take(1, "version")?[0];
    if version != VERSION {
        cur.pos -= 1;
        return Err(cur.err(format!("unsupported version {version}")));
    }
    let num_classes = cur.u32("num_classes")? as usize;
    let feature_dim = cur.u32("feature_dim")? as usize;
    let num_clients = cur.u32("num_clients")? as usize;
    if feature_dim == 0 {
        cur.pos -= 8;
        return Err(cur.err("feature_dim is 0"));
    }

    let mut index = Vec::with_capacity(num_clients.min(1 << 16) + 1);
    for i in 0..=num_clients {
        let off = cur.u64(&format!("index entry {i} offset"))?;
        let rows = cur.u64(&format!("index entry {i} rows"))?;
        index.push((off, rows));
    }

    let row_len = 12 + 8 * feature_dim;
    let mut sections = Vec::with_capacity(index.len());
    for (i, &(off, rows)) in index.iter().enumerate() {
        if off != cur.pos as u64 {
            return Err(cur.err(format!(
                "section {i} indexed at offset {off} but data continues at {}",
                cur.pos
            )));
        }
        let rows = usize::try_from(rows).map_err(|_| cur.err("row count overflows"))?;
        if rows
            .checked_mul(row_len)
            .is_none_or(|need| need > bytes.len() - cur.pos)
        {
            return Err(cur.err(format!("section {i} claims {rows} rows past end of file")));
        }
        let mut ids = Vec::with_capacity(rows);
        let mut labels = Vec::with_capacity(rows);
        let mut features = Vec::with_capacity(rows * feature_dim);
        for _ in 0..rows {
            ids.push(cur.u64("sample id")?);
            let label_at = cur.pos;
            let label = cur.u32("label")? as usize;
            if label >= num_classes {
                cur.pos = label_at;
                return Err(cur.err(format!("label {label} >= num_classes {num_classes}")));
            }
            labels.push(label);
            for _ in 0..feature_dim {
                features.push(cur.f64("feature")?);
            }
        }
        sections.push(LabeledBatch::new(feature_dim, features, labels, ids)?);
    }
    if cur.pos != bytes.len() {
        return Err(cur.err(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    let test = sections.pop().expect("index has num_clients + 1 entries");
    FederatedDataset::new(sections, test, num_classes)
}

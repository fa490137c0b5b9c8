//! Descriptor file layout.
//!
//! ```text
//! PLACEREC-DESC\n
//! version 1\n
//! dim <d>\n
//! count <n>\n
//! end\n
//! <n records>
//! ```
//!
//! Each record is little-endian: `timestamp: f64`, `pose: 12 × f64`
//! (row-major 3x4), `degenerate: u8`, `descriptor: d² × f64` (row-major
//! flatten of the d×d matrix).

use std::path::Path;

use super::GlobalDescriptor;
use crate::error::{Error, Result};
use crate::pointcloud::Pose;

const MAGIC: &str = "PLACEREC-DESC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorRecord {
    pub pose: Pose,
    pub descriptor: GlobalDescriptor,
}

pub fn write_descriptor_file(path: impl AsRef<Path>, dim: usize, records: &[DescriptorRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("{MAGIC}\nversion {VERSION}\ndim {dim}\ncount {}\nend\n", records.len()).into_bytes();
    for rec in records {
        if rec.descriptor.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "descriptor has {} values, expected {}",
                rec.descriptor.len(),
                dim * dim
            )));
        }
        buf.extend_from_slice(&rec.pose.timestamp.to_le_bytes());
        for v in rec.pose.to_row_major() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.push(rec.descriptor.degenerate as u8);
        for v in &rec.descriptor.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<(usize, Vec<DescriptorRecord>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: &str| Error::MalformedFile {
        path: path.into(),
        reason: reason.into(),
    };
    let mut pos = 0;
    let mut header = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| malformed("truncated header"))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| malformed("header is not UTF-8"))?;
        pos += nl + 1;
        if line == "end" {
            break;
        }
        header.push(line.to_string());
        if header.len() > 16 {
            return Err(malformed("header too long"));
        }
    }
    if header.first().map(String::as_str) != Some(MAGIC) {
        return Err(malformed("missing magic line"));
    }
    let field = |key: &str| -> Result<usize> {
        header
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|v| v.trim().parse().ok()))
            .ok_or_else(|| malformed(&format!("missing header field {key}")))
    };
    if field("version ")? != VERSION as usize {
        return Err(malformed("unsupported version"));
    }
    let dim = field("dim ")?;
    let count = field("count ")?;
    let rec_len = 8 * 13 + 1 + 8 * dim * dim;
    if bytes.len() - pos != rec_len * count {
        return Err(malformed("record block length does not match header"));
    }
    let f64_at = |b: &[u8], i: usize| f64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
    let records = bytes[pos..]
        .chunks_exact(rec_len)
        .map(|rec| {
            let timestamp = f64_at(rec, 0);
            let mut m = [0.0; 12];
            for (k, v) in m.iter_mut().enumerate() {
                *v = f64_at(rec, 8 + 8 * k);
            }
            let degenerate = rec[104] != 0;
            let values = (0..dim * dim).map(|k| f64_at(rec, 105 + 8 * k)).collect();
            DescriptorRecord {
                pose: Pose::from_row_major(&m, timestamp),
                descriptor: GlobalDescriptor { values, degenerate },
            }
        })
        .collect();
    Ok((dim, records))
}

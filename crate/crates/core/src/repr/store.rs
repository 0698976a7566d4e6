//! APRD representation store.
//!
//! Little-endian header: magic `APRD`, u32 version (1), u32 L, u32 H,
//! u8 strategy (0 max, 1 mean, 2 mean+max), u8 subset (0 all, 1 inter,
//! 2 intra), u32 record count. Each record: u64 relation ordinal, u8 source
//! flag (0 direct, 1 fallback), then the float32 vector in the layout
//! described in [`crate::repr`]. Record metadata lives in a companion JSONL
//! file (see [`metadata_path`]).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{PoolingConfig, ReprLayout, ReprSource, Strategy, Subset};
use crate::disrpt::{read_jsonl, write_jsonl, DatasetId, Split};
use crate::error::{Error, Result};
use crate::labels::UnifiedLabel;

pub const APRD_MAGIC: &[u8; 4] = b"APRD";
pub const APRD_VERSION: u32 = 1;
const HEADER_BYTES: u64 = 4 + 4 + 4 + 4 + 1 + 1 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ReprRecord {
    pub ordinal: u64,
    pub source: ReprSource,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub ordinal: u64,
    pub dataset: DatasetId,
    pub doc_id: String,
    pub split: Split,
    pub unified_label: Option<UnifiedLabel>,
    pub original_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReprStore {
    pub layout: ReprLayout,
    pub records: Vec<ReprRecord>,
    pub meta: Vec<RecordMeta>,
}

/// `reprs.aprd` → `reprs.meta.jsonl`.
pub fn metadata_path(path: &Path) -> PathBuf {
    path.with_extension("meta.jsonl")
}

pub fn write_aprd_to<W: Write>(
    mut w: W,
    layout: &ReprLayout,
    records: &[ReprRecord],
) -> Result<()> {
    let width = layout.width();
    if let Some(r) = records.iter().find(|r| r.values.len() != width) {
        return Err(Error::Shape(format!(
            "record {} has {} values, layout expects {width}",
            r.ordinal,
            r.values.len()
        )));
    }
    let io = |e: std::io::Error| Error::Format(e.to_string());
    w.write_all(APRD_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(APRD_VERSION).map_err(io)?;
    w.write_u32::<LittleEndian>(layout.layers as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(layout.heads as u32).map_err(io)?;
    w.write_u8(layout.pooling.strategy.code()).map_err(io)?;
    w.write_u8(layout.pooling.subset.code()).map_err(io)?;
    w.write_u32::<LittleEndian>(records.len() as u32).map_err(io)?;
    for r in records {
        w.write_u64::<LittleEndian>(r.ordinal).map_err(io)?;
        w.write_u8(r.source.code()).map_err(io)?;
        for &v in &r.values {
            w.write_f32::<LittleEndian>(v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads an APRD stream whose total length is `len` bytes.
pub fn read_aprd_from<R: Read>(mut r: R, len: u64) -> Result<(ReprLayout, Vec<ReprRecord>)> {
    let fmt = |m: String| Error::Format(m);
    let mut magic = [0u8; 4];
    if r.read_exact(&mut magic).is_err() || &magic != APRD_MAGIC {
        return Err(fmt("not an APRD file".into()));
    }
    let truncated = |_| fmt("truncated APRD header".into());
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != APRD_VERSION {
        return Err(fmt(format!(
            "unsupported APRD version {version} (expected {APRD_VERSION})"
        )));
    }
    let layers = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let heads = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let strategy = r.read_u8().map_err(truncated)?;
    let subset = r.read_u8().map_err(truncated)?;
    let count = r.read_u32::<LittleEndian>().map_err(truncated)? as u64;
    let strategy = Strategy::from_code(strategy)
        .ok_or_else(|| fmt(format!("invalid strategy code {strategy}")))?;
    let subset =
        Subset::from_code(subset).ok_or_else(|| fmt(format!("invalid subset code {subset}")))?;
    if layers == 0 || heads == 0 {
        return Err(fmt(format!("invalid dims L={layers} H={heads}")));
    }
    let layout = ReprLayout::new(layers, heads, PoolingConfig { strategy, subset });
    let width = layout.width();

    let body = len.saturating_sub(HEADER_BYTES);
    let record_bytes = 8 + 1 + 4 * width as u64;
    if body != count * record_bytes {
        let msg = if count > 0 && body % count == 0 && (body / count) >= 9 && (body / count - 9) % 4 == 0 {
            format!(
                "header L={layers} H={heads} expects {width} floats per record, records hold {}",
                (body / count - 9) / 4
            )
        } else if body < count * record_bytes {
            format!("truncated APRD file: {count} records declared, {body} payload bytes")
        } else {
            format!("APRD payload has {body} bytes, expected {}", count * record_bytes)
        };
        return Err(fmt(msg));
    }

    let mut records = Vec::with_capacity(count as usize);
    let short = |_| fmt("truncated APRD record".into());
    for _ in 0..count {
        let ordinal = r.read_u64::<LittleEndian>().map_err(short)?;
        let flag = r.read_u8().map_err(short)?;
        let source =
            ReprSource::from_code(flag).ok_or_else(|| fmt(format!("invalid source flag {flag}")))?;
        let mut values = vec![0f32; width];
        r.read_f32_into::<LittleEndian>(&mut values).map_err(short)?;
        records.push(ReprRecord {
            ordinal,
            source,
            values,
        });
    }
    Ok((layout, records))
}

/// Writes `<path>` and its metadata companion.
pub fn write_repr_store(path: &Path, store: &ReprStore) -> Result<()> {
    if store.meta.len() != store.records.len() {
        return Err(Error::Format(format!(
            "{} metadata rows for {} records",
            store.meta.len(),
            store.records.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_aprd_to(BufWriter::new(file), &store.layout, &store.records)?;
    write_jsonl(&metadata_path(path), &store.meta)
}

pub fn read_repr_store(path: &Path) -> Result<ReprStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let (layout, records) = read_aprd_from(BufReader::new(file), len)?;
    let meta: Vec<RecordMeta> = read_jsonl(&metadata_path(path))?;
    if meta.len() != records.len() {
        return Err(Error::Format(format!(
            "{}: {} metadata rows for {} records",
            path.display(),
            meta.len(),
            records.len()
        )));
    }
    if let Some((m, r)) = meta.iter().zip(&records).find(|(m, r)| m.ordinal != r.ordinal) {
        return Err(Error::Format(format!(
            "metadata ordinal {} does not match record ordinal {}",
            m.ordinal, r.ordinal
        )));
    }
    Ok(ReprStore {
        layout,
        records,
        meta,
    })
}

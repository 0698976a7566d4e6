//! ATSR raw attention dumps (desk-scale only).
//!
//! Little-endian: magic `ATSR`, u32 version (1), u32 L, u32 H, u32 N,
//! u8 dtype (0 = float32), then L·H·N·N float32 values ordered
//! layer, head, query row, key column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::encode::{AttentionSource, WindowAttention};
use super::AttentionTensor;
use crate::disrpt::Document;
use crate::error::{Error, Result};

pub const ATSR_MAGIC: &[u8; 4] = b"ATSR";
pub const ATSR_VERSION: u32 = 1;

pub fn write_atsr_to<W: Write>(mut w: W, tensor: &AttentionTensor) -> std::io::Result<()> {
    w.write_all(ATSR_MAGIC)?;
    w.write_u32::<LittleEndian>(ATSR_VERSION)?;
    w.write_u32::<LittleEndian>(tensor.layers() as u32)?;
    w.write_u32::<LittleEndian>(tensor.heads() as u32)?;
    w.write_u32::<LittleEndian>(tensor.tokens() as u32)?;
    w.write_u8(0)?;
    for &v in tensor.data() {
        w.write_f32::<LittleEndian>(v)?;
    }
    w.flush()
}

pub fn write_atsr(path: &Path, tensor: &AttentionTensor) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_atsr_to(BufWriter::new(file), tensor).map_err(|e| Error::io(path, e))
}

pub fn read_atsr_from<R: Read>(mut r: R) -> Result<AttentionTensor> {
    let fmt = |m: &str| Error::Format(m.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| fmt("not an ATSR file"))?;
    if &magic != ATSR_MAGIC {
        return Err(fmt("not an ATSR file"));
    }
    let truncated = |_| fmt("truncated ATSR header");
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != ATSR_VERSION {
        return Err(Error::Format(format!("unsupported ATSR version {version}")));
    }
    let layers = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let heads = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let tokens = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let dtype = r.read_u8().map_err(truncated)?;
    if dtype != 0 {
        return Err(Error::Format(format!("unsupported ATSR dtype {dtype}")));
    }
    let n = layers * heads * tokens * tokens;
    let mut data = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut data)
        .map_err(|_| fmt("truncated ATSR payload"))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(fmt("trailing bytes after ATSR payload"));
    }
    AttentionTensor::new(layers, heads, tokens, data)
}

pub fn read_atsr(path: &Path) -> Result<AttentionTensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_atsr_from(BufReader::new(file))
}

/// Reads window attention from `<dir>/<doc_id>.<window_start>.atsr`, one
/// tensor position per document token.
#[derive(Debug, Clone)]
pub struct AtsrDirSource {
    dir: PathBuf,
    layers: usize,
    heads: usize,
}

impl AtsrDirSource {
    /// Takes L and H from the first `.atsr` file found in `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "atsr"))
            .collect();
        paths.sort();
        let first = paths
            .first()
            .ok_or_else(|| Error::Format(format!("no .atsr files in {}", dir.display())))?;
        let t = read_atsr(first)?;
        Ok(AtsrDirSource {
            dir: dir.to_path_buf(),
            layers: t.layers(),
            heads: t.heads(),
        })
    }

    pub fn window_path(dir: &Path, doc_id: &str, start: usize) -> PathBuf {
        dir.join(format!("{doc_id}.{start}.atsr"))
    }
}

impl AttentionSource for AtsrDirSource {
    fn layers(&self) -> usize {
        self.layers
    }

    fn heads(&self) -> usize {
        self.heads
    }

    fn window_attention(&self, doc: &Document, window: Range<usize>) -> Result<WindowAttention> {
        let path = Self::window_path(&self.dir, &doc.doc_id, window.start);
        let tensor = read_atsr(&path)?;
        if tensor.tokens() != window.len()
            || tensor.layers() != self.layers
            || tensor.heads() != self.heads
        {
            return Err(Error::Shape(format!(
                "{}: expected L={} H={} N={}, found L={} H={} N={}",
                path.display(),
                self.layers,
                self.heads,
                window.len(),
                tensor.layers(),
                tensor.heads(),
                tensor.tokens()
            )));
        }
        Ok(WindowAttention::identity(tensor))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_rejects() {
        let t = AttentionTensor::new(1, 2, 2, vec![1.0, 0.0, 0.3, 0.7, 1.0, 0.0, 0.5, 0.5]).unwrap();
        let mut buf = Vec::new();
        write_atsr_to(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), 4 + 16 + 1 + 8 * 4);
        assert_eq!(read_atsr_from(&buf[..]).unwrap(), t);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_atsr_from(&bad[..]).unwrap_err().to_string().contains("not an ATSR"));
        assert!(read_atsr_from(&buf[..buf.len() - 2]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_atsr_from(&long[..]).is_err());
    }
}

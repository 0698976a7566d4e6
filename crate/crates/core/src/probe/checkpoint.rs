//! PRBM probe checkpoints.
//!
//! Little-endian: magic `PRBM`, u32 version (1), u32 input dim, u32 hidden,
//! u32 classes, u32 L, u32 H, u8 strategy, u8 subset, i32 layer (-1 for
//! all layers), f64 input dropout, f64 hidden dropout, one u8 label index per
//! class, then f32 blocks W1 (row-major hidden × input), b1, gain, bias,
//! W2 (row-major classes × hidden), b2. The training log is a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::{ProbeInput, ProbeModel, TrainingLog};
use crate::error::{Error, Result};
use crate::labels::UnifiedLabel;
use crate::repr::{PoolingConfig, Strategy, Subset};

pub const PRBM_MAGIC: &[u8; 4] = b"PRBM";
pub const PRBM_VERSION: u32 = 1;

/// `probe.prbm` → `probe.log.json`.
pub fn log_path(path: &Path) -> PathBuf {
    path.with_extension("log.json")
}

fn write_to<W: Write>(mut w: W, m: &ProbeModel<f32>) -> std::io::Result<()> {
    w.write_all(PRBM_MAGIC)?;
    w.write_u32::<LittleEndian>(PRBM_VERSION)?;
    for v in [m.input_dim(), m.hidden_dim(), m.num_classes(), m.input.layers, m.input.heads] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_u8(m.input.pooling.strategy.code())?;
    w.write_u8(m.input.pooling.subset.code())?;
    w.write_i32::<LittleEndian>(m.input.layer.map_or(-1, |l| l as i32))?;
    w.write_f64::<LittleEndian>(m.input_dropout)?;
    w.write_f64::<LittleEndian>(m.hidden_dropout)?;
    for c in &m.classes {
        w.write_u8(c.index() as u8)?;
    }
    for block in m.param_blocks() {
        for &v in block {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()
}

fn read_from<R: Read>(mut r: R) -> Result<ProbeModel<f32>> {
    let fmt = |m: String| Error::Format(m);
    let mut magic = [0u8; 4];
    if r.read_exact(&mut magic).is_err() || &magic != PRBM_MAGIC {
        return Err(fmt("not a PRBM checkpoint".into()));
    }
    let short = |_| fmt("truncated PRBM checkpoint".into());
    let version = r.read_u32::<LittleEndian>().map_err(short)?;
    if version != PRBM_VERSION {
        return Err(fmt(format!("unsupported PRBM version {version}")));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    }
    let [input_dim, hidden, classes, layers, heads] = dims;
    let strategy = r.read_u8().map_err(short)?;
    let subset = r.read_u8().map_err(short)?;
    let strategy = Strategy::from_code(strategy).ok_or_else(|| fmt(format!("invalid strategy code {strategy}")))?;
    let subset = Subset::from_code(subset).ok_or_else(|| fmt(format!("invalid subset code {subset}")))?;
    let layer = r.read_i32::<LittleEndian>().map_err(short)?;
    let input_dropout = r.read_f64::<LittleEndian>().map_err(short)?;
    let hidden_dropout = r.read_f64::<LittleEndian>().map_err(short)?;
    let mut labels = Vec::with_capacity(classes);
    for _ in 0..classes {
        let code = r.read_u8().map_err(short)?;
        labels.push(
            UnifiedLabel::from_index(code as usize)
                .ok_or_else(|| fmt(format!("invalid label index {code}")))?,
        );
    }
    let mut block = |n: usize| -> Result<Vec<f32>> {
        let mut v = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut v).map_err(short)?;
        Ok(v)
    };
    let w1 = Array2::from_shape_vec((hidden, input_dim), block(hidden * input_dim)?).unwrap();
    let b1 = Array1::from(block(hidden)?);
    let ln_gain = Array1::from(block(hidden)?);
    let ln_bias = Array1::from(block(hidden)?);
    let w2 = Array2::from_shape_vec((classes, hidden), block(classes * hidden)?).unwrap();
    let b2 = Array1::from(block(classes)?);
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| fmt(e.to_string()))? != 0 {
        return Err(fmt("trailing bytes after PRBM payload".into()));
    }
    Ok(ProbeModel {
        w1,
        b1,
        ln_gain,
        ln_bias,
        w2,
        b2,
        input_dropout,
        hidden_dropout,
        classes: labels,
        input: ProbeInput {
            layers,
            heads,
            pooling: PoolingConfig { strategy, subset },
            layer: (layer >= 0).then_some(layer as usize),
        },
    })
}

/// Writes the checkpoint and, if given, its training log sidecar.
pub fn write_checkpoint(path: &Path, model: &ProbeModel<f32>, log: Option<&TrainingLog>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(BufWriter::new(file), model).map_err(|e| Error::io(path, e))?;
    if let Some(log) = log {
        let lp = log_path(path);
        let text = serde_json::to_string_pretty(log)?;
        std::fs::write(&lp, text).map_err(|e| Error::io(&lp, e))?;
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ProbeModel<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input = ProbeInput {
            layers: 2,
            heads: 3,
            pooling: PoolingConfig {
                strategy: Strategy::MeanMax,
                subset: Subset::Inter,
            },
            layer: Some(1),
        };
        let m = ProbeModel::<f32>::init(
            &mut rng,
            6,
            7,
            vec![UnifiedLabel::Adversative, UnifiedLabel::Temporal],
            input,
            0.2,
            0.25,
        );
        let mut buf = Vec::new();
        write_to(&mut buf, &m).unwrap();
        let back = read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(read_from(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_from(&bad[..]).is_err());
    }
}

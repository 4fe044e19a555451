//! Checkpoint files: `"RISP"`, `u8` version, `u8` variant, `u32` layers,
//! `u32` users, `u32` branch width, then every parameter block as
//! little-endian `f64` in storage order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Architecture, RisnetParams, Variant};
use crate::error::{Error, Result};
use crate::tensor::RealMat;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RISP";
pub const CHECKPOINT_VERSION: u8 = 1;
pub const CHECKPOINT_HEADER_LEN: u64 = 18;

impl Architecture {
    /// Exact checkpoint size in bytes.
    pub fn checkpoint_len(&self) -> u64 {
        CHECKPOINT_HEADER_LEN + 8 * self.param_count() as u64
    }
}

pub fn write_params(params: &RisnetParams, w: &mut impl Write) -> Result<()> {
    params.check()?;
    let arch = &params.arch;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[CHECKPOINT_VERSION, arch.variant.code()])?;
    for v in [arch.layers, arch.n_users, arch.branch_dim] {
        let v = u32::try_from(v).map_err(|_| Error::Contract(format!("{v} does not fit the u32 header")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    for block in &params.blocks {
        for x in block.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_params(params: &RisnetParams, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(params, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint. When `expected` is given, the header must match it.
pub fn read_params(r: &mut impl Read, expected: Option<&Architecture>) -> Result<RisnetParams> {
    let mut header = [0u8; CHECKPOINT_HEADER_LEN as usize];
    read_fully(r, &mut header, 0)?;
    if &header[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {:?}", &header[..4]),
        });
    }
    if header[4] != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {}", header[4]),
        });
    }
    let variant = Variant::from_code(header[5]).ok_or_else(|| Error::Format {
        offset: 5,
        msg: format!("unknown variant code {}", header[5]),
    })?;
    let field = |i: usize| u32::from_le_bytes(header[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
    let arch = Architecture {
        variant,
        layers: field(0),
        n_users: field(1),
        branch_dim: field(2),
    };
    arch.validate().map_err(|e| Error::Format {
        offset: 6,
        msg: e.to_string(),
    })?;
    if let Some(want) = expected {
        if want.variant != arch.variant {
            return Err(Error::Format {
                offset: 5,
                msg: format!("checkpoint holds a {} network, expected {}", arch.variant, want.variant),
            });
        }
        if *want != arch {
            return Err(Error::Format {
                offset: 6,
                msg: format!("checkpoint architecture {arch:?} does not match expected {want:?}"),
            });
        }
    }

    let mut offset = CHECKPOINT_HEADER_LEN;
    let mut blocks = Vec::new();
    for (rows, cols) in arch.block_shapes() {
        let mut buf = vec![0u8; rows * cols * 8];
        read_fully(r, &mut buf, offset)?;
        offset += buf.len() as u64;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        blocks.push(RealMat::new(rows, cols, data)?);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format {
            offset,
            msg: "trailing bytes after parameters".into(),
        });
    }
    Ok(RisnetParams { arch, blocks })
}

pub fn load_params(path: impl AsRef<Path>, expected: Option<&Architecture>) -> Result<RisnetParams> {
    let mut r = BufReader::new(File::open(path)?);
    read_params(&mut r, expected)
}

fn read_fully(r: &mut impl Read, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(Error::Truncated {
                expected: offset + buf.len() as u64,
                found: offset + filled as u64,
            });
        }
        filled += n;
    }
    Ok(())
}

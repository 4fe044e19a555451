//! Little-endian dataset files.
//!
//! Layout: `"RISD"`, `u8` version, `u32` M, N, U, S, then `H` (N·M entries)
//! and S records of `G` (U·N entries) followed by `D` (U·M entries). Every
//! complex entry is two `f64` (real, imaginary), row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{ChannelSample, Dataset};
use crate::error::{Error, Result};
use crate::tensor::ComplexMat;

pub const DATASET_MAGIC: &[u8; 4] = b"RISD";
pub const DATASET_VERSION: u8 = 1;
pub const DATASET_HEADER_LEN: u64 = 21;

/// Payload size in bytes implied by the header fields.
fn payload_len(m: u64, n: u64, u: u64, s: u64) -> Option<u64> {
    let per_sample = u.checked_mul(n)?.checked_add(u.checked_mul(m)?)?;
    let entries = n.checked_mul(m)?.checked_add(s.checked_mul(per_sample)?)?;
    entries.checked_mul(16)
}

fn write_matrix(w: &mut impl Write, m: &ComplexMat) -> std::io::Result<()> {
    for z in m.data() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&[DATASET_VERSION])?;
    for v in [ds.n_bs, ds.n_ris, ds.n_users, ds.samples.len()] {
        let v = u32::try_from(v).map_err(|_| Error::Contract(format!("dimension {v} does not fit the u32 header")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    write_matrix(&mut w, &ds.h)?;
    for s in &ds.samples {
        write_matrix(&mut w, &s.g)?;
        write_matrix(&mut w, &s.d)?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> std::io::Result<ComplexMat> {
    let mut buf = vec![0u8; rows * cols * 16];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(ComplexMat::new(rows, cols, data).unwrap())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    if file_len < DATASET_HEADER_LEN {
        return Err(Error::Truncated {
            expected: DATASET_HEADER_LEN,
            found: file_len,
        });
    }
    let mut r = BufReader::new(file);
    let mut header = [0u8; DATASET_HEADER_LEN as usize];
    r.read_exact(&mut header)?;
    if &header[..4] != DATASET_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {:?}", &header[..4]),
        });
    }
    if header[4] != DATASET_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {}", header[4]),
        });
    }
    let field = |i: usize| u32::from_le_bytes(header[5 + 4 * i..9 + 4 * i].try_into().unwrap());
    let (m, n, u, s) = (field(0), field(1), field(2), field(3));
    for (i, (name, v)) in [("M", m), ("N", n), ("U", u)].into_iter().enumerate() {
        if v == 0 {
            return Err(Error::Format {
                offset: 5 + 4 * i as u64,
                msg: format!("{name} must be at least 1"),
            });
        }
    }
    let expected = payload_len(m as u64, n as u64, u as u64, s as u64)
        .and_then(|p| p.checked_add(DATASET_HEADER_LEN))
        .ok_or_else(|| Error::Format {
            offset: 5,
            msg: "header dimensions overflow".into(),
        })?;
    if file_len < expected {
        return Err(Error::Truncated {
            expected,
            found: file_len,
        });
    }
    if file_len > expected {
        return Err(Error::Format {
            offset: expected,
            msg: format!("{} trailing bytes after payload", file_len - expected),
        });
    }

    let (m, n, u, s) = (m as usize, n as usize, u as usize, s as usize);
    let h = read_matrix(&mut r, n, m)?;
    let mut samples = Vec::with_capacity(s);
    for _ in 0..s {
        let g = read_matrix(&mut r, u, n)?;
        let d = read_matrix(&mut r, u, m)?;
        samples.push(ChannelSample { g, d });
    }
    Ok(Dataset {
        n_bs: m,
        n_ris: n,
        n_users: u,
        h,
        samples,
    })
}

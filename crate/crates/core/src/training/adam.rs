use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::RealMat;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 8e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// First and second moment estimates per parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<RealMat>,
    pub v: Vec<RealMat>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[RealMat]) -> Self {
        let zeros: Vec<RealMat> = params.iter().map(|p| RealMat::zeros(p.rows(), p.cols())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam step in the ascent direction.
pub fn adam_step(params: &mut [RealMat], grads: &[RealMat], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(
            "adam_step",
            "grads",
            format!(
                "block counts differ (params {}, grads {}, state {})",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::dim(
                "adam_step",
                "grads",
                format!("block {i}: param {:?}, grad {:?}", p.shape(), g.shape()),
            ));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((x, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x += cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

pub const ADAM_MAGIC: &[u8; 4] = b"RISA";
const ADAM_VERSION: u8 = 1;

/// Optimizer sidecar written next to a checkpoint: `"RISA"`, `u8` version,
/// `u64` step, `u32` block count, then all first moments followed by all
/// second moments as little-endian `f64`. Block shapes come from the
/// checkpoint's architecture.
pub fn save_adam_state(state: &AdamState, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ADAM_MAGIC)?;
    w.write_all(&[ADAM_VERSION])?;
    w.write_all(&state.t.to_le_bytes())?;
    w.write_all(&(state.m.len() as u32).to_le_bytes())?;
    for block in state.m.iter().chain(&state.v) {
        for x in block.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_adam_state(path: impl AsRef<Path>, shapes: &[(usize, usize)]) -> Result<AdamState> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 17];
    r.read_exact(&mut header)
        .map_err(|_| Error::Truncated { expected: 17, found: 0 })?;
    if &header[..4] != ADAM_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad optimizer-state magic".into(),
        });
    }
    if header[4] != ADAM_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {}", header[4]),
        });
    }
    let t = u64::from_le_bytes(header[5..13].try_into().unwrap());
    let count = u32::from_le_bytes(header[13..17].try_into().unwrap()) as usize;
    if count != shapes.len() {
        return Err(Error::Format {
            offset: 13,
            msg: format!("optimizer state has {count} blocks, model has {}", shapes.len()),
        });
    }
    let mut read_blocks = || -> Result<Vec<RealMat>> {
        shapes
            .iter()
            .map(|&(rows, cols)| {
                let mut buf = vec![0u8; rows * cols * 8];
                r.read_exact(&mut buf).map_err(|_| Error::Truncated {
                    expected: buf.len() as u64,
                    found: 0,
                })?;
                let data = buf
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                RealMat::new(rows, cols, data)
            })
            .collect()
    };
    let m = read_blocks()?;
    let v = read_blocks()?;
    Ok(AdamState { m, v, t })
}

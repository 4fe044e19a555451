//! Permutation-variant (PV) and permutation-invariant (PI) RISNet models.
//!
//! Every layer applies the same per-antenna maps to all RIS antennas and
//! shares information between antennas only through column means, so the
//! parameter count does not depend on the number of antennas and the output
//! phases permute along with the input columns.
//!
//! Parameters are kept as an ordered list of blocks. Per branch layer the PV
//! order is `W_l, b_l, W_g, b_g`; the PI order is ego-local, ego-global,
//! opposite-local, opposite-global, each as `W, b`. The final `w_L, b_L`
//! pair closes the list.

mod checkpoint;

pub use checkpoint::{load_params, read_params, save_params, write_params, CHECKPOINT_HEADER_LEN, CHECKPOINT_MAGIC};

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::tensor::{tape, ComplexMat, RealMat, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Pv,
    Pi,
}

impl Variant {
    pub fn code(self) -> u8 {
        match self {
            Variant::Pv => 0,
            Variant::Pi => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Pv),
            1 => Some(Variant::Pi),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Pv => "pv",
            Variant::Pi => "pi",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pv" | "PV" => Ok(Variant::Pv),
            "pi" | "PI" => Ok(Variant::Pi),
            other => Err(Error::Config(format!("unknown variant `{other}` (expected pv or pi)"))),
        }
    }
}

/// Shape-determining part of the model configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub variant: Variant,
    /// Total layer count including the output layer.
    pub layers: usize,
    pub n_users: usize,
    /// Hidden width of each branch.
    pub branch_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RisnetConfig {
    pub arch: Architecture,
    pub init_seed: u64,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Config(format!("layer count must be >= 2, got {}", self.layers)));
        }
        if self.branch_dim == 0 {
            return Err(Error::Config("branch_dim must be >= 1".into()));
        }
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be >= 1".into()));
        }
        if self.variant == Variant::Pi && self.n_users < 2 {
            return Err(Error::Config(
                "the permutation-invariant network needs at least 2 users".into(),
            ));
        }
        Ok(())
    }

    /// Width of the raw channel features fed to each layer.
    pub fn channel_width(&self) -> usize {
        match self.variant {
            Variant::Pv => 4 * self.n_users,
            Variant::Pi => 4,
        }
    }

    fn branches(&self) -> usize {
        match self.variant {
            Variant::Pv => 2,
            Variant::Pi => 4,
        }
    }

    /// Input width of branch layer `i` (0-based) and of the output layer
    /// when `i = layers - 1`.
    pub fn input_width(&self, i: usize) -> usize {
        if i == 0 {
            self.channel_width()
        } else {
            self.channel_width() + self.branches() * self.branch_dim
        }
    }

    /// Shapes of all parameter blocks in storage order.
    pub fn block_shapes(&self) -> Vec<(usize, usize)> {
        let b = self.branch_dim;
        let mut shapes = Vec::new();
        for i in 0..self.layers - 1 {
            let w = self.input_width(i);
            for _ in 0..self.branches() {
                shapes.push((b, w));
                shapes.push((b, 1));
            }
        }
        shapes.push((1, self.input_width(self.layers - 1)));
        shapes.push((1, 1));
        shapes
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (b, k) = (self.branch_dim, self.branches());
        let first = self.input_width(0);
        let rest = self.input_width(1);
        k * (b * first + b) + (self.layers - 2) * k * (b * rest + b) + rest + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RisnetParams {
    pub arch: Architecture,
    pub blocks: Vec<RealMat>,
}

impl RisnetParams {
    pub fn count(&self) -> usize {
        self.blocks.iter().map(RealMat::len).sum()
    }

    /// Checks block count and shapes against the architecture.
    pub fn check(&self) -> Result<()> {
        let shapes = self.arch.block_shapes();
        if shapes.len() != self.blocks.len() {
            return Err(Error::dim(
                "RisnetParams",
                "blocks",
                format!("has {} blocks, expected {}", self.blocks.len(), shapes.len()),
            ));
        }
        for (i, (block, &shape)) in self.blocks.iter().zip(&shapes).enumerate() {
            if block.shape() != shape {
                return Err(Error::dim(
                    "RisnetParams",
                    "blocks",
                    format!("block {i} is {:?}, expected {shape:?}", block.shape()),
                ));
            }
        }
        Ok(())
    }

    /// Places every block on the tape, trainable or constant.
    pub fn to_tape(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.blocks
            .iter()
            .map(|b| {
                if trainable {
                    tape.param(b.clone())
                } else {
                    tape.constant(b.clone())
                }
            })
            .collect()
    }
}

/// Uniform fan-based initialization with zero biases.
pub fn init_params(cfg: &RisnetConfig) -> Result<RisnetParams> {
    cfg.arch.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.init_seed);
    let blocks = cfg
        .arch
        .block_shapes()
        .into_iter()
        .map(|(rows, cols)| {
            if cols == 1 {
                return RealMat::zeros(rows, cols);
            }
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
            RealMat::new(rows, cols, data).unwrap()
        })
        .collect();
    Ok(RisnetParams { arch: cfg.arch, blocks })
}

/// Network input for one channel sample.
#[derive(Clone, Copy, Debug)]
pub enum NetInput<'a> {
    /// Full 4U×N feature map (PV).
    Full(&'a RealMat),
    /// Per-user 4×N slices (PI).
    PerUser(&'a [RealMat]),
}

fn branch(tape: &mut Tape, w: Var, x: Var, b: Var) -> Result<Var> {
    let a = tape.affine(w, x, b)?;
    tape.relu(a)
}

/// Records the PV forward pass; `params` are the block vars in storage order.
pub fn forward_pv_tape(tape: &mut Tape, arch: &Architecture, params: &[Var], gamma: &RealMat) -> Result<Var> {
    if gamma.rows() != arch.channel_width() {
        return Err(Error::dim(
            "forward_pv",
            "Gamma",
            format!("has {} rows, expected {}", gamma.rows(), arch.channel_width()),
        ));
    }
    if gamma.cols() == 0 {
        return Err(Error::EmptyInput("forward_pv"));
    }
    let channel = tape.constant(gamma.clone());
    let mut features = channel;
    for layer in params[..params.len() - 2].chunks_exact(4) {
        let local = branch(tape, layer[0], features, layer[1])?;
        let global_pre = branch(tape, layer[2], features, layer[3])?;
        let global = tape.mean_cols(global_pre)?;
        features = tape.concat_rows(&[channel, local, global])?;
    }
    let out = tape.affine(params[params.len() - 2], features, params[params.len() - 1])?;
    tape.relu(out)
}

/// Records the PI forward pass for any number of users `U ≥ 2`.
pub fn forward_pi_tape(tape: &mut Tape, params: &[Var], users: &[RealMat]) -> Result<Var> {
    let u = users.len();
    if u < 2 {
        return Err(Error::Config(format!(
            "the permutation-invariant network needs at least 2 users, got {u}"
        )));
    }
    let n = users[0].cols();
    if n == 0 {
        return Err(Error::EmptyInput("forward_pi"));
    }
    if let Some(bad) = users.iter().find(|g| g.shape() != (4, n)) {
        return Err(Error::dim(
            "forward_pi",
            "Gamma_users",
            format!("contains a slice of shape {:?}, expected (4, {n})", bad.shape()),
        ));
    }
    let channels: Vec<Var> = users.iter().map(|g| tape.constant(g.clone())).collect();
    let mut features = channels.clone();
    let inv_others = 1.0 / (u - 1) as f64;
    for layer in params[..params.len() - 2].chunks_exact(8) {
        let mut ego_local = Vec::with_capacity(u);
        let mut ego_global = Vec::with_capacity(u);
        let mut opp_local_raw = Vec::with_capacity(u);
        let mut opp_global_raw = Vec::with_capacity(u);
        for &f in &features {
            ego_local.push(branch(tape, layer[0], f, layer[1])?);
            let eg = branch(tape, layer[2], f, layer[3])?;
            ego_global.push(tape.mean_cols(eg)?);
            opp_local_raw.push(branch(tape, layer[4], f, layer[5])?);
            opp_global_raw.push(branch(tape, layer[6], f, layer[7])?);
        }
        let mut next = Vec::with_capacity(u);
        for me in 0..u {
            let others = |raw: &[Var]| -> Vec<Var> {
                raw.iter()
                    .enumerate()
                    .filter(|&(v, _)| v != me)
                    .map(|(_, &x)| x)
                    .collect()
            };
            let ol_sum = tape.sum_parts(&others(&opp_local_raw))?;
            let opp_local = tape.scale(ol_sum, inv_others)?;
            let og_sum = tape.sum_parts(&others(&opp_global_raw))?;
            let og_avg = tape.scale(og_sum, inv_others)?;
            let opp_global = tape.mean_cols(og_avg)?;
            next.push(tape.concat_rows(&[channels[me], ego_local[me], opp_local, ego_global[me], opp_global])?);
        }
        features = next;
    }
    let pooled = tape.sum_parts(&features)?;
    let out = tape.affine(params[params.len() - 2], pooled, params[params.len() - 1])?;
    tape.relu(out)
}

/// Records the forward pass matching the parameters' variant.
pub fn forward_tape(tape: &mut Tape, params: &RisnetParams, vars: &[Var], input: NetInput<'_>) -> Result<Var> {
    if vars.len() != params.blocks.len() {
        return Err(Error::dim(
            "forward",
            "params",
            "var count does not match parameter blocks",
        ));
    }
    match (params.arch.variant, input) {
        (Variant::Pv, NetInput::Full(gamma)) => forward_pv_tape(tape, &params.arch, vars, gamma),
        (Variant::Pi, NetInput::PerUser(users)) => forward_pi_tape(tape, vars, users),
        (variant, _) => Err(Error::Config(format!(
            "input kind does not match the {variant} network"
        ))),
    }
}

/// Phases (1×N, nonnegative) from the PV network.
pub fn forward_pv(params: &RisnetParams, gamma: &RealMat) -> Result<RealMat> {
    forward(params, NetInput::Full(gamma))
}

/// Phases (1×N, nonnegative) from the PI network.
pub fn forward_pi(params: &RisnetParams, users: &[RealMat]) -> Result<RealMat> {
    forward(params, NetInput::PerUser(users))
}

pub fn forward(params: &RisnetParams, input: NetInput<'_>) -> Result<RealMat> {
    params.check()?;
    let mut tape = Tape::new();
    let vars = params.to_tape(&mut tape, false);
    let out = forward_tape(&mut tape, params, &vars, input)?;
    Ok(tape.real(out).clone())
}

/// RIS diagonal `e^{jψ_n}` as a 1×N row.
pub fn phases_to_phi(psi: &RealMat) -> ComplexMat {
    tape::unit_phase(psi)
}

//! Rayleigh-fading scenario ensembles and per-antenna channel features.
//!
//! A [`Dataset`] holds one BS→RIS channel `H` shared by every sample and a
//! list of per-sample `(G, D)` pairs. Derived quantities (`J = D·H⁺` and the
//! feature map `Γ`) are never stored; [`Dataset::prepare`] recomputes them.

mod io;

pub use io::{read_dataset, write_dataset, DATASET_HEADER_LEN, DATASET_MAGIC, DATASET_VERSION};

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{ComplexMat, RealMat};

/// Relative singular-value cutoff for the pseudo-inverse.
pub const PINV_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// BS antennas (M).
    pub n_bs: usize,
    /// RIS antennas (N).
    pub n_ris: usize,
    /// Single-antenna users (U).
    pub n_users: usize,
    /// Transmit SNR as a linear ratio.
    pub rho: f64,
    pub e_tr: f64,
    pub alpha: Vec<f64>,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl ScenarioConfig {
    /// Table defaults: 9 BS antennas, 1024 RIS antennas, 4 equally weighted users.
    pub fn paper() -> Self {
        Self {
            n_bs: 9,
            n_ris: 1024,
            n_users: 4,
            rho: 1e12,
            e_tr: 1.0,
            alpha: vec![0.25; 4],
            seed: 0,
            train_samples: 10240,
            test_samples: 1024,
        }
    }

    /// Small configuration used by the acceptance experiment.
    pub fn desk() -> Self {
        Self {
            n_bs: 4,
            n_ris: 64,
            n_users: 2,
            rho: 1000.0,
            e_tr: 1.0,
            alpha: vec![0.5; 2],
            seed: 0,
            train_samples: 1024,
            test_samples: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bs == 0 || self.n_ris == 0 || self.n_users == 0 {
            return Err(Error::Config(format!(
                "antenna and user counts must be >= 1 (M={}, N={}, U={})",
                self.n_bs, self.n_ris, self.n_users
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.e_tr > 0.0 && self.e_tr.is_finite()) {
            return Err(Error::Config(format!("e_tr must be positive, got {}", self.e_tr)));
        }
        if self.alpha.len() != self.n_users {
            return Err(Error::Config(format!(
                "alpha has {} weights for {} users",
                self.alpha.len(),
                self.n_users
            )));
        }
        if self.alpha.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::Config("alpha weights must be nonnegative".into()));
        }
        let sum: f64 = self.alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("alpha weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn samples(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_samples,
            Split::Test => self.test_samples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Per-sample channels: `G` (U×N, RIS→users) and `D` (U×M, BS→users).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSample {
    pub g: ComplexMat,
    pub d: ComplexMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n_bs: usize,
    pub n_ris: usize,
    pub n_users: usize,
    /// BS→RIS channel (N×M), shared by all samples.
    pub h: ComplexMat,
    pub samples: Vec<ChannelSample>,
}

/// A sample with its derived quantities precomputed.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub g: ComplexMat,
    pub d: ComplexMat,
    pub j: ComplexMat,
    /// Full feature map, 4U×N.
    pub gamma: RealMat,
    /// Per-user 4×N slices for the permutation-invariant network.
    pub gamma_users: Vec<RealMat>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks the dataset against a scenario's dimensions.
    pub fn check_dims(&self, cfg: &ScenarioConfig) -> Result<()> {
        if (self.n_bs, self.n_ris, self.n_users) != (cfg.n_bs, cfg.n_ris, cfg.n_users) {
            return Err(Error::Config(format!(
                "dataset has (M, N, U) = ({}, {}, {}), configuration expects ({}, {}, {})",
                self.n_bs, self.n_ris, self.n_users, cfg.n_bs, cfg.n_ris, cfg.n_users
            )));
        }
        Ok(())
    }

    /// Computes `J` and `Γ` for every sample using a single pseudo-inverse of `H`.
    pub fn prepare(&self) -> Result<Vec<PreparedSample>> {
        let h_pinv = pseudo_inverse(&self.h);
        self.samples.par_iter().map(|s| prepare_sample(s, &h_pinv)).collect()
    }
}

pub fn prepare_sample(sample: &ChannelSample, h_pinv: &ComplexMat) -> Result<PreparedSample> {
    let j = sample.d.matmul(h_pinv)?;
    let gamma = extract_features(&sample.g, &j)?;
    let gamma_users = user_features(&gamma, sample.g.rows());
    Ok(PreparedSample {
        g: sample.g.clone(),
        d: sample.d.clone(),
        j,
        gamma,
        gamma_users,
    })
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> ComplexMat {
    let data = (0..rows * cols)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
        })
        .collect();
    ComplexMat::new(rows, cols, data).unwrap()
}

/// RNG for one stream of a scenario. Stream 0 draws `H`; sample `i` of the
/// combined train+test index space draws from stream `i + 1`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the dataset for one split. Train and test share `H`; their samples
/// come from disjoint streams, so the two splits never overlap.
pub fn sample_dataset(cfg: &ScenarioConfig, split: Split) -> Result<Dataset> {
    cfg.validate()?;
    let (m, n, u) = (cfg.n_bs, cfg.n_ris, cfg.n_users);
    let h = gaussian_matrix(&mut stream_rng(cfg.seed, 0), n, m);
    let offset = match split {
        Split::Train => 0,
        Split::Test => cfg.train_samples as u64,
    };
    let samples = (0..cfg.samples(split) as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, offset + i + 1);
            let g = gaussian_matrix(&mut rng, u, n);
            let d = gaussian_matrix(&mut rng, u, m);
            ChannelSample { g, d }
        })
        .collect();
    Ok(Dataset {
        n_bs: m,
        n_ris: n,
        n_users: u,
        h,
        samples,
    })
}

fn to_nalgebra(m: &ComplexMat) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn from_nalgebra(m: &DMatrix<Complex64>) -> ComplexMat {
    let (r, c) = m.shape();
    let data = (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect();
    ComplexMat::new(r, c, data).unwrap()
}

/// Moore–Penrose pseudo-inverse via SVD; singular values below
/// `PINV_TOLERANCE·σ_max` are dropped.
pub fn pseudo_inverse(h: &ComplexMat) -> ComplexMat {
    let (rows, cols) = h.shape();
    let svd = to_nalgebra(h).svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_TOLERANCE * sigma_max;
    let mut out = DMatrix::<Complex64>::zeros(cols, rows);
    for (k, &s) in sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..cols {
            let vik = v_t[(k, i)].conj() * inv;
            for j in 0..rows {
                out[(i, j)] += vik * u[(j, k)].conj();
            }
        }
    }
    from_nalgebra(&out)
}

/// `J = D·H⁺`, the direct channel expressed in RIS-antenna coordinates.
pub fn compute_equivalent_direct(d: &ComplexMat, h: &ComplexMat) -> Result<ComplexMat> {
    if d.cols() != h.cols() {
        return Err(Error::dim(
            "compute_equivalent_direct",
            "H",
            format!("has {} columns, D has {}", h.cols(), d.cols()),
        ));
    }
    d.matmul(&pseudo_inverse(h))
}

/// Argument in `(−π, π]` with `arg(0) = 0`.
pub fn arg(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let a = z.im.atan2(z.re);
    if a == -PI {
        PI
    } else {
        a
    }
}

/// Builds the 4U×N feature map. Column `n` holds the `(|g_un|, arg g_un)`
/// pairs for every user followed by the `(|j_un|, arg j_un)` pairs.
pub fn extract_features(g: &ComplexMat, j: &ComplexMat) -> Result<RealMat> {
    if g.shape() != j.shape() {
        return Err(Error::dim(
            "extract_features",
            "J",
            format!("is {:?}, G is {:?}", j.shape(), g.shape()),
        ));
    }
    let (u, n) = g.shape();
    let mut out = RealMat::zeros(4 * u, n);
    for (block, src) in [g, j].into_iter().enumerate() {
        for user in 0..u {
            let row = 2 * u * block + 2 * user;
            for (col, &z) in src.row(user).iter().enumerate() {
                out.set(row, col, z.norm());
                out.set(row + 1, col, arg(z));
            }
        }
    }
    Ok(out)
}

/// Splits a 4U×N feature map into per-user 4×N slices with rows
/// `[|g_un|, arg g_un, |j_un|, arg j_un]`.
pub fn user_features(gamma: &RealMat, n_users: usize) -> Vec<RealMat> {
    let n = gamma.cols();
    (0..n_users)
        .map(|u| {
            let mut m = RealMat::zeros(4, n);
            for (dst, src) in [2 * u, 2 * u + 1, 2 * n_users + 2 * u, 2 * n_users + 2 * u + 1]
                .into_iter()
                .enumerate()
            {
                m.data_mut()[dst * n..(dst + 1) * n].copy_from_slice(gamma.row(src));
            }
            m
        })
        .collect()
}

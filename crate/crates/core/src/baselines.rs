//! Reference RIS configurations: identity, random phases and a per-antenna
//! block-coordinate-descent search alternating with WMMSE.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{ChannelSample, PreparedSample, ScenarioConfig};
use crate::error::{Error, Result};
use crate::precoder::{composite_channel, wmmse_precode, wmmse_precode_from, wsr, WmmseOptions};
use crate::risnet::phases_to_phi;
use crate::tensor::{ComplexMat, RealMat};

/// Channels of one sample: `G` (U×N), shared `H` (N×M) and `D` (U×M).
#[derive(Clone, Copy, Debug)]
pub struct Link<'a> {
    pub g: &'a ComplexMat,
    pub h: &'a ComplexMat,
    pub d: &'a ComplexMat,
}

impl<'a> Link<'a> {
    pub fn new(g: &'a ComplexMat, h: &'a ComplexMat, d: &'a ComplexMat) -> Self {
        Self { g, h, d }
    }

    pub fn from_sample(sample: &'a ChannelSample, h: &'a ComplexMat) -> Self {
        Self::new(&sample.g, h, &sample.d)
    }

    pub fn from_prepared(sample: &'a PreparedSample, h: &'a ComplexMat) -> Self {
        Self::new(&sample.g, h, &sample.d)
    }

    pub fn n_ris(&self) -> usize {
        self.g.cols()
    }
}

/// WSR after WMMSE for the phase row `psi` (1×N).
pub fn phases_eval(link: Link<'_>, psi: &RealMat, scenario: &ScenarioConfig, opts: WmmseOptions) -> Result<f64> {
    let a = composite_channel(link.g, &phases_to_phi(psi), link.h, link.d)?;
    Ok(wmmse_precode(&a, &scenario.alpha, scenario.rho, scenario.e_tr, opts)?.wsr)
}

/// All phases zero (`Φ = I`).
pub fn identity_phase_eval(link: Link<'_>, scenario: &ScenarioConfig, opts: WmmseOptions) -> Result<f64> {
    phases_eval(link, &RealMat::zeros(1, link.n_ris()), scenario, opts)
}

/// Phases drawn i.i.d. uniform on `[0, 2π)`.
pub fn random_phases(n: usize, rng: &mut impl Rng) -> RealMat {
    let data = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    RealMat::new(1, n, data).unwrap()
}

pub fn random_phase_eval(
    link: Link<'_>,
    scenario: &ScenarioConfig,
    rng: &mut impl Rng,
    opts: WmmseOptions,
) -> Result<f64> {
    let psi = random_phases(link.n_ris(), rng);
    phases_eval(link, &psi, scenario, opts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BcdConfig {
    /// Number of uniformly spaced candidate phases per antenna.
    pub grid_size: usize,
    pub max_sweeps: usize,
    /// Stop once a full sweep improves the WSR by less than this.
    pub tol: f64,
    /// Recompute the precoder after every sweep.
    pub rewmmse: bool,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self {
            grid_size: 32,
            max_sweeps: 20,
            tol: 1e-4,
            rewmmse: true,
        }
    }
}

impl BcdConfig {
    pub fn desk() -> Self {
        Self {
            grid_size: 16,
            max_sweeps: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config(format!(
                "bcd grid_size must be >= 2, got {}",
                self.grid_size
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("bcd max_sweeps must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("bcd tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }

    /// Candidate phases `2πk/K`.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_size)
            .map(|k| TAU * k as f64 / self.grid_size as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcdResult {
    /// Phases, 1×N.
    pub psi: RealMat,
    pub v: ComplexMat,
    pub wsr: f64,
    /// WSR at the start followed by the WSR after each sweep.
    pub trace: Vec<f64>,
}

/// Cyclic per-antenna grid search with the precoder held fixed inside a
/// sweep. Each antenna keeps its current phase unless a grid phase is
/// strictly better, so the trace never decreases.
pub fn bcd_optimize(
    link: Link<'_>,
    scenario: &ScenarioConfig,
    cfg: &BcdConfig,
    opts: WmmseOptions,
) -> Result<BcdResult> {
    cfg.validate()?;
    let n = link.n_ris();
    let u = link.g.rows();
    let (alpha, rho, e_tr) = (&scenario.alpha, scenario.rho, scenario.e_tr);
    let grid = cfg.grid();
    let grid_phi: Vec<Complex64> = grid.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();

    let mut psi = RealMat::zeros(1, n);
    let a = composite_channel(link.g, &phases_to_phi(&psi), link.h, link.d)?;
    let first = wmmse_precode(&a, alpha, rho, e_tr, opts)?;
    let mut v = first.v;
    let mut rate = first.wsr;
    let mut trace = vec![rate];

    for _ in 0..cfg.max_sweeps {
        let start = rate;
        let hv = link.h.matmul(&v)?;
        let mut phi: Vec<Complex64> = psi.data().iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        let mut c = link.g.scale_cols(&phi)?.matmul(&hv)?.add(&link.d.matmul(&v)?)?;
        let mut current = wsr(&c, alpha, rho)?;
        let mut trial = c.clone();

        for ant in 0..n {
            // contribution of antenna `ant` is φ·g_ant·(HV)_ant
            let base: Vec<Complex64> = (0..u * u)
                .map(|idx| link.g.get(idx / u, ant) * hv.get(ant, idx % u))
                .collect();
            let mut best = (current, None);
            for (k, &cand) in grid_phi.iter().enumerate() {
                let delta = cand - phi[ant];
                for (t, (&ci, &bi)) in trial.data_mut().iter_mut().zip(c.data().iter().zip(&base)) {
                    *t = ci + delta * bi;
                }
                let r = wsr(&trial, alpha, rho)?;
                if r > best.0 {
                    best = (r, Some(k));
                }
            }
            if let (r, Some(k)) = best {
                let delta = grid_phi[k] - phi[ant];
                for (ci, &bi) in c.data_mut().iter_mut().zip(&base) {
                    *ci += delta * bi;
                }
                phi[ant] = grid_phi[k];
                psi.set(0, ant, grid[k]);
                current = r;
            }
        }

        let a = composite_channel(link.g, &phases_to_phi(&psi), link.h, link.d)?;
        rate = wsr(&a.matmul(&v)?, alpha, rho)?;
        if cfg.rewmmse {
            let next = wmmse_precode_from(&a, alpha, rho, e_tr, opts, Some(&v))?;
            if next.wsr > rate {
                v = next.v;
                rate = next.wsr;
            }
        }
        trace.push(rate);
        if rate - start < cfg.tol {
            break;
        }
    }

    Ok(BcdResult {
        psi,
        v,
        wsr: rate,
        trace,
    })
}

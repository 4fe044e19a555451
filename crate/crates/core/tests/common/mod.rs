#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use risnet_core::channel::{prepare_sample, pseudo_inverse, ChannelSample, PreparedSample, ScenarioConfig};
use risnet_core::precoder::{composite_channel, wmmse_precode, WmmseOptions};
use risnet_core::risnet::{init_params, phases_to_phi, Architecture, RisnetConfig, RisnetParams, Variant};
use risnet_core::tensor::{ComplexMat, RealMat};
use risnet_core::training::{objective, objective_and_gradient, phases};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn real(rng: &mut impl Rng, rows: usize, cols: usize) -> RealMat {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    RealMat::new(rows, cols, data).unwrap()
}

/// Entries bounded away from zero so ReLU kinks stay outside the
/// finite-difference stencil.
pub fn real_off_kink(rng: &mut impl Rng, rows: usize, cols: usize) -> RealMat {
    let data = (0..rows * cols)
        .map(|_| loop {
            let x: f64 = rng.sample(StandardNormal);
            if x.abs() > 1e-3 {
                break x;
            }
        })
        .collect();
    RealMat::new(rows, cols, data).unwrap()
}

pub fn complex(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let data = (0..rows * cols)
        .map(|_| {
            Complex64::new(
                rng.sample::<f64, _>(StandardNormal) * s,
                rng.sample::<f64, _>(StandardNormal) * s,
            )
        })
        .collect();
    ComplexMat::new(rows, cols, data).unwrap()
}

pub fn uniform_phases(rng: &mut impl Rng, n: usize) -> RealMat {
    let data = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    RealMat::new(1, n, data).unwrap()
}

/// Random `(H, samples)` with `J` and `Γ` derived.
pub fn prepared(rng: &mut impl Rng, m: usize, n: usize, u: usize, count: usize) -> (ComplexMat, Vec<PreparedSample>) {
    let h = complex(rng, n, m);
    let h_pinv = pseudo_inverse(&h);
    let samples = (0..count)
        .map(|_| {
            let s = ChannelSample {
                g: complex(rng, u, n),
                d: complex(rng, u, m),
            };
            prepare_sample(&s, &h_pinv).unwrap()
        })
        .collect();
    (h, samples)
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn frob_diff(a: &ComplexMat, b: &ComplexMat) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn naive_matmul(a: &ComplexMat, b: &ComplexMat) -> ComplexMat {
    let mut out = ComplexMat::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..a.cols() {
                acc += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

/// Term-by-term scalar loop for the weighted sum-rate.
pub fn wsr_loop(c: &ComplexMat, alpha: &[f64], rho: f64) -> f64 {
    let u = c.rows();
    let mut total = 0.0;
    for k in 0..u {
        let mut interference = 1.0 / rho;
        for v in 0..u {
            if v != k {
                let z = c.get(k, v);
                interference += z.re * z.re + z.im * z.im;
            }
        }
        let s = c.get(k, k);
        let sinr = (s.re * s.re + s.im * s.im) / interference;
        total += alpha[k] * (1.0 + sinr).ln() / std::f64::consts::LN_2;
    }
    total
}

pub fn scenario(m: usize, n: usize, u: usize) -> ScenarioConfig {
    ScenarioConfig {
        n_bs: m,
        n_ris: n,
        n_users: u,
        rho: 10.0,
        e_tr: 1.0,
        alpha: vec![1.0 / u as f64; u],
        seed: 0,
        train_samples: 1,
        test_samples: 1,
    }
}

/// Fraction of parameters whose end-to-end gradient of the mean batch WSR
/// (precoders fixed) matches central differences.
pub fn end_to_end_pass_rate(variant: Variant, seed: u64, layers: usize, branch_dim: usize) -> (usize, usize) {
    let (m, n, u) = (2, 4, 2);
    let sc = scenario(m, n, u);
    let mut r = rng(seed);
    let (h, samples) = prepared(&mut r, m, n, u, 3);
    let cfg = RisnetConfig {
        arch: Architecture {
            variant,
            layers,
            n_users: u,
            branch_dim,
        },
        init_seed: seed,
    };
    let mut params = init_params(&cfg).unwrap();
    // nonzero biases so every branch is exercised
    for b in params.blocks.iter_mut().filter(|b| b.cols() == 1) {
        for x in b.data_mut() {
            *x = r.random_range(0.05..0.3);
        }
    }
    let vs: Vec<ComplexMat> = samples
        .iter()
        .map(|s| {
            let a = composite_channel(&s.g, &phases_to_phi(&phases(&params, s).unwrap()), &h, &s.d).unwrap();
            wmmse_precode(&a, &sc.alpha, sc.rho, sc.e_tr, WmmseOptions::default())
                .unwrap()
                .v
        })
        .collect();
    let batch = samples.len() as f64;
    let mut grad: Vec<RealMat> = params
        .blocks
        .iter()
        .map(|b| RealMat::zeros(b.rows(), b.cols()))
        .collect();
    for (s, v) in samples.iter().zip(&vs) {
        let (_, g) = objective_and_gradient(&params, s, &h, v, &sc).unwrap();
        for (acc, gi) in grad.iter_mut().zip(&g) {
            for (a, x) in acc.data_mut().iter_mut().zip(gi.data()) {
                *a += x / batch;
            }
        }
    }
    let mean_obj = |p: &RisnetParams| {
        samples
            .iter()
            .zip(&vs)
            .map(|(s, v)| objective(p, s, &h, v, &sc).unwrap())
            .sum::<f64>()
            / batch
    };
    let (mut ok, mut total) = (0, 0);
    for bi in 0..params.blocks.len() {
        for k in 0..params.blocks[bi].len() {
            let mut plus = params.clone();
            plus.blocks[bi].data_mut()[k] += FD_STEP;
            let mut minus = params.clone();
            minus.blocks[bi].data_mut()[k] -= FD_STEP;
            let fd = (mean_obj(&plus) - mean_obj(&minus)) / (2.0 * FD_STEP);
            total += 1;
            if rel_err(grad[bi].data()[k], fd, 1e-3) < FD_TOL {
                ok += 1;
            }
        }
    }
    (ok, total)
}

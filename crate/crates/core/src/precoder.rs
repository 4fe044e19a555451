//! Weighted sum-rate evaluation and WMMSE precoding for a fixed RIS state.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{tape, ComplexMat};

const BISECTION_STEPS: usize = 200;
const POWER_RTOL: f64 = 1e-10;
/// Eigenvalues below this fraction of the largest are treated as a null space.
const NULL_EIGEN_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WmmseOptions {
    pub max_iters: usize,
    /// Stop once an outer iteration improves the WSR by less than this.
    pub tol: f64,
}

impl Default for WmmseOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecodeResult {
    /// Precoder, M×U.
    pub v: ComplexMat,
    /// Composite matrix `A·V`, U×U.
    pub c: ComplexMat,
    pub wsr: f64,
    pub iterations_used: usize,
    /// WSR of the initial precoder followed by the WSR after each iteration.
    pub trace: Vec<f64>,
    /// Set when `A = 0`; `V` is then zero.
    pub degenerate: bool,
}

/// `A = G·diag(φ)·H + D` for the RIS diagonal given as a `1×N` row.
pub fn composite_channel(g: &ComplexMat, phi: &ComplexMat, h: &ComplexMat, d: &ComplexMat) -> Result<ComplexMat> {
    if phi.rows() != 1 || phi.cols() != g.cols() {
        return Err(Error::dim(
            "composite_channel",
            "phi",
            format!("is {:?}, expected (1, {})", phi.shape(), g.cols()),
        ));
    }
    if h.rows() != g.cols() {
        return Err(Error::dim(
            "composite_channel",
            "H",
            format!("has {} rows, G has {} columns", h.rows(), g.cols()),
        ));
    }
    if d.shape() != (g.rows(), h.cols()) {
        return Err(Error::dim(
            "composite_channel",
            "D",
            format!("is {:?}, expected ({}, {})", d.shape(), g.rows(), h.cols()),
        ));
    }
    if let Some(z) = phi.data().iter().find(|z| (z.norm() - 1.0).abs() > 1e-12) {
        return Err(Error::Contract(format!("RIS coefficient {z} is not unit-modulus")));
    }
    g.scale_cols(phi.data())?.matmul(h)?.add(d)
}

/// Weighted sum-rate of `C` with noise power `1/ρ`; `c²` is read as `|c|²`.
pub fn wsr(c: &ComplexMat, alpha: &[f64], rho: f64) -> Result<f64> {
    tape::wsr_value(c, alpha, rho)
}

pub fn power(v: &ComplexMat) -> f64 {
    v.frobenius_norm_sq()
}

fn scale_to_power(v: &ComplexMat, e_tr: f64) -> ComplexMat {
    let p = power(v);
    if p == 0.0 {
        return v.clone();
    }
    v.scale(Complex64::new((e_tr / p).sqrt(), 0.0))
}

/// Matched filter `Aᴴ` scaled to the power budget.
pub fn matched_filter(a: &ComplexMat, e_tr: f64) -> ComplexMat {
    scale_to_power(&a.adjoint(), e_tr)
}

/// Zero-forcing `Aᴴ(AAᴴ + εI)⁻¹` scaled to the power budget; `ε = 0` gives
/// plain zero forcing. `None` when the Gram matrix is not positive definite.
pub fn regularized_zero_forcing(a: &ComplexMat, reg: f64, e_tr: f64) -> Option<ComplexMat> {
    let u = a.rows();
    let a_na = DMatrix::from_row_slice(u, a.cols(), a.data());
    let gram = &a_na * a_na.adjoint() + DMatrix::<Complex64>::identity(u, u) * Complex64::new(reg, 0.0);
    let inv = gram.cholesky()?.inverse();
    let v = a_na.adjoint() * inv;
    let (m, k) = v.shape();
    let data = (0..m)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|ix| v[ix])
        .collect();
    let v = ComplexMat::new(m, k, data).ok()?;
    (v.is_finite() && power(&v) > 0.0).then(|| scale_to_power(&v, e_tr))
}

/// Starting precoder: whichever of matched filter, zero forcing and
/// regularized zero forcing gives the highest WSR.
pub fn initial_precoder(a: &ComplexMat, alpha: &[f64], rho: f64, e_tr: f64) -> Result<ComplexMat> {
    let u = a.rows();
    let mut best = matched_filter(a, e_tr);
    let mut best_rate = wsr(&a.matmul(&best)?, alpha, rho)?;
    let candidates = [
        regularized_zero_forcing(a, 0.0, e_tr),
        regularized_zero_forcing(a, u as f64 / (rho * e_tr), e_tr),
    ];
    for v in candidates.into_iter().flatten() {
        let rate = wsr(&a.matmul(&v)?, alpha, rho)?;
        if rate > best_rate {
            best = v;
            best_rate = rate;
        }
    }
    Ok(best)
}

/// WMMSE precoder started from [`initial_precoder`].
pub fn wmmse_precode(a: &ComplexMat, alpha: &[f64], rho: f64, e_tr: f64, opts: WmmseOptions) -> Result<PrecodeResult> {
    wmmse_precode_from(a, alpha, rho, e_tr, opts, None)
}

/// WMMSE precoder with an optional warm start. The warm start is rescaled to
/// full power before the first iteration.
pub fn wmmse_precode_from(
    a: &ComplexMat,
    alpha: &[f64],
    rho: f64,
    e_tr: f64,
    opts: WmmseOptions,
    init: Option<&ComplexMat>,
) -> Result<PrecodeResult> {
    let (u, m) = a.shape();
    if alpha.len() != u {
        return Err(Error::dim(
            "wmmse_precode",
            "alpha",
            format!("has {} weights for {u} users", alpha.len()),
        ));
    }
    if opts.max_iters == 0 {
        return Err(Error::Contract("wmmse max_iters must be at least 1".into()));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("channel matrix has non-finite entries".into()));
    }
    if a.frobenius_norm_sq() == 0.0 {
        let v = ComplexMat::zeros(m, u);
        return Ok(PrecodeResult {
            c: ComplexMat::zeros(u, u),
            v,
            wsr: 0.0,
            iterations_used: 0,
            trace: vec![0.0],
            degenerate: true,
        });
    }

    let noise = 1.0 / rho;
    let mut v = match init {
        Some(v0) if v0.shape() == (m, u) && power(v0) > 0.0 => scale_to_power(v0, e_tr),
        Some(v0) if v0.shape() != (m, u) => {
            return Err(Error::dim(
                "wmmse_precode",
                "init",
                format!("is {:?}, expected ({m}, {u})", v0.shape()),
            ))
        }
        _ => initial_precoder(a, alpha, rho, e_tr)?,
    };
    let mut c = a.matmul(&v)?;
    let mut rate = wsr(&c, alpha, rho)?;
    let mut trace = vec![rate];
    let mut iterations_used = 0;

    for _ in 0..opts.max_iters {
        iterations_used += 1;
        // receive scalars and MSE weights
        let mut q = DMatrix::<Complex64>::zeros(m, m);
        let mut b = DMatrix::<Complex64>::zeros(m, u);
        for k in 0..u {
            let row = c.row(k);
            let total: f64 = row.iter().map(|z| z.norm_sqr()).sum::<f64>() + noise;
            let recv = row[k] / total;
            let mse = 1.0 - row[k].norm_sqr() / total;
            let weight = alpha[k] / mse.max(f64::MIN_POSITIVE);
            let gain = weight * recv.norm_sqr();
            let a_k = a.row(k);
            for i in 0..m {
                let ai = a_k[i].conj();
                b[(i, k)] = ai * recv * weight;
                for j in 0..m {
                    q[(i, j)] += ai * a_k[j] * gain;
                }
            }
        }
        let next = solve_with_power(q, &b, e_tr)?;
        let Some(next) = next else { break };
        let next = scale_to_power(&next, e_tr);
        let next_c = a.matmul(&next)?;
        let next_rate = wsr(&next_c, alpha, rho)?;
        let improvement = next_rate - rate;
        v = next;
        c = next_c;
        rate = next_rate;
        trace.push(rate);
        if improvement < opts.tol {
            break;
        }
    }

    Ok(PrecodeResult {
        v,
        c,
        wsr: rate,
        iterations_used,
        trace,
        degenerate: false,
    })
}

/// Solves `(Q + μI)·V = B` with `μ ≥ 0` chosen by bisection so that
/// `tr(VVᴴ) = E_Tr`, or `μ = 0` (minimum-norm solution) when that already
/// fits the budget. Returns `None` when the solution is identically zero.
fn solve_with_power(q: DMatrix<Complex64>, b: &DMatrix<Complex64>, e_tr: f64) -> Result<Option<ComplexMat>> {
    let (m, u) = b.shape();
    let eig = SymmetricEigen::new(q);
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let lambda_max = lambda.iter().copied().fold(0.0, f64::max);
    let basis = eig.eigenvectors;
    let bt = basis.adjoint() * b;
    // per-eigendirection energy of the right-hand side
    let energy: Vec<f64> = (0..m)
        .map(|i| {
            if lambda[i] <= NULL_EIGEN_RTOL * lambda_max {
                0.0
            } else {
                (0..u).map(|k| bt[(i, k)].norm_sqr()).sum()
            }
        })
        .collect();
    if energy.iter().all(|&e| e == 0.0) {
        return Ok(None);
    }
    let power_at = |mu: f64| -> f64 {
        energy
            .iter()
            .zip(&lambda)
            .filter(|(&e, _)| e > 0.0)
            .map(|(&e, &l)| e / ((l + mu) * (l + mu)))
            .sum()
    };

    let mu = if power_at(0.0) <= e_tr {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = lambda_max.max(f64::MIN_POSITIVE);
        let mut grow = 0;
        while power_at(hi) > e_tr {
            hi *= 2.0;
            grow += 1;
            if grow > 2000 || !hi.is_finite() {
                return Err(Error::Numeric("could not bracket the power multiplier".into()));
            }
        }
        let mut found = None;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let p = power_at(mid);
            if (p - e_tr).abs() <= POWER_RTOL * e_tr {
                found = Some(mid);
                break;
            }
            if p > e_tr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        found.ok_or_else(|| Error::Numeric(format!("power bisection did not converge in {BISECTION_STEPS} steps")))?
    };

    let mut scaled = bt;
    for i in 0..m {
        let f = if energy[i] > 0.0 { 1.0 / (lambda[i] + mu) } else { 0.0 };
        for k in 0..u {
            scaled[(i, k)] *= f;
        }
    }
    let v = basis * scaled;
    let data = (0..m)
        .flat_map(|i| (0..u).map(move |k| (i, k)))
        .map(|ix| v[ix])
        .collect();
    Ok(Some(ComplexMat::new(m, u, data).unwrap()))
}

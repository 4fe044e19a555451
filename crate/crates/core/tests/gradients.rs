//! Tape gradients against central finite differences.

mod common;

use common::*;
use num_complex::Complex64;
use rand::Rng;
use risnet_core::risnet::{init_params, Architecture, RisnetConfig, Variant};
use risnet_core::tensor::{ComplexMat, RealMat, Tape, Var};
use risnet_core::training::objective_and_gradient;
use risnet_core::Result;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;

#[derive(Clone)]
enum Leaf {
    R(RealMat),
    C(ComplexMat),
}

fn put(tape: &mut Tape, leaves: &[Leaf]) -> Vec<Var> {
    leaves
        .iter()
        .map(|l| match l {
            Leaf::R(m) => tape.param(m.clone()),
            Leaf::C(m) => tape.complex_param(m.clone()),
        })
        .collect()
}

fn eval(leaves: &[Leaf], f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars = put(&mut tape, leaves);
    let out = f(&mut tape, &vars).unwrap();
    tape.real(out).data()[0]
}

/// Checks every real coordinate (and both parts of every complex one)
/// of every leaf. Returns the worst relative error.
fn check(leaves: Vec<Leaf>, f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars = put(&mut tape, &leaves);
    let out = f(&mut tape, &vars).unwrap();
    let grads = tape.backward(out).unwrap();
    let mut worst: f64 = 0.0;
    for (li, leaf) in leaves.iter().enumerate() {
        match leaf {
            Leaf::R(m) => {
                let g = grads.real(vars[li]).unwrap().clone();
                for k in 0..m.len() {
                    let shifted = |d: f64| {
                        let mut ls = leaves.clone();
                        if let Leaf::R(x) = &mut ls[li] {
                            x.data_mut()[k] += d;
                        }
                        eval(&ls, f)
                    };
                    let fd = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
                    worst = worst.max(rel_err(g.data()[k], fd, 1e-3));
                }
            }
            Leaf::C(m) => {
                let g = grads.complex(vars[li]).unwrap().clone();
                for k in 0..m.len() {
                    for (part, unit) in [(0, Complex64::new(1.0, 0.0)), (1, Complex64::new(0.0, 1.0))] {
                        let shifted = |d: f64| {
                            let mut ls = leaves.clone();
                            if let Leaf::C(x) = &mut ls[li] {
                                x.data_mut()[k] += unit * d;
                            }
                            eval(&ls, f)
                        };
                        let fd = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
                        let tape_g = if part == 0 { g.data()[k].re } else { g.data()[k].im };
                        worst = worst.max(rel_err(tape_g, fd, 1e-3));
                    }
                }
            }
        }
    }
    worst
}

/// Fixed random weights that turn a matrix into a scalar without
/// introducing symmetries a plain sum would hide.
fn weighted_sum(tape: &mut Tape, x: Var, w: &RealMat) -> Result<Var> {
    let (r, c) = tape.real(x).shape();
    let left = tape.constant(RealMat::new(1, r, w.data()[..r].to_vec())?);
    let right = tape.constant(RealMat::new(c, 1, w.data()[w.len() - c..].to_vec())?);
    let zero = tape.constant(RealMat::zeros(1, 1));
    let row = tape.affine(left, x, zero)?;
    tape.affine(row, right, zero)
}

fn weights(seed: u64) -> RealMat {
    real(&mut rng(seed), 1, 64)
}

#[test]
fn relu_gradient() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let w = weights(100 + seed);
        let x = real_off_kink(&mut r, 3, 5);
        let e = check(vec![Leaf::R(x)], &|t, v| {
            let y = t.relu(v[0])?;
            weighted_sum(t, y, &w)
        });
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn affine_gradient_all_operands() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let w = weights(200 + seed);
        let leaves = vec![
            Leaf::R(real(&mut r, 3, 4)),
            Leaf::R(real(&mut r, 4, 6)),
            Leaf::R(real(&mut r, 3, 1)),
        ];
        let e = check(leaves, &|t, v| {
            let y = t.affine(v[0], v[1], v[2])?;
            weighted_sum(t, y, &w)
        });
        assert!(e < 1e-7, "seed {seed}: {e}");
    }
}

#[test]
fn mean_cols_and_concat_gradient() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let w = weights(300 + seed);
        let leaves = vec![Leaf::R(real(&mut r, 2, 5)), Leaf::R(real(&mut r, 3, 5))];
        let e = check(leaves, &|t, v| {
            let m = t.mean_cols(v[0])?;
            let y = t.concat_rows(&[m, v[1], v[0]])?;
            weighted_sum(t, y, &w)
        });
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn sum_parts_and_scale_gradient() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let w = weights(400 + seed);
        let leaves = vec![
            Leaf::R(real(&mut r, 2, 3)),
            Leaf::R(real(&mut r, 2, 3)),
            Leaf::R(real(&mut r, 2, 3)),
        ];
        let e = check(leaves, &|t, v| {
            let s = t.sum_parts(&[v[0], v[1], v[2], v[0]])?;
            let y = t.scale(s, 0.37)?;
            weighted_sum(t, y, &w)
        });
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn scalar_ops_gradient() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let a = RealMat::filled(1, 1, 0.5 + r.random_range(0.0..2.0));
        let b = RealMat::filled(1, 1, r.random_range(-2.0..2.0));
        let e = check(vec![Leaf::R(a), Leaf::R(b)], &|t, v| {
            let p = t.scalar_mul(v[0], v[1])?;
            let l = t.ln(v[0])?;
            let s = t.scalar_add(p, l)?;
            let x = t.sum(s)?;
            t.scalar_mul(x, v[0])
        });
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn unit_phase_gradient() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let w = weights(500 + seed);
        let b = complex(&mut r, 4, 3);
        let psi = uniform_phases(&mut r, 4);
        let e = check(vec![Leaf::R(psi)], &|t, v| {
            let phi = t.unit_phase(v[0])?;
            let bc = t.complex_constant(b.clone());
            let z = t.cmatmul(phi, bc)?;
            let y = t.real_part(z)?;
            weighted_sum(t, y, &w)
        });
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn cmatmul_gradient_real_and_imaginary_parts() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let w = weights(600 + seed);
        let leaves = vec![Leaf::C(complex(&mut r, 3, 4)), Leaf::C(complex(&mut r, 4, 2))];
        let rot = complex(&mut r, 2, 2);
        let e = check(leaves, &|t, v| {
            let p = t.cmatmul(v[0], v[1])?;
            let rc = t.complex_constant(rot.clone());
            let q = t.cmatmul(p, rc)?;
            let y = t.real_part(q)?;
            weighted_sum(t, y, &w)
        });
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn scale_cols_and_cadd_gradient() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let w = weights(700 + seed);
        let leaves = vec![
            Leaf::C(complex(&mut r, 3, 5)),
            Leaf::C(complex(&mut r, 1, 5)),
            Leaf::C(complex(&mut r, 3, 2)),
        ];
        let b = complex(&mut r, 5, 2);
        let e = check(leaves, &|t, v| {
            let s = t.scale_cols(v[0], v[1])?;
            let bc = t.complex_constant(b.clone());
            let p = t.cmatmul(s, bc)?;
            let q = t.cadd(p, v[2])?;
            let y = t.real_part(q)?;
            weighted_sum(t, y, &w)
        });
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn wsr_gradient() {
    for seed in 0..5 {
        let mut r = rng(seed);
        for (u, rho) in [(1, 10.0), (2, 100.0), (3, 5.0)] {
            let alpha: Vec<f64> = {
                let raw: Vec<f64> = (0..u).map(|_| r.random_range(0.1..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|a| a / s).collect()
            };
            let c = complex(&mut r, u, u);
            let e = check(vec![Leaf::C(c)], &|t, v| t.wsr(v[0], &alpha, rho));
            assert!(e < TOL, "seed {seed} U={u}: {e}");
        }
    }
}

#[test]
fn end_to_end_pv_gradient() {
    for seed in 0..3 {
        let (ok, total) = end_to_end_pass_rate(Variant::Pv, seed, 4, 6);
        assert!(ok as f64 >= 0.99 * total as f64, "seed {seed}: {ok}/{total}");
    }
}

#[test]
fn end_to_end_pi_gradient() {
    for seed in 0..3 {
        let (ok, total) = end_to_end_pass_rate(Variant::Pi, seed, 4, 6);
        assert!(ok as f64 >= 0.99 * total as f64, "seed {seed}: {ok}/{total}");
    }
}

#[test]
fn backward_is_bitwise_repeatable() {
    let mut r = rng(9);
    let (h, samples) = prepared(&mut r, 2, 4, 2, 1);
    let sc = scenario(2, 4, 2);
    let params = init_params(&RisnetConfig {
        arch: Architecture {
            variant: Variant::Pi,
            layers: 3,
            n_users: 2,
            branch_dim: 4,
        },
        init_seed: 1,
    })
    .unwrap();
    let v = complex(&mut r, 2, 2);
    let (a, ga) = objective_and_gradient(&params, &samples[0], &h, &v, &sc).unwrap();
    let (b, gb) = objective_and_gradient(&params, &samples[0], &h, &v, &sc).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(ga, gb);
}

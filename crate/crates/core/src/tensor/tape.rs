//! Reverse-mode tape over [`RealMat`] and [`ComplexMat`] values.
//!
//! The op set is closed: exactly what the RISNet forward passes and the
//! weighted sum-rate objective need. Complex adjoints follow the convention
//! `z̄ = ∂L/∂Re z + j·∂L/∂Im z` for a real loss `L`, so a holomorphic map
//! `w = f(z)` pulls back as `z̄ = conj(f'(z))·w̄`.

use std::f64::consts::LN_2;

use num_complex::Complex64;

use super::{ComplexMat, RealMat};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(RealMat),
    Complex(ComplexMat),
}

impl Value {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Value::Real(m) => m.shape(),
            Value::Complex(m) => m.shape(),
        }
    }

    pub fn as_real(&self) -> Option<&RealMat> {
        match self {
            Value::Real(m) => Some(m),
            Value::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&ComplexMat> {
        match self {
            Value::Complex(m) => Some(m),
            Value::Real(_) => None,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Relu(Var),
    Affine { w: Var, x: Var, b: Var },
    MeanCols(Var),
    ConcatRows(Vec<Var>),
    SumParts(Vec<Var>),
    Scale(Var, f64),
    Sum(Var),
    ScalarAdd(Var, Var),
    ScalarMul(Var, Var),
    Ln(Var),
    UnitPhase(Var),
    ScaleCols { a: Var, phi: Var },
    CMatMul(Var, Var),
    CAdd(Var, Var),
    RealPart(Var),
    Wsr { c: Var, alpha: Vec<f64>, rho: f64 },
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    trainable: bool,
    needs_grad: bool,
}

/// Records primitive applications in execution order. Every node's operands
/// are created before it, so reverse insertion order is a valid
/// topological order for the backward sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    adjoints: Vec<Option<Value>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Value> {
        self.adjoints.get(v.0).and_then(|a| a.as_ref())
    }

    pub fn real(&self, v: Var) -> Option<&RealMat> {
        self.get(v).and_then(Value::as_real)
    }

    pub fn complex(&self, v: Var) -> Option<&ComplexMat> {
        self.get(v).and_then(Value::as_complex)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op, operands: &[Var]) -> Var {
        let needs_grad = operands.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            trainable: false,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Value, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            trainable,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant real input; no adjoint is tracked for it.
    pub fn constant(&mut self, m: RealMat) -> Var {
        self.leaf(Value::Real(m), false)
    }

    /// Trainable real leaf.
    pub fn param(&mut self, m: RealMat) -> Var {
        self.leaf(Value::Real(m), true)
    }

    pub fn complex_constant(&mut self, m: ComplexMat) -> Var {
        self.leaf(Value::Complex(m), false)
    }

    pub fn complex_param(&mut self, m: ComplexMat) -> Var {
        self.leaf(Value::Complex(m), true)
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    pub fn real(&self, v: Var) -> &RealMat {
        self.nodes[v.0].value.as_real().expect("tape node is not real-valued")
    }

    pub fn complex(&self, v: Var) -> &ComplexMat {
        self.nodes[v.0]
            .value
            .as_complex()
            .expect("tape node is not complex-valued")
    }

    fn real_operand(&self, op: &'static str, operand: &'static str, v: Var) -> Result<&RealMat> {
        self.nodes[v.0]
            .value
            .as_real()
            .ok_or_else(|| Error::dim(op, operand, "must be real-valued"))
    }

    fn complex_operand(&self, op: &'static str, operand: &'static str, v: Var) -> Result<&ComplexMat> {
        self.nodes[v.0]
            .value
            .as_complex()
            .ok_or_else(|| Error::dim(op, operand, "must be complex-valued"))
    }

    fn scalar_operand(&self, op: &'static str, operand: &'static str, v: Var) -> Result<f64> {
        let m = self.real_operand(op, operand, v)?;
        if m.shape() != (1, 1) {
            return Err(Error::dim(op, operand, format!("is {:?}, expected 1x1", m.shape())));
        }
        Ok(m.data()[0])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = self.real_operand("relu", "X", x)?;
        let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = RealMat::new(xv.rows(), xv.cols(), data)?;
        Ok(self.push(Value::Real(out), Op::Relu(x), &[x]))
    }

    /// `W·X` with the `p×1` bias `b` added to every column.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let wv = self.real_operand("affine", "W", w)?;
        let xv = self.real_operand("affine", "X", x)?;
        let bv = self.real_operand("affine", "b", b)?;
        let (p, q) = wv.shape();
        if xv.rows() != q {
            return Err(Error::dim(
                "affine",
                "X",
                format!("has {} rows, expected {q} (W is {p}x{q})", xv.rows()),
            ));
        }
        if bv.shape() != (p, 1) {
            return Err(Error::dim(
                "affine",
                "b",
                format!("is {:?}, expected ({p}, 1)", bv.shape()),
            ));
        }
        let n = xv.cols();
        let mut out = vec![0.0; p * n];
        for i in 0..p {
            let row = &mut out[i * n..(i + 1) * n];
            for k in 0..q {
                let wik = wv.get(i, k);
                for (o, &xk) in row.iter_mut().zip(xv.row(k)) {
                    *o += wik * xk;
                }
            }
            let bi = bv.data()[i];
            for o in row.iter_mut() {
                *o += bi;
            }
        }
        let out = RealMat::new(p, n, out)?;
        Ok(self.push(Value::Real(out), Op::Affine { w, x, b }, &[w, x, b]))
    }

    /// Replaces every column by the row-wise mean. Each row is summed in
    /// sorted order, so the result depends only on the multiset of entries
    /// and is bitwise invariant under column permutations.
    pub fn mean_cols(&mut self, x: Var) -> Result<Var> {
        let xv = self.real_operand("mean_cols", "X", x)?;
        let (p, n) = xv.shape();
        if n == 0 {
            return Err(Error::EmptyInput("mean_cols"));
        }
        let mut out = Vec::with_capacity(p * n);
        let mut scratch = Vec::with_capacity(n);
        for r in 0..p {
            scratch.clear();
            scratch.extend_from_slice(xv.row(r));
            let mean = order_free_sum(&mut scratch) / n as f64;
            out.extend(std::iter::repeat_n(mean, n));
        }
        let out = RealMat::new(p, n, out)?;
        Ok(self.push(Value::Real(out), Op::MeanCols(x), &[x]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_rows"));
        }
        let cols = self.real_operand("concat_rows", "parts", parts[0])?.cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.real_operand("concat_rows", "parts", p)?;
            if pv.cols() != cols {
                return Err(Error::dim(
                    "concat_rows",
                    "parts",
                    format!("has a part with {} columns, expected {cols}", pv.cols()),
                ));
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let out = RealMat::new(rows, cols, data)?;
        Ok(self.push(Value::Real(out), Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Elementwise sum of equally shaped parts. Entries are added in sorted
    /// order, so the result is bitwise invariant under reordering `parts`.
    pub fn sum_parts(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("sum_parts"));
        }
        let shape = self.real_operand("sum_parts", "parts", parts[0])?.shape();
        let mut views = Vec::with_capacity(parts.len());
        for &p in parts {
            let pv = self.real_operand("sum_parts", "parts", p)?;
            if pv.shape() != shape {
                return Err(Error::dim(
                    "sum_parts",
                    "parts",
                    format!("has a part of shape {:?}, expected {shape:?}", pv.shape()),
                ));
            }
            views.push(pv.data());
        }
        let mut scratch = Vec::with_capacity(parts.len());
        let data = (0..shape.0 * shape.1)
            .map(|i| {
                scratch.clear();
                scratch.extend(views.iter().map(|v| v[i]));
                order_free_sum(&mut scratch)
            })
            .collect();
        let out = RealMat::new(shape.0, shape.1, data)?;
        Ok(self.push(Value::Real(out), Op::SumParts(parts.to_vec()), parts))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let xv = self.real_operand("scale", "X", x)?;
        let data = xv.data().iter().map(|v| v * factor).collect();
        let out = RealMat::new(xv.rows(), xv.cols(), data)?;
        Ok(self.push(Value::Real(out), Op::Scale(x, factor), &[x]))
    }

    /// Sum of all entries as a 1×1 scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.real_operand("sum", "X", x)?.data().iter().sum();
        Ok(self.push(Value::Real(RealMat::filled(1, 1, s)), Op::Sum(x), &[x]))
    }

    pub fn scalar_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.scalar_operand("scalar_add", "a", a)? + self.scalar_operand("scalar_add", "b", b)?;
        Ok(self.push(Value::Real(RealMat::filled(1, 1, v)), Op::ScalarAdd(a, b), &[a, b]))
    }

    pub fn scalar_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.scalar_operand("scalar_mul", "a", a)? * self.scalar_operand("scalar_mul", "b", b)?;
        Ok(self.push(Value::Real(RealMat::filled(1, 1, v)), Op::ScalarMul(a, b), &[a, b]))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let x = self.scalar_operand("ln", "a", a)?;
        if x <= 0.0 {
            return Err(Error::Contract(format!("ln of non-positive value {x}")));
        }
        Ok(self.push(Value::Real(RealMat::filled(1, 1, x.ln())), Op::Ln(a), &[a]))
    }

    /// `e^{jψ}` entrywise.
    pub fn unit_phase(&mut self, psi: Var) -> Result<Var> {
        let pv = self.real_operand("unit_phase", "psi", psi)?;
        let out = unit_phase(pv);
        Ok(self.push(Value::Complex(out), Op::UnitPhase(psi), &[psi]))
    }

    /// `A·diag(φ)` for a `1×N` row `φ`.
    pub fn scale_cols(&mut self, a: Var, phi: Var) -> Result<Var> {
        let av = self.complex_operand("scale_cols", "A", a)?;
        let pv = self.complex_operand("scale_cols", "phi", phi)?;
        if pv.rows() != 1 {
            return Err(Error::dim(
                "scale_cols",
                "phi",
                format!("has {} rows, expected 1", pv.rows()),
            ));
        }
        let out = av.scale_cols(pv.data())?;
        Ok(self.push(Value::Complex(out), Op::ScaleCols { a, phi }, &[a, phi]))
    }

    pub fn cmatmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.complex_operand("cmatmul", "A", a)?;
        let bv = self.complex_operand("cmatmul", "B", b)?;
        let out = av.matmul(bv)?;
        Ok(self.push(Value::Complex(out), Op::CMatMul(a, b), &[a, b]))
    }

    pub fn cadd(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.complex_operand("cadd", "A", a)?;
        let bv = self.complex_operand("cadd", "B", b)?;
        let out = av.add(bv)?;
        Ok(self.push(Value::Complex(out), Op::CAdd(a, b), &[a, b]))
    }

    pub fn real_part(&mut self, z: Var) -> Result<Var> {
        let zv = self.complex_operand("real_part", "Z", z)?;
        let data = zv.data().iter().map(|c| c.re).collect();
        let out = RealMat::new(zv.rows(), zv.cols(), data)?;
        Ok(self.push(Value::Real(out), Op::RealPart(z), &[z]))
    }

    /// Weighted sum-rate of the composite `U×U` matrix `C` as a 1×1 scalar.
    pub fn wsr(&mut self, c: Var, alpha: &[f64], rho: f64) -> Result<Var> {
        let cv = self.complex_operand("wsr", "C", c)?;
        let v = wsr_value(cv, alpha, rho)?;
        let op = Op::Wsr {
            c,
            alpha: alpha.to_vec(),
            rho,
        };
        Ok(self.push(Value::Real(RealMat::filled(1, 1, v)), op, &[c]))
    }

    /// Propagates adjoints from the real scalar `loss` back to every node.
    /// Trainable leaves that the loss does not depend on receive zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        match &self.nodes.get(loss.0).map(|n| &n.value) {
            Some(Value::Real(m)) if m.shape() == (1, 1) => {}
            Some(v) => {
                return Err(Error::Contract(format!(
                    "backward needs a real 1x1 loss, got {} {:?}",
                    if v.as_real().is_some() { "real" } else { "complex" },
                    v.shape()
                )))
            }
            None => return Err(Error::Contract("loss is not on this tape".into())),
        }

        let mut adj: Vec<Option<Value>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Value::Real(RealMat::filled(1, 1, 1.0)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.pull_back(node, g, &mut adj);
        }

        for (node, a) in self.nodes.iter().zip(adj.iter_mut()) {
            if !node.trainable {
                if !matches!(node.op, Op::Leaf) {
                    *a = None;
                }
                continue;
            }
            if a.is_none() {
                let (r, c) = node.value.shape();
                *a = Some(match node.value {
                    Value::Real(_) => Value::Real(RealMat::zeros(r, c)),
                    Value::Complex(_) => Value::Complex(ComplexMat::zeros(r, c)),
                });
            }
        }
        Ok(Gradients { adjoints: adj })
    }

    fn accumulate(&self, adj: &mut [Option<Value>], v: Var, contrib: Value) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match (&mut adj[v.0], contrib) {
            (slot @ None, c) => *slot = Some(c),
            (Some(Value::Real(a)), Value::Real(c)) => a.add_assign(&c),
            (Some(Value::Complex(a)), Value::Complex(c)) => a.add_assign(&c),
            _ => unreachable!("adjoint kind mismatch"),
        }
    }

    fn pull_back(&self, node: &Node, g: Value, adj: &mut [Option<Value>]) {
        match (&node.op, g) {
            (Op::Relu(x), Value::Real(g)) => {
                let xv = self.real(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                let d = RealMat::new(g.rows(), g.cols(), data).unwrap();
                self.accumulate(adj, *x, Value::Real(d));
            }
            (Op::Affine { w, x, b }, Value::Real(g)) => {
                let wv = self.real(*w);
                let xv = self.real(*x);
                let (p, q) = wv.shape();
                let n = xv.cols();
                if self.nodes[w.0].needs_grad {
                    let mut dw = RealMat::zeros(p, q);
                    for i in 0..p {
                        let gi = g.row(i);
                        for k in 0..q {
                            let s: f64 = gi.iter().zip(xv.row(k)).map(|(a, b)| a * b).sum();
                            dw.set(i, k, s);
                        }
                    }
                    self.accumulate(adj, *w, Value::Real(dw));
                }
                if self.nodes[x.0].needs_grad {
                    let mut dx = RealMat::zeros(q, n);
                    for i in 0..p {
                        let gi = g.row(i);
                        for k in 0..q {
                            let wik = wv.get(i, k);
                            let row = &mut dx.data_mut()[k * n..(k + 1) * n];
                            for (d, gv) in row.iter_mut().zip(gi) {
                                *d += wik * gv;
                            }
                        }
                    }
                    self.accumulate(adj, *x, Value::Real(dx));
                }
                if self.nodes[b.0].needs_grad {
                    let db: Vec<f64> = (0..p).map(|i| g.row(i).iter().sum()).collect();
                    self.accumulate(adj, *b, Value::Real(RealMat::new(p, 1, db).unwrap()));
                }
            }
            (Op::MeanCols(x), Value::Real(g)) => {
                let (p, n) = g.shape();
                let mut data = Vec::with_capacity(p * n);
                for r in 0..p {
                    let spread = g.row(r).iter().sum::<f64>() / n as f64;
                    data.extend(std::iter::repeat_n(spread, n));
                }
                self.accumulate(adj, *x, Value::Real(RealMat::new(p, n, data).unwrap()));
            }
            (Op::ConcatRows(parts), Value::Real(g)) => {
                let mut start = 0;
                for &part in parts {
                    let rows = self.real(part).rows();
                    if self.nodes[part.0].needs_grad {
                        self.accumulate(adj, part, Value::Real(g.slice_rows(start, start + rows)));
                    }
                    start += rows;
                }
            }
            (Op::SumParts(parts), Value::Real(g)) => {
                for &part in parts {
                    self.accumulate(adj, part, Value::Real(g.clone()));
                }
            }
            (Op::Scale(x, f), Value::Real(mut g)) => {
                g.data_mut().iter_mut().for_each(|v| *v *= f);
                self.accumulate(adj, *x, Value::Real(g));
            }
            (Op::Sum(x), Value::Real(g)) => {
                let (r, c) = self.real(*x).shape();
                self.accumulate(adj, *x, Value::Real(RealMat::filled(r, c, g.data()[0])));
            }
            (Op::ScalarAdd(a, b), Value::Real(g)) => {
                self.accumulate(adj, *a, Value::Real(g.clone()));
                self.accumulate(adj, *b, Value::Real(g));
            }
            (Op::ScalarMul(a, b), Value::Real(g)) => {
                let (av, bv) = (self.real(*a).data()[0], self.real(*b).data()[0]);
                let gv = g.data()[0];
                self.accumulate(adj, *a, Value::Real(RealMat::filled(1, 1, gv * bv)));
                self.accumulate(adj, *b, Value::Real(RealMat::filled(1, 1, gv * av)));
            }
            (Op::Ln(a), Value::Real(g)) => {
                let av = self.real(*a).data()[0];
                self.accumulate(adj, *a, Value::Real(RealMat::filled(1, 1, g.data()[0] / av)));
            }
            (Op::UnitPhase(psi), Value::Complex(g)) => {
                let phi = node.value.as_complex().unwrap();
                let j = Complex64::new(0.0, 1.0);
                let data = g
                    .data()
                    .iter()
                    .zip(phi.data())
                    .map(|(gn, pn)| (gn.conj() * j * pn).re)
                    .collect();
                let d = RealMat::new(g.rows(), g.cols(), data).unwrap();
                self.accumulate(adj, *psi, Value::Real(d));
            }
            (Op::ScaleCols { a, phi }, Value::Complex(g)) => {
                let av = self.complex(*a);
                let pv = self.complex(*phi);
                if self.nodes[a.0].needs_grad {
                    let conj: Vec<Complex64> = pv.data().iter().map(|z| z.conj()).collect();
                    let da = g.scale_cols(&conj).unwrap();
                    self.accumulate(adj, *a, Value::Complex(da));
                }
                if self.nodes[phi.0].needs_grad {
                    let (rows, cols) = av.shape();
                    let mut dphi = ComplexMat::zeros(1, cols);
                    for r in 0..rows {
                        for (d, (gz, az)) in dphi.data_mut().iter_mut().zip(g.row(r).iter().zip(av.row(r))) {
                            *d += gz * az.conj();
                        }
                    }
                    self.accumulate(adj, *phi, Value::Complex(dphi));
                }
            }
            (Op::CMatMul(a, b), Value::Complex(g)) => {
                if self.nodes[a.0].needs_grad {
                    let da = g.matmul_unchecked(&self.complex(*b).adjoint());
                    self.accumulate(adj, *a, Value::Complex(da));
                }
                if self.nodes[b.0].needs_grad {
                    let db = self.complex(*a).adjoint().matmul_unchecked(&g);
                    self.accumulate(adj, *b, Value::Complex(db));
                }
            }
            (Op::CAdd(a, b), Value::Complex(g)) => {
                self.accumulate(adj, *a, Value::Complex(g.clone()));
                self.accumulate(adj, *b, Value::Complex(g));
            }
            (Op::RealPart(z), Value::Real(g)) => {
                self.accumulate(adj, *z, Value::Complex(ComplexMat::from_real(&g)));
            }
            (Op::Wsr { c, alpha, rho }, Value::Real(g)) => {
                let dc = wsr_adjoint(self.complex(*c), alpha, *rho, g.data()[0]);
                self.accumulate(adj, *c, Value::Complex(dc));
            }
            (op, _) => unreachable!("adjoint kind does not match op {op:?}"),
        }
    }
}

/// Sums values after sorting them, making the result a function of the
/// multiset alone.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

pub(crate) fn unit_phase(psi: &RealMat) -> ComplexMat {
    let data = psi
        .data()
        .iter()
        .map(|&p| {
            let (s, c) = p.sin_cos();
            Complex64::new(c, s)
        })
        .collect();
    ComplexMat::new(psi.rows(), psi.cols(), data).unwrap()
}

/// `Σ_u α_u log2(1 + |c_uu|² / (Σ_{v≠u} |c_uv|² + 1/ρ))`.
pub(crate) fn wsr_value(c: &ComplexMat, alpha: &[f64], rho: f64) -> Result<f64> {
    let u = c.rows();
    if c.cols() != u {
        return Err(Error::dim("wsr", "C", format!("is {:?}, expected square", c.shape())));
    }
    if alpha.len() != u {
        return Err(Error::dim(
            "wsr",
            "alpha",
            format!("has {} weights, expected {u}", alpha.len()),
        ));
    }
    let noise = 1.0 / rho;
    let mut total = 0.0;
    for (k, &a) in alpha.iter().enumerate() {
        let row = c.row(k);
        let signal = row[k].norm_sqr();
        let interference: f64 = row
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != k)
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            + noise;
        total += a * (1.0 + signal / interference).log2();
    }
    Ok(total)
}

fn wsr_adjoint(c: &ComplexMat, alpha: &[f64], rho: f64, seed: f64) -> ComplexMat {
    let u = c.rows();
    let noise = 1.0 / rho;
    let mut out = ComplexMat::zeros(u, u);
    for (k, &a) in alpha.iter().enumerate() {
        let row = c.row(k);
        let signal = row[k].norm_sqr();
        let interference: f64 = row
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != k)
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            + noise;
        let total = interference + signal;
        let scale = seed * a / LN_2;
        for (v, z) in row.iter().enumerate() {
            // ∂/∂|c_kv|² of log2(T) − log2(I)
            let dp = if v == k {
                scale / total
            } else {
                scale * (1.0 / total - 1.0 / interference)
            };
            out.set(k, v, z * (2.0 * dp));
        }
    }
    out
}

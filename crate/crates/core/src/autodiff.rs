//! Dense reverse-mode differentiation over 2-D `f64` arrays.
//!
//! Every value lives on a [`Tape`] as a node. [`Tape::grad`] walks the tape
//! backwards and emits the adjoint computation as ordinary primitives on the
//! same tape, so a gradient is itself differentiable and can be fed into a
//! second call to [`Tape::grad`] (gradient penalties, Hessian-vector
//! products).
//!
//! All tensors are matrices. Scalars are `1 x 1`, row vectors `1 x n`.
//! Broadcasting is explicit through [`Tape::broadcast`] and only expands
//! unit dimensions.
//!
//! A primitive that produces NaN or infinity poisons the tape: the value is
//! kept, and the next [`Tape::ensure_finite`] or [`Tape::grad`] reports the
//! first offending primitive.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Rows,
    Cols,
}

impl Dim {
    fn axis(self) -> Axis {
        match self {
            Dim::Rows => Axis(0),
            Dim::Cols => Axis(1),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// `op(a) · op(b)` with optional transposes.
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    /// `scale * x + shift`; only the scale enters the backward rule.
    Affine { x: Var, scale: f64 },
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    SoftmaxRows(Var),
    Sum(Var),
    /// Sum along one dimension, keeping it with size 1.
    SumAlong(Var),
    Broadcast(Var),
    Concat(Vec<Var>, Dim),
    Slice { x: Var, dim: Dim, start: usize, end: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::MatMul { .. } => "matmul",
            Op::Affine { .. } => "affine",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Sqrt(_) => "sqrt",
            Op::SoftmaxRows(_) => "softmax",
            Op::Sum(_) => "sum",
            Op::SumAlong(_) => "sum_along",
            Op::Broadcast(_) => "broadcast",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Affine { x, .. } | Op::Slice { x, .. } => vec![*x],
            Op::Tanh(x)
            | Op::Sigmoid(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Square(x)
            | Op::Sqrt(x)
            | Op::SoftmaxRows(x)
            | Op::Sum(x)
            | Op::SumAlong(x)
            | Op::Broadcast(x) => vec![*x],
            Op::Concat(xs, _) => xs.clone(),
        }
    }
}

struct Node {
    value: Rc<Array2<f64>>,
    op: Op,
    tracked: bool,
}

/// Append-only record of primitive applications. Confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    poisoned: Cell<Option<(usize, &'static str)>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn var(&self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    /// Copy of `x` cut off from gradient flow.
    pub fn detach(&self, x: Var) -> Var {
        let value = self.rc_value(x);
        let node = Node {
            value,
            op: Op::Leaf,
            tracked: false,
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var(nodes.len() - 1)
    }

    pub fn value(&self, x: Var) -> Array2<f64> {
        (*self.rc_value(x)).clone()
    }

    /// Runs `f` against the value without copying it.
    pub fn with_value<R>(&self, x: Var, f: impl FnOnce(ArrayView2<f64>) -> R) -> R {
        let value = self.rc_value(x);
        f(value.view())
    }

    pub fn scalar_value(&self, x: Var) -> f64 {
        self.with_value(x, |v| {
            assert_eq!(v.dim(), (1, 1), "not a scalar");
            v[[0, 0]]
        })
    }

    pub fn shape(&self, x: Var) -> (usize, usize) {
        self.nodes.borrow()[x.0].value.dim()
    }

    pub fn is_tracked(&self, x: Var) -> bool {
        self.nodes.borrow()[x.0].tracked
    }

    /// Fails if any primitive so far produced a non-finite value.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.poisoned.get() {
            Some((node, op)) => Err(Error::NonFinite { op, node }),
            None => Ok(()),
        }
    }

    fn rc_value(&self, x: Var) -> Rc<Array2<f64>> {
        Rc::clone(&self.nodes.borrow()[x.0].value)
    }

    fn push(&self, value: Array2<f64>, op: Op, tracked: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if self.poisoned.get().is_none() && !all_finite(&value) {
            self.poisoned.set(Some((id, op.name())));
        }
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var(id)
    }

    fn record(&self, value: Array2<f64>, op: Op) -> Var {
        let tracked = {
            let nodes = self.nodes.borrow();
            op.inputs().iter().any(|v| nodes[v.0].tracked)
        };
        self.push(value, op, tracked)
    }

    fn binary(&self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
        let (va, vb) = (self.rc_value(a), self.rc_value(b));
        assert_eq!(
            va.dim(),
            vb.dim(),
            "{name}: shape mismatch {:?} vs {:?}",
            va.dim(),
            vb.dim()
        );
        Zip::from(&*va).and(&*vb).map_collect(|&x, &y| f(x, y))
    }

    fn unary(&self, x: Var, f: impl Fn(f64) -> f64) -> Array2<f64> {
        self.rc_value(x).mapv(f)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let v = self.binary(a, b, "add", |x, y| x + y);
        self.record(v, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let v = self.binary(a, b, "sub", |x, y| x - y);
        self.record(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Var {
        let v = self.binary(a, b, "mul", |x, y| x * y);
        self.record(v, Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&self, a: Var, b: Var) -> Var {
        let v = self.binary(a, b, "div", |x, y| x / y);
        self.record(v, Op::Div(a, b))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) · op(b)` where `op` transposes when the flag is set.
    pub fn matmul_t(&self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let (va, vb) = (self.rc_value(a), self.rc_value(b));
        let la = if ta { va.t() } else { va.view() };
        let lb = if tb { vb.t() } else { vb.view() };
        assert_eq!(
            la.ncols(),
            lb.nrows(),
            "matmul: inner dimensions {:?} x {:?}",
            la.dim(),
            lb.dim()
        );
        let v = product(la, lb);
        self.record(v, Op::MatMul { a, b, ta, tb })
    }

    pub fn affine(&self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.unary(x, |e| scale * e + shift);
        self.record(v, Op::Affine { x, scale })
    }

    pub fn scale(&self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    pub fn neg(&self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    pub fn tanh(&self, x: Var) -> Var {
        let v = self.unary(x, f64::tanh);
        self.record(v, Op::Tanh(x))
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        let v = self.unary(x, sigmoid);
        self.record(v, Op::Sigmoid(x))
    }

    pub fn exp(&self, x: Var) -> Var {
        let v = self.unary(x, f64::exp);
        self.record(v, Op::Exp(x))
    }

    pub fn log(&self, x: Var) -> Var {
        let v = self.unary(x, f64::ln);
        self.record(v, Op::Log(x))
    }

    pub fn square(&self, x: Var) -> Var {
        let v = self.unary(x, |e| e * e);
        self.record(v, Op::Square(x))
    }

    pub fn sqrt(&self, x: Var) -> Var {
        let v = self.unary(x, f64::sqrt);
        self.record(v, Op::Sqrt(x))
    }

    /// Row-wise softmax.
    pub fn softmax(&self, x: Var) -> Var {
        let mut v = self.value(x);
        softmax_rows_in_place(&mut v);
        self.record(v, Op::SoftmaxRows(x))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self, x: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.with_value(x, |v| v.sum()));
        self.record(v, Op::Sum(x))
    }

    pub fn mean(&self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let total = self.sum(x);
        self.scale(total, 1.0 / (r * c) as f64)
    }

    /// Sums along `dim`, keeping it as a unit dimension.
    pub fn sum_along(&self, x: Var, dim: Dim) -> Var {
        let v = self.with_value(x, |v| v.sum_axis(dim.axis()).insert_axis(dim.axis()));
        self.record(v, Op::SumAlong(x))
    }

    /// Expands unit dimensions of `x` to `shape`.
    pub fn broadcast(&self, x: Var, shape: (usize, usize)) -> Var {
        let (r, c) = self.shape(x);
        if (r, c) == shape {
            return x;
        }
        assert!(
            (r == 1 || r == shape.0) && (c == 1 || c == shape.1),
            "broadcast: cannot expand {:?} to {shape:?}",
            (r, c)
        );
        let v = self.with_value(x, |v| {
            v.broadcast(shape).expect("checked above").to_owned()
        });
        self.record(v, Op::Broadcast(x))
    }

    pub fn concat(&self, xs: &[Var], dim: Dim) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let values: Vec<Rc<Array2<f64>>> = xs.iter().map(|&x| self.rc_value(x)).collect();
        let views: Vec<ArrayView2<f64>> = values.iter().map(|v| v.view()).collect();
        let v = concatenate(dim.axis(), &views).expect("concat: incompatible shapes");
        self.record(v, Op::Concat(xs.to_vec(), dim))
    }

    /// Entries `start..end` along `dim`.
    pub fn slice(&self, x: Var, dim: Dim, start: usize, end: usize) -> Var {
        let v = self.with_value(x, |v| match dim {
            Dim::Rows => v.slice(s![start..end, ..]).to_owned(),
            Dim::Cols => v.slice(s![.., start..end]).to_owned(),
        });
        self.record(v, Op::Slice { x, dim, start, end })
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// The returned variables are recorded on this tape and remain
    /// differentiable. A variable that `output` does not depend on gets a
    /// zero constant.
    pub fn grad(&self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        self.ensure_finite()?;
        let len = self.len();
        if output.0 >= len || wrt.iter().any(|w| w.0 >= len) {
            return Err(Error::NotOnTape);
        }
        assert_eq!(self.shape(output), (1, 1), "grad: output must be a scalar");

        let (relevant, is_target) = self.relevant(output, wrt);

        let mut adjoint: Vec<Option<Var>> = vec![None; output.0 + 1];
        if relevant[output.0] {
            adjoint[output.0] = Some(self.scalar(1.0));
        }
        for i in (0..=output.0).rev() {
            let Some(g) = adjoint[i] else { continue };
            let op = self.nodes.borrow()[i].op.clone();
            for (input, contribution) in self.backward(Var(i), &op, g, &relevant) {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    Some(acc) => self.add(acc, contribution),
                    None => contribution,
                });
            }
        }

        let grads = wrt
            .iter()
            .map(|&w| match adjoint.get(w.0).copied().flatten() {
                Some(g) if is_target[w.0] => g,
                _ => self.constant(Array2::zeros(self.shape(w))),
            })
            .collect();
        Ok(grads)
    }

    /// Marks nodes on a path from some `wrt` to `output`, and the `wrt`
    /// nodes themselves.
    fn relevant(&self, output: Var, wrt: &[Var]) -> (Vec<bool>, Vec<bool>) {
        let mut relevant = vec![false; output.0 + 1];
        let mut is_target = vec![false; output.0 + 1];
        for w in wrt {
            if w.0 <= output.0 {
                relevant[w.0] = true;
                is_target[w.0] = true;
            }
        }
        let nodes = self.nodes.borrow();
        for i in 0..=output.0 {
            if relevant[i] || !nodes[i].tracked {
                continue;
            }
            relevant[i] = nodes[i].op.inputs().iter().any(|v| relevant[v.0]);
        }
        (relevant, is_target)
    }

    /// Gradient values of the scalar `output` with respect to each of `wrt`,
    /// computed without recording anything. Cheaper than [`Tape::grad`] when
    /// no further differentiation is needed.
    pub fn grad_values(&self, output: Var, wrt: &[Var]) -> Result<Vec<Array2<f64>>> {
        self.ensure_finite()?;
        let len = self.len();
        if output.0 >= len || wrt.iter().any(|w| w.0 >= len) {
            return Err(Error::NotOnTape);
        }
        assert_eq!(self.shape(output), (1, 1), "grad: output must be a scalar");
        let (relevant, is_target) = self.relevant(output, wrt);
        let nodes = self.nodes.borrow();
        let value = |v: Var| &*nodes[v.0].value;

        let mut adjoint: Vec<Option<Array2<f64>>> = vec![None; output.0 + 1];
        if relevant[output.0] {
            adjoint[output.0] = Some(Array2::ones((1, 1)));
        }
        for i in (0..=output.0).rev() {
            let Some(g) = adjoint[i].take() else { continue };
            backward_values(&nodes[i].op, value(Var(i)), &g, &value, &relevant, &mut adjoint);
            if is_target[i] {
                adjoint[i] = Some(g);
            }
        }
        Ok(wrt
            .iter()
            .map(|&w| match adjoint.get(w.0) {
                Some(Some(g)) if is_target[w.0] => g.clone(),
                _ => Array2::zeros(self.shape(w)),
            })
            .collect())
    }

    /// Contributions of the adjoint `g` of node `out` to its inputs.
    fn backward(&self, out: Var, op: &Op, g: Var, relevant: &[bool]) -> Vec<(Var, Var)> {
        let want = |v: &Var| relevant[v.0];
        let mut res = Vec::new();
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(&a) {
                    res.push((a, g));
                }
                if want(&b) {
                    res.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(&a) {
                    res.push((a, g));
                }
                if want(&b) {
                    res.push((b, self.neg(g)));
                }
            }
            Op::Mul(a, b) => {
                if want(&a) {
                    res.push((a, self.mul(g, b)));
                }
                if want(&b) {
                    res.push((b, self.mul(g, a)));
                }
            }
            Op::Div(a, b) => {
                if want(&a) {
                    res.push((a, self.div(g, b)));
                }
                if want(&b) {
                    // d(a/b)/db = -(a/b)/b
                    let t = self.div(self.mul(g, out), b);
                    res.push((b, self.neg(t)));
                }
            }
            Op::MatMul { a, b, ta, tb } => {
                if want(&a) {
                    let ga = if ta {
                        self.matmul_t(b, g, tb, true)
                    } else {
                        self.matmul_t(g, b, false, !tb)
                    };
                    res.push((a, ga));
                }
                if want(&b) {
                    let gb = if tb {
                        self.matmul_t(g, a, true, ta)
                    } else {
                        self.matmul_t(a, g, !ta, false)
                    };
                    res.push((b, gb));
                }
            }
            Op::Affine { x, scale, .. } => {
                if want(&x) {
                    res.push((x, self.scale(g, scale)));
                }
            }
            Op::Tanh(x) => {
                if want(&x) {
                    let d = self.affine(self.square(out), -1.0, 1.0);
                    res.push((x, self.mul(g, d)));
                }
            }
            Op::Sigmoid(x) => {
                if want(&x) {
                    let d = self.mul(out, self.affine(out, -1.0, 1.0));
                    res.push((x, self.mul(g, d)));
                }
            }
            Op::Exp(x) => {
                if want(&x) {
                    res.push((x, self.mul(g, out)));
                }
            }
            Op::Log(x) => {
                if want(&x) {
                    res.push((x, self.div(g, x)));
                }
            }
            Op::Square(x) => {
                if want(&x) {
                    res.push((x, self.mul(g, self.scale(x, 2.0))));
                }
            }
            Op::Sqrt(x) => {
                if want(&x) {
                    res.push((x, self.div(g, self.scale(out, 2.0))));
                }
            }
            Op::SoftmaxRows(x) => {
                if want(&x) {
                    // y ⊙ (g − rowsum(g ⊙ y))
                    let shape = self.shape(out);
                    let inner = self.sum_along(self.mul(g, out), Dim::Cols);
                    let centered = self.sub(g, self.broadcast(inner, shape));
                    res.push((x, self.mul(out, centered)));
                }
            }
            Op::Sum(x) => {
                if want(&x) {
                    res.push((x, self.broadcast(g, self.shape(x))));
                }
            }
            Op::SumAlong(x) => {
                if want(&x) {
                    res.push((x, self.broadcast(g, self.shape(x))));
                }
            }
            Op::Broadcast(x) => {
                if want(&x) {
                    let (r, c) = self.shape(x);
                    let (gr, gc) = self.shape(g);
                    let mut acc = g;
                    if r == 1 && gr != 1 {
                        acc = self.sum_along(acc, Dim::Rows);
                    }
                    if c == 1 && gc != 1 {
                        acc = self.sum_along(acc, Dim::Cols);
                    }
                    res.push((x, acc));
                }
            }
            Op::Concat(ref xs, dim) => {
                let mut offset = 0;
                for &x in xs {
                    let (r, c) = self.shape(x);
                    let extent = if dim == Dim::Rows { r } else { c };
                    if want(&x) {
                        res.push((x, self.slice(g, dim, offset, offset + extent)));
                    }
                    offset += extent;
                }
            }
            Op::Slice { x, dim, start, end } => {
                if want(&x) {
                    let (r, c) = self.shape(x);
                    let extent = if dim == Dim::Rows { r } else { c };
                    let pad = |k| if dim == Dim::Rows { (k, c) } else { (r, k) };
                    let mut parts = Vec::with_capacity(3);
                    if start > 0 {
                        parts.push(self.constant(Array2::zeros(pad(start))));
                    }
                    parts.push(g);
                    if end < extent {
                        parts.push(self.constant(Array2::zeros(pad(extent - end))));
                    }
                    let gx = if parts.len() == 1 {
                        g
                    } else {
                        self.concat(&parts, dim)
                    };
                    res.push((x, gx));
                }
            }
        }
        res
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, contribution: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &contribution,
        None => *slot = Some(contribution),
    }
}

/// Adds `contribution` into the `dim` range `start..end` of a zero-initialized
/// adjoint of shape `shape`.
fn accumulate_slice(
    slot: &mut Option<Array2<f64>>,
    shape: (usize, usize),
    dim: Dim,
    start: usize,
    end: usize,
    contribution: ArrayView2<f64>,
) {
    let acc = slot.get_or_insert_with(|| Array2::zeros(shape));
    let mut target = match dim {
        Dim::Rows => acc.slice_mut(s![start..end, ..]),
        Dim::Cols => acc.slice_mut(s![.., start..end]),
    };
    target += &contribution;
}

/// Numeric counterpart of [`Tape::backward`].
fn backward_values<'a>(
    op: &Op,
    out: &Array2<f64>,
    g: &Array2<f64>,
    value: &impl Fn(Var) -> &'a Array2<f64>,
    relevant: &[bool],
    adjoint: &mut [Option<Array2<f64>>],
) {
    let want = |v: Var| relevant[v.0];
    let zip2 = |a: &Array2<f64>, b: &Array2<f64>, f: fn(f64, f64) -> f64| Zip::from(a).and(b).map_collect(|&x, &y| f(x, y));
    match *op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if want(a) {
                accumulate(&mut adjoint[a.0], g.clone());
            }
            if want(b) {
                accumulate(&mut adjoint[b.0], g.clone());
            }
        }
        Op::Sub(a, b) => {
            if want(a) {
                accumulate(&mut adjoint[a.0], g.clone());
            }
            if want(b) {
                accumulate(&mut adjoint[b.0], -g);
            }
        }
        Op::Mul(a, b) => {
            if want(a) {
                accumulate(&mut adjoint[a.0], g * value(b));
            }
            if want(b) {
                accumulate(&mut adjoint[b.0], g * value(a));
            }
        }
        Op::Div(a, b) => {
            if want(a) {
                accumulate(&mut adjoint[a.0], g / value(b));
            }
            if want(b) {
                let t = Zip::from(g).and(out).and(value(b)).map_collect(|&g, &o, &b| -g * o / b);
                accumulate(&mut adjoint[b.0], t);
            }
        }
        Op::MatMul { a, b, ta, tb } => {
            let (va, vb) = (value(a), value(b));
            let view = |m: &'a Array2<f64>, t: bool| if t { m.t() } else { m.view() };
            if want(a) {
                let ga = if ta { product(view(vb, tb), g.t()) } else { product(g.view(), view(vb, !tb)) };
                accumulate(&mut adjoint[a.0], ga);
            }
            if want(b) {
                let gb = if tb { product(g.t(), view(va, ta)) } else { product(view(va, !ta), g.view()) };
                accumulate(&mut adjoint[b.0], gb);
            }
        }
        Op::Affine { x, scale } => {
            if want(x) {
                accumulate(&mut adjoint[x.0], g * scale);
            }
        }
        Op::Tanh(x) => {
            if want(x) {
                accumulate(&mut adjoint[x.0], zip2(g, out, |g, y| g * (1.0 - y * y)));
            }
        }
        Op::Sigmoid(x) => {
            if want(x) {
                accumulate(&mut adjoint[x.0], zip2(g, out, |g, y| g * y * (1.0 - y)));
            }
        }
        Op::Exp(x) => {
            if want(x) {
                accumulate(&mut adjoint[x.0], g * out);
            }
        }
        Op::Log(x) => {
            if want(x) {
                accumulate(&mut adjoint[x.0], g / value(x));
            }
        }
        Op::Square(x) => {
            if want(x) {
                accumulate(&mut adjoint[x.0], zip2(g, value(x), |g, x| 2.0 * g * x));
            }
        }
        Op::Sqrt(x) => {
            if want(x) {
                accumulate(&mut adjoint[x.0], zip2(g, out, |g, y| g / (2.0 * y)));
            }
        }
        Op::SoftmaxRows(x) => {
            if want(x) {
                let mut gx = Array2::zeros(out.dim());
                for ((mut row, gr), yr) in gx.rows_mut().into_iter().zip(g.rows()).zip(out.rows()) {
                    let inner: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    Zip::from(&mut row).and(gr).and(yr).for_each(|r, &g, &y| *r = y * (g - inner));
                }
                accumulate(&mut adjoint[x.0], gx);
            }
        }
        Op::Sum(x) | Op::SumAlong(x) => {
            if want(x) {
                let shape = value(x).dim();
                accumulate(&mut adjoint[x.0], g.broadcast(shape).expect("reduced shape").to_owned());
            }
        }
        Op::Broadcast(x) => {
            if want(x) {
                let (r, c) = value(x).dim();
                let mut acc = g.clone();
                if r == 1 && acc.nrows() != 1 {
                    acc = acc.sum_axis(Axis(0)).insert_axis(Axis(0));
                }
                if c == 1 && acc.ncols() != 1 {
                    acc = acc.sum_axis(Axis(1)).insert_axis(Axis(1));
                }
                accumulate(&mut adjoint[x.0], acc);
            }
        }
        Op::Concat(ref xs, dim) => {
            let mut offset = 0;
            for &x in xs {
                let (r, c) = value(x).dim();
                let extent = if dim == Dim::Rows { r } else { c };
                if want(x) {
                    let part = match dim {
                        Dim::Rows => g.slice(s![offset..offset + extent, ..]),
                        Dim::Cols => g.slice(s![.., offset..offset + extent]),
                    };
                    accumulate(&mut adjoint[x.0], part.to_owned());
                }
                offset += extent;
            }
        }
        Op::Slice { x, dim, start, end } => {
            if want(x) {
                accumulate_slice(&mut adjoint[x.0], value(x).dim(), dim, start, end, g.view());
            }
        }
    }
}

/// Matrix product that skips zero entries of a mostly-zero left operand,
/// which is the common case for one-hot walk encodings.
fn product(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    if a.len() < 256 || !mostly_zero(a) {
        return a.dot(&b);
    }
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    for (a_row, mut out_row) in a.rows().into_iter().zip(out.rows_mut()) {
        for (k, &x) in a_row.iter().enumerate() {
            if x != 0.0 {
                out_row.scaled_add(x, &b.row(k));
            }
        }
    }
    out
}

fn all_finite(a: &Array2<f64>) -> bool {
    let Some(xs) = a.as_slice_memory_order() else {
        return a.iter().all(|x| x.is_finite());
    };
    // `x * 0.0` is NaN exactly when `x` is not finite; independent lanes
    // let the loop vectorize.
    let mut lanes = [0.0f64; 8];
    let chunks = xs.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for (l, &x) in lanes.iter_mut().zip(c) {
            *l += x * 0.0;
        }
    }
    lanes.iter().sum::<f64>() + tail.iter().map(|&x| x * 0.0).sum::<f64>() == 0.0
}

fn mostly_zero(a: ArrayView2<f64>) -> bool {
    let limit = a.len() / 8;
    let mut nonzero = 0;
    for &x in a.iter() {
        if x != 0.0 {
            nonzero += 1;
            if nonzero > limit {
                return false;
            }
        }
    }
    true
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of each row.
pub fn softmax_rows_in_place(v: &mut Array2<f64>) {
    for mut row in v.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &e| m.max(e));
        row.mapv_inplace(|e| (e - max).exp());
        let total = row.sum();
        row.mapv_inplace(|e| e / total);
    }
}

/// `(‖∂output/∂input_i‖₂ − 1)²` averaged over the rows `i` of the inputs.
///
/// Each row of the inputs is one sample; when a sample spans several input
/// tensors (one per time step) their row gradients are concatenated before
/// taking the norm. A `1e-12` guard under the square root keeps the penalty
/// differentiable at a zero gradient.
pub fn gradient_penalty(tape: &Tape, output: Var, inputs: &[Var]) -> Result<Var> {
    gradient_penalty_with_metric(tape, output, inputs, None)
}

/// As [`gradient_penalty`], measuring each row gradient `g` by
/// `‖g‖² = g M gᵀ` for a symmetric positive semi-definite `metric` M.
pub fn gradient_penalty_with_metric(tape: &Tape, output: Var, inputs: &[Var], metric: Option<Var>) -> Result<Var> {
    let grads = tape.grad(output, inputs)?;
    let mut sq: Option<Var> = None;
    for g in grads {
        let weighted = match metric {
            Some(m) => tape.mul(tape.matmul(g, m), g),
            None => tape.square(g),
        };
        let row = tape.sum_along(weighted, Dim::Cols);
        sq = Some(match sq {
            Some(acc) => tape.add(acc, row),
            None => row,
        });
    }
    let sq = sq.ok_or_else(|| Error::InvalidArgument("gradient penalty without inputs".into()))?;
    let norm = tape.sqrt(tape.affine(sq, 1.0, 1e-12));
    let penalty = tape.mean(tape.square(tape.affine(norm, 1.0, -1.0)));
    tape.ensure_finite()?;
    Ok(penalty)
}

//! A small reverse-mode automatic differentiation tape over 2-D arrays.
//!
//! Every value on the tape is a matrix; vectors are `1 x n` rows. Operations
//! record their inputs so that [`Tape::backward`] can replay them in reverse.
//! Parameters live in a [`ParamStore`] borrowed by the tape, so building a
//! graph never copies weight matrices. Gradients of parameters read through
//! [`Tape::gather_rows`] (embedding lookups) are kept row-sparse.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

/// Floating point element type usable on the tape (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable matrices.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<F> {
    names: Vec<String>,
    values: Vec<Array2<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    /// Registers a parameter. Panics on a duplicate name, which is a programming error.
    pub fn add(&mut self, name: impl Into<String>, value: Array2<F>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn get(&self, id: ParamId) -> &Array2<F> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<F> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Array2<F>)> {
        self.values
            .iter()
            .zip(&self.names)
            .enumerate()
            .map(|(i, (v, n))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar entries.
    pub fn element_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Converts every matrix to another precision, keeping ids and names.
    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.mapv(|x| G::of(x.to_f64().unwrap_or(0.0))))
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Gradient of one parameter: dense, or a set of touched rows.
#[derive(Debug, Clone)]
pub enum ParamGrad<F> {
    Dense(Array2<F>),
    Rows { shape: (usize, usize), rows: BTreeMap<usize, Array1<F>> },
}

impl<F: Scalar> ParamGrad<F> {
    fn add_dense(slot: &mut Option<Self>, mut g: Array2<F>) {
        *slot = Some(match slot.take() {
            None => ParamGrad::Dense(g),
            Some(ParamGrad::Dense(mut d)) => {
                d += &g;
                ParamGrad::Dense(d)
            }
            Some(ParamGrad::Rows { rows, .. }) => {
                for (r, v) in rows {
                    let mut row = g.row_mut(r);
                    row += &v;
                }
                ParamGrad::Dense(g)
            }
        });
    }

    fn add_rows(slot: &mut Option<Self>, shape: (usize, usize), idx: &[usize], g: ArrayView2<F>) {
        if slot.is_none() {
            *slot = Some(ParamGrad::Rows { shape, rows: BTreeMap::new() });
        }
        match slot.as_mut().unwrap() {
            ParamGrad::Dense(d) => {
                for (k, &r) in idx.iter().enumerate() {
                    let mut row = d.row_mut(r);
                    row += &g.row(k);
                }
            }
            ParamGrad::Rows { rows, .. } => {
                for (k, &r) in idx.iter().enumerate() {
                    match rows.get_mut(&r) {
                        Some(v) => *v += &g.row(k),
                        None => {
                            rows.insert(r, g.row(k).to_owned());
                        }
                    }
                }
            }
        }
    }

    /// Adds this gradient into a dense buffer of the parameter's shape.
    pub fn add_to(&self, target: &mut Array2<F>) {
        match self {
            ParamGrad::Dense(d) => *target += d,
            ParamGrad::Rows { rows, .. } => {
                for (&r, v) in rows {
                    let mut row = target.row_mut(r);
                    row += v;
                }
            }
        }
    }

    /// Dense copy of the gradient.
    pub fn to_dense(&self) -> Array2<F> {
        match self {
            ParamGrad::Dense(d) => d.clone(),
            ParamGrad::Rows { shape, .. } => {
                let mut out = Array2::zeros(*shape);
                self.add_to(&mut out);
                out
            }
        }
    }

    /// Sum of squared entries.
    pub fn sq_norm(&self) -> F {
        match self {
            ParamGrad::Dense(d) => d.iter().map(|&x| x * x).sum(),
            ParamGrad::Rows { rows, .. } => rows.values().flat_map(|r| r.iter()).map(|&x| x * x).sum(),
        }
    }
}

/// Parameter gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    grads: Vec<Option<ParamGrad<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn empty(n_params: usize) -> Self {
        Self { grads: vec![None; n_params] }
    }

    pub fn get(&self, id: ParamId) -> Option<&ParamGrad<F>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Dense gradient, zeros when the parameter was not reached.
    pub fn dense(&self, id: ParamId, shape: (usize, usize)) -> Array2<F> {
        self.get(id).map(|g| g.to_dense()).unwrap_or_else(|| Array2::zeros(shape))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamGrad<F>)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    /// Accumulates `other` into `self`.
    pub fn merge(&mut self, other: Gradients<F>) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (slot, g) in self.grads.iter_mut().zip(other.grads) {
            match g {
                None => {}
                Some(ParamGrad::Dense(d)) => ParamGrad::add_dense(slot, d),
                Some(ParamGrad::Rows { shape, rows }) => {
                    for (r, v) in rows {
                        let view = v.view().insert_axis(ndarray::Axis(0));
                        ParamGrad::add_rows(slot, shape, &[r], view);
                    }
                }
            }
        }
    }

    /// Multiplies every gradient by `s`.
    pub fn scale(&mut self, s: F) {
        for g in self.grads.iter_mut().flatten() {
            match g {
                ParamGrad::Dense(d) => d.mapv_inplace(|x| x * s),
                ParamGrad::Rows { rows, .. } => rows.values_mut().for_each(|r| r.mapv_inplace(|x| x * s)),
            }
        }
    }

    /// Sum of squared entries over all parameters.
    pub fn sq_norm(&self) -> F {
        self.grads.iter().flatten().map(|g| g.sq_norm()).sum()
    }
}

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulConst(usize, Array2<F>),
    Scale(usize, F),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Elu(usize),
    LeakyRelu(usize, F),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize, usize),
    SliceRows(usize, usize, usize),
    GatherRows(usize, Vec<usize>),
    ScatterAddRows(usize, Vec<usize>),
    SelectRows(Vec<bool>, usize, usize),
    MaxRows(usize, Vec<usize>),
    LstmCell(usize, usize),
    HeadDot(usize, usize),
    HeadScale(usize, usize),
    SegmentSoftmax(usize, Vec<usize>),
    BceWithLogits(usize, Array2<F>),
    Sum(usize),
}

#[derive(Debug)]
enum Value<F> {
    Owned(Array2<F>),
    Param(ParamId),
}

#[derive(Debug)]
struct Node<F> {
    value: Value<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Records operations for one forward pass.
pub struct Tape<'p, F> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
    param_vars: Vec<Option<Var>>,
    record: bool,
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Numerically stable logistic function.
pub fn logistic<F: Scalar>(x: F) -> F {
    sigmoid(x)
}

impl<'p, F: Scalar> Tape<'p, F> {
    /// A tape that records operations for differentiation.
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Self::with_recording(params, true)
    }

    /// A tape that only evaluates (no backward pass possible).
    pub fn inference(params: &'p ParamStore<F>) -> Self {
        Self::with_recording(params, false)
    }

    fn with_recording(params: &'p ParamStore<F>, record: bool) -> Self {
        Self { params, nodes: Vec::new(), param_vars: vec![None; params.len()], record }
    }

    pub fn params(&self) -> &'p ParamStore<F> {
        self.params
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn value(&self, v: Var) -> &Array2<F> {
        match &self.nodes[v.0].value {
            Value::Owned(a) => a,
            Value::Param(p) => self.params.get(*p),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Scalar value of a `1 x 1` variable.
    pub fn scalar(&self, v: Var) -> F {
        self.value(v)[[0, 0]]
    }

    fn push(&mut self, value: Array2<F>, op: Op<F>, inputs: &[usize]) -> Var {
        let needs_grad = self.record && inputs.iter().any(|&i| self.nodes[i].needs_grad);
        let op = if needs_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value: Value::Owned(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant (never differentiated).
    pub fn constant(&mut self, value: Array2<F>) -> Var {
        self.nodes.push(Node { value: Value::Owned(value), op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Array2::zeros((rows, cols)))
    }

    /// The tape variable for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node { value: Value::Param(id), op: Op::Leaf, needs_grad: self.record });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a.0, b.0), &[a.0, b.0])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a single row");
        let out = self.value(a) + r;
        self.push(out, Op::AddRow(a.0, row.0), &[a.0, row.0])
    }

    /// Elementwise product with a constant mask (dropout, gating).
    pub fn mul_const(&mut self, a: Var, mask: Array2<F>) -> Var {
        let out = self.value(a) * &mask;
        self.push(out, Op::MulConst(a.0, mask), &[a.0])
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let out = self.value(a) * s;
        self.push(out, Op::Scale(a.0, s), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a.0), &[a.0])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.tanh());
        self.push(out, Op::Tanh(a.0), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| if x > F::zero() { x } else { F::zero() });
        self.push(out, Op::Relu(a.0), &[a.0])
    }

    /// Exponential linear unit with alpha = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| if x > F::zero() { x } else { x.exp_m1() });
        self.push(out, Op::Elu(a.0), &[a.0])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: F) -> Var {
        let out = self.value(a).mapv(|x| if x > F::zero() { x } else { x * slope });
        self.push(out, Op::LeakyRelu(a.0, slope), &[a.0])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(out, Op::ConcatCols(ids.clone()), &ids)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(0), &views).expect("concat_rows: column counts differ");
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(out, Op::ConcatRows(ids.clone()), &ids)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(out, Op::SliceCols(a.0, start, end), &[a.0])
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(out, Op::SliceRows(a.0, start, end), &[a.0])
    }

    /// Row `i` of the output is row `idx[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let out = self.value(a).select(Axis(0), idx);
        self.push(out, Op::GatherRows(a.0, idx.to_vec()), &[a.0])
    }

    /// Output has `n_out` rows; row `k` of `a` is added into output row `idx[k]`,
    /// in increasing `k`.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n_out: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), idx.len());
        let mut out = Array2::zeros((n_out, src.ncols()));
        for (k, &r) in idx.iter().enumerate() {
            let mut row = out.row_mut(r);
            row += &src.row(k);
        }
        self.push(out, Op::ScatterAddRows(a.0, idx.to_vec()), &[a.0])
    }

    /// Row `r` comes from `new` where `mask[r]`, otherwise from `old`.
    pub fn select_rows(&mut self, mask: &[bool], new: Var, old: Var) -> Var {
        let n = self.value(new);
        let o = self.value(old);
        assert_eq!(n.dim(), o.dim());
        let mut out = o.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(r).assign(&n.row(r));
            }
        }
        self.push(out, Op::SelectRows(mask.to_vec(), new.0, old.0), &[new.0, old.0])
    }

    /// Coordinatewise maximum over rows, as a `1 x n` row. Ties go to the first row.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        assert!(v.nrows() > 0, "max over zero rows");
        let mut best = vec![0usize; v.ncols()];
        let mut out = v.row(0).to_owned();
        for r in 1..v.nrows() {
            for c in 0..v.ncols() {
                if v[[r, c]] > out[c] {
                    out[c] = v[[r, c]];
                    best[c] = r;
                }
            }
        }
        let out = out.insert_axis(Axis(0));
        self.push(out, Op::MaxRows(a.0, best), &[a.0])
    }

    /// Fused LSTM cell. `gates` is `n x 4H` pre-activations in input, forget,
    /// cell, output order; `c_prev` is `n x H`. Returns `n x 2H` holding `[h, c]`.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Var {
        let g = self.value(gates);
        let c0 = self.value(c_prev);
        let (n, h4) = g.dim();
        let h = h4 / 4;
        assert_eq!(c0.dim(), (n, h));
        let mut out = Array2::zeros((n, 2 * h));
        for r in 0..n {
            for j in 0..h {
                let i = sigmoid(g[[r, j]]);
                let f = sigmoid(g[[r, h + j]]);
                let cand = g[[r, 2 * h + j]].tanh();
                let o = sigmoid(g[[r, 3 * h + j]]);
                let c = f * c0[[r, j]] + i * cand;
                out[[r, j]] = o * c.tanh();
                out[[r, h + j]] = c;
            }
        }
        self.push(out, Op::LstmCell(gates.0, c_prev.0), &[gates.0, c_prev.0])
    }

    /// Per-head dot product: `z` is `n x (K*d)`, `att` is `K x d`; output `n x K`
    /// with `out[r,k] = sum_t z[r, k*d+t] * att[k,t]`.
    pub fn head_dot(&mut self, z: Var, att: Var) -> Var {
        let zv = self.value(z);
        let av = self.value(att);
        let (heads, d) = av.dim();
        assert_eq!(zv.ncols(), heads * d);
        let mut out = Array2::zeros((zv.nrows(), heads));
        for r in 0..zv.nrows() {
            for k in 0..heads {
                let mut acc = F::zero();
                for t in 0..d {
                    acc += zv[[r, k * d + t]] * av[[k, t]];
                }
                out[[r, k]] = acc;
            }
        }
        self.push(out, Op::HeadDot(z.0, att.0), &[z.0, att.0])
    }

    /// Scales each head block of `m` (`n x (K*d)`) by the matching column of `w` (`n x K`).
    pub fn head_scale(&mut self, m: Var, w: Var) -> Var {
        let mv = self.value(m);
        let wv = self.value(w);
        let heads = wv.ncols();
        assert_eq!(mv.nrows(), wv.nrows());
        let d = mv.ncols() / heads;
        let mut out = mv.clone();
        for r in 0..mv.nrows() {
            for k in 0..heads {
                let scale = wv[[r, k]];
                for t in 0..d {
                    out[[r, k * d + t]] *= scale;
                }
            }
        }
        self.push(out, Op::HeadScale(m.0, w.0), &[m.0, w.0])
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    pub fn segment_softmax(&mut self, a: Var, segments: &[usize]) -> Var {
        let v = self.value(a);
        assert_eq!(v.nrows(), segments.len());
        let groups = group_rows(segments);
        let mut out = Array2::zeros(v.dim());
        for rows in groups.values() {
            for c in 0..v.ncols() {
                let m = rows.iter().map(|&r| v[[r, c]]).fold(F::neg_infinity(), F::max);
                let mut z = F::zero();
                for &r in rows {
                    let e = (v[[r, c]] - m).exp();
                    out[[r, c]] = e;
                    z += e;
                }
                for &r in rows {
                    out[[r, c]] /= z;
                }
            }
        }
        self.push(out, Op::SegmentSoftmax(a.0, segments.to_vec()), &[a.0])
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and `targets`, as `1 x 1`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Array2<F>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.dim(), targets.dim());
        let n = F::of(z.len() as f64);
        let mut total = F::zero();
        Zip::from(z).and(&targets).for_each(|&x, &t| {
            total += x.max(F::zero()) - x * t + (-x.abs()).exp().ln_1p();
        });
        let out = Array2::from_elem((1, 1), total / n);
        self.push(out, Op::BceWithLogits(logits.0, targets), &[logits.0])
    }

    /// Sum of all entries, as `1 x 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a.0), &[a.0])
    }

    /// Reverse pass from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Gradients<F> {
        assert!(self.record, "backward on an inference tape");
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut param_grads: Vec<Option<ParamGrad<F>>> = vec![None; self.params.len()];
        let mut grads: Vec<Option<Array2<F>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[output.0] = Some(Array2::from_elem((1, 1), F::one()));

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    if let Value::Param(p) = node.value {
                        ParamGrad::add_dense(&mut param_grads[p.0], g);
                    }
                }
                Op::MatMul(a, b) => {
                    if self.nodes[*a].needs_grad {
                        let ga = g.dot(&self.val(*b).t());
                        self.acc(&mut grads, *a, ga);
                    }
                    if self.nodes[*b].needs_grad {
                        let gb = self.val(*a).t().dot(&g);
                        self.acc(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    self.acc_ref(&mut grads, *a, &g);
                    self.acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    self.acc_ref(&mut grads, *a, &g);
                    self.acc(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    if self.nodes[*a].needs_grad {
                        let ga = &g * self.val(*b);
                        self.acc(&mut grads, *a, ga);
                    }
                    if self.nodes[*b].needs_grad {
                        let gb = &g * self.val(*a);
                        self.acc(&mut grads, *b, gb);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.nodes[*row].needs_grad {
                        let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        self.acc(&mut grads, *row, gr);
                    }
                    self.acc(&mut grads, *a, g);
                }
                Op::MulConst(a, mask) => self.acc(&mut grads, *a, &g * mask),
                Op::Scale(a, s) => self.acc(&mut grads, *a, g * *s),
                Op::Sigmoid(a) => {
                    let y = self.val(id);
                    let ga = Zip::from(&g).and(y).map_collect(|&d, &y| d * y * (F::one() - y));
                    self.acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = self.val(id);
                    let ga = Zip::from(&g).and(y).map_collect(|&d, &y| d * (F::one() - y * y));
                    self.acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let x = self.val(*a);
                    let ga = Zip::from(&g)
                        .and(x)
                        .map_collect(|&d, &x| if x > F::zero() { d } else { F::zero() });
                    self.acc(&mut grads, *a, ga);
                }
                Op::Elu(a) => {
                    let x = self.val(*a);
                    let y = self.val(id);
                    let ga = Zip::from(&g)
                        .and(x)
                        .and(y)
                        .map_collect(|&d, &x, &y| if x > F::zero() { d } else { d * (y + F::one()) });
                    self.acc(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let x = self.val(*a);
                    let ga = Zip::from(&g)
                        .and(x)
                        .map_collect(|&d, &x| if x > F::zero() { d } else { d * *slope });
                    self.acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.val(p).ncols();
                        if self.nodes[p].needs_grad {
                            let gp = g.slice(s![.., start..start + w]).to_owned();
                            self.acc(&mut grads, p, gp);
                        }
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.val(p).nrows();
                        if self.nodes[p].needs_grad {
                            let gp = g.slice(s![start..start + h, ..]).to_owned();
                            self.acc(&mut grads, p, gp);
                        }
                        start += h;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(self.val(*a).dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    self.acc(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start, end) => {
                    let mut ga = Array2::zeros(self.val(*a).dim());
                    ga.slice_mut(s![*start..*end, ..]).assign(&g);
                    self.acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let src = &self.nodes[*a];
                    if let (Op::Leaf, Value::Param(p)) = (&src.op, &src.value) {
                        let shape = self.params.get(*p).dim();
                        ParamGrad::add_rows(&mut param_grads[p.0], shape, idx, g.view());
                    } else {
                        let mut ga = Array2::zeros(self.val(*a).dim());
                        for (k, &r) in idx.iter().enumerate() {
                            let mut row = ga.row_mut(r);
                            row += &g.row(k);
                        }
                        self.acc(&mut grads, *a, ga);
                    }
                }
                Op::ScatterAddRows(a, idx) => {
                    let ga = g.select(Axis(0), idx);
                    self.acc(&mut grads, *a, ga);
                }
                Op::SelectRows(mask, new, old) => {
                    let mut gn = g.clone();
                    let mut go = g;
                    for (r, &m) in mask.iter().enumerate() {
                        if m {
                            go.row_mut(r).fill(F::zero());
                        } else {
                            gn.row_mut(r).fill(F::zero());
                        }
                    }
                    self.acc(&mut grads, *new, gn);
                    self.acc(&mut grads, *old, go);
                }
                Op::MaxRows(a, best) => {
                    let mut ga = Array2::zeros(self.val(*a).dim());
                    for (c, &r) in best.iter().enumerate() {
                        ga[[r, c]] += g[[0, c]];
                    }
                    self.acc(&mut grads, *a, ga);
                }
                Op::LstmCell(gates, c_prev) => {
                    let gv = self.val(*gates);
                    let c0 = self.val(*c_prev);
                    let out = self.val(id);
                    let (n, h2) = out.dim();
                    let h = h2 / 2;
                    let mut d_gates = Array2::zeros((n, 4 * h));
                    let mut d_c0 = Array2::zeros((n, h));
                    for r in 0..n {
                        for j in 0..h {
                            let i = sigmoid(gv[[r, j]]);
                            let f = sigmoid(gv[[r, h + j]]);
                            let cand = gv[[r, 2 * h + j]].tanh();
                            let o = sigmoid(gv[[r, 3 * h + j]]);
                            let c = out[[r, h + j]];
                            let tc = c.tanh();
                            let dh = g[[r, j]];
                            let dc = g[[r, h + j]] + dh * o * (F::one() - tc * tc);
                            d_gates[[r, j]] = dc * cand * i * (F::one() - i);
                            d_gates[[r, h + j]] = dc * c0[[r, j]] * f * (F::one() - f);
                            d_gates[[r, 2 * h + j]] = dc * i * (F::one() - cand * cand);
                            d_gates[[r, 3 * h + j]] = dh * tc * o * (F::one() - o);
                            d_c0[[r, j]] = dc * f;
                        }
                    }
                    self.acc(&mut grads, *gates, d_gates);
                    self.acc(&mut grads, *c_prev, d_c0);
                }
                Op::HeadDot(z, att) => {
                    let zv = self.val(*z);
                    let av = self.val(*att);
                    let (heads, d) = av.dim();
                    if self.nodes[*z].needs_grad {
                        let mut gz = Array2::zeros(zv.dim());
                        for r in 0..zv.nrows() {
                            for k in 0..heads {
                                let gk = g[[r, k]];
                                for t in 0..d {
                                    gz[[r, k * d + t]] = gk * av[[k, t]];
                                }
                            }
                        }
                        self.acc(&mut grads, *z, gz);
                    }
                    if self.nodes[*att].needs_grad {
                        let mut ga = Array2::zeros(av.dim());
                        for r in 0..zv.nrows() {
                            for k in 0..heads {
                                let gk = g[[r, k]];
                                for t in 0..d {
                                    ga[[k, t]] += gk * zv[[r, k * d + t]];
                                }
                            }
                        }
                        self.acc(&mut grads, *att, ga);
                    }
                }
                Op::HeadScale(m, w) => {
                    let mv = self.val(*m);
                    let wv = self.val(*w);
                    let heads = wv.ncols();
                    let d = mv.ncols() / heads;
                    if self.nodes[*m].needs_grad {
                        let mut gm = g.clone();
                        for r in 0..mv.nrows() {
                            for k in 0..heads {
                                for t in 0..d {
                                    gm[[r, k * d + t]] *= wv[[r, k]];
                                }
                            }
                        }
                        self.acc(&mut grads, *m, gm);
                    }
                    if self.nodes[*w].needs_grad {
                        let mut gw = Array2::zeros(wv.dim());
                        for r in 0..mv.nrows() {
                            for k in 0..heads {
                                let mut acc = F::zero();
                                for t in 0..d {
                                    acc += g[[r, k * d + t]] * mv[[r, k * d + t]];
                                }
                                gw[[r, k]] = acc;
                            }
                        }
                        self.acc(&mut grads, *w, gw);
                    }
                }
                Op::SegmentSoftmax(a, segments) => {
                    let y = self.val(id);
                    let mut ga = Array2::zeros(y.dim());
                    for rows in group_rows(segments).values() {
                        for c in 0..y.ncols() {
                            let dot: F = rows.iter().map(|&r| g[[r, c]] * y[[r, c]]).sum();
                            for &r in rows {
                                ga[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                            }
                        }
                    }
                    self.acc(&mut grads, *a, ga);
                }
                Op::BceWithLogits(a, targets) => {
                    let z = self.val(*a);
                    let scale = g[[0, 0]] / F::of(z.len() as f64);
                    let ga = Zip::from(z)
                        .and(targets)
                        .map_collect(|&x, &t| (sigmoid(x) - t) * scale);
                    self.acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.val(*a).dim(), g[[0, 0]]);
                    self.acc(&mut grads, *a, ga);
                }
            }
        }
        Gradients { grads: param_grads }
    }

    fn val(&self, id: usize) -> &Array2<F> {
        self.value(Var(id))
    }

    fn acc(&self, grads: &mut [Option<Array2<F>>], id: usize, g: Array2<F>) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn acc_ref(&self, grads: &mut [Option<Array2<F>>], id: usize, g: &Array2<F>) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(existing) => *existing += g,
            slot @ None => *slot = Some(g.clone()),
        }
    }
}

fn group_rows(segments: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (r, &s) in segments.iter().enumerate() {
        groups.entry(s).or_default().push(r);
    }
    groups
}

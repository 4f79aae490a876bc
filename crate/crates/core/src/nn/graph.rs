//! Eager reverse-mode tape over [`Tensor2D`] values.
//!
//! Every operation computes its value immediately and records how to push
//! gradients back to its inputs. Inference uses the same graph and simply
//! never calls [`Graph::backward`], so training and coding see bit-identical
//! forward values.

use std::rc::Rc;

use super::params::{ParamId, ParamStore};
use super::tensor::{axpy, dot, Scalar, Tensor2D};
use super::{det_exp, LN_2};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Sparse row-combination matrix: `out[r] = Σ_k weights[k] * x[cols[k]]` for
/// `k` in `offsets[r]..offsets[r+1]`.
///
/// Covers row selection, parent-to-child broadcast, masked means and
/// embedding bags.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    n_in: usize,
    offsets: Vec<u32>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

impl SparseRows {
    pub fn new(n_in: usize, offsets: Vec<u32>, cols: Vec<u32>, weights: Vec<f64>) -> Result<Self> {
        if offsets.first() != Some(&0)
            || *offsets.last().unwrap() as usize != cols.len()
            || cols.len() != weights.len()
            || offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Shape("malformed sparse row offsets".into()));
        }
        if let Some(&c) = cols.iter().find(|&&c| c as usize >= n_in) {
            return Err(Error::Index(format!("column {c} >= {n_in}")));
        }
        Ok(Self {
            n_in,
            offsets,
            cols,
            weights,
        })
    }

    /// Incremental builder; rows are appended in order.
    pub fn builder(n_in: usize) -> SparseRowsBuilder {
        SparseRowsBuilder {
            n_in,
            offsets: vec![0],
            cols: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// `out[r] = x[idx[r]]`.
    pub fn selection(n_in: usize, idx: &[u32]) -> Result<Self> {
        let offsets = (0..=idx.len() as u32).collect();
        Self::new(n_in, offsets, idx.to_vec(), vec![1.0; idx.len()])
    }

    /// Per-group mean over rows with `mask` set; empty groups give zero rows.
    pub fn masked_mean(group_of_row: &[u32], mask: &[bool], n_groups: usize) -> Result<Self> {
        if group_of_row.len() != mask.len() {
            return Err(Error::Shape("mask length differs from row count".into()));
        }
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); n_groups];
        for (r, (&g, &m)) in group_of_row.iter().zip(mask).enumerate() {
            if g as usize >= n_groups {
                return Err(Error::Index(format!("group {g} >= {n_groups}")));
            }
            if m {
                members[g as usize].push(r as u32);
            }
        }
        let mut b = Self::builder(group_of_row.len());
        for m in &members {
            let w = if m.is_empty() { 0.0 } else { 1.0 / m.len() as f64 };
            for &r in m {
                b.push(r, w);
            }
            b.finish_row();
        }
        Ok(b.build())
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[r] as usize, self.offsets[r + 1] as usize);
        self.cols[a..b]
            .iter()
            .zip(&self.weights[a..b])
            .map(|(&c, &w)| (c as usize, w))
    }
}

pub struct SparseRowsBuilder {
    n_in: usize,
    offsets: Vec<u32>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

impl SparseRowsBuilder {
    #[inline]
    pub fn push(&mut self, col: u32, weight: f64) {
        debug_assert!((col as usize) < self.n_in);
        self.cols.push(col);
        self.weights.push(weight);
    }

    #[inline]
    pub fn finish_row(&mut self) {
        self.offsets.push(self.cols.len() as u32);
    }

    pub fn build(self) -> SparseRows {
        SparseRows {
            n_in: self.n_in,
            offsets: self.offsets,
            cols: self.cols,
            weights: self.weights,
        }
    }
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Embedding { table: Var, ids: Vec<u32> },
    Aggregate { x: Var, rows: Rc<SparseRows> },
    Add(Var, Var),
    Relu(Var),
    Concat(Var, Var),
    Scale(Var, f64),
    SoftmaxCe { logits: Var, targets: Vec<u8>, probs: Tensor2D<T> },
    WeightedSum { x: Var, w: Tensor2D<T> },
}

struct Node<T> {
    value: Tensor2D<T>,
    op: Op<T>,
}

pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &str, msg: String) -> Error {
    Error::Shape(format!("{op}: {msg}"))
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor2D<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor2D<T> {
        &self.nodes[v.0].value
    }

    /// Input or constant.
    pub fn input(&mut self, t: Tensor2D<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Current value of a stored parameter; gradients flow back to it.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// `y = x Wᵀ + b` with `W: out×in`, `b: 1×out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.cols() {
            return Err(shape_err(
                "linear",
                format!("x is {:?}, W is {:?}", xv.shape(), wv.shape()),
            ));
        }
        let (n, out) = (xv.rows(), wv.rows());
        let bias = match b {
            Some(b) => {
                let bv = self.value(b);
                if bv.shape() != (1, out) {
                    return Err(shape_err("linear", format!("bias is {:?}, expected (1, {out})", bv.shape())));
                }
                Some(bv.data())
            }
            None => None,
        };
        let mut y = Tensor2D::zeros(n, out);
        for r in 0..n {
            let xr = xv.row(r);
            let yr = y.row_mut(r);
            for (o, yo) in yr.iter_mut().enumerate() {
                *yo = dot(xr, wv.row(o)) + bias.map_or(T::zero(), |b| b[o]);
            }
        }
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    /// Row gather from `table: K×C`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let tv = self.value(table);
        let k = tv.rows();
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= k) {
            return Err(Error::Index(format!("embedding id {bad} >= table size {k}")));
        }
        let c = tv.cols();
        let mut y = Tensor2D::zeros(ids.len(), c);
        for (r, &i) in ids.iter().enumerate() {
            y.row_mut(r).copy_from_slice(tv.row(i as usize));
        }
        Ok(self.push(
            y,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Sparse row combination (see [`SparseRows`]).
    pub fn aggregate(&mut self, x: Var, rows: Rc<SparseRows>) -> Result<Var> {
        let xv = self.value(x);
        if rows.n_in() != xv.rows() {
            return Err(shape_err(
                "aggregate",
                format!("matrix expects {} input rows, got {}", rows.n_in(), xv.rows()),
            ));
        }
        let mut y = Tensor2D::zeros(rows.n_rows(), xv.cols());
        for r in 0..rows.n_rows() {
            let yr = y.row_mut(r);
            for (c, w) in rows.row(r) {
                axpy(T::lift(w), xv.row(c), yr);
            }
        }
        Ok(self.push(y, Op::Aggregate { x, rows }))
    }

    /// `out[r] = x[idx[r]]`.
    pub fn select_rows(&mut self, x: Var, idx: &[u32]) -> Result<Var> {
        let n = self.value(x).rows();
        let rows = Rc::new(SparseRows::selection(n, idx)?);
        self.aggregate(x, rows)
    }

    /// Per-group mean over masked rows; an all-unmasked group yields zeros.
    pub fn masked_mean(&mut self, x: Var, group_of_row: &[u32], mask: &[bool], n_groups: usize) -> Result<Var> {
        let rows = Rc::new(SparseRows::masked_mean(group_of_row, mask, n_groups)?);
        self.aggregate(x, rows)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let mut y = av.clone();
        y.add_assign(bv);
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let y = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(y, Op::Relu(a))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(shape_err("concat", format!("{} vs {} rows", av.rows(), bv.rows())));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let mut y = Tensor2D::zeros(av.rows(), ca + cb);
        for r in 0..av.rows() {
            let yr = y.row_mut(r);
            yr[..ca].copy_from_slice(av.row(r));
            yr[ca..].copy_from_slice(bv.row(r));
        }
        Ok(self.push(y, Op::Concat(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let f = T::lift(s);
        let y = self.value(a).map(|v| v * f);
        self.push(y, Op::Scale(a, s))
    }

    /// Mean code length in bits of `targets` under row-wise softmax of
    /// `logits`. Returns a 1×1 node (zero for an empty batch).
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[u8]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != targets.len() {
            return Err(shape_err(
                "softmax_cross_entropy",
                format!("{} rows, {} targets", lv.rows(), targets.len()),
            ));
        }
        let k = lv.cols();
        if let Some(&t) = targets.iter().find(|&&t| t as usize >= k) {
            return Err(Error::Index(format!("target {t} >= {k} classes")));
        }
        let mut probs = Tensor2D::zeros(lv.rows(), k);
        let mut total = 0.0f64;
        let mut p = vec![0.0f64; k];
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row(r);
            let lse = softmax_into(row, &mut p);
            total += (lse - row[t as usize].as_f64()) / LN_2;
            for (dst, &src) in probs.row_mut(r).iter_mut().zip(&p) {
                *dst = T::lift(src);
            }
        }
        let mean = if targets.is_empty() {
            0.0
        } else {
            total / targets.len() as f64
        };
        let y = Tensor2D::from_vec(1, 1, vec![T::lift(mean)])?;
        Ok(self.push(
            y,
            Op::SoftmaxCe {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// `Σ x ⊙ w` as a 1×1 node.
    pub fn weighted_sum(&mut self, x: Var, w: Tensor2D<T>) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != w.shape() {
            return Err(shape_err("weighted_sum", format!("{:?} vs {:?}", xv.shape(), w.shape())));
        }
        let s = xv
            .data()
            .iter()
            .zip(w.data())
            .fold(0.0f64, |acc, (&a, &b)| acc + (a * b).as_f64());
        let y = Tensor2D::from_vec(1, 1, vec![T::lift(s)])?;
        Ok(self.push(y, Op::WeightedSum { x, w }))
    }

    /// Reverse pass from a 1×1 node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor2D<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2D::from_vec(1, 1, vec![T::one()])?);

        fn acc<T: Scalar>(grads: &mut [Option<Tensor2D<T>>], v: Var, rows: usize, cols: usize) -> &mut Tensor2D<T> {
            grads[v.0].get_or_insert_with(|| Tensor2D::zeros(rows, cols))
        }

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    {
                        let gx = acc(&mut grads, *x, xv.rows(), xv.cols());
                        for r in 0..g.rows() {
                            let gxr = gx.row_mut(r);
                            for (o, &go) in g.row(r).iter().enumerate() {
                                if go != T::zero() {
                                    axpy(go, wv.row(o), gxr);
                                }
                            }
                        }
                    }
                    {
                        let gw = acc(&mut grads, *w, wv.rows(), wv.cols());
                        for r in 0..g.rows() {
                            let xr = xv.row(r);
                            for (o, &go) in g.row(r).iter().enumerate() {
                                if go != T::zero() {
                                    axpy(go, xr, gw.row_mut(o));
                                }
                            }
                        }
                    }
                    if let Some(b) = b {
                        let gb = acc(&mut grads, *b, 1, wv.rows());
                        for r in 0..g.rows() {
                            axpy(T::one(), g.row(r), gb.row_mut(0));
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    let tv = self.value(*table);
                    let gt = acc(&mut grads, *table, tv.rows(), tv.cols());
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(T::one(), g.row(r), gt.row_mut(id as usize));
                    }
                }
                Op::Aggregate { x, rows } => {
                    let xv = self.value(*x);
                    let gx = acc(&mut grads, *x, xv.rows(), xv.cols());
                    for r in 0..rows.n_rows() {
                        let gr = g.row(r);
                        for (c, w) in rows.row(r) {
                            axpy(T::lift(w), gr, gx.row_mut(c));
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (r, c) = g.shape();
                    acc(&mut grads, *a, r, c).add_assign(&g);
                    acc(&mut grads, *b, r, c).add_assign(&g);
                }
                Op::Relu(a) => {
                    let av = self.value(*a);
                    let ga = acc(&mut grads, *a, av.rows(), av.cols());
                    for ((dst, &gv), &x) in ga.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        if x > T::zero() {
                            *dst += gv;
                        }
                    }
                }
                Op::Concat(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let n = g.rows();
                    {
                        let ga = acc(&mut grads, *a, n, ca);
                        for r in 0..n {
                            axpy(T::one(), &g.row(r)[..ca], ga.row_mut(r));
                        }
                    }
                    let gb = acc(&mut grads, *b, n, cb);
                    for r in 0..n {
                        axpy(T::one(), &g.row(r)[ca..], gb.row_mut(r));
                    }
                }
                Op::Scale(a, s) => {
                    let (r, c) = g.shape();
                    let s = T::lift(*s);
                    axpy(s, g.data(), acc(&mut grads, *a, r, c).data_mut());
                }
                Op::SoftmaxCe { logits, targets, probs } => {
                    if targets.is_empty() {
                        continue;
                    }
                    let upstream = g.get(0, 0);
                    let f = upstream / T::lift(targets.len() as f64 * LN_2);
                    let (r, c) = probs.shape();
                    let gl = acc(&mut grads, *logits, r, c);
                    for (row, &t) in targets.iter().enumerate() {
                        let pr = probs.row(row);
                        let gr = gl.row_mut(row);
                        for k in 0..c {
                            let ind = if k == t as usize { T::one() } else { T::zero() };
                            gr[k] += f * (pr[k] - ind);
                        }
                    }
                }
                Op::WeightedSum { x, w } => {
                    let upstream = g.get(0, 0);
                    let (r, c) = w.shape();
                    axpy(upstream, w.data(), acc(&mut grads, *x, r, c).data_mut());
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Adds this graph's parameter gradients into `store`.
    pub fn accumulate_param_grads(&self, grads: &Gradients<T>, store: &mut ParamStore<T>) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = &grads.grads[i] {
                    store.accumulate_grad(id, g)?;
                }
            }
        }
        store.mark_grads_ready();
        Ok(())
    }
}

/// Per-node gradients from one reverse pass.
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Tensor2D<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor2D<T>> {
        self.grads[v.0].as_ref()
    }
}

/// Row softmax in `f64` using the platform-independent exponential; writes
/// probabilities into `out` and returns the log-sum-exp.
pub fn softmax_into<T: Scalar>(logits: &[T], out: &mut [f64]) -> f64 {
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v.as_f64()));
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = det_exp(l.as_f64() - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    max + sum.ln()
}

//! Append-only reverse-mode tape.
//!
//! Every forward op evaluates eagerly, stores its value and records the op
//! and its inputs. Inputs always precede outputs, so a single reverse sweep
//! visits each node once.

use indexmap::IndexMap;

use super::params::ParamSet;
use super::Tensor;
use crate::error::{GpaError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Parameter name to tape handle, in `ParamSet` order.
pub type Bound = IndexMap<String, Var>;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Mul(Var, Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    RowSoftmax(Var),
    ConcatRows(Var, Var),
    GatherRows(Var, Vec<usize>),
    SelectColumn(Var, usize),
    Diag(Var),
    SegmentSum(Var, Vec<usize>),
    Cosine(Var, Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// `c = beta * c + a * b` for row-major `a: m x k`, `b: k x n`, with optional
/// transposition of either operand.
#[allow(clippy::too_many_arguments)]
/// Operands with `k * n` at or below this skip the packed kernel.
const SMALL_GEMM: usize = 256;

#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    if k * n <= SMALL_GEMM {
        // packing dominates for thin operands
        let (rsa, csa, rsb, csb) = (rsa as usize, csa as usize, rsb as usize, csb as usize);
        for i in 0..m {
            let row = &mut c[i * n..(i + 1) * n];
            if beta == 0.0 {
                row.fill(0.0);
            } else if beta != 1.0 {
                row.iter_mut().for_each(|x| *x *= beta);
            }
            for p in 0..k {
                let av = a[i * rsa + p * csa];
                for (j, x) in row.iter_mut().enumerate() {
                    *x += av * b[p * rsb + j * csb];
                }
            }
        }
        return;
    }
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(GpaError::Shape(msg))
}

fn row_norms(t: &Tensor) -> Vec<f64> {
    (0..t.rows())
        .map(|r| t.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect()
}

fn normalized_rows(t: &Tensor, norms: &[f64]) -> Vec<f64> {
    let c = t.cols();
    let mut out = t.data().to_vec();
    for (r, n) in norms.iter().enumerate() {
        out[r * c..(r + 1) * c].iter_mut().for_each(|x| *x /= n);
    }
    out
}

/// Gradient of `x_hat = x / |x|` pulled back to `x`, row by row.
fn normalize_backward(g_hat: &[f64], x_hat: &[f64], norms: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; g_hat.len()];
    for (r, n) in norms.iter().enumerate() {
        let g = &g_hat[r * cols..(r + 1) * cols];
        let h = &x_hat[r * cols..(r + 1) * cols];
        let dot: f64 = g.iter().zip(h).map(|(a, b)| a * b).sum();
        for ((o, gi), hi) in out[r * cols..(r + 1) * cols].iter_mut().zip(g).zip(h) {
            *o = (gi - dot * hi) / n;
        }
    }
    out
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that does not receive gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: t,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: t,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&mut self, params: &ParamSet) -> Bound {
        params
            .iter()
            .map(|(name, t)| (name.clone(), self.leaf(t.clone())))
            .collect()
    }

    /// Records every parameter as a constant; gradients will not reach them.
    pub fn bind_frozen(&mut self, params: &ParamSet) -> Bound {
        params
            .iter()
            .map(|(name, t)| (name.clone(), self.constant(t.clone())))
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return shape_err(format!("matmul {:?} x {:?}", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut out);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatMul(a, b), value, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return shape_err(format!("add {:?} + {:?}", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Add(a, b), value, &[a, b]))
    }

    /// Adds a row vector (`[m]` or `[1, m]`) to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tr.rows() != 1 || tr.cols() != tx.cols() {
            return shape_err(format!("add_row {:?} + {:?}", tx.shape(), tr.shape()));
        }
        let c = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + tr.data()[i % c])
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(Op::AddRow(x, row), value, &[x, row]))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(Op::AddScalar(x), value, &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(Op::Scale(x, c), value, &[x])
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return shape_err(format!("mul {:?} * {:?}", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Mul(a, b), value, &[a, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), value, &[x])
    }

    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::ln);
        self.push(Op::Log(x), value, &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        self.push(Op::Exp(x), value, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(Op::Sum(x), value, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return shape_err("mean of an empty tensor".into());
        }
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        Ok(self.push(Op::Mean(x), value, &[x]))
    }

    /// Sums each row: `[n, m] -> [n, 1]`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let sums = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let value = Tensor::matrix(t.rows(), 1, sums)?;
        Ok(self.push(Op::SumRows(x), value, &[x]))
    }

    /// Max-shifted softmax over each row.
    pub fn row_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let value = Tensor::new(t.shape().to_vec(), data).unwrap();
        self.push(Op::RowSoftmax(x), value, &[x])
    }

    /// Joins row `r` of `a` with row `r` of `b`: `[n, p] ++ [n, q] -> [n, p+q]`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return shape_err(format!("concat_rows {:?} ++ {:?}", ta.shape(), tb.shape()));
        }
        let (n, p, q) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let value = Tensor::matrix(n, p + q, data)?;
        Ok(self.push(Op::ConcatRows(a, b), value, &[a, b]))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (n, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= n {
                return shape_err(format!("gather row {i} of {n}"));
            }
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::matrix(index.len(), c, data)?;
        Ok(self.push(Op::GatherRows(x, index.to_vec()), value, &[x]))
    }

    /// Column `j` as an `[n, 1]` matrix.
    pub fn select_column(&mut self, x: Var, j: usize) -> Result<Var> {
        let t = self.value(x);
        if j >= t.cols() {
            return shape_err(format!("column {j} of {:?}", t.shape()));
        }
        let data = (0..t.rows()).map(|r| t.get(r, j)).collect();
        let value = Tensor::matrix(t.rows(), 1, data)?;
        Ok(self.push(Op::SelectColumn(x, j), value, &[x]))
    }

    /// Diagonal of a square matrix as `[n, 1]`.
    pub fn diag(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || t.rows() != t.cols() {
            return shape_err(format!("diag of {:?}", t.shape()));
        }
        let data = (0..t.rows()).map(|r| t.get(r, r)).collect();
        let value = Tensor::matrix(t.rows(), 1, data)?;
        Ok(self.push(Op::Diag(x), value, &[x]))
    }

    /// Sums rows that share a segment id: `out[s] = sum of x[r] with ids[r] == s`.
    pub fn segment_sum(&mut self, x: Var, ids: &[usize], num_segments: usize) -> Result<Var> {
        let t = self.value(x);
        if ids.len() != t.rows() {
            return shape_err(format!("{} segment ids for {} rows", ids.len(), t.rows()));
        }
        let c = t.cols();
        let mut data = vec![0.0; num_segments * c];
        for (r, &s) in ids.iter().enumerate() {
            if s >= num_segments {
                return shape_err(format!("segment id {s} >= {num_segments}"));
            }
            for (o, v) in data[s * c..(s + 1) * c].iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let value = Tensor::matrix(num_segments, c, data)?;
        Ok(self.push(Op::SegmentSum(x, ids.to_vec()), value, &[x]))
    }

    /// Pairwise cosine similarity between the rows of `a` and `b`:
    /// `[n, d], [m, d] -> [n, m]`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return shape_err(format!("cosine {:?} vs {:?}", ta.shape(), tb.shape()));
        }
        let (na, nb) = (row_norms(ta), row_norms(tb));
        if na.iter().chain(&nb).any(|&n| n == 0.0) {
            return Err(GpaError::ZeroNorm);
        }
        let (ha, hb) = (normalized_rows(ta, &na), normalized_rows(tb, &nb));
        let (n, m, d) = (ta.rows(), tb.rows(), ta.cols());
        let mut out = vec![0.0; n * m];
        gemm(n, d, m, &ha, false, &hb, true, 0.0, &mut out);
        let value = Tensor::matrix(n, m, out)?;
        Ok(self.push(Op::Cosine(a, b), value, &[a, b]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push(Op::Reshape(x), value, &[x]))
    }

    /// Smallest `|input|` over all relu nodes; finite-difference checks use it
    /// to stay clear of kinks.
    pub fn min_relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.value(x)),
                _ => None,
            })
            .flat_map(|t| t.data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Reverse sweep from a scalar `loss`; returns the gradient of every
    /// differentiable node that `loss` depends on.
    fn sweep(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(GpaError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let out = &node.value;
            let need = |v: Var| self.nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if need(*a) {
                        let mut ga = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), false, tb.data(), true, 0.0, &mut ga);
                        acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                    }
                    if need(*b) {
                        let mut gb = vec![0.0; k * n];
                        gemm(k, m, n, ta.data(), true, g.data(), false, 0.0, &mut gb);
                        acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
                    }
                }
                Op::Add(a, b) => {
                    if need(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if need(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::AddRow(x, row) => {
                    if need(*row) {
                        let tr = self.value(*row);
                        let c = tr.cols();
                        let mut gr = vec![0.0; c];
                        for (i, v) in g.data().iter().enumerate() {
                            gr[i % c] += v;
                        }
                        acc(&mut grads, *row, Tensor::new(tr.shape().to_vec(), gr)?);
                    }
                    if need(*x) {
                        acc(&mut grads, *x, g);
                    }
                }
                Op::AddScalar(x) | Op::Reshape(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    acc(&mut grads, *x, Tensor::new(shape, g.into_data())?);
                }
                Op::Scale(x, c) => acc(&mut grads, *x, g.map(|v| v * c)),
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if need(*a) {
                        let d = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), d)?);
                    }
                    if need(*b) {
                        let d = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), d)?);
                    }
                }
                Op::Relu(x) => {
                    let tx = self.value(*x);
                    let d = g
                        .data()
                        .iter()
                        .zip(tx.data())
                        .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), d)?);
                }
                Op::Log(x) => {
                    let tx = self.value(*x);
                    let d = g.data().iter().zip(tx.data()).map(|(gv, xv)| gv / xv).collect();
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), d)?);
                }
                Op::Exp(x) => {
                    let d = g.data().iter().zip(out.data()).map(|(gv, yv)| gv * yv).collect();
                    acc(&mut grads, *x, Tensor::new(out.shape().to_vec(), d)?);
                }
                Op::Sum(x) => {
                    let tx = self.value(*x);
                    acc(&mut grads, *x, Tensor::full(tx.shape(), g.item()));
                }
                Op::Mean(x) => {
                    let tx = self.value(*x);
                    acc(&mut grads, *x, Tensor::full(tx.shape(), g.item() / tx.len() as f64));
                }
                Op::SumRows(x) => {
                    let tx = self.value(*x);
                    let c = tx.cols();
                    let d = (0..tx.len()).map(|i| g.data()[i / c]).collect();
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), d)?);
                }
                Op::RowSoftmax(x) => {
                    let c = out.cols().max(1);
                    let mut d = vec![0.0; out.len()];
                    for ((dr, gr), yr) in d.chunks_mut(c).zip(g.data().chunks(c)).zip(out.data().chunks(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gv), yv) in dr.iter_mut().zip(gr).zip(yr) {
                            *o = yv * (gv - dot);
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(out.shape().to_vec(), d)?);
                }
                Op::ConcatRows(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (p, q) = (ta.cols(), tb.cols());
                    let mut ga = Vec::with_capacity(ta.len());
                    let mut gb = Vec::with_capacity(tb.len());
                    for row in g.data().chunks((p + q).max(1)) {
                        ga.extend_from_slice(&row[..p]);
                        gb.extend_from_slice(&row[p..]);
                    }
                    if need(*a) {
                        acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                    }
                    if need(*b) {
                        acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
                    }
                }
                Op::GatherRows(x, index) => {
                    let tx = self.value(*x);
                    let c = tx.cols();
                    let mut d = vec![0.0; tx.len()];
                    for (r, &src) in index.iter().enumerate() {
                        for (o, v) in d[src * c..(src + 1) * c].iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), d)?);
                }
                Op::SelectColumn(x, j) => {
                    let tx = self.value(*x);
                    let c = tx.cols();
                    let mut d = vec![0.0; tx.len()];
                    for (r, v) in g.data().iter().enumerate() {
                        d[r * c + j] = *v;
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), d)?);
                }
                Op::Diag(x) => {
                    let tx = self.value(*x);
                    let n = tx.rows();
                    let mut d = vec![0.0; tx.len()];
                    for (r, v) in g.data().iter().enumerate() {
                        d[r * n + r] = *v;
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), d)?);
                }
                Op::SegmentSum(x, ids) => {
                    let tx = self.value(*x);
                    let c = tx.cols();
                    let mut d = Vec::with_capacity(tx.len());
                    for &s in ids {
                        d.extend_from_slice(&g.data()[s * c..(s + 1) * c]);
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), d)?);
                }
                Op::Cosine(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (na, nb) = (row_norms(ta), row_norms(tb));
                    let (ha, hb) = (normalized_rows(ta, &na), normalized_rows(tb, &nb));
                    let (n, m, dim) = (ta.rows(), tb.rows(), ta.cols());
                    if need(*a) {
                        let mut g_ha = vec![0.0; n * dim];
                        gemm(n, m, dim, g.data(), false, &hb, false, 0.0, &mut g_ha);
                        let ga = normalize_backward(&g_ha, &ha, &na, dim);
                        acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                    }
                    if need(*b) {
                        let mut g_hb = vec![0.0; m * dim];
                        gemm(m, n, dim, g.data(), true, &ha, false, 0.0, &mut g_hb);
                        let gb = normalize_backward(&g_hb, &hb, &nb, dim);
                        acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Gradients of `loss` with respect to every bound parameter. Parameters
    /// the loss does not depend on get zero gradients. Consumes the tape.
    pub fn backward(self, loss: Var, bound: &Bound) -> Result<ParamSet> {
        let mut grads = self.sweep(loss)?;
        let mut out = ParamSet::new();
        for (name, v) in bound {
            let g = grads
                .get_mut(v.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(self.value(*v).shape()));
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    /// Gradient of `loss` with respect to a single leaf.
    pub fn grad_of(self, loss: Var, x: Var) -> Result<Tensor> {
        let mut grads = self.sweep(loss)?;
        Ok(grads
            .get_mut(x.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(self.value(x).shape())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![-1.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn cosine_orthonormal() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 0.0]));
        let b = t.constant(Tensor::vector(vec![0.0, 1.0]));
        let aa = t.cosine_similarity(a, a).unwrap();
        let ab = t.cosine_similarity(a, b).unwrap();
        assert_eq!(t.value(aa).item(), 1.0);
        assert_eq!(t.value(ab).item(), 0.0);
    }

    #[test]
    fn cosine_zero_norm() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![0.0, 0.0]));
        let b = t.constant(Tensor::vector(vec![0.0, 1.0]));
        assert!(matches!(t.cosine_similarity(a, b), Err(GpaError::ZeroNorm)));
    }

    #[test]
    fn segment_sum_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[vec![1., 2.], vec![3., 4.], vec![5., 6.]]).unwrap());
        let s = t.segment_sum(x, &[0, 0, 1], 2).unwrap();
        assert_eq!(t.value(s).data(), &[4., 6., 5., 6.]);
    }

    #[test]
    fn segment_sum_scatters_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![1., 2.], vec![3., 4.], vec![5., 6.]]).unwrap());
        let s = t.segment_sum(x, &[1, 0, 1], 2).unwrap();
        let w = t.constant(Tensor::from_rows(&[vec![10., 20.], vec![30., 40.]]).unwrap());
        let p = t.mul(s, w).unwrap();
        let l = t.sum(p);
        let g = t.grad_of(l, x).unwrap();
        assert_eq!(g.data(), &[30., 40., 10., 20., 30., 40.]);
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        assert_eq!(t.grad_of(y, x).unwrap().item(), 6.0);
    }

    #[test]
    fn relu_sum_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![-1.0, 2.0]));
        let r = t.relu(x);
        let s = t.sum(r);
        assert_eq!(t.grad_of(s, x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.grad_of(x, x), Err(GpaError::NonScalarLoss(_))));
    }

    #[test]
    fn shape_mismatch() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(t.matmul(a, b), Err(GpaError::Shape(_))));
        let c = t.constant(Tensor::zeros(&[3, 2]));
        assert!(t.add(a, c).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = t.add_scalar(x, 1000.0);
        let (a, b) = (t.row_softmax(x), t.row_softmax(y));
        for (p, q) in t.value(a).data().iter().zip(t.value(b).data()) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!((t.value(a).data().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matmul_values() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::from_rows(&[vec![1., 2.], vec![3., 4.]]).unwrap());
        let b = t.constant(Tensor::from_rows(&[vec![5.], vec![6.]]).unwrap());
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[17., 39.]);
    }

    #[test]
    fn empty_gather_then_segment_sum() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[1, 3]));
        let g = t.gather_rows(x, &[]).unwrap();
        let s = t.segment_sum(g, &[], 1).unwrap();
        assert_eq!(t.value(s).data(), &[0.0, 0.0, 0.0]);
    }
}

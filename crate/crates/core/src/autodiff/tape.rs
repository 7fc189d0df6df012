use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis, Zip};

use super::{shape, DiffError, Index, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gather map where `None` produces an all-zero row.
pub type RowIndex = Arc<Vec<Option<usize>>>;

type Result<T> = std::result::Result<T, DiffError>;

#[derive(Debug, Clone, Copy)]
enum Unary {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Softplus,
    Log,
    Exp,
    Sqrt,
    Square,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Index),
    GatherOrZero(Var, RowIndex),
    SegmentSum(Var, Index),
    SegmentSoftmax(Var, Index),
    Select(Arc<Vec<bool>>, Var, Var),
    Unary(Unary, Var),
    SumAll(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Array1<f64>,
        batch_stats: bool,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Linear record of a forward computation.
///
/// Values are immutable once pushed; [`Tape::backward`] only reads the
/// record, so calling it twice yields identical gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    non_finite: Option<(usize, &'static str)>,
}

/// Gradient buffer returned by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of the given shape when `v` did not
    /// influence the loss.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros((rows, cols)))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(DiffError::ShapeMismatch {
            op,
            lhs: shape(a),
            rhs: shape(b),
        });
    }
    Ok(())
}

fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `x * 0` is NaN exactly when `x` is NaN or infinite. Independent lane
/// accumulators keep the loop vectorized.
fn all_finite(t: &Tensor) -> bool {
    let Some(xs) = t.as_slice_memory_order() else {
        return t.iter().all(|x| x.is_finite());
    };
    let mut acc = [0.0f64; 8];
    let chunks = xs.chunks_exact(8);
    let tail = chunks.remainder().iter().fold(0.0, |a, &x| a + x * 0.0);
    for c in chunks {
        for (a, &x) in acc.iter_mut().zip(c) {
            *a += x * 0.0;
        }
    }
    !(acc.iter().sum::<f64>() + tail).is_nan()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 variable.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// First operation whose output contained NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.non_finite
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes.get(v.0).ok_or(DiffError::UnknownVar(v.0))
    }

    fn val(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.node(v)?.value)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &'static str) -> Var {
        if self.non_finite.is_none() && !all_finite(&value) {
            self.non_finite = Some((self.nodes.len(), name));
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true, "param")
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// `a · b`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.val(a)?, self.val(b)?);
        if x.ncols() != y.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: shape(x),
                rhs: shape(y),
            });
        }
        let out = x.dot(y);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), g, "matmul"))
    }

    /// `a · bᵀ`, i.e. a linear map with weight `b` stored as (out × in).
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.val(a)?, self.val(b)?);
        if x.ncols() != y.ncols() {
            return Err(DiffError::ShapeMismatch {
                op: "matmul_t",
                lhs: shape(x),
                rhs: shape(y),
            });
        }
        let out = x.dot(&y.t());
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::MatMulT(a, b), g, "matmul_t"))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.val(a)?, self.val(b)?);
        check_same("add", x, y)?;
        let out = x + y;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), g, "add"))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.val(a)?, self.val(b)?);
        check_same("sub", x, y)?;
        let out = x - y;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), g, "sub"))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.val(a)?, self.val(b)?);
        check_same("mul", x, y)?;
        let out = x * y;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), g, "mul"))
    }

    /// Adds the `1 × c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.val(a)?, self.val(b)?);
        if y.nrows() != 1 || y.ncols() != x.ncols() {
            return Err(DiffError::ShapeMismatch {
                op: "add_row",
                lhs: shape(x),
                rhs: shape(y),
            });
        }
        let out = x + y;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::AddRow(a, b), g, "add_row"))
    }

    /// Scales row `i` of `a` by `b[i, 0]`.
    pub fn mul_col(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.val(a)?, self.val(b)?);
        if y.ncols() != 1 || y.nrows() != x.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "mul_col",
                lhs: shape(x),
                rhs: shape(y),
            });
        }
        let out = x * y;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::MulCol(a, b), g, "mul_col"))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.val(a)? * k;
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::Scale(a, k), g, "scale"))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(DiffError::Empty("concat_cols"))?;
        let rows = self.val(*first)?.nrows();
        let mut cols = 0;
        for p in parts {
            let v = self.val(*p)?;
            if v.nrows() != rows {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: shape(self.val(*first)?),
                    rhs: shape(v),
                });
            }
            cols += v.ncols();
        }
        let mut out = Tensor::zeros((rows, cols));
        let mut at = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            out.slice_mut(s![.., at..at + v.ncols()]).assign(v);
            at += v.ncols();
        }
        let g = self.grad_of(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), g, "concat_cols"))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(DiffError::Empty("concat_rows"))?;
        let cols = self.val(*first)?.ncols();
        let mut rows = 0;
        for p in parts {
            let v = self.val(*p)?;
            if v.ncols() != cols {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: shape(self.val(*first)?),
                    rhs: shape(v),
                });
            }
            rows += v.nrows();
        }
        let mut out = Tensor::zeros((rows, cols));
        let mut at = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            out.slice_mut(s![at..at + v.nrows(), ..]).assign(v);
            at += v.nrows();
        }
        let g = self.grad_of(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), g, "concat_rows"))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.val(a)?;
        if start + len > x.ncols() {
            return Err(DiffError::IndexOutOfBounds {
                op: "slice_cols",
                index: start + len,
                len: x.ncols(),
            });
        }
        let out = x.slice(s![.., start..start + len]).to_owned();
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::SliceCols(a, start), g, "slice_cols"))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.val(a)?;
        if start + len > x.nrows() {
            return Err(DiffError::IndexOutOfBounds {
                op: "slice_rows",
                index: start + len,
                len: x.nrows(),
            });
        }
        let out = x.slice(s![start..start + len, ..]).to_owned();
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::SliceRows(a, start), g, "slice_rows"))
    }

    /// Row `i` of the output is row `index[i]` of `a`.
    pub fn gather(&mut self, a: Var, index: &Index) -> Result<Var> {
        let x = self.val(a)?;
        if let Some(&bad) = index.iter().find(|&&i| i >= x.nrows()) {
            return Err(DiffError::IndexOutOfBounds {
                op: "gather",
                index: bad,
                len: x.nrows(),
            });
        }
        let mut out = Tensor::zeros((index.len(), x.ncols()));
        for (mut row, &i) in out.outer_iter_mut().zip(index.iter()) {
            row.assign(&x.row(i));
        }
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::Gather(a, index.clone()), g, "gather"))
    }

    /// Like [`Tape::gather`] but `None` entries yield zero rows.
    pub fn gather_or_zero(&mut self, a: Var, index: &RowIndex) -> Result<Var> {
        let x = self.val(a)?;
        if let Some(bad) = index.iter().flatten().find(|&&i| i >= x.nrows()) {
            return Err(DiffError::IndexOutOfBounds {
                op: "gather_or_zero",
                index: *bad,
                len: x.nrows(),
            });
        }
        let mut out = Tensor::zeros((index.len(), x.ncols()));
        for (mut row, i) in out.outer_iter_mut().zip(index.iter()) {
            if let Some(i) = i {
                row.assign(&x.row(*i));
            }
        }
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::GatherOrZero(a, index.clone()), g, "gather_or_zero"))
    }

    /// Scatter-add: row `i` of `a` is added into output row `segment[i]`.
    pub fn segment_sum(&mut self, a: Var, segment: &Index, segments: usize) -> Result<Var> {
        let x = self.val(a)?;
        if segment.len() != x.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "segment_sum",
                lhs: shape(x),
                rhs: (segment.len(), 1),
            });
        }
        if let Some(&bad) = segment.iter().find(|&&i| i >= segments) {
            return Err(DiffError::IndexOutOfBounds {
                op: "segment_sum",
                index: bad,
                len: segments,
            });
        }
        let mut out = Tensor::zeros((segments, x.ncols()));
        for (row, &seg) in x.outer_iter().zip(segment.iter()) {
            let mut o = out.row_mut(seg);
            o += &row;
        }
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::SegmentSum(a, segment.clone()), g, "segment_sum"))
    }

    /// Softmax of an `E × 1` score column within each segment.
    pub fn segment_softmax(&mut self, a: Var, segment: &Index, segments: usize) -> Result<Var> {
        let x = self.val(a)?;
        if x.ncols() != 1 || segment.len() != x.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "segment_softmax",
                lhs: shape(x),
                rhs: (segment.len(), 1),
            });
        }
        if let Some(&bad) = segment.iter().find(|&&i| i >= segments) {
            return Err(DiffError::IndexOutOfBounds {
                op: "segment_softmax",
                index: bad,
                len: segments,
            });
        }
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (i, &seg) in segment.iter().enumerate() {
            max[seg] = max[seg].max(x[[i, 0]]);
        }
        let mut out = Tensor::zeros(x.dim());
        let mut total = vec![0.0; segments];
        for (i, &seg) in segment.iter().enumerate() {
            let e = (x[[i, 0]] - max[seg]).exp();
            out[[i, 0]] = e;
            total[seg] += e;
        }
        for (i, &seg) in segment.iter().enumerate() {
            out[[i, 0]] /= total[seg];
        }
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::SegmentSoftmax(a, segment.clone()), g, "segment_softmax"))
    }

    /// Row-wise choice: row `i` comes from `a` when `mask[i]`, else from `b`.
    pub fn select(&mut self, mask: &Arc<Vec<bool>>, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.val(a)?, self.val(b)?);
        check_same("select", x, y)?;
        if mask.len() != x.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "select",
                lhs: shape(x),
                rhs: (mask.len(), 1),
            });
        }
        let mut out = y.clone();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(i).assign(&x.row(i));
            }
        }
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Select(mask.clone(), a, b), g, "select"))
    }

    fn unary(&mut self, kind: Unary, a: Var, name: &'static str) -> Result<Var> {
        let x = self.val(a)?;
        let out = match kind {
            Unary::Relu => x.mapv(|v| v.max(0.0)),
            Unary::LeakyRelu(k) => x.mapv(|v| if v > 0.0 { v } else { k * v }),
            Unary::Sigmoid => x.mapv(sigmoid),
            Unary::Tanh => x.mapv(f64::tanh),
            Unary::Softplus => x.mapv(stable_softplus),
            Unary::Log => x.mapv(f64::ln),
            Unary::Exp => x.mapv(f64::exp),
            Unary::Sqrt => x.mapv(f64::sqrt),
            Unary::Square => x.mapv(|v| v * v),
        };
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::Unary(kind, a), g, name))
    }

    /// ReLU; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a, "relu")
    }

    /// Leaky ReLU; the subgradient at 0 is `slope`.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary(Unary::LeakyRelu(slope), a, "leaky_relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a, "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a, "tanh")
    }

    /// `ln(1 + eˣ)`, evaluated without overflow for large `|x|`.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Softplus, a, "softplus")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, a, "log")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a, "exp")
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sqrt, a, "sqrt")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Square, a, "square")
    }

    /// Sum of all entries as a 1x1 value.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::from_elem((1, 1), self.val(a)?.sum());
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::SumAll(a), g, "sum_all"))
    }

    /// Mean squared difference between `pred` and `target`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let n = self.val(pred)?.len();
        if n == 0 {
            return Err(DiffError::Empty("mse"));
        }
        let d = self.sub(pred, target)?;
        let sq = self.square(d)?;
        let s = self.sum_all(sq)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Batch normalization over rows with learnable affine `gamma`, `beta`
    /// (both `1 × c`).
    ///
    /// With `stats = None` the batch mean and biased variance are used and
    /// returned (for running-average updates). With `stats = Some((mean,
    /// var))` the given statistics are treated as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: Option<(&Tensor, &Tensor)>,
        eps: f64,
    ) -> Result<(Var, Tensor, Tensor)> {
        let xv = self.val(x)?;
        let (gv, bv) = (self.val(gamma)?, self.val(beta)?);
        let cols = xv.ncols();
        for p in [gv, bv] {
            if p.dim() != (1, cols) {
                return Err(DiffError::ShapeMismatch {
                    op: "batch_norm",
                    lhs: shape(xv),
                    rhs: shape(p),
                });
            }
        }
        let (mean, var, batch_stats) = match stats {
            Some((m, v)) => {
                if m.dim() != (1, cols) || v.dim() != (1, cols) {
                    return Err(DiffError::ShapeMismatch {
                        op: "batch_norm",
                        lhs: shape(xv),
                        rhs: shape(m),
                    });
                }
                (m.clone(), v.clone(), false)
            }
            None => {
                if xv.nrows() == 0 {
                    return Err(DiffError::Empty("batch_norm"));
                }
                let m = xv.mean_axis(Axis(0)).expect("nonempty").insert_axis(Axis(0));
                let centered = xv - &m;
                let v = (&centered * &centered)
                    .mean_axis(Axis(0))
                    .expect("nonempty")
                    .insert_axis(Axis(0));
                (m, v, true)
            }
        };
        let inv_std: Array1<f64> = var.row(0).mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = (xv - &mean) * &inv_std;
        let out = &xhat * gv + bv;
        let g = self.grad_of(&[x, gamma, beta]);
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            g,
            "batch_norm",
        );
        Ok((v, mean, var))
    }

    /// Hash of the sign pattern of every ReLU-family input on the tape.
    ///
    /// Two evaluations with different patterns straddle a kink, where
    /// finite differences are meaningless.
    pub fn kink_pattern(&self) -> (u64, bool) {
        let mut h = DefaultHasher::new();
        let mut at_zero = false;
        for node in &self.nodes {
            if let Op::Unary(Unary::Relu | Unary::LeakyRelu(_), a) = node.op {
                for &v in self.nodes[a.0].value.iter() {
                    let sign = if v > 0.0 {
                        1u8
                    } else if v < 0.0 {
                        2
                    } else {
                        at_zero = true;
                        0
                    };
                    sign.hash(&mut h);
                }
            }
        }
        (h.finish(), at_zero)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self.node(loss)?;
        if node.value.dim() != (1, 1) {
            return Err(DiffError::NonScalarLoss(shape(&node.value)));
        }
        let l = node.value[[0, 0]];
        if !l.is_finite() {
            return Err(DiffError::NonFiniteLoss(l));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.dot(&val(*b).t()));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, val(*a).t().dot(g));
                }
            }
            Op::MatMulT(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.dot(val(*b)));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.t().dot(val(*a)));
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, -g);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g * val(*b));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g * val(*a));
                }
            }
            Op::AddRow(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MulCol(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g * val(*b));
                }
                if self.wants(*b) {
                    let gb = (g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, k) => accumulate(grads, *a, g * *k),
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for p in parts {
                    let w = val(*p).ncols();
                    if self.wants(*p) {
                        accumulate(grads, *p, g.slice(s![.., at..at + w]).to_owned());
                    }
                    at += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut at = 0;
                for p in parts {
                    let h = val(*p).nrows();
                    if self.wants(*p) {
                        accumulate(grads, *p, g.slice(s![at..at + h, ..]).to_owned());
                    }
                    at += h;
                }
            }
            Op::SliceCols(a, start) => {
                let src = val(*a);
                let mut full = Tensor::zeros(src.dim());
                full.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                accumulate(grads, *a, full);
            }
            Op::SliceRows(a, start) => {
                let src = val(*a);
                let mut full = Tensor::zeros(src.dim());
                full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                accumulate(grads, *a, full);
            }
            Op::Gather(a, index) => {
                let mut full = Tensor::zeros(val(*a).dim());
                for (row, &j) in g.outer_iter().zip(index.iter()) {
                    let mut o = full.row_mut(j);
                    o += &row;
                }
                accumulate(grads, *a, full);
            }
            Op::GatherOrZero(a, index) => {
                let mut full = Tensor::zeros(val(*a).dim());
                for (row, j) in g.outer_iter().zip(index.iter()) {
                    if let Some(j) = j {
                        let mut o = full.row_mut(*j);
                        o += &row;
                    }
                }
                accumulate(grads, *a, full);
            }
            Op::SegmentSum(a, segment) => {
                let mut full = Tensor::zeros(val(*a).dim());
                for (mut row, &seg) in full.outer_iter_mut().zip(segment.iter()) {
                    row.assign(&g.row(seg));
                }
                accumulate(grads, *a, full);
            }
            Op::SegmentSoftmax(a, segment) => {
                let segments = segment.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; segments];
                for (k, &seg) in segment.iter().enumerate() {
                    dot[seg] += out[[k, 0]] * g[[k, 0]];
                }
                let mut full = Tensor::zeros(out.dim());
                for (k, &seg) in segment.iter().enumerate() {
                    full[[k, 0]] = out[[k, 0]] * (g[[k, 0]] - dot[seg]);
                }
                accumulate(grads, *a, full);
            }
            Op::Select(mask, a, b) => {
                let (mut ga, mut gb) = (g.clone(), g.clone());
                for (k, &m) in mask.iter().enumerate() {
                    if m {
                        gb.row_mut(k).fill(0.0);
                    } else {
                        ga.row_mut(k).fill(0.0);
                    }
                }
                if self.wants(*a) {
                    accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    accumulate(grads, *b, gb);
                }
            }
            Op::Unary(kind, a) => {
                let x = val(*a);
                let mut d = g.clone();
                match kind {
                    Unary::Relu => Zip::from(&mut d).and(x).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    }),
                    Unary::LeakyRelu(k) => Zip::from(&mut d).and(x).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d *= k
                        }
                    }),
                    Unary::Sigmoid => Zip::from(&mut d).and(out).for_each(|d, &y| *d *= y * (1.0 - y)),
                    Unary::Tanh => Zip::from(&mut d).and(out).for_each(|d, &y| *d *= 1.0 - y * y),
                    Unary::Softplus => Zip::from(&mut d).and(x).for_each(|d, &x| *d *= sigmoid(x)),
                    Unary::Log => Zip::from(&mut d).and(x).for_each(|d, &x| *d /= x),
                    Unary::Exp => Zip::from(&mut d).and(out).for_each(|d, &y| *d *= y),
                    Unary::Sqrt => Zip::from(&mut d).and(out).for_each(|d, &y| *d *= 0.5 / y),
                    Unary::Square => Zip::from(&mut d).and(x).for_each(|d, &x| *d *= 2.0 * x),
                }
                accumulate(grads, *a, d);
            }
            Op::SumAll(a) => {
                let src = val(*a);
                accumulate(grads, *a, Tensor::from_elem(src.dim(), g[[0, 0]]));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                if self.wants(*gamma) {
                    let gg = (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(grads, *gamma, gg);
                }
                if self.wants(*beta) {
                    accumulate(grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.wants(*x) {
                    let gamma_row = val(*gamma).row(0).to_owned();
                    let dxhat = g * &gamma_row;
                    let dx = if *batch_stats {
                        let n = dxhat.nrows() as f64;
                        let sum_d = dxhat.sum_axis(Axis(0));
                        let sum_dx = (&dxhat * xhat).sum_axis(Axis(0));
                        let mut dx = dxhat * n;
                        dx -= &sum_d;
                        dx -= &(xhat * &sum_dx);
                        dx * &(inv_std / n)
                    } else {
                        dxhat * inv_std
                    };
                    accumulate(grads, *x, dx);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

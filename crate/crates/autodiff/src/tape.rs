//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so insertion order is already a
//! topological order and [`Tape::backward`] only needs a single reverse sweep.

use crate::error::{shape_err, AutodiffError, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Floor on each vector norm in `cosine_similarity`.
pub const COSINE_EPS: f64 = 1e-8;
const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    Relu(Var),
    Tanh(Var),
    MaskedSoftmax(Var),
    MeanRows(Var),
    Sum(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Cosine(Var, Var),
    LogSumExp(Var),
    RowWeightedSum {
        w: Var,
        v: Var,
    },
    GradReverse {
        x: Var,
        lambda: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Key for the counter-based dropout generator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub step: u64,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
    param_of_node: Vec<Option<ParamId>>,
    dropout_key: DropoutKey,
}

/// Gradients produced by one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Option<Var>>,
}

impl Gradients {
    /// Gradient for an arbitrary node, zeros if the loss does not reach it.
    pub fn wrt(&self, var: Var) -> Tensor {
        self.nodes[var.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }

    /// Gradient for a parameter, or `None` if it never entered the tape.
    pub fn param(&self, id: ParamId) -> Option<Tensor> {
        let var = (*self.params.get(id.index())?)?;
        Some(self.wrt(var))
    }

    /// Dense per-parameter gradients aligned with `store`; parameters the loss
    /// does not reach get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        store
            .iter()
            .map(|(id, _, value)| {
                self.param(id)
                    .unwrap_or_else(|| Tensor::zeros(value.shape()))
            })
            .collect()
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) from (seed, step, node, element).
fn counter_uniform(key: DropoutKey, node: usize, elem: usize) -> f64 {
    let h = mix64(mix64(mix64(key.seed ^ mix64(key.step)) ^ node as u64) ^ elem as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dropout_key(key: DropoutKey) -> Self {
        Self {
            dropout_key: key,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value.item()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        self.param_of_node.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input. Gradients are still tracked so callers can inspect
    /// them, but nothing is updated.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push("leaf", value, Op::Leaf)
    }

    /// Bring a parameter onto the tape. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        if let Some(Some(var)) = self.params.get(id.index()) {
            return Ok(*var);
        }
        let var = self.push("param", store.get(id).clone(), Op::Param)?;
        if self.params.len() <= id.index() {
            self.params.resize(id.index() + 1, None);
        }
        self.params[id.index()] = Some(var);
        self.param_of_node[var.0] = Some(id);
        Ok(var)
    }

    pub fn param_of(&self, var: Var) -> Option<ParamId> {
        self.param_of_node[var.0]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push("add", value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push("sub", value, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push("mul", value, Op::Mul(a, b))
    }

    /// `x[n, d] + bias[1, d]` broadcast over rows. The only broadcast on offer.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let (n, d) = xv.dims2()?;
        if bv.shape() != [1, d] {
            return shape_err("add_bias", format!("{:?} + {:?}", xv.shape(), bv.shape()));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(d) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let value = Tensor::matrix(n, d, data)?;
        self.push("add_bias", value, Op::AddBias(x, bias))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("scale", value, Op::Scale(x, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (n, k) = x.dims2()?;
        let (k2, m) = y.dims2()?;
        if k != k2 {
            return shape_err("matmul", format!("{:?} x {:?}", x.shape(), y.shape()));
        }
        let value = Tensor::matrix(n, m, matmul_raw(x.data(), y.data(), n, k, m))?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.dims2()?;
        let value = Tensor::matrix(c, r, transpose_raw(xv.data(), r, c))?;
        self.push("transpose", value, Op::Transpose(x))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(x).clone().reshaped(vec![rows, cols])?;
        self.push("reshape", value, Op::Reshape(x))
    }

    /// Concatenate along columns; all parts share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat_cols", "no inputs");
        }
        let n = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != n {
                return shape_err("concat_cols", format!("row counts {n} vs {r}"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let value = Tensor::matrix(n, total, data)?;
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()))
    }

    /// Concatenate along rows; all parts share the column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat_rows", "no inputs");
        }
        let d = self.value(parts[0]).dims2()?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if c != d {
                return shape_err("concat_rows", format!("column counts {d} vs {c}"));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::matrix(rows, d, data)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = xv.dims2()?;
        if start + len > d || len == 0 {
            return shape_err("slice_cols", format!("[{start}, {}) of {d}", start + len));
        }
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            data.extend_from_slice(&xv.row_slice(i)[start..start + len]);
        }
        let value = Tensor::matrix(n, len, data)?;
        self.push("slice_cols", value, Op::SliceCols { x, start })
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = xv.dims2()?;
        if start + len > n || len == 0 {
            return shape_err("slice_rows", format!("[{start}, {}) of {n}", start + len));
        }
        let data = xv.data()[start * d..(start + len) * d].to_vec();
        let value = Tensor::matrix(len, d, data)?;
        self.push("slice_rows", value, Op::SliceRows { x, start })
    }

    /// Split columns into consecutive blocks of the given widths.
    pub fn split_cols(&mut self, x: Var, widths: &[usize]) -> Result<Vec<Var>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(widths.len());
        for &w in widths {
            out.push(self.slice_cols(x, start, w)?);
            start += w;
        }
        if start != self.value(x).cols() {
            return shape_err(
                "split_cols",
                format!("widths sum {start} != {}", self.value(x).cols()),
            );
        }
        Ok(out)
    }

    /// `out[k] = table[ids[k]]`; with a parameter table this is an embedding
    /// lookup.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (v, d) = tv.dims2()?;
        if ids.is_empty() {
            return shape_err("gather_rows", "empty index list");
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return shape_err("gather_rows", format!("index {id} out of {v} rows"));
            }
            data.extend_from_slice(tv.row_slice(id));
        }
        let value = Tensor::matrix(ids.len(), d, data)?;
        self.push(
            "gather_rows",
            value,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("relu", value, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.tanh()).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("tanh", value, Op::Tanh(x))
    }

    /// Row-wise softmax over entries where `mask` is true; masked entries are
    /// exactly zero. Every row needs at least one unmasked entry.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let xv = self.value(x);
        let (n, m) = xv.dims2()?;
        if mask.len() != n * m {
            return shape_err(
                "masked_softmax",
                format!("mask len {} for {n}x{m}", mask.len()),
            );
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = xv.row_slice(i);
            let mrow = &mask[i * m..(i + 1) * m];
            let max = row
                .iter()
                .zip(mrow)
                .filter(|(_, &k)| k)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(AutodiffError::AllMasked {
                    op: "masked_softmax",
                    row: i,
                });
            }
            let orow = &mut out[i * m..(i + 1) * m];
            let mut sum = 0.0;
            for j in 0..m {
                if mrow[j] {
                    orow[j] = (row[j] - max).exp();
                    sum += orow[j];
                }
            }
            for o in orow.iter_mut() {
                *o /= sum;
            }
        }
        let value = Tensor::matrix(n, m, out)?;
        self.push("masked_softmax", value, Op::MaskedSoftmax(x))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let mask = vec![true; self.value(x).numel()];
        self.masked_softmax(x, &mask)
    }

    /// Mean over rows: `[n, d] -> [1, d]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = xv.dims2()?;
        if n == 0 {
            return shape_err("mean_rows", "no rows");
        }
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(xv.row_slice(i)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        self.push("mean_rows", Tensor::row(out), Op::MeanRows(x))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` of shape `[1, d]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = xv.dims2()?;
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.shape() != [1, d] || b.shape() != [1, d] {
            return shape_err(
                "layer_norm",
                format!("x {:?}, gamma {:?}", xv.shape(), g.shape()),
            );
        }
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let row = xv.row_slice(i);
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let h = (row[j] - mu) * is;
                xhat[i * d + j] = h;
                out[i * d + j] = h * g.data()[j] + b.data()[j];
            }
        }
        let value = Tensor::matrix(n, d, out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Inverted dropout. Identity when `train` is false or `p` is zero. The
    /// mask is a pure function of the tape's [`DropoutKey`], the node id and
    /// the element index.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool) -> Result<Var> {
        if !train || p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return shape_err("dropout", format!("rate {p} must be < 1"));
        }
        let node = self.nodes.len();
        let key = self.dropout_key;
        let xv = self.value(x);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..xv.numel())
            .map(|e| {
                if counter_uniform(key, node, e) < p {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("dropout", value, Op::Dropout { x, mask })
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits[n, c]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (n, c) = lv.dims2()?;
        if targets.len() != n || n == 0 {
            return shape_err(
                "cross_entropy",
                format!("{} targets for {n} rows", targets.len()),
            );
        }
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        for i in 0..n {
            let t = targets[i];
            if t >= c {
                return shape_err("cross_entropy", format!("target {t} >= {c} classes"));
            }
            let row = lv.row_slice(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            loss += lse - row[t];
        }
        let value = Tensor::scalar(loss / n as f64);
        self.push(
            "cross_entropy",
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Cosine similarity of two same-shape tensors, as a scalar. Norms are
    /// floored at 1e-8, so a zero vector yields 0.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("cosine_similarity", x, y)?;
        let dot: f64 = x.data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
        let na = norm(x.data()).max(COSINE_EPS);
        let nb = norm(y.data()).max(COSINE_EPS);
        self.push(
            "cosine_similarity",
            Tensor::scalar(dot / (na * nb)),
            Op::Cosine(a, b),
        )
    }

    /// `ln Σ exp(x)` over every element, as a scalar.
    pub fn log_sum_exp(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.numel() == 0 {
            return shape_err("log_sum_exp", "empty input");
        }
        let max = xv.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + xv.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        self.push("log_sum_exp", Tensor::scalar(lse), Op::LogSumExp(x))
    }

    /// `out[i] = Σ_j w[i, j] · v[i·m + j]` for `w[n, m]` and `v[n·m, d]`.
    pub fn row_weighted_sum(&mut self, w: Var, v: Var) -> Result<Var> {
        let (wv, vv) = (self.value(w), self.value(v));
        let (n, m) = wv.dims2()?;
        let (nm, d) = vv.dims2()?;
        if nm != n * m {
            return shape_err(
                "row_weighted_sum",
                format!("weights {:?} values {:?}", wv.shape(), vv.shape()),
            );
        }
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let orow = &mut out[i * d..(i + 1) * d];
            for j in 0..m {
                let wij = wv.data()[i * m + j];
                if wij == 0.0 {
                    continue;
                }
                for (o, x) in orow.iter_mut().zip(vv.row_slice(i * m + j)) {
                    *o += wij * x;
                }
            }
        }
        let value = Tensor::matrix(n, d, out)?;
        self.push("row_weighted_sum", value, Op::RowWeightedSum { w, v })
    }

    /// Identity forward; multiplies the incoming gradient by `-lambda` on the
    /// way back.
    pub fn grad_reverse(&mut self, x: Var, lambda: f64) -> Result<Var> {
        let value = self.value(x).clone();
        self.push("grad_reverse", value, Op::GradReverse { x, lambda })
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backward_node(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(AutodiffError::NonFinite { op: "backward" });
            }
        }
        Ok(Gradients {
            nodes: grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
            params: self.params.clone(),
        })
    }

    fn backward_node(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        let mut acc = |var: Var, delta: Tensor| match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                let neg = gd.iter().map(|v| -v).collect();
                acc(*b, Tensor::new(g.shape().to_vec(), neg)?);
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let ga = gd.iter().zip(y.data()).map(|(p, q)| p * q).collect();
                let gb = gd.iter().zip(x.data()).map(|(p, q)| p * q).collect();
                acc(*a, Tensor::new(g.shape().to_vec(), ga)?);
                acc(*b, Tensor::new(g.shape().to_vec(), gb)?);
            }
            Op::AddBias(x, bias) => {
                acc(*x, g.clone());
                let (_, d) = g.dims2()?;
                let mut gb = vec![0.0; d];
                for row in gd.chunks(d) {
                    for (o, v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                acc(*bias, Tensor::row(gb));
            }
            Op::Scale(x, f) => {
                let gx = gd.iter().map(|v| v * f).collect();
                acc(*x, Tensor::new(g.shape().to_vec(), gx)?);
            }
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (n, k) = x.dims2()?;
                let (_, m) = y.dims2()?;
                // dA = G · Bᵀ, dB = Aᵀ · G
                let bt = transpose_raw(y.data(), k, m);
                acc(*a, Tensor::matrix(n, k, matmul_raw(gd, &bt, n, m, k))?);
                let at = transpose_raw(x.data(), n, k);
                acc(*b, Tensor::matrix(k, m, matmul_raw(&at, gd, k, n, m))?);
            }
            Op::Transpose(x) => {
                let (r, c) = g.dims2()?;
                acc(*x, Tensor::matrix(c, r, transpose_raw(gd, r, c))?);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                acc(*x, g.clone().reshaped(shape)?);
            }
            Op::ConcatCols(parts) => {
                let (n, total) = g.dims2()?;
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let mut data = Vec::with_capacity(n * w);
                    for i in 0..n {
                        data.extend_from_slice(&gd[i * total + offset..i * total + offset + w]);
                    }
                    acc(*p, Tensor::matrix(n, w, data)?);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let d = g.cols();
                let mut offset = 0;
                for p in parts {
                    let r = self.value(*p).rows();
                    acc(
                        *p,
                        Tensor::matrix(r, d, gd[offset * d..(offset + r) * d].to_vec())?,
                    );
                    offset += r;
                }
            }
            Op::SliceCols { x, start } => {
                let (n, d) = self.value(*x).dims2()?;
                let w = out.cols();
                let mut gx = vec![0.0; n * d];
                for i in 0..n {
                    gx[i * d + start..i * d + start + w].copy_from_slice(&gd[i * w..(i + 1) * w]);
                }
                acc(*x, Tensor::matrix(n, d, gx)?);
            }
            Op::SliceRows { x, start } => {
                let (n, d) = self.value(*x).dims2()?;
                let mut gx = vec![0.0; n * d];
                gx[start * d..start * d + gd.len()].copy_from_slice(gd);
                acc(*x, Tensor::matrix(n, d, gx)?);
            }
            Op::GatherRows { table, ids } => {
                let (v, d) = self.value(*table).dims2()?;
                let mut gt = vec![0.0; v * d];
                for (k, &row) in ids.iter().enumerate() {
                    for j in 0..d {
                        gt[row * d + j] += gd[k * d + j];
                    }
                }
                acc(*table, Tensor::matrix(v, d, gt)?);
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let gx = gd
                    .iter()
                    .zip(xv.data())
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                acc(*x, Tensor::new(g.shape().to_vec(), gx)?);
            }
            Op::Tanh(x) => {
                let gx = gd
                    .iter()
                    .zip(out.data())
                    .map(|(g, t)| g * (1.0 - t * t))
                    .collect();
                acc(*x, Tensor::new(g.shape().to_vec(), gx)?);
            }
            Op::MaskedSoftmax(x) => {
                // dx_j = y_j (g_j - Σ_k g_k y_k); masked y_j = 0 gives 0.
                let (n, m) = out.dims2()?;
                let mut gx = vec![0.0; n * m];
                for i in 0..n {
                    let y = out.row_slice(i);
                    let gr = &gd[i * m..(i + 1) * m];
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..m {
                        gx[i * m + j] = y[j] * (gr[j] - dot);
                    }
                }
                acc(*x, Tensor::matrix(n, m, gx)?);
            }
            Op::MeanRows(x) => {
                let (n, d) = self.value(*x).dims2()?;
                let mut gx = Vec::with_capacity(n * d);
                for _ in 0..n {
                    gx.extend(gd.iter().map(|v| v / n as f64));
                }
                acc(*x, Tensor::matrix(n, d, gx)?);
            }
            Op::Sum(x) => {
                let shape = self.value(*x).shape().to_vec();
                acc(*x, Tensor::full(&shape, gd[0]));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (n, d) = out.dims2()?;
                let gam = self.value(*gamma).data();
                let mut gg = vec![0.0; d];
                let mut gbeta = vec![0.0; d];
                let mut gx = vec![0.0; n * d];
                for i in 0..n {
                    let gr = &gd[i * d..(i + 1) * d];
                    let xh = &xhat[i * d..(i + 1) * d];
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..d {
                        gg[j] += gr[j] * xh[j];
                        gbeta[j] += gr[j];
                        let dxh = gr[j] * gam[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                    }
                    for j in 0..d {
                        let dxh = gr[j] * gam[j];
                        gx[i * d + j] =
                            inv_std[i] / d as f64 * (d as f64 * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
                acc(*x, Tensor::matrix(n, d, gx)?);
                acc(*gamma, Tensor::row(gg));
                acc(*beta, Tensor::row(gbeta));
            }
            Op::Dropout { x, mask } => {
                let gx = gd.iter().zip(mask).map(|(g, m)| g * m).collect();
                acc(*x, Tensor::new(g.shape().to_vec(), gx)?);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (n, c) = self.value(*logits).dims2()?;
                let scale = gd[0] / n as f64;
                let mut gx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &t) in targets.iter().enumerate() {
                    gx[i * c + t] -= scale;
                }
                acc(*logits, Tensor::matrix(n, c, gx)?);
            }
            Op::Cosine(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let c = out.item();
                let rx = norm(x.data());
                let ry = norm(y.data());
                let na = rx.max(COSINE_EPS);
                let nb = ry.max(COSINE_EPS);
                let grad_side = |u: &[f64], v: &[f64], ru: f64, nu: f64, nv: f64| -> Vec<f64> {
                    u.iter()
                        .zip(v)
                        .map(|(ui, vi)| {
                            let mut d = vi / (nu * nv);
                            if ru > COSINE_EPS {
                                d -= c * ui / (nu * nu);
                            }
                            gd[0] * d
                        })
                        .collect()
                };
                let ga = grad_side(x.data(), y.data(), rx, na, nb);
                let gb = grad_side(y.data(), x.data(), ry, nb, na);
                acc(*a, Tensor::new(x.shape().to_vec(), ga)?);
                acc(*b, Tensor::new(y.shape().to_vec(), gb)?);
            }
            Op::LogSumExp(x) => {
                let xv = self.value(*x);
                let lse = out.item();
                let gx = xv.data().iter().map(|v| gd[0] * (v - lse).exp()).collect();
                acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
            }
            Op::RowWeightedSum { w, v } => {
                let (wv, vv) = (self.value(*w), self.value(*v));
                let (n, m) = wv.dims2()?;
                let d = vv.cols();
                let mut gw = vec![0.0; n * m];
                let mut gv = vec![0.0; n * m * d];
                for i in 0..n {
                    let gr = &gd[i * d..(i + 1) * d];
                    for j in 0..m {
                        let r = i * m + j;
                        let vr = vv.row_slice(r);
                        gw[r] = gr.iter().zip(vr).map(|(a, b)| a * b).sum();
                        let wij = wv.data()[r];
                        for k in 0..d {
                            gv[r * d + k] = wij * gr[k];
                        }
                    }
                }
                acc(*w, Tensor::matrix(n, m, gw)?);
                acc(*v, Tensor::matrix(n * m, d, gv)?);
            }
            Op::GradReverse { x, lambda } => {
                let gx = gd.iter().map(|v| -lambda * v).collect();
                acc(*x, Tensor::new(g.shape().to_vec(), gx)?);
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_softmax_symmetric_row() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![0.0, 0.0])).unwrap();
        let y = tape.masked_softmax(x, &[true, true]).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn masked_entries_are_exact_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![3.0, -1.0, 7.0])).unwrap();
        let y = tape.masked_softmax(x, &[true, false, true]).unwrap();
        assert_eq!(tape.value(y).data()[1], 0.0);
        let s: f64 = tape.value(y).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_masked_row_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0])).unwrap();
        let err = tape.masked_softmax(x, &[false, false]).unwrap_err();
        assert!(matches!(err, AutodiffError::AllMasked { row: 0, .. }));
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3])).unwrap();
        let b = tape.leaf(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(
            tape.matmul(a, b),
            Err(AutodiffError::Shape { .. })
        ));
        let c = tape.leaf(Tensor::zeros(&[3, 2])).unwrap();
        assert!(matches!(tape.add(a, c), Err(AutodiffError::Shape { .. })));
    }

    #[test]
    fn non_finite_input_trips_numeric_error() {
        let mut tape = Tape::new();
        let err = tape.leaf(Tensor::row(vec![f64::NAN])).unwrap_err();
        assert!(matches!(err, AutodiffError::NonFinite { .. }));
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap())
            .unwrap();
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0; 4]);
    }

    #[test]
    fn zero_times_anything_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![0.3, -0.7])).unwrap();
        let t = tape.tanh(x).unwrap();
        let s = tape.sum(t).unwrap();
        let z = tape.scale(s, 0.0).unwrap();
        let g = tape.backward(z).unwrap();
        assert!(g.wrt(x).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0])).unwrap();
        assert!(matches!(
            tape.backward(x),
            Err(AutodiffError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn cosine_of_vector_with_itself_is_one() {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::row(vec![0.2, -3.0, 4.5])).unwrap();
        let c = tape.cosine_similarity(v, v).unwrap();
        assert!((tape.scalar(c) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(tape.dropout(x, 0.5, false).unwrap(), x);
    }

    #[test]
    fn dropout_mask_depends_on_key_only() {
        let run = |seed, step| {
            let mut tape = Tape::with_dropout_key(DropoutKey { seed, step });
            let x = tape.leaf(Tensor::ones(&[1, 64])).unwrap();
            let y = tape.dropout(x, 0.3, true).unwrap();
            tape.value(y).clone()
        };
        assert_eq!(run(7, 1), run(7, 1));
        assert_ne!(run(7, 1), run(7, 2));
        assert_ne!(run(7, 1), run(8, 1));
    }

    #[test]
    fn grad_reverse_negates_and_scales() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0])).unwrap();
        let r = tape.grad_reverse(x, 0.6).unwrap();
        let s = tape.sum(r).unwrap();
        assert_eq!(tape.scalar(s), 3.0);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[-0.6, -0.6]);
    }

    #[test]
    fn unreached_param_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::row(vec![1.0, 2.0])).unwrap();
        let b = store.add("b", Tensor::row(vec![5.0])).unwrap();
        let mut tape = Tape::new();
        let av = tape.param(&store, a).unwrap();
        let s = tape.sum(av).unwrap();
        let g = tape.backward(s).unwrap().param_grads(&store);
        assert_eq!(g[b.index()].data(), &[0.0]);
        assert_eq!(g[a.index()].data(), &[1.0, 1.0]);
    }
}

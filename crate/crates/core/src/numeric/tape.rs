//! Recorded-graph reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value; `backward`
//! walks the nodes in reverse and accumulates vector-Jacobian products.
//! Only the operations the encoder, actor/critic heads and PPO losses need
//! are provided.

use std::collections::BTreeMap;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    Dot(Var, Var),
    Transpose(Var),
    SliceRows(Var, usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Named collection of learnable tensors, ordered by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Order-sensitive digest of every value's bit pattern.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over names and bits
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        };
        for (name, t) in &self.tensors {
            feed(name.as_bytes());
            for v in t.data() {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Tape handles for every tensor of a [`ParamSet`].
#[derive(Clone, Debug, Default)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

impl Index<&str> for ParamVars {
    type Output = Var;

    fn index(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not registered on tape"))
    }
}

/// Gradients of a scalar loss with respect to each registered parameter.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_name: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.by_name.iter()
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

/// Single-threaded record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::domain(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_values(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Result<Var> {
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, op))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Result<Var> {
        Ok(self.constant(Tensor::scalar(x)?))
    }

    /// A leaf whose gradient is reported under `name` by [`Tape::backward`].
    pub fn param(&mut self, name: impl Into<String>, t: Tensor) -> Var {
        let v = self.push(t, Op::Leaf);
        self.params.push((name.into(), v));
        v
    }

    pub fn register(&mut self, params: &ParamSet) -> ParamVars {
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), self.param(name.clone(), t.clone())))
            .collect();
        ParamVars { vars }
    }

    /// Like [`Tape::register`] but the tensors receive no gradient.
    pub fn register_constants(&mut self, params: &ParamSet) -> ParamVars {
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), self.constant(t.clone())))
            .collect();
        ParamVars { vars }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::domain(format!(
                "matmul: inner dimensions {k} and {k2} differ"
            )));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push_values(vec![m, n], out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.zip(a, b, |x, y| x + y);
        let shape = self.value(a).shape().to_vec();
        self.push_values(shape, out, Op::Add(a, b))
    }

    /// Adds a `1 × n` row to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let (r, n2) = self.value(row).dims2()?;
        if r != 1 || n != n2 {
            return Err(Error::domain(format!(
                "add_row: cannot broadcast {:?} over {:?}",
                self.value(row).shape(),
                self.value(a).shape()
            )));
        }
        let av = self.value(a).data();
        let bv = self.value(row).data();
        let out = (0..m * n).map(|i| av[i] + bv[i % n]).collect();
        self.push_values(vec![m, n], out, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.zip(a, b, |x, y| x - y);
        let shape = self.value(a).shape().to_vec();
        self.push_values(shape, out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.zip(a, b, |x, y| x * y);
        let shape = self.value(a).shape().to_vec();
        self.push_values(shape, out, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("min", self.value(a), self.value(b))?;
        let out = self.zip(a, b, f64::min);
        let shape = self.value(a).shape().to_vec();
        self.push_values(shape, out, Op::Min(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.map(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(x) = self.value(a).data().iter().find(|x| **x <= 0.0) {
            return Err(Error::domain(format!("log of non-positive value {x}")));
        }
        self.map(a, f64::ln, Op::Log(a))
    }

    /// Clamp into `[lo, hi]`; the subgradient is 1 on the closed band and 0 outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::domain(format!("clamp: empty band [{lo}, {hi}]")));
        }
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Softmax along each row of a matrix, with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            out.extend(softmax_slice(&src[r * n..(r + 1) * n], 1.0));
        }
        self.push_values(vec![m, n], out, Op::SoftmaxRows(a))
    }

    /// Sum of all entries, as a rank-0 scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push_values(Vec::new(), vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::domain("mean of empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push_values(Vec::new(), vec![s], Op::Mean(a))
    }

    /// Inner product of two equally sized tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::domain("dot: length mismatch"));
        }
        let s = self.zip(a, b, |x, y| x * y).into_iter().sum();
        self.push_values(Vec::new(), vec![s], Op::Dot(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let out = transpose_raw(self.value(a).data(), m, n);
        self.push_values(vec![n, m], out, Op::Transpose(a))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if start >= end || end > m {
            return Err(Error::domain(format!(
                "slice_rows: range {start}..{end} invalid for {m} rows"
            )));
        }
        let out = self.value(a).data()[start * n..end * n].to_vec();
        self.push_values(vec![end - start, n], out, Op::SliceRows(a, start, end))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect()
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(a);
        let shape = t.shape().to_vec();
        let out = t.data().iter().map(|x| f(*x)).collect();
        self.push_values(shape, out, op)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::domain(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut by_name = BTreeMap::new();
        for (name, var) in &self.params {
            let shape = self.value(*var).shape().to_vec();
            let data = match grads.get(var.0).and_then(Option::as_ref) {
                Some(g) => g.clone(),
                None => vec![0.0; self.value(*var).len()],
            };
            let t = Tensor::new(shape, data)
                .map_err(|e| Error::numerical(format!("gradient of `{name}`: {e}")))?;
            by_name.insert(name.clone(), t);
        }
        Ok(Gradients { by_name })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: &dyn Fn(usize) -> f64| {
            let n = self.value(v).len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            for (i, s) in slot.iter_mut().enumerate() {
                *s += contrib(i);
            }
        };
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2().expect("matmul operand");
                let n = self.value(b).cols().expect("matmul operand");
                let bt = transpose_raw(self.value(b).data(), k, n);
                let da = matmul_raw(g, &bt, m, n, k);
                let at = transpose_raw(self.value(a).data(), m, k);
                let db = matmul_raw(&at, g, k, m, n);
                acc(grads, a, &|i| da[i]);
                acc(grads, b, &|i| db[i]);
            }
            Op::Add(a, b) => {
                acc(grads, a, &|i| g[i]);
                acc(grads, b, &|i| g[i]);
            }
            Op::AddRow(a, row) => {
                acc(grads, a, &|i| g[i]);
                let n = self.value(row).len();
                let mut colsum = vec![0.0; n];
                for (i, gv) in g.iter().enumerate() {
                    colsum[i % n] += gv;
                }
                acc(grads, row, &|i| colsum[i]);
            }
            Op::Sub(a, b) => {
                acc(grads, a, &|i| g[i]);
                acc(grads, b, &|i| -g[i]);
            }
            Op::Mul(a, b) => {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                acc(grads, a, &|i| g[i] * bv[i]);
                acc(grads, b, &|i| g[i] * av[i]);
            }
            Op::Min(a, b) => {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                acc(grads, a, &|i| if av[i] <= bv[i] { g[i] } else { 0.0 });
                acc(grads, b, &|i| if av[i] <= bv[i] { 0.0 } else { g[i] });
            }
            Op::Scale(a, s) => acc(grads, a, &|i| g[i] * s),
            Op::AddScalar(a) => acc(grads, a, &|i| g[i]),
            Op::Tanh(a) => {
                let y = out.data();
                acc(grads, a, &|i| g[i] * (1.0 - y[i] * y[i]));
            }
            Op::Exp(a) => {
                let y = out.data();
                acc(grads, a, &|i| g[i] * y[i]);
            }
            Op::Log(a) => {
                let x = self.value(a).data();
                acc(grads, a, &|i| g[i] / x[i]);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(a).data();
                acc(grads, a, &|i| if x[i] >= lo && x[i] <= hi { g[i] } else { 0.0 });
            }
            Op::SoftmaxRows(a) => {
                let (m, n) = out.dims2().expect("softmax output");
                let y = out.data();
                let mut dx = vec![0.0; m * n];
                for r in 0..m {
                    let row = r * n..(r + 1) * n;
                    let inner: f64 = y[row.clone()].iter().zip(&g[row.clone()]).map(|(a, b)| a * b).sum();
                    for i in row {
                        dx[i] = y[i] * (g[i] - inner);
                    }
                }
                acc(grads, a, &|i| dx[i]);
            }
            Op::Sum(a) => acc(grads, a, &|_| g[0]),
            Op::Mean(a) => {
                let n = self.value(a).len() as f64;
                acc(grads, a, &|_| g[0] / n);
            }
            Op::Dot(a, b) => {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                acc(grads, a, &|i| g[0] * bv[i]);
                acc(grads, b, &|i| g[0] * av[i]);
            }
            Op::Transpose(a) => {
                let (m, n) = self.value(a).dims2().expect("transpose operand");
                // out is n × m; gradient back to m × n
                let gt = transpose_raw(g, n, m);
                acc(grads, a, &|i| gt[i]);
            }
            Op::SliceRows(a, start, end) => {
                let n = self.value(a).cols().expect("slice operand");
                let lo = start * n;
                let hi = end * n;
                acc(grads, a, &|i| if i >= lo && i < hi { g[i - lo] } else { 0.0 });
            }
        }
    }
}

/// `exp(scale * v_i)` normalized, computed with max subtraction.
pub(crate) fn softmax_slice(v: &[f64], scale: f64) -> Vec<f64> {
    let scaled: Vec<f64> = v.iter().map(|x| scale * x).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_forward_and_grad() {
        let mut tape = Tape::new();
        let a = tape.param("a", t(&[1, 2], &[1.0, 2.0]));
        let b = tape.param("b", t(&[2, 1], &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.sum(c).unwrap();
        assert_eq!(tape.scalar(s), 11.0);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get("a").unwrap().data(), &[3.0, 4.0]);
        assert_eq!(g.get("b").unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param("x", t(&[], &[3.0]));
        let y = tape.mul(x, x).unwrap();
        let z = tape.add(y, x).unwrap();
        let g = tape.backward(z).unwrap();
        assert_eq!(g.get("x").unwrap().item(), 7.0);
    }

    #[test]
    fn clamp_band_is_inclusive() {
        let mut tape = Tape::new();
        let x = tape.param("x", t(&[3], &[0.8, 1.2, 1.5]));
        let c = tape.clamp(x, 0.8, 1.2).unwrap();
        let s = tape.sum(c).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get("x").unwrap().data(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn min_routes_to_smaller() {
        let mut tape = Tape::new();
        let a = tape.param("a", t(&[2], &[1.0, 5.0]));
        let b = tape.param("b", t(&[2], &[2.0, 3.0]));
        let m = tape.min(a, b).unwrap();
        let s = tape.sum(m).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get("a").unwrap().data(), &[1.0, 0.0]);
        assert_eq!(g.get("b").unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn overflow_is_reported() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1], &[1000.0]));
        assert!(matches!(tape.exp(x), Err(Error::Numerical(_))));
        let z = tape.constant(t(&[1], &[0.0]));
        assert!(tape.log(z).is_err());
    }

    #[test]
    fn unused_param_gets_zero_grad() {
        let mut tape = Tape::new();
        let a = tape.param("a", t(&[2], &[1.0, 2.0]));
        let _b = tape.param("b", t(&[2], &[1.0, 2.0]));
        let s = tape.sum(a).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get("b").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, -1e9, 0.0, 0.5]));
        let y = tape.softmax_rows(x).unwrap();
        let v = tape.value(y);
        for r in 0..2 {
            let s: f64 = v.row_slice(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(v.data()[3], 0.0);
    }
}

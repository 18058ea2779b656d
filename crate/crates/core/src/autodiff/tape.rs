use std::sync::Arc;

use super::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    LeakyRelu(Var, T),
    Log(Var, T),
    SoftmaxRows(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    SliceCols(Var, usize, usize),
    /// Per group, the argmax row of each column (`None` for empty groups).
    MaxPool(Var, Vec<Option<Vec<usize>>>),
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records primitive operations in evaluation order so that gradients can
/// be pulled back in one reverse sweep.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        assert!(x == y || x == 1 || y == 1, "incompatible broadcast {a:?} vs {b:?}");
        x.max(y)
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

#[inline]
fn bcast<T: Scalar>(t: &Tensor<T>, r: usize, c: usize) -> T {
    t.data[(r % t.rows) * t.cols + (c % t.cols)]
}

/// Sum `g` down to `shape` along broadcast dimensions.
fn reduce_to<T: Scalar>(g: &Tensor<T>, shape: (usize, usize)) -> Tensor<T> {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for r in 0..g.rows {
        for c in 0..g.cols {
            let o = out.at_mut(r % shape.0, c % shape.1);
            *o = *o + g.at(r, c);
        }
    }
    out
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Trainable input tied to parameter slot `id`.
    pub fn param(&mut self, id: usize, t: Tensor<T>) -> Var {
        self.push(t, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (r, c) = broadcast_shape(ta.shape(), tb.shape());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(f(bcast(ta, i, j), bcast(tb, i, j)));
            }
        }
        Tensor::new(r, c, data)
    }

    /// Elementwise sum; a dimension of size 1 broadcasts.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * slope });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    /// `ln(max(a, floor))`.
    pub fn log(&mut self, a: Var, floor: T) -> Var {
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.push(v, Op::Log(a, floor))
    }

    /// Row-wise softmax. With a mask, excluded entries get probability 0; a
    /// row with no admitted entries is all zeros.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<Arc<Vec<bool>>>) -> Var {
        let t = self.value(a);
        if let Some(m) = &mask {
            assert_eq!(m.len(), t.len(), "mask shape mismatch");
        }
        let mut out = Tensor::zeros(t.rows, t.cols);
        for r in 0..t.rows {
            let keep = |c: usize| mask.as_ref().is_none_or(|m| m[r * t.cols + c]);
            let mut mx = T::neg_infinity();
            for c in (0..t.cols).filter(|&c| keep(c)) {
                mx = mx.max(t.at(r, c));
            }
            if mx == T::neg_infinity() {
                continue;
            }
            let mut z = T::zero();
            for c in (0..t.cols).filter(|&c| keep(c)) {
                let e = (t.at(r, c) - mx).exp();
                *out.at_mut(r, c) = e;
                z = z + e;
            }
            for c in 0..t.cols {
                *out.at_mut(r, c) = out.at(r, c) / z;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(&t.data[r * t.cols..(r + 1) * t.cols]);
            }
            off += t.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&t.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Tensor::new(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Rows `idx` of `a`, in order; repeats allowed.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * t.cols);
        for &i in idx.iter() {
            data.extend_from_slice(&t.data[i * t.cols..(i + 1) * t.cols]);
        }
        let out = Tensor::new(idx.len(), t.cols, data);
        self.push(out, Op::GatherRows(a, idx))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let t = self.value(a);
        assert!(start <= end && end <= t.cols, "slice out of range");
        let mut data = Vec::with_capacity(t.rows * (end - start));
        for r in 0..t.rows {
            data.extend_from_slice(&t.data[r * t.cols + start..r * t.cols + end]);
        }
        let out = Tensor::new(t.rows, end - start, data);
        self.push(out, Op::SliceCols(a, start, end))
    }

    /// Column-wise max over each group of rows, one output row per group.
    /// An empty group yields a zero row. Ties go to the lowest row index.
    pub fn max_pool_groups(&mut self, a: Var, groups: &[Vec<usize>]) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(groups.len(), t.cols);
        let mut argmax = Vec::with_capacity(groups.len());
        for (g, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                argmax.push(None);
                continue;
            }
            let mut best = vec![rows[0]; t.cols];
            for &r in rows {
                for (c, b) in best.iter_mut().enumerate() {
                    let (x, y) = (t.at(r, c), t.at(*b, c));
                    if x > y || (x == y && r < *b) {
                        *b = r;
                    }
                }
            }
            for (c, &b) in best.iter().enumerate() {
                *out.at_mut(g, c) = t.at(b, c);
            }
            argmax.push(Some(best));
        }
        self.push(out, Op::MaxPool(a, argmax))
    }

    /// Column-wise max over all rows.
    pub fn max_pool_rows(&mut self, a: Var) -> Var {
        let n = self.value(a).rows;
        self.max_pool_groups(a, &[(0..n).collect()])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Reverse sweep from scalar `loss`. Returns one gradient per parameter
    /// slot in `0..num_params`; unreached slots stay zero.
    pub fn backward(&self, loss: Var, param_shapes: &[(usize, usize)]) -> Vec<Tensor<T>> {
        assert_eq!(self.value(loss).len(), 1, "loss must be a scalar");
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut out: Vec<Tensor<T>> = param_shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();

        fn acc<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
            match &mut grads[v.0] {
                Some(x) => x.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out[*id].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul(&tb.transpose()));
                    acc(&mut grads, *b, ta.transpose().matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, reduce_to(&g, self.value(*a).shape()));
                    acc(&mut grads, *b, reduce_to(&g, self.value(*b).shape()));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, reduce_to(&g, self.value(*a).shape()));
                    acc(&mut grads, *b, reduce_to(&g.map(|x| -x), self.value(*b).shape()));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let mut ga = g.clone();
                    let mut gb = g.clone();
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            *ga.at_mut(r, c) = g.at(r, c) * bcast(tb, r, c);
                            *gb.at_mut(r, c) = g.at(r, c) * bcast(ta, r, c);
                        }
                    }
                    acc(&mut grads, *a, reduce_to(&ga, ta.shape()));
                    acc(&mut grads, *b, reduce_to(&gb, tb.shape()));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| x * *c)),
                Op::LeakyRelu(a, slope) => {
                    let ta = self.value(*a);
                    let data = g
                        .data
                        .iter()
                        .zip(&ta.data)
                        .map(|(&gi, &x)| if x > T::zero() { gi } else { gi * *slope })
                        .collect();
                    acc(&mut grads, *a, Tensor::new(g.rows, g.cols, data));
                }
                Op::Log(a, floor) => {
                    let ta = self.value(*a);
                    let data = g
                        .data
                        .iter()
                        .zip(&ta.data)
                        .map(|(&gi, &x)| if x > *floor { gi / x } else { T::zero() })
                        .collect();
                    acc(&mut grads, *a, Tensor::new(g.rows, g.cols, data));
                }
                Op::SoftmaxRows(a) => {
                    // masked entries have y = 0 and so receive no gradient
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let mut dot = T::zero();
                        for c in 0..y.cols {
                            dot = dot + g.at(r, c) * y.at(r, c);
                        }
                        for c in 0..y.cols {
                            *ga.at_mut(r, c) = y.at(r, c) * (g.at(r, c) - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols;
                        let mut gp = Tensor::zeros(g.rows, w);
                        for r in 0..g.rows {
                            gp.data[r * w..(r + 1) * w].copy_from_slice(&g.data[r * g.cols + off..r * g.cols + off + w]);
                        }
                        off += w;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let t = self.value(p);
                        let n = t.len();
                        acc(&mut grads, p, Tensor::new(t.rows, t.cols, g.data[off..off + n].to_vec()));
                        off += n;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let ta = self.value(*a);
                    let mut ga = Tensor::zeros(ta.rows, ta.cols);
                    for (k, &i) in idx.iter().enumerate() {
                        for c in 0..ta.cols {
                            *ga.at_mut(i, c) = ga.at(i, c) + g.at(k, c);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start, end) => {
                    let ta = self.value(*a);
                    let mut ga = Tensor::zeros(ta.rows, ta.cols);
                    for r in 0..ta.rows {
                        for c in *start..*end {
                            *ga.at_mut(r, c) = g.at(r, c - start);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MaxPool(a, argmax) => {
                    let ta = self.value(*a);
                    let mut ga = Tensor::zeros(ta.rows, ta.cols);
                    for (grp, best) in argmax.iter().enumerate() {
                        if let Some(best) = best {
                            for (c, &r) in best.iter().enumerate() {
                                *ga.at_mut(r, c) = ga.at(r, c) + g.at(grp, c);
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    acc(&mut grads, *a, Tensor::full(ta.rows, ta.cols, g.item()));
                }
            }
        }
        out
    }
}

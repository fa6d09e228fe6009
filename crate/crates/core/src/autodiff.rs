//! A small reverse-mode automatic differentiation tape over dense `f64`
//! matrices.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates gradients. The op set is
//! exactly what the model needs: affine maps, masked row softmax, layer
//! norm, GELU and a few reshaping primitives.

use std::fmt;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat({}x{}, {:?})", self.rows, self.cols, self.data)
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} vs {} values", data.len());
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Self::from_vec(1, cols, data)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self * other`
    fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul {}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`
    fn matmul_bt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `self^T * other`
    fn matmul_at(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let brow = other.row(k);
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out.data[i * other.cols..(i + 1) * other.cols].iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Mat, inv_std: Vec<f64> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    MaskedMeanRows(Var, Vec<bool>),
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads(Vec<Option<Mat>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.0[v.0].as_ref()
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

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a * b^T`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 x cols` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!((bias.rows, bias.cols), (1, self.value(a).cols));
        let bias = bias.data.clone();
        let mut v = self.value(a).clone();
        for r in 0..v.rows {
            for (x, b) in v.row_mut(r).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x *= s);
        self.push(v, Op::Scale(a, s))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| {
            let t = (GELU_C * (*x + 0.044715 * *x * *x * *x)).tanh();
            *x = 0.5 * *x * (1.0 + t);
        });
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise softmax. Columns with `mask[c] == false` get probability zero.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let x = self.value(a);
        if let Some(m) = mask {
            assert_eq!(m.len(), x.cols);
            assert!(m.iter().any(|&k| k), "softmax over an all-masked row");
        }
        let keep = |c: usize| mask.is_none_or(|m| m[c]);
        let mut v = Mat::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = x.row(r);
            let max = (0..x.cols).filter(|&c| keep(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            let out = v.row_mut(r);
            let mut sum = 0.0;
            for c in 0..x.cols {
                if keep(c) {
                    out[c] = (row[c] - max).exp();
                    sum += out[c];
                }
            }
            out.iter_mut().for_each(|o| *o /= sum);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Per-row layer normalization with `1 x cols` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        assert_eq!((g.cols, b.cols), (xv.cols, xv.cols));
        let n = xv.cols as f64;
        let mut xhat = Mat::zeros(xv.rows, xv.cols);
        let mut inv_std = Vec::with_capacity(xv.rows);
        let mut out = Mat::zeros(xv.rows, xv.cols);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for c in 0..xv.cols {
                let h = (row[c] - mean) * is;
                xhat.data[r * xv.cols + c] = h;
                out.data[r * xv.cols + c] = h * g.data[c] + b.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols);
            rows += m.rows;
            data.extend_from_slice(&m.data);
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows);
            for r in 0..rows {
                out.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.rows);
        let v = Mat::from_vec(len, m.cols, m.data[start * m.cols..(start + len) * m.cols].to_vec());
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols);
        let mut v = Mat::zeros(m.rows, len);
        for r in 0..m.rows {
            v.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    /// Mean over the rows where `mask` is true, as a `1 x cols` row.
    pub fn masked_mean_rows(&mut self, a: Var, mask: &[bool]) -> Var {
        let m = self.value(a);
        assert_eq!(mask.len(), m.rows);
        let n = mask.iter().filter(|&&k| k).count();
        assert!(n > 0, "mean over zero valid rows");
        let mut v = Mat::zeros(1, m.cols);
        for r in (0..m.rows).filter(|&r| mask[r]) {
            for (o, x) in v.data.iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
        v.data.iter_mut().for_each(|o| *o /= n as f64);
        self.push(v, Op::MaskedMeanRows(a, mask.to_vec()))
    }

    /// Reverse pass seeded with `d(objective)/d(var)` for each `(var, grad)`.
    pub fn backward(&self, seeds: &[(Var, Mat)]) -> Grads {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        for (v, g) in seeds {
            let val = &self.nodes[v.0].value;
            assert_eq!((g.rows, g.cols), (val.rows, val.cols), "seed shape");
            acc(&mut grads, *v, g.clone());
        }

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul_bt(bv));
                    acc(&mut grads, *b, av.matmul_at(&g));
                }
                Op::MatMulBt(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul(bv));
                    acc(&mut grads, *b, g.matmul_at(av));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, b) => {
                    let mut gb = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, x) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Scale(a, s) => {
                    let mut ga = g.clone();
                    ga.data.iter_mut().for_each(|x| *x *= s);
                    acc(&mut grads, *a, ga);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut ga = g.clone();
                    for (gv, &xv) in ga.data.iter_mut().zip(&x.data) {
                        let u = GELU_C * (xv + 0.044715 * xv * xv * xv);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * xv * xv);
                        let d = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du;
                        *gv *= d;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Mat::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for c in 0..y.cols {
                            ga.data[r * y.cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain);
                    let n = xhat.cols as f64;
                    let mut gx = Mat::zeros(xhat.rows, xhat.cols);
                    let mut gg = Mat::zeros(1, xhat.cols);
                    let mut gbias = Mat::zeros(1, xhat.cols);
                    for r in 0..xhat.rows {
                        let (hr, gr) = (xhat.row(r), g.row(r));
                        let dh: Vec<f64> = gr.iter().zip(&gv.data).map(|(a, b)| a * b).collect();
                        let mean_dh = dh.iter().sum::<f64>() / n;
                        let mean_dh_h = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..xhat.cols {
                            gx.data[r * xhat.cols + c] = inv_std[r] * (dh[c] - mean_dh - hr[c] * mean_dh_h);
                            gg.data[c] += gr[c] * hr[c];
                            gbias.data[c] += gr[c];
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gain, gg);
                    acc(&mut grads, *bias, gbias);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let rows = self.value(p).rows;
                        let part = Mat::from_vec(rows, g.cols, g.data[off * g.cols..(off + rows) * g.cols].to_vec());
                        acc(&mut grads, p, part);
                        off += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = self.value(p).cols;
                        let mut part = Mat::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            part.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        acc(&mut grads, p, part);
                        off += cols;
                    }
                }
                Op::SliceRows(a, start) => {
                    let src = self.value(*a);
                    let mut ga = Mat::zeros(src.rows, src.cols);
                    ga.data[start * src.cols..(start + g.rows) * src.cols].copy_from_slice(&g.data);
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut ga = Mat::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        ga.row_mut(r)[*start..start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MaskedMeanRows(a, mask) => {
                    let src = self.value(*a);
                    let n = mask.iter().filter(|&&k| k).count() as f64;
                    let mut ga = Mat::zeros(src.rows, src.cols);
                    for r in (0..src.rows).filter(|&r| mask[r]) {
                        for (o, x) in ga.row_mut(r).iter_mut().zip(&g.data) {
                            *o = x / n;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
            }
            grads[idx] = Some(g);
        }
        Grads(grads)
    }
}

//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation of one forward pass. Model parameters
//! are borrowed as the first `params.len()` leaves, so gradients come back
//! indexed exactly like the parameter list. Operations are coarse (a fused
//! multi-head attention, a fused layer norm, a fused softmax cross-entropy),
//! each with a hand-written vector-Jacobian product.

use crate::tensor::{gemm, matmul, Mat, Scalar, View, ViewMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

const LN_EPS: f64 = 1e-5;

enum Op<T> {
    Input,
    Gather { table: Var, ids: Vec<usize> },
    Add(Var, Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Gelu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<T>, scale: T },
}

struct Node<T> {
    value: Mat<T>,
    op: Op<T>,
}

pub struct Tape<'p, T> {
    params: &'p [Mat<T>],
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar root with respect to every node of a tape.
pub struct Gradients<T> {
    grads: Vec<Option<Mat<T>>>,
    n_params: usize,
}

impl<T: Scalar> Gradients<T> {
    /// Gradients of the parameters, zero-filled where no path reached them.
    pub fn into_param_grads(mut self, params: &[Mat<T>]) -> Vec<Mat<T>> {
        self.grads.truncate(self.n_params);
        self.grads
            .into_iter()
            .zip(params)
            .map(|(g, p)| g.unwrap_or_else(|| Mat::zeros(p.rows, p.cols)))
            .collect()
    }

    pub fn get(&self, v: Var) -> Option<&Mat<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    let c = T::from_f64(0.797_884_560_802_865_4);
    let a = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let y = half * x * (T::ONE + t);
    let dy = half * (T::ONE + t) + half * x * (T::ONE - t * t) * c * (T::ONE + T::from_f64(3.0) * a * x * x);
    (y, dy)
}

pub fn gelu<T: Scalar>(x: T) -> T {
    gelu_parts(x).0
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let mut mx = T::NEG_INFINITY;
    for &v in row.iter() {
        mx = mx.max(v);
    }
    let mut sum = T::ZERO;
    for v in row.iter_mut() {
        *v = if *v == T::NEG_INFINITY { T::ZERO } else { (*v - mx).exp() };
        sum += *v;
    }
    let inv = T::ONE / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p [Mat<T>]) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn param(&self, index: usize) -> Var {
        assert!(index < self.params.len());
        Var(index)
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        if v.0 < self.params.len() {
            &self.params[v.0]
        } else {
            &self.nodes[v.0 - self.params.len()].value
        }
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.params.len() + self.nodes.len() - 1)
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Input)
    }

    /// Rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Mat::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            assert!(id < t.rows, "row {id} out of range for table with {} rows", t.rows);
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds the single row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!((b.rows, b.cols), (1, self.value(x).cols), "bias must be one row");
        let b = b.data.clone();
        let mut out = self.value(x).clone();
        for r in 0..out.rows {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = matmul(View::of(self.value(a)), View::of(self.value(b)));
        self.push(out, Op::MatMul(a, b))
    }

    /// `x w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Mat::from_vec(v.rows, v.cols, v.data.iter().map(|&e| gelu(e)).collect());
        self.push(out, Op::Gelu(x))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let (g, b) = (self.value(gain), self.value(bias));
        assert_eq!((g.len(), b.len()), (cols, cols));
        let mut out = Mat::zeros(rows, cols);
        let mut xhat = vec![T::ZERO; rows * cols];
        let mut rstd = vec![T::ZERO; rows];
        let inv_n = T::from_f64(1.0 / cols as f64);
        for r in 0..rows {
            let row = xv.row(r);
            let mut mean = T::ZERO;
            for &e in row {
                mean += e;
            }
            mean *= inv_n;
            let mut var = T::ZERO;
            for &e in row {
                var += (e - mean) * (e - mean);
            }
            var *= inv_n;
            let rs = T::ONE / (var + T::from_f64(LN_EPS)).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out.data[r * cols + c] = h * g.data[c] + b.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, rstd })
    }

    /// Multi-head scaled dot-product attention of `q` over `k`/`v`.
    /// Heads split the columns evenly; `causal` masks keys after each query.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = qv.shape();
        let m = kv.rows;
        assert_eq!(kv.cols, d);
        assert_eq!(vv.shape(), (m, d));
        assert!(heads > 0 && d % heads == 0, "width {d} not divisible by {heads} heads");
        assert!(!causal || n == m, "causal attention needs as many keys as queries");
        let dh = d / heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());

        let mut probs = vec![T::ZERO; heads * n * m];
        let mut out = Mat::zeros(n, d);
        for h in 0..heads {
            let p = &mut probs[h * n * m..(h + 1) * n * m];
            gemm(
                scale,
                View::cols(qv, h * dh, dh),
                View::cols(kv, h * dh, dh).transpose(),
                T::ZERO,
                ViewMut::slice(p, n, m),
            );
            for i in 0..n {
                let row = &mut p[i * m..(i + 1) * m];
                if causal {
                    row[i + 1..].fill(T::NEG_INFINITY);
                }
                softmax_in_place(row);
            }
            gemm(
                T::ONE,
                View { data: p, offset: 0, rows: n, cols: m, rs: m, cs: 1 },
                View::cols(vv, h * dh, dh),
                T::ZERO,
                ViewMut::cols(&mut out, h * dh, dh),
            );
        }
        self.push(out, Op::Attention { q, k, v, heads, probs })
    }

    /// `scale * sum(-log softmax(logits)[target])` over rows whose target is set.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>], scale: T) -> Var {
        let lv = self.value(logits);
        let (rows, cols) = lv.shape();
        assert_eq!(rows, targets.len(), "one target per logit row");
        let mut probs = vec![T::ZERO; rows * cols];
        let mut total = T::ZERO;
        for (r, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            assert!(t < cols, "target {t} out of range for {cols} classes");
            let p = &mut probs[r * cols..(r + 1) * cols];
            p.copy_from_slice(lv.row(r));
            let mut mx = T::NEG_INFINITY;
            for &e in p.iter() {
                mx = mx.max(e);
            }
            let mut sum = T::ZERO;
            for e in p.iter_mut() {
                *e = (*e - mx).exp();
                sum += *e;
            }
            let lse = mx + sum.ln();
            total += lse - lv.at(r, t);
            let inv = T::ONE / sum;
            for e in p.iter_mut() {
                *e *= inv;
            }
        }
        let out = Mat::from_vec(1, 1, vec![scale * total]);
        self.push(out, Op::CrossEntropy { logits, targets: targets.to_vec(), probs, scale })
    }

    /// Back-propagates `seed * d(root)` through the whole tape.
    pub fn backward(&self, root: Var, seed: T) -> Gradients<T> {
        let np = self.params.len();
        let total = np + self.nodes.len();
        let mut grads: Vec<Option<Mat<T>>> = (0..total).map(|_| None).collect();
        let rv = self.value(root);
        grads[root.0] = Some(Mat::filled(rv.rows, rv.cols, seed));

        for idx in (np..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx - np];
            self.node_vjp(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads, n_params: np }
    }

    fn node_vjp(&self, node: &Node<T>, g: &Mat<T>, grads: &mut [Option<Mat<T>>]) {
        let acc = |grads: &mut [Option<Mat<T>>], v: Var, d: Mat<T>| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&d),
            slot @ None => *slot = Some(d),
        };
        match &node.op {
            Op::Input => {}
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let mut d = Mat::zeros(t.rows, t.cols);
                for (r, &id) in ids.iter().enumerate() {
                    for (o, &e) in d.row_mut(id).iter_mut().zip(g.row(r)) {
                        *o += e;
                    }
                }
                acc(grads, *table, d);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddRow(x, bias) => {
                let mut db = Mat::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (o, &e) in db.data.iter_mut().zip(g.row(r)) {
                        *o += e;
                    }
                }
                acc(grads, *x, g.clone());
                acc(grads, *bias, db);
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = matmul(View::of(g), View::t(bv));
                let db = matmul(View::t(av), View::of(g));
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                let d = xv.data.iter().zip(&g.data).map(|(&e, &ge)| ge * gelu_parts(e).1).collect();
                acc(grads, *x, Mat::from_vec(xv.rows, xv.cols, d));
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let (rows, cols) = g.shape();
                let gv = self.value(*gain);
                let mut dgain = Mat::zeros(gv.rows, gv.cols);
                let mut dbias = Mat::zeros(gv.rows, gv.cols);
                let mut dx = Mat::zeros(rows, cols);
                let inv_n = T::from_f64(1.0 / cols as f64);
                let mut dxhat = vec![T::ZERO; cols];
                for r in 0..rows {
                    let (gr, hr) = (g.row(r), &xhat[r * cols..(r + 1) * cols]);
                    let mut mean_d = T::ZERO;
                    let mut mean_dh = T::ZERO;
                    for c in 0..cols {
                        dgain.data[c] += gr[c] * hr[c];
                        dbias.data[c] += gr[c];
                        dxhat[c] = gr[c] * gv.data[c];
                        mean_d += dxhat[c];
                        mean_dh += dxhat[c] * hr[c];
                    }
                    mean_d *= inv_n;
                    mean_dh *= inv_n;
                    let out = dx.row_mut(r);
                    for c in 0..cols {
                        out[c] = rstd[r] * (dxhat[c] - mean_d - hr[c] * mean_dh);
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *gain, dgain);
                acc(grads, *bias, dbias);
            }
            Op::Attention { q, k, v, heads, probs } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (n, d) = qv.shape();
                let m = kv.rows;
                let dh = d / heads;
                let scale = T::from_f64(1.0 / (dh as f64).sqrt());
                let mut dq = Mat::zeros(n, d);
                let mut dk = Mat::zeros(m, d);
                let mut dv = Mat::zeros(m, d);
                let mut ds = vec![T::ZERO; n * m];
                for h in 0..*heads {
                    let p = &probs[h * n * m..(h + 1) * n * m];
                    let p_view = View { data: p, offset: 0, rows: n, cols: m, rs: m, cs: 1 };
                    let go = View::cols(g, h * dh, dh);
                    // dP = dO V^T
                    gemm(T::ONE, go, View::cols(vv, h * dh, dh).transpose(), T::ZERO, ViewMut::slice(&mut ds, n, m));
                    // dV += P^T dO
                    gemm(T::ONE, p_view.transpose(), go, T::ONE, ViewMut::cols(&mut dv, h * dh, dh));
                    // dS = P * (dP - rowsum(dP * P))
                    for i in 0..n {
                        let (pr, dr) = (&p[i * m..(i + 1) * m], &mut ds[i * m..(i + 1) * m]);
                        let mut dot = T::ZERO;
                        for j in 0..m {
                            dot += pr[j] * dr[j];
                        }
                        for j in 0..m {
                            dr[j] = pr[j] * (dr[j] - dot);
                        }
                    }
                    let ds_view = View { data: &ds, offset: 0, rows: n, cols: m, rs: m, cs: 1 };
                    gemm(scale, ds_view, View::cols(kv, h * dh, dh), T::ONE, ViewMut::cols(&mut dq, h * dh, dh));
                    gemm(scale, ds_view.transpose(), View::cols(qv, h * dh, dh), T::ONE, ViewMut::cols(&mut dk, h * dh, dh));
                }
                acc(grads, *q, dq);
                acc(grads, *k, dk);
                acc(grads, *v, dv);
            }
            Op::CrossEntropy { logits, targets, probs, scale } => {
                let lv = self.value(*logits);
                let cols = lv.cols;
                let s = g.data[0] * *scale;
                let mut d = Mat::zeros(lv.rows, cols);
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    let out = d.row_mut(r);
                    for (o, &p) in out.iter_mut().zip(&probs[r * cols..(r + 1) * cols]) {
                        *o = s * p;
                    }
                    out[t] -= s;
                }
                acc(grads, *logits, d);
            }
        }
    }
}

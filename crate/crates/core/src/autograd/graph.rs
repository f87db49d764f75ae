use rand::Rng;

use super::{AutogradError, Tensor};
use crate::rng;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    SoftmaxRows(Var),
    Dropout(Var, Vec<f64>),
    Mean {
        input: Var,
        axis: usize,
    },
    Sum(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Relu(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Embed {
        x: Var,
        weight: Var,
        bias: Var,
    },
    SliceLast {
        input: Var,
        start: usize,
    },
    ConcatLast(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Tape of primitive applications in creation order. Node inputs always
/// precede the node, so the reverse of creation order is a valid
/// backward traversal.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn mismatch(op: &'static str, detail: String) -> AutogradError {
    AutogradError::ShapeMismatch { op, detail }
}

/// `c = a @ b + beta * c` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserted bounds keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, len: usize) -> &mut Vec<f64> {
    grads[var.0].get_or_insert_with(|| vec![0.0; len])
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Matrix product over the last two axes. `b` is either a 2-D matrix shared
    /// by every leading index of `a`, or has the same leading axes as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch("matmul", format!("{sa:?} @ {sb:?}")));
        }
        let k = sa[sa.len() - 1];
        let m = sa[sa.len() - 2];
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb {
            return Err(mismatch("matmul", format!("{sa:?} @ {sb:?}")));
        }
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let mut out_shape = sa[..sa.len() - 1].to_vec();
        out_shape.push(n);
        let mut out = vec![0.0; out_shape.iter().product()];
        if sb.len() == 2 {
            let rows = va.len() / k.max(1);
            gemm(rows, k, n, va, (k, 1), vb, (n, 1), 0.0, &mut out, (n, 1));
        } else if sa.len() == sb.len() && sa[..sa.len() - 2] == sb[..sb.len() - 2] {
            let batch: usize = sa[..sa.len() - 2].iter().product();
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &va[i * m * k..],
                    (k, 1),
                    &vb[i * k * n..],
                    (n, 1),
                    0.0,
                    &mut out[i * m * n..],
                    (n, 1),
                );
            }
        } else {
            return Err(mismatch("matmul", format!("{sa:?} @ {sb:?}")));
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(out_shape, out)?, rg, Op::MatMul(a, b)))
    }

    fn broadcast_check(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutogradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(mismatch(op, format!("{sa:?} with {sb:?}")));
        }
        Ok(())
    }

    /// Elementwise sum; `b` may be a trailing-axes suffix of `a` and is
    /// broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.broadcast_check("add", a, b)?;
        let vb = self.value(b).data();
        let mut out = self.value(a).clone();
        let nb = vb.len();
        for chunk in out.data_mut().chunks_exact_mut(nb) {
            for (o, x) in chunk.iter_mut().zip(vb) {
                *o += x;
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    /// Elementwise product with the same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.broadcast_check("mul", a, b)?;
        let vb = self.value(b).data();
        let mut out = self.value(a).clone();
        let nb = vb.len();
        for chunk in out.data_mut().chunks_exact_mut(nb) {
            for (o, x) in chunk.iter_mut().zip(vb) {
                *o *= x;
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::Scale(a, factor))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var, AutogradError> {
        let s = self.shape(a).to_vec();
        if s.len() < 2 {
            return Err(mismatch("transpose", format!("{s:?}")));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for (bi, block) in src.chunks_exact(r * c).enumerate() {
            let dst = &mut out[bi * r * c..(bi + 1) * r * c];
            for i in 0..r {
                for j in 0..c {
                    dst[j * r + i] = block[i * c + j];
                }
            }
        }
        let mut shape = s;
        let len = shape.len();
        shape.swap(len - 1, len - 2);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(shape, out)?, rg, Op::Transpose(a)))
    }

    /// Softmax along the last axis, shifted by the row maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let w = out.last_dim();
        for row in out.data_mut().chunks_exact_mut(w) {
            softmax_in_place(row);
        }
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::SoftmaxRows(a))
    }

    /// Inverted dropout. In training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`; otherwise
    /// (or when `p == 0`) the input is returned as is.
    pub fn dropout(&mut self, a: Var, p: f64, train: bool, seed: u64) -> Result<Var, AutogradError> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutogradError::InvalidProbability(p));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mut rng = rng::rng_for(seed, &[rng::STREAM_DROPOUT]);
        let mut out = self.value(a).clone();
        let mask: Vec<f64> = (0..out.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        let rg = self.rg(&[a]);
        Ok(self.push(out, rg, Op::Dropout(a, mask)))
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_over_axis(&mut self, a: Var, axis: usize) -> Result<Var, AutogradError> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return Err(AutogradError::InvalidAxis { axis, rank: s.len() });
        }
        let outer: usize = s[..axis].iter().product();
        let len = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let src = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let inv = 1.0 / len as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let mut shape = s;
        shape.remove(axis);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(shape, out)?, rg, Op::Mean { input: a, axis }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(total), rg, Op::Sum(a))
    }

    /// Normalizes over the last axis, then applies `gamma * x + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, AutogradError> {
        let d = self.value(x).last_dim();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(mismatch(
                "layer_norm",
                format!(
                    "{:?} with gamma {:?} beta {:?}",
                    self.shape(x),
                    self.shape(gamma),
                    self.shape(beta)
                ),
            ));
        }
        let rg = self.rg(&[x, gamma, beta]);
        let src = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let rows = src.len() / d;
        let mut out = vec![0.0; src.len()];
        let mut xhat = if rg { vec![0.0; src.len()] } else { Vec::new() };
        let mut rstd = if rg { vec![0.0; rows] } else { Vec::new() };
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                out[r * d + j] = h * g[j] + b[j];
                if rg {
                    xhat[r * d + j] = h;
                }
            }
            if rg {
                rstd[r] = inv;
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            Tensor::new(shape, out)?,
            rg,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::Relu(a))
    }

    /// Mean over the batch of `-log softmax(logits)[target]`, via log-sum-exp.
    pub fn cross_entropy_logits(&mut self, logits: Var, targets: &[usize]) -> Result<Var, AutogradError> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() || s[0] == 0 {
            return Err(mismatch(
                "cross_entropy",
                format!("logits {s:?}, {} targets", targets.len()),
            ));
        }
        let c = s[1];
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(AutogradError::TargetOutOfRange { target: t, classes: c });
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0;
        for (row, &t) in probs.chunks_exact_mut(c).zip(targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        loss /= targets.len() as f64;
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs: if rg { probs } else { Vec::new() },
            },
        ))
    }

    /// Per-feature affine token embedding: `x [b, m]`, `weight`, `bias [m, d]`
    /// give `out[b, j, :] = x[b, j] * weight[j, :] + bias[j, :]`.
    pub fn embed_features(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, AutogradError> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(weight).to_vec();
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] || self.shape(bias) != sw.as_slice() {
            return Err(mismatch(
                "embed",
                format!("x {sx:?}, weight {sw:?}, bias {:?}", self.shape(bias)),
            ));
        }
        let (b, m, d) = (sx[0], sx[1], sw[1]);
        let vx = self.value(x).data();
        let vw = self.value(weight).data();
        let vb = self.value(bias).data();
        let mut out = vec![0.0; b * m * d];
        for i in 0..b {
            for j in 0..m {
                let xv = vx[i * m + j];
                let dst = &mut out[(i * m + j) * d..(i * m + j + 1) * d];
                let w = &vw[j * d..(j + 1) * d];
                let bb = &vb[j * d..(j + 1) * d];
                for t in 0..d {
                    dst[t] = xv * w[t] + bb[t];
                }
            }
        }
        let rg = self.rg(&[x, weight, bias]);
        Ok(self.push(Tensor::new(vec![b, m, d], out)?, rg, Op::Embed { x, weight, bias }))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutogradError> {
        let s = self.shape(a).to_vec();
        let w = *s.last().ok_or_else(|| mismatch("slice", "scalar input".into()))?;
        if start + len > w {
            return Err(mismatch("slice", format!("{start}..{} of {w}", start + len)));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(src.len() / w * len);
        for row in src.chunks_exact(w) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(shape, out)?, rg, Op::SliceLast { input: a, start }))
    }

    /// Concatenates along the last axis; all leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var, AutogradError> {
        let first = self
            .shape(*parts.first().ok_or_else(|| mismatch("concat", "no inputs".into()))?)
            .to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(mismatch("concat", format!("{first:?} with {s:?}")));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let rg = self.rg(parts);
        Ok(self.push(Tensor::new(shape, out)?, rg, Op::ConcatLast(parts.to_vec())))
    }

    /// Reverse-mode sweep from a scalar `loss`. Gradients accumulate
    /// additively when a node feeds several consumers.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutogradError> {
        if self.value(loss).numel() != 1 {
            return Err(AutogradError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let Graph { nodes, grads } = self;
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop(nodes, grads, node, &g);
            grads[i] = Some(g);
        }
        Ok(())
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = 1.0 / total;
    row.iter_mut().for_each(|v| *v *= inv);
}

fn backprop(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    let val = |v: Var| &nodes[v.0].value;
    let wants = |v: Var| nodes[v.0].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (sa, sb) = (ta.shape(), tb.shape());
            let k = sa[sa.len() - 1];
            let m = sa[sa.len() - 2];
            let n = sb[sb.len() - 1];
            if sb.len() == 2 {
                let rows = ta.numel() / k.max(1);
                if wants(*a) {
                    let ga = accumulate(grads, *a, ta.numel());
                    gemm(rows, n, k, g, (n, 1), tb.data(), (1, n), 1.0, ga, (k, 1));
                }
                if wants(*b) {
                    let gb = accumulate(grads, *b, tb.numel());
                    gemm(k, rows, n, ta.data(), (1, k), g, (n, 1), 1.0, gb, (n, 1));
                }
            } else {
                let batch = ta.numel() / (m * k).max(1);
                if wants(*a) {
                    let ga = accumulate(grads, *a, ta.numel());
                    for i in 0..batch {
                        gemm(
                            m,
                            n,
                            k,
                            &g[i * m * n..],
                            (n, 1),
                            &tb.data()[i * k * n..],
                            (1, n),
                            1.0,
                            &mut ga[i * m * k..],
                            (k, 1),
                        );
                    }
                }
                if wants(*b) {
                    let gb = accumulate(grads, *b, tb.numel());
                    for i in 0..batch {
                        gemm(
                            k,
                            m,
                            n,
                            &ta.data()[i * m * k..],
                            (1, k),
                            &g[i * m * n..],
                            (n, 1),
                            1.0,
                            &mut gb[i * k * n..],
                            (n, 1),
                        );
                    }
                }
            }
        }
        Op::Add(a, b) => {
            if wants(*a) {
                let ga = accumulate(grads, *a, g.len());
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if wants(*b) {
                let nb = val(*b).numel();
                let gb = accumulate(grads, *b, nb);
                for chunk in g.chunks_exact(nb) {
                    gb.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let nb = tb.numel();
            if wants(*a) {
                let ga = accumulate(grads, *a, g.len());
                for (gc, gac) in g.chunks_exact(nb).zip(ga.chunks_exact_mut(nb)) {
                    for t in 0..nb {
                        gac[t] += gc[t] * tb.data()[t];
                    }
                }
            }
            if wants(*b) {
                let gb = accumulate(grads, *b, nb);
                for (gc, ac) in g.chunks_exact(nb).zip(ta.data().chunks_exact(nb)) {
                    for t in 0..nb {
                        gb[t] += gc[t] * ac[t];
                    }
                }
            }
        }
        Op::Scale(a, f) => {
            let ga = accumulate(grads, *a, g.len());
            ga.iter_mut().zip(g).for_each(|(x, y)| *x += f * y);
        }
        Op::Transpose(a) => {
            let s = node.value.shape();
            // node is [.., c, r] where the input was [.., r, c]
            let (c, r) = (s[s.len() - 2], s[s.len() - 1]);
            let ga = accumulate(grads, *a, g.len());
            for (bi, block) in g.chunks_exact(r * c).enumerate() {
                let dst = &mut ga[bi * r * c..(bi + 1) * r * c];
                for j in 0..c {
                    for i in 0..r {
                        dst[i * c + j] += block[j * r + i];
                    }
                }
            }
        }
        Op::SoftmaxRows(a) => {
            let y = node.value.data();
            let w = node.value.last_dim();
            let ga = accumulate(grads, *a, g.len());
            for ((yr, gr), dst) in y.chunks_exact(w).zip(g.chunks_exact(w)).zip(ga.chunks_exact_mut(w)) {
                let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                for t in 0..w {
                    dst[t] += yr[t] * (gr[t] - dot);
                }
            }
        }
        Op::Dropout(a, mask) => {
            let ga = accumulate(grads, *a, g.len());
            for t in 0..g.len() {
                ga[t] += g[t] * mask[t];
            }
        }
        Op::Mean { input, axis } => {
            let s = val(*input).shape();
            let outer: usize = s[..*axis].iter().product();
            let len = s[*axis];
            let inner: usize = s[axis + 1..].iter().product();
            let inv = 1.0 / len as f64;
            let ga = accumulate(grads, *input, outer * len * inner);
            for o in 0..outer {
                for l in 0..len {
                    let base = (o * len + l) * inner;
                    for i in 0..inner {
                        ga[base + i] += g[o * inner + i] * inv;
                    }
                }
            }
        }
        Op::Sum(a) => {
            let ga = accumulate(grads, *a, val(*a).numel());
            ga.iter_mut().for_each(|x| *x += g[0]);
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        } => {
            let d = val(*gamma).numel();
            let gam = val(*gamma).data();
            if wants(*gamma) {
                let gg = accumulate(grads, *gamma, d);
                for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                    for j in 0..d {
                        gg[j] += gr[j] * hr[j];
                    }
                }
            }
            if wants(*beta) {
                let gb = accumulate(grads, *beta, d);
                for gr in g.chunks_exact(d) {
                    for j in 0..d {
                        gb[j] += gr[j];
                    }
                }
            }
            if wants(*x) {
                let gx = accumulate(grads, *x, g.len());
                let inv_d = 1.0 / d as f64;
                let mut dh = vec![0.0; d];
                for (r, ((gr, hr), dst)) in g
                    .chunks_exact(d)
                    .zip(xhat.chunks_exact(d))
                    .zip(gx.chunks_exact_mut(d))
                    .enumerate()
                {
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        dh[j] = gr[j] * gam[j];
                        sum_dh += dh[j];
                        sum_dh_h += dh[j] * hr[j];
                    }
                    for j in 0..d {
                        dst[j] += rstd[r] * (dh[j] - inv_d * sum_dh - hr[j] * inv_d * sum_dh_h);
                    }
                }
            }
        }
        Op::Relu(a) => {
            let out = node.value.data();
            let ga = accumulate(grads, *a, g.len());
            for t in 0..g.len() {
                if out[t] > 0.0 {
                    ga[t] += g[t];
                }
            }
        }
        Op::CrossEntropy { logits, targets, probs } => {
            let c = val(*logits).last_dim();
            let scale = g[0] / targets.len() as f64;
            let gl = accumulate(grads, *logits, probs.len());
            for (i, &t) in targets.iter().enumerate() {
                for j in 0..c {
                    let onehot = if j == t { 1.0 } else { 0.0 };
                    gl[i * c + j] += scale * (probs[i * c + j] - onehot);
                }
            }
        }
        Op::Embed { x, weight, bias } => {
            let sx = val(*x).shape();
            let (b, m) = (sx[0], sx[1]);
            let d = val(*weight).last_dim();
            let vx = val(*x).data();
            let vw = val(*weight).data();
            if wants(*x) {
                let gx = accumulate(grads, *x, b * m);
                for i in 0..b {
                    for j in 0..m {
                        let gr = &g[(i * m + j) * d..(i * m + j + 1) * d];
                        gx[i * m + j] += gr.iter().zip(&vw[j * d..(j + 1) * d]).map(|(p, q)| p * q).sum::<f64>();
                    }
                }
            }
            if wants(*weight) {
                let gw = accumulate(grads, *weight, m * d);
                for i in 0..b {
                    for j in 0..m {
                        let xv = vx[i * m + j];
                        let gr = &g[(i * m + j) * d..(i * m + j + 1) * d];
                        for t in 0..d {
                            gw[j * d + t] += xv * gr[t];
                        }
                    }
                }
            }
            if wants(*bias) {
                let gb = accumulate(grads, *bias, m * d);
                for chunk in g.chunks_exact(m * d) {
                    gb.iter_mut().zip(chunk).for_each(|(p, q)| *p += q);
                }
            }
        }
        Op::SliceLast { input, start } => {
            let w = val(*input).last_dim();
            let len = node.value.last_dim();
            let ga = accumulate(grads, *input, val(*input).numel());
            for (r, gr) in g.chunks_exact(len).enumerate() {
                for t in 0..len {
                    ga[r * w + start + t] += gr[t];
                }
            }
        }
        Op::ConcatLast(parts) => {
            let total = node.value.last_dim();
            let rows = g.len() / total;
            let mut offset = 0;
            for &p in parts {
                let w = val(p).last_dim();
                if wants(p) {
                    let gp = accumulate(grads, p, rows * w);
                    for r in 0..rows {
                        for t in 0..w {
                            gp[r * w + t] += g[r * total + offset + t];
                        }
                    }
                }
                offset += w;
            }
        }
    }
}

//! Differentiable operations. Every forward method on [`Var`] records one
//! [`Op`]; [`backward`] holds the matching adjoint rules.

mod basic;
pub(crate) mod conv;
mod graph;
mod loss;
pub(crate) mod norm;

use std::rc::Rc;

use crate::real::Real;
use crate::tape::Node;

pub(crate) enum Op<T> {
    Leaf,
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AddChannel { x: usize, b: usize },
    MulChannel { x: usize, s: usize },
    Scale { x: usize, c: T },
    AddScalar { x: usize },
    Relu { x: usize },
    LeakyRelu { x: usize, slope: T },
    Exp { x: usize },
    Log { x: usize },
    Sum { x: usize },
    Mean { x: usize },
    Reshape { x: usize },
    Transpose { x: usize },
    Conv2d { x: usize, w: usize, stride: usize, pad: usize },
    MaxPool { x: usize, argmax: Vec<usize> },
    GlobalAvgPool { x: usize },
    BatchNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    GatherRows { x: usize, idx: Rc<Vec<usize>> },
    ScatterAddRows { x: usize, idx: Rc<Vec<usize>> },
    ScaleRows { x: usize, f: Rc<Vec<T>> },
    NarrowRows { x: usize },
    SegmentSoftmax { x: usize, seg: Rc<Vec<usize>> },
    RepeatCols { x: usize, f: usize },
    SumGroups { x: usize, f: usize },
    ConcatCols { xs: Vec<usize> },
    L2NormalizeRows { x: usize, norms: Vec<T> },
    MaskedLogSoftmaxRows { x: usize, mask: Rc<Vec<bool>> },
    CrossEntropy { logits: usize, labels: Rc<Vec<usize>>, probs: Vec<T> },
    WeightedSum { x: usize, w: Rc<Vec<T>> },
}

impl<T> Op<T> {
    pub fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul { a, b, .. } | Add { a, b } | Sub { a, b } | Mul { a, b } => vec![*a, *b],
            AddChannel { x, b } => vec![*x, *b],
            MulChannel { x, s } => vec![*x, *s],
            Conv2d { x, w, .. } => vec![*x, *w],
            BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            ConcatCols { xs } => xs.clone(),
            CrossEntropy { logits, .. } => vec![*logits],
            Scale { x, .. }
            | AddScalar { x }
            | Relu { x }
            | LeakyRelu { x, .. }
            | Exp { x }
            | Log { x }
            | Sum { x }
            | Mean { x }
            | Reshape { x }
            | Transpose { x }
            | MaxPool { x, .. }
            | GlobalAvgPool { x }
            | GatherRows { x, .. }
            | ScatterAddRows { x, .. }
            | ScaleRows { x, .. }
            | NarrowRows { x }
            | SegmentSoftmax { x, .. }
            | RepeatCols { x, .. }
            | SumGroups { x, .. }
            | L2NormalizeRows { x, .. }
            | MaskedLogSoftmaxRows { x, .. }
            | WeightedSum { x, .. } => vec![*x],
        }
    }
}

/// Applies the adjoint of node `i` given its output gradient `g`, passing each
/// input's contribution to `acc`.
pub(crate) fn backward<T: Real>(
    nodes: &[Node<T>],
    i: usize,
    g: &[T],
    acc: &mut dyn FnMut(usize, Vec<T>),
) {
    let node = &nodes[i];
    let val = |id: usize| &*nodes[id].value;
    let out = &*node.value;
    use Op::*;
    match &node.op {
        Leaf => {}
        MatMul { a, b, ta, tb } => basic::matmul_backward(val(*a), val(*b), *ta, *tb, g, *a, *b, acc),
        Add { a, b } => {
            acc(*a, g.to_vec());
            acc(*b, g.to_vec());
        }
        Sub { a, b } => {
            acc(*a, g.to_vec());
            acc(*b, g.iter().map(|&v| -v).collect());
        }
        Mul { a, b } => {
            let (va, vb) = (val(*a).data(), val(*b).data());
            acc(*a, g.iter().zip(vb).map(|(&g, &y)| g * y).collect());
            acc(*b, g.iter().zip(va).map(|(&g, &x)| g * x).collect());
        }
        AddChannel { x, b } => {
            acc(*x, g.to_vec());
            acc(*b, basic::channel_sums(val(*x).shape(), g, None));
        }
        MulChannel { x, s } => {
            let vx = val(*x);
            let vs = val(*s).data();
            let (c, inner) = basic::channel_layout(vx.shape());
            let dx = g
                .iter()
                .enumerate()
                .map(|(k, &gv)| gv * vs[(k / inner) % c])
                .collect();
            acc(*x, dx);
            acc(*s, basic::channel_sums(vx.shape(), g, Some(vx.data())));
        }
        Scale { x, c } => acc(*x, g.iter().map(|&v| v * *c).collect()),
        AddScalar { x } | Reshape { x } => acc(*x, g.to_vec()),
        Relu { x } => acc(
            *x,
            g.iter()
                .zip(val(*x).data())
                .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                .collect(),
        ),
        LeakyRelu { x, slope } => acc(
            *x,
            g.iter()
                .zip(val(*x).data())
                .map(|(&g, &v)| if v > T::zero() { g } else { g * *slope })
                .collect(),
        ),
        Exp { x } => acc(*x, g.iter().zip(out.data()).map(|(&g, &y)| g * y).collect()),
        Log { x } => acc(*x, g.iter().zip(val(*x).data()).map(|(&g, &v)| g / v).collect()),
        Sum { x } => acc(*x, vec![g[0]; val(*x).numel()]),
        Mean { x } => {
            let n = val(*x).numel();
            acc(*x, vec![g[0] / T::of(n as f64); n]);
        }
        Transpose { x } => {
            let s = out.shape();
            acc(*x, basic::transpose(g, s[0], s[1]));
        }
        Conv2d { x, w, stride, pad } => conv::conv2d_backward(val(*x), val(*w), *stride, *pad, g, *x, *w, acc),
        MaxPool { x, argmax } => {
            let mut dx = vec![T::zero(); val(*x).numel()];
            for (&j, &gv) in argmax.iter().zip(g) {
                dx[j] += gv;
            }
            acc(*x, dx);
        }
        GlobalAvgPool { x } => {
            let s = val(*x).shape();
            let hw = s[2] * s[3];
            let inv = T::one() / T::of(hw as f64);
            let dx = (0..val(*x).numel()).map(|k| g[k / hw] * inv).collect();
            acc(*x, dx);
        }
        BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
            norm::batchnorm_backward(val(*x).shape(), val(*gamma).data(), xhat, inv_std, *train, g, [*x, *gamma, *beta], acc)
        }
        GatherRows { x, idx } => {
            let vx = val(*x);
            let d = vx.numel() / vx.dim(0).max(1);
            acc(*x, graph::scatter_add(g, idx, d, vx.dim(0)));
        }
        ScatterAddRows { x, idx } => {
            let d = out.numel() / out.dim(0).max(1);
            acc(*x, graph::gather(g, idx, d));
        }
        ScaleRows { x, f } => {
            let d = out.numel() / out.dim(0).max(1);
            acc(*x, g.iter().enumerate().map(|(k, &gv)| gv * f[k / d]).collect());
        }
        NarrowRows { x } => {
            let mut dx = vec![T::zero(); val(*x).numel()];
            dx[..g.len()].copy_from_slice(g);
            acc(*x, dx);
        }
        SegmentSoftmax { x, seg } => acc(*x, graph::segment_softmax_backward(out, seg, g)),
        RepeatCols { x, f } => acc(*x, graph::sum_groups(g, *f)),
        SumGroups { x, f } => acc(*x, graph::repeat_cols(g, *f)),
        ConcatCols { xs } => {
            let rows = out.dim(0);
            let total = out.dim(1);
            let mut off = 0;
            for &id in xs {
                let w = val(id).dim(1);
                let mut dx = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    dx.extend_from_slice(&g[r * total + off..r * total + off + w]);
                }
                off += w;
                acc(id, dx);
            }
        }
        L2NormalizeRows { x, norms } => acc(*x, loss::l2_normalize_backward(out, norms, g)),
        MaskedLogSoftmaxRows { x, mask } => acc(*x, loss::masked_log_softmax_backward(out, mask, g)),
        CrossEntropy { logits, labels, probs } => {
            let c = val(*logits).dim(1);
            let m = labels.len();
            let scale = g[0] / T::of(m as f64);
            let mut dx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
            for (r, &l) in labels.iter().enumerate() {
                dx[r * c + l] -= scale;
            }
            acc(*logits, dx);
        }
        WeightedSum { x, w } => acc(*x, w.iter().map(|&w| w * g[0]).collect()),
    }
}

use std::rc::Rc;

use rand::Rng;

use cyto_autodiff::layers::{dropout, he_normal, Linear};
use cyto_autodiff::{ParamId, ParamStore, Real, Session, Tensor, Var};

use super::batch::LayerEdges;
use crate::error::{Error, Result};

fn check_rows<T: Real>(h: &Var<'_, T>, e: &LayerEdges, din: usize, what: &str) -> Result<()> {
    let s = h.shape();
    if s.len() != 2 || s[0] != e.inputs || s[1] != din {
        return Err(Error::Input(format!("{what} expects [{}, {din}] input, got {s:?}", e.inputs)));
    }
    Ok(())
}

/// Mean-aggregation GraphSAGE layer:
/// `h'_t = W_self h_t + W_neigh mean_{s in N(t)} h_s + b`; the mean over an
/// empty neighbourhood is zero.
#[derive(Clone, Debug)]
pub struct SageLayer {
    pub din: usize,
    pub dout: usize,
    pub w_self: Linear,
    pub w_neigh: Linear,
}

impl SageLayer {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        Self {
            din,
            dout,
            w_self: Linear::new(store, &format!("{name}.self"), din, dout, true, rng),
            w_neigh: Linear::new(store, &format!("{name}.neigh"), din, dout, false, rng),
        }
    }

    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, h: Var<'a, T>, e: &LayerEdges) -> Result<Var<'a, T>> {
        check_rows(&h, e, self.din, "SAGE layer")?;
        let own = self.w_self.forward(sess, h.narrow_rows(e.targets)?)?;
        if e.dst.is_empty() {
            return Ok(own);
        }
        let inv: Vec<T> = e.inv_degree.iter().map(|&v| T::of(v)).collect();
        let mean = h.gather_rows(Rc::clone(&e.src))?.scatter_add_rows(Rc::clone(&e.dst), e.targets)?.scale_rows(Rc::new(inv))?;
        Ok(own.add(&self.w_neigh.forward(sess, mean)?)?)
    }
}

/// Multi-head graph attention layer with concatenated heads. For target `t`
/// and head `k`, `alpha_ts = softmax_s(LeakyReLU(a_dst.W h_t + a_src.W h_s))`
/// over the incoming edges (the batch supplies a self-loop), and
/// `h'_t = concat_k sum_s alpha_ts W_k h_s + b`.
#[derive(Clone, Debug)]
pub struct GatLayer {
    pub din: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub w: Linear,
    pub a_src: ParamId,
    pub a_dst: ParamId,
    pub bias: ParamId,
    pub attention_dropout: f64,
}

impl GatLayer {
    pub const SLOPE: f64 = 0.2;

    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        din: usize,
        heads: usize,
        head_dim: usize,
        attention_dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let hf = heads * head_dim;
        let w = Linear::new(store, &format!("{name}.weight"), din, hf, false, rng);
        let a_src = store.add(format!("{name}.att_src"), he_normal(&[hf], head_dim, rng), true);
        let a_dst = store.add(format!("{name}.att_dst"), he_normal(&[hf], head_dim, rng), true);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[hf]), true);
        Self { din, heads, head_dim, w, a_src, a_dst, bias, attention_dropout }
    }

    pub fn dout(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Attention coefficients `[edges, heads]` (before dropout) and the
    /// transformed inputs `W h`.
    pub fn attention<'a, T: Real>(&self, sess: &'a Session<'_, T>, h: Var<'a, T>, e: &LayerEdges) -> Result<(Var<'a, T>, Var<'a, T>)> {
        check_rows(&h, e, self.din, "GAT layer")?;
        let wh = self.w.forward(sess, h)?;
        let s_src = wh.mul_channel(&sess.param(self.a_src))?.sum_groups(self.head_dim)?;
        let s_dst = wh.narrow_rows(e.targets)?.mul_channel(&sess.param(self.a_dst))?.sum_groups(self.head_dim)?;
        let score = s_dst.gather_rows(Rc::clone(&e.dst))?.add(&s_src.gather_rows(Rc::clone(&e.src))?)?;
        let alpha = score.leaky_relu(T::of(Self::SLOPE)).segment_softmax(Rc::clone(&e.dst))?;
        Ok((alpha, wh))
    }

    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, h: Var<'a, T>, e: &LayerEdges) -> Result<Var<'a, T>> {
        let (alpha, wh) = self.attention(sess, h, e)?;
        let alpha = dropout(sess, alpha, self.attention_dropout)?;
        let msg = wh.gather_rows(Rc::clone(&e.src))?.mul(&alpha.repeat_cols(self.head_dim)?)?;
        Ok(msg.scatter_add_rows(Rc::clone(&e.dst), e.targets)?.add_channel(&sess.param(self.bias))?)
    }
}

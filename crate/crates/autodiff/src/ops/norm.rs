use crate::error::{shape_err, Result};
use crate::ops::basic::channel_layout;
use crate::ops::Op;
use crate::real::Real;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Normalization statistics source for [`Var::batch_norm`].
pub enum NormStats<'a, T> {
    /// Use statistics of the current batch.
    Batch,
    /// Use fixed (running) statistics.
    Fixed { mean: &'a [T], var: &'a [T] },
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_backward<T: Real>(
    shape: &[usize],
    gamma: &[T],
    xhat: &[T],
    inv_std: &[T],
    train: bool,
    g: &[T],
    [ix, igamma, ibeta]: [usize; 3],
    acc: &mut dyn FnMut(usize, Vec<T>),
) {
    let (c, inner) = channel_layout(shape);
    let m = T::of((shape[0] * inner) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (k, &gv) in g.iter().enumerate() {
        let ch = (k / inner) % c;
        dgamma[ch] += gv * xhat[k];
        dbeta[ch] += gv;
    }
    let dx = g
        .iter()
        .enumerate()
        .map(|(k, &gv)| {
            let ch = (k / inner) % c;
            if train {
                // d/dx of gamma * (x - mu) / sigma with batch mu, sigma.
                gamma[ch] * inv_std[ch] / m * (m * gv - dbeta[ch] - xhat[k] * dgamma[ch])
            } else {
                gv * gamma[ch] * inv_std[ch]
            }
        })
        .collect();
    acc(ix, dx);
    acc(igamma, dgamma);
    acc(ibeta, dbeta);
}

impl<'t, T: Real> Var<'t, T> {
    /// Per-channel normalization over every axis except dimension 1, followed
    /// by the affine map `gamma * xhat + beta`.
    ///
    /// Returns the output together with the batch mean and unbiased batch
    /// variance when `stats` is [`NormStats::Batch`].
    pub fn batch_norm(
        &self,
        gamma: &Var<'t, T>,
        beta: &Var<'t, T>,
        stats: NormStats<'_, T>,
        eps: T,
    ) -> Result<(Var<'t, T>, Option<(Vec<T>, Vec<T>)>)> {
        let x = self.value();
        let sh = x.shape().to_vec();
        if sh.len() < 2 {
            return shape_err("batch_norm", format!("input must be at least 2-D, got {sh:?}"));
        }
        let (c, inner) = channel_layout(&sh);
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if v.shape() != [c] {
                return shape_err("batch_norm", format!("{name} shape {:?} does not match {c} channels", v.shape()));
            }
        }
        let count = sh[0] * inner;
        let (mean, var, batch) = match stats {
            NormStats::Batch => {
                if count < 2 {
                    return shape_err("batch_norm", "training statistics need at least 2 values per channel");
                }
                let mut mean = vec![0.0f64; c];
                for (k, &v) in x.data().iter().enumerate() {
                    mean[(k / inner) % c] += v.as_f64();
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                let mut var = vec![0.0f64; c];
                for (k, &v) in x.data().iter().enumerate() {
                    let ch = (k / inner) % c;
                    let d = v.as_f64() - mean[ch];
                    var[ch] += d * d;
                }
                let biased: Vec<f64> = var.iter().map(|v| v / count as f64).collect();
                let unbiased: Vec<T> = var.iter().map(|v| T::of(v / (count - 1) as f64)).collect();
                let mean_t: Vec<T> = mean.iter().map(|&m| T::of(m)).collect();
                (mean, biased, Some((mean_t, unbiased)))
            }
            NormStats::Fixed { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return shape_err("batch_norm", format!("running statistics length vs {c} channels"));
                }
                (mean.iter().map(|v| v.as_f64()).collect(), var.iter().map(|v| v.as_f64()).collect(), None)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::of(1.0 / (v + eps.as_f64()).sqrt())).collect();
        let (gv, bv) = (gamma.value(), beta.value());
        let mut xhat = Vec::with_capacity(x.numel());
        let mut out = Vec::with_capacity(x.numel());
        for (k, &v) in x.data().iter().enumerate() {
            let ch = (k / inner) % c;
            let xh = T::of((v.as_f64() - mean[ch]) * inv_std[ch].as_f64());
            xhat.push(xh);
            out.push(gv.data()[ch] * xh + bv.data()[ch]);
        }
        let train = batch.is_some();
        let op = Op::BatchNorm { x: self.id, gamma: gamma.id, beta: beta.id, xhat, inv_std, train };
        Ok((self.tape.push(Tensor::new(sh, out)?, op), batch))
    }
}

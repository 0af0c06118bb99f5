//! Central finite-difference gradient checking.
//!
//! The checked function maps a session and its input variables to any tensor;
//! it is reduced to a scalar with fixed random weights so every output element
//! contributes. Each perturbed evaluation reuses the same session seed, so
//! stochastic layers draw identical masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::ParamStore;
use crate::session::{Mode, Session};
use crate::tape::Var;
use crate::tensor::Tensor;
use std::rc::Rc;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    /// Which element produced the largest error.
    pub worst: String,
    pub checked: usize,
}

pub const DEFAULT_FLOOR: f64 = 1e-2;

pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn scalarize<'a>(out: Var<'a, f64>, weights: &Rc<Vec<f64>>) -> Result<Var<'a, f64>> {
    out.weighted_sum(Rc::clone(weights))
}

/// Checks gradients of `f` with respect to every trainable parameter in
/// `store` and every tensor in `inputs`.
pub fn check<F>(store: &ParamStore<f64>, inputs: &[Tensor<f64>], mode: Mode, seed: u64, h: f64, floor: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&'a Session<'_, f64>, &[Var<'a, f64>]) -> Result<Var<'a, f64>>,
{
    // Output weights, sized on a first evaluation.
    let probe = Session::new(store, mode, seed);
    let vars: Vec<_> = inputs.iter().map(|t| probe.variable(t.clone())).collect();
    let out = f(&probe, &vars)?;
    let n_out = out.value().numel();
    let mut wrng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let weights = Rc::new((0..n_out).map(|_| wrng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
    let loss = scalarize(out, &weights)?;
    let grads = probe.backward(loss)?;

    let eval = |store: &ParamStore<f64>, inputs: &[Tensor<f64>]| -> Result<f64> {
        let sess = Session::new(store, mode, seed);
        let vars: Vec<_> = inputs.iter().map(|t| sess.input(t.clone())).collect();
        let out = f(&sess, &vars)?;
        Ok(scalarize(out, &weights)?.value().item())
    };

    let mut report = GradCheckReport { max_rel_err: 0.0, worst: String::new(), checked: 0 };
    let mut note = |a: f64, n: f64, what: String| {
        let e = rel_err(a, n, floor);
        report.checked += 1;
        if e > report.max_rel_err || report.worst.is_empty() {
            report.max_rel_err = e;
            report.worst = format!("{what}: analytic {a:.6e} numeric {n:.6e}");
        }
    };

    let mut work = store.clone();
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let analytic = grads.get(id).cloned().unwrap_or_else(|| Tensor::zeros(store.value(id).shape()));
        for k in 0..store.value(id).numel() {
            let orig = work.value(id).data()[k];
            work.get_mut(id).value.data_mut()[k] = orig + h;
            let up = eval(&work, inputs)?;
            work.get_mut(id).value.data_mut()[k] = orig - h;
            let down = eval(&work, inputs)?;
            work.get_mut(id).value.data_mut()[k] = orig;
            note(analytic.data()[k], (up - down) / (2.0 * h), format!("{}[{k}]", store.get(id).name));
        }
    }

    let mut xs = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v);
        for k in 0..inputs[i].numel() {
            let orig = xs[i].data()[k];
            xs[i].data_mut()[k] = orig + h;
            let up = eval(store, &xs)?;
            xs[i].data_mut()[k] = orig - h;
            let down = eval(store, &xs)?;
            xs[i].data_mut()[k] = orig;
            note(analytic.data()[k], (up - down) / (2.0 * h), format!("input{i}[{k}]"));
        }
    }
    Ok(report)
}

use std::rc::Rc;

use cyto_autodiff::{Real, Var};

use crate::error::{Error, Result};

/// Largest tolerated deviation of an input row norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-3;

/// Supervised contrastive loss over a batch of unit-norm projections `z: [N, D]`.
///
/// For anchor `i` with positives `P(i) = {p != i : y_p = y_i}` the term is
/// `-1/|P(i)| * sum_p log(exp(z_i.z_p/tau) / sum_{a != i} exp(z_i.z_a/tau))`,
/// averaged over the batch. Anchors without positives contribute zero.
pub fn supcon_loss<'a, T: Real>(z: Var<'a, T>, labels: &[usize], tau: f64) -> Result<Var<'a, T>> {
    let shape = z.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::Input(format!("projections {shape:?} do not match {} labels", labels.len())));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::Input("contrastive loss needs at least two samples".into()));
    }
    {
        let zv = z.value();
        for i in 0..n {
            let norm = zv.row(i).iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::Input(format!("projection {i} has norm {norm}, expected unit norm")));
            }
        }
    }
    let sim = z.matmul_t(&z, false, true)?.scale(T::of(1.0 / tau));
    let mask: Vec<bool> = (0..n * n).map(|k| k / n != k % n).collect();
    let logp = sim.masked_log_softmax_rows(Rc::new(mask))?;
    let mut w = vec![T::zero(); n * n];
    for i in 0..n {
        let pos = (0..n).filter(|&j| j != i && labels[j] == labels[i]).count();
        if pos == 0 {
            continue;
        }
        let wi = T::of(-1.0 / (pos as f64 * n as f64));
        for j in (0..n).filter(|&j| j != i && labels[j] == labels[i]) {
            w[i * n + j] = wi;
        }
    }
    Ok(logp.weighted_sum(Rc::new(w))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cyto_autodiff::{Mode, ParamStore, Session, Tensor};

    fn eval(z: &[f64], d: usize, labels: &[usize], tau: f64) -> Result<f64> {
        let store = ParamStore::<f64>::new();
        let sess = Session::new(&store, Mode::Eval, 0);
        let zv = sess.input(Tensor::from_f64(&[labels.len(), d], z).unwrap());
        Ok(supcon_loss(zv, labels, tau)?.value().item())
    }

    fn oracle(z: &[f64], d: usize, labels: &[usize], tau: f64) -> f64 {
        let n = labels.len();
        let dot = |i: usize, j: usize| (0..d).map(|k| z[i * d + k] * z[j * d + k]).sum::<f64>() / tau;
        let mut total = 0.0;
        for i in 0..n {
            let denom: f64 = (0..n).filter(|&a| a != i).map(|a| dot(i, a).exp()).sum();
            let pos: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
            if pos.is_empty() {
                continue;
            }
            let s: f64 = pos.iter().map(|&p| (dot(i, p).exp() / denom).ln()).sum();
            total += -s / pos.len() as f64;
        }
        total / n as f64
    }

    fn unit_rows(n: usize, d: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut z: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for r in z.chunks_mut(d) {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter_mut().for_each(|v| *v /= norm);
        }
        z
    }

    #[test]
    fn pair_of_same_class_has_zero_loss() {
        // Each anchor's only candidate is its positive: log(1) = 0.
        let z = [1.0, 0.0, 0.0, 1.0];
        assert!(eval(&z, 2, &[3, 3], 0.07).unwrap().abs() < 1e-12);
        let z = [1.0, 0.0, 1.0, 0.0];
        assert!(eval(&z, 2, &[3, 3], 0.5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pair_of_distinct_classes_has_zero_loss() {
        let z = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(eval(&z, 2, &[0, 1], 0.07).unwrap(), 0.0);
    }

    #[test]
    fn matches_double_loop_oracle() {
        let labels = [0, 1, 0, 2, 1, 1, 0, 3];
        let z = unit_rows(8, 5, 11);
        for tau in [0.07, 0.5, 1.0] {
            let got = eval(&z, 5, &labels, tau).unwrap();
            let want = oracle(&z, 5, &labels, tau);
            assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "tau {tau}: {got} vs {want}");
        }
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let z = [2.0, 0.0, 0.0, 1.0];
        let err = eval(&z, 2, &[0, 0], 0.1).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn rejects_shape_mismatch_and_tiny_batches() {
        assert!(eval(&[1.0, 0.0], 2, &[0], 0.1).is_err());
        let store = ParamStore::<f64>::new();
        let sess = Session::new(&store, Mode::Eval, 0);
        let zv = sess.input(Tensor::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap());
        assert!(supcon_loss(zv, &[0, 0, 0], 0.1).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let labels = [0, 1, 0, 2, 1, 0];
        let z = unit_rows(6, 3, 5);
        let store = ParamStore::<f64>::new();
        let x = Tensor::from_f64(&[6, 3], &z).unwrap();
        let report = cyto_autodiff::gradcheck::check(&store, &[x], Mode::Eval, 0, 1e-6, 1e-6, |_, v| {
            supcon_loss(v[0], &labels, 0.2).map_err(|e| cyto_autodiff::AutodiffError::InvalidSpec(e.to_string()))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn same_label_pair_is_zero_for_any_tau() {
        let z = unit_rows(2, 3, 9);
        for tau in [0.01, 0.07, 1.0, 10.0] {
            assert!(eval(&z, 3, &[1, 1], tau).unwrap().abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..1000, rot in 1usize..7) {
            let n = 7;
            let d = 4;
            let labels: Vec<usize> = (0..n).map(|i| (i * 5 + seed as usize) % 3).collect();
            let z = unit_rows(n, d, seed);
            let perm: Vec<usize> = (0..n).map(|i| (i * 3 + rot) % n).collect();
            let pz: Vec<f64> = perm.iter().flat_map(|&p| z[p * d..(p + 1) * d].to_vec()).collect();
            let pl: Vec<usize> = perm.iter().map(|&p| labels[p]).collect();
            let a = eval(&z, d, &labels, 0.1).unwrap();
            let b = eval(&pz, d, &pl, 0.1).unwrap();
            proptest::prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }
}

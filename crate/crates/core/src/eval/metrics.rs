use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: u32,
    /// True count.
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub samples: u64,
    /// Mean F1 over the classes present in the true labels.
    pub macro_f1: f64,
    pub accuracy: f64,
    pub classes: Vec<ClassScore>,
    /// `confusion[t][p]` counts samples of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<u64>>,
}

/// Per-class and macro-averaged F1. A class with no true positives has
/// F1 = 0; classes absent from `truth` do not enter the average.
pub fn macro_f1(truth: &[u32], pred: &[u32], num_classes: usize) -> Result<EvalResult> {
    if truth.len() != pred.len() {
        return Err(Error::Input(format!("{} true labels but {} predictions", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(Error::Input("cannot score an empty label set".into()));
    }
    if let Some(&bad) = truth.iter().chain(pred).find(|&&c| c as usize >= num_classes) {
        return Err(Error::Input(format!("label {bad} outside {num_classes} classes")));
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t as usize][p as usize] += 1;
    }
    let mut classes = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (precision, recall) = (ratio(tp, predicted), ratio(tp, support));
        let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (support + predicted) as f64 };
        classes.push(ClassScore { class: c as u32, support, predicted, precision, recall, f1 });
    }
    let present: Vec<&ClassScore> = classes.iter().filter(|c| c.support > 0).collect();
    let macro_f1 = present.iter().map(|c| c.f1).sum::<f64>() / present.len() as f64;
    let correct: u64 = (0..num_classes).map(|c| confusion[c][c]).sum();
    Ok(EvalResult { samples: truth.len() as u64, macro_f1, accuracy: correct as f64 / truth.len() as f64, classes, confusion })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let r = macro_f1(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert!((r.classes[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.classes[1].f1 - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - 11.0 / 15.0).abs() < 1e-12);
        let r = macro_f1(&[0, 0, 1, 1], &[1, 1, 1, 1], 2).unwrap();
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
        let r = macro_f1(&[3, 1, 4, 1, 5], &[3, 1, 4, 1, 5], 6).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(macro_f1(&[], &[], 2).is_err());
        assert!(macro_f1(&[0], &[0, 1], 2).is_err());
        assert!(macro_f1(&[0], &[2], 2).is_err());
    }

    #[test]
    fn confusion_rows_sum_to_support() {
        let t = [0, 1, 2, 2, 1, 0, 0];
        let p = [1, 1, 2, 0, 1, 0, 2];
        let r = macro_f1(&t, &p, 4).unwrap();
        for c in &r.classes {
            assert_eq!(r.confusion[c.class as usize].iter().sum::<u64>(), c.support);
        }
        assert_eq!(r.confusion.iter().flatten().sum::<u64>(), 7);
        let mean = r.classes.iter().filter(|c| c.support > 0).map(|c| c.f1).sum::<f64>() / 3.0;
        assert!((r.macro_f1 - mean).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn invariant_under_relabeling(pairs in proptest::collection::vec((0u32..5, 0u32..5), 1..60), shift in 1u32..5) {
            let (t, p): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
            let relabel = |v: &[u32]| v.iter().map(|&c| (c * 3 + shift) % 5).collect::<Vec<_>>();
            let a = macro_f1(&t, &p, 5).unwrap().macro_f1;
            let b = macro_f1(&relabel(&t), &relabel(&p), 5).unwrap().macro_f1;
            proptest::prop_assert!((a - b).abs() < 1e-12);
            proptest::prop_assert_eq!(macro_f1(&t, &t, 5).unwrap().macro_f1, 1.0);
        }
    }
}

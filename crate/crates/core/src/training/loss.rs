use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{HeadGrads, HeadOutputs, Real};

/// Loss value of one utterance, split into its terms. Unused terms are 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mag0: f64,
    pub mag1: f64,
    pub ce: f64,
}

impl LossParts {
    pub fn add_scaled(&mut self, other: &LossParts, scale: f64) {
        self.total += other.total * scale;
        self.mag0 += other.mag0 * scale;
        self.mag1 += other.mag1 * scale;
        self.ce += other.ce * scale;
    }
}

fn l2_term<T: Real>(pred: &[T], target: &[T], what: &str) -> Result<(f64, Vec<T>)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{what}: prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = *p - *t;
            loss += e.as_f64() * e.as_f64();
            e + e
        })
        .collect();
    Ok((loss, grad))
}

/// Numerically stable softmax of one row, in f64.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Frame-summed squared magnitude error plus frame-summed cross-entropy of
/// the DOA logits against `class`.
pub fn task1_loss<T: Real>(out: &HeadOutputs<T>, mag_true: &[T], class: usize) -> Result<(LossParts, HeadGrads<T>)> {
    let logits = out
        .doa_logits
        .as_ref()
        .ok_or_else(|| Error::Shape("task-1 loss needs DOA logits".into()))?;
    let classes = logits.len() / out.frames.max(1);
    if class >= classes {
        return Err(Error::ClassOutOfRange { label: class, classes });
    }
    let (mag, dmag) = l2_term(&out.mag0, mag_true, "task-1 magnitude")?;
    let mut ce = 0.0;
    let mut dlogits = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let row64: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        let p = softmax(&row64);
        ce -= p[class].max(f64::MIN_POSITIVE).ln();
        for (k, pk) in p.iter().enumerate() {
            dlogits.push(T::cast(if k == class { pk - 1.0 } else { *pk }));
        }
    }
    Ok((
        LossParts {
            total: mag + ce,
            mag0: mag,
            mag1: 0.0,
            ce,
        },
        HeadGrads {
            mag0: Some(dmag),
            mag1: None,
            doa_logits: Some(dlogits),
        },
    ))
}

/// Frame-summed squared error of both magnitude heads against their fixed
/// targets: head 0 is the target speaker, head 1 the interferer.
pub fn task2_loss<T: Real>(out: &HeadOutputs<T>, mag0_true: &[T], mag1_true: &[T]) -> Result<(LossParts, HeadGrads<T>)> {
    let mag1 = out
        .mag1
        .as_ref()
        .ok_or_else(|| Error::Shape("task-2 loss needs the second magnitude head".into()))?;
    let (l0, d0) = l2_term(&out.mag0, mag0_true, "task-2 head 0")?;
    let (l1, d1) = l2_term(mag1, mag1_true, "task-2 head 1")?;
    Ok((
        LossParts {
            total: l0 + l1,
            mag0: l0,
            mag1: l1,
            ce: 0.0,
        },
        HeadGrads {
            mag0: Some(d0),
            mag1: Some(d1),
            doa_logits: None,
        },
    ))
}

/// Majority vote over per-frame argmax classes; ties go to the smallest
/// class, as does the argmax within a frame.
pub fn doa_vote<T: Real>(logits: &[T], classes: usize) -> Result<usize> {
    if classes == 0 || logits.is_empty() || logits.len() % classes != 0 {
        return Err(Error::Shape(format!(
            "doa_vote: {} logits do not form rows of {classes}",
            logits.len()
        )));
    }
    let mut votes = vec![0usize; classes];
    for row in logits.chunks(classes) {
        votes[argmax(row)] += 1;
    }
    Ok(argmax(&votes))
}

/// Index of the first maximum.
pub fn argmax<V: PartialOrd + Copy>(row: &[V]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outputs(frames: usize, mag: Vec<f64>, logits: Vec<f64>) -> HeadOutputs<f64> {
        HeadOutputs {
            frames,
            mag0: mag,
            mag1: None,
            doa_logits: Some(logits),
        }
    }

    #[test]
    fn uniform_posterior_costs_ln72_per_frame() {
        let out = outputs(4, vec![0.5; 8], vec![0.0; 4 * 72]);
        let (l, _) = task1_loss(&out, &[0.5; 8], 7).unwrap();
        assert!((l.total - 4.0 * 72f64.ln()).abs() < 1e-12);
        assert_eq!(l.mag0, 0.0);
    }

    #[test]
    fn confident_correct_logits_cost_nearly_nothing() {
        let mut logits = vec![0.0; 2 * 72];
        logits[5] = 60.0;
        logits[72 + 5] = 60.0;
        let out = outputs(2, vec![1.0; 4], logits);
        let (l, _) = task1_loss(&out, &[1.0; 4], 5).unwrap();
        assert!(l.total < 1e-20);
    }

    #[test]
    fn doubling_magnitude_error_quadruples_l2() {
        let target = vec![0.0; 6];
        let a = outputs(1, vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.1], vec![0.0; 72]);
        let b = outputs(1, a.mag0.iter().map(|v| v * 2.0).collect(), vec![0.0; 72]);
        let la = task1_loss(&a, &target, 0).unwrap().0.mag0;
        let lb = task1_loss(&b, &target, 0).unwrap().0.mag0;
        assert!((lb - 4.0 * la).abs() < 1e-12);
    }

    #[test]
    fn class_out_of_range_is_rejected() {
        let out = outputs(1, vec![0.0], vec![0.0; 72]);
        assert!(matches!(
            task1_loss(&out, &[0.0], 72),
            Err(Error::ClassOutOfRange { label: 72, classes: 72 })
        ));
    }

    #[test]
    fn task2_fixed_assignment() {
        let t0 = vec![1.0, 2.0, 3.0];
        let t1 = vec![-1.0, 0.5, 0.0];
        let perfect = HeadOutputs {
            frames: 1,
            mag0: t0.clone(),
            mag1: Some(t1.clone()),
            doa_logits: None,
        };
        assert_eq!(task2_loss(&perfect, &t0, &t1).unwrap().0.total, 0.0);
        let swapped = HeadOutputs {
            frames: 1,
            mag0: t1.clone(),
            mag1: Some(t0.clone()),
            doa_logits: None,
        };
        let (l, _) = task2_loss(&swapped, &t0, &t1).unwrap();
        assert!(l.total > 0.0);
        assert_eq!(l.total, l.mag0 + l.mag1);
    }

    #[test]
    fn vote_examples() {
        let onehot = |c: usize| {
            let mut r = vec![0.0f64; 72];
            r[c] = 1.0;
            r
        };
        let rows: Vec<f64> = [3, 3, 7].iter().flat_map(|&c| onehot(c)).collect();
        assert_eq!(doa_vote(&rows, 72).unwrap(), 3);
        assert_eq!(doa_vote(&onehot(9), 72).unwrap(), 9);
        let tie: Vec<f64> = [9, 2].iter().flat_map(|&c| onehot(c)).collect();
        assert_eq!(doa_vote(&tie, 72).unwrap(), 2);
        // monotone per-frame transform keeps the vote
        let squashed: Vec<f64> = rows.iter().map(|v| (3.0 * v).tanh() - 4.0).collect();
        assert_eq!(doa_vote(&squashed, 72).unwrap(), 3);
        assert!(doa_vote::<f64>(&[], 72).is_err());
    }
}

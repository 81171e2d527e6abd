//! Cross-entropy and teacher-to-student KL divergence on logits.
//!
//! Losses are batch means in nats, computed in f64; gradients are returned
//! w.r.t. the logits in the network's element type.

use ndarray::Array2;

use crate::error::{A3dError, Result};
use crate::nn::ops::{log_softmax_rows, softmax_rows};
use crate::real::Real;

fn check_labels(rows: usize, classes: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != rows {
        return Err(A3dError::Shape(format!("{rows} logit rows but {} labels", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(A3dError::Invalid(format!("label {l} outside [0, {classes})")));
    }
    Ok(())
}

/// Mean `−log softmax(z)[y]` and its gradient `(p − onehot) / B`.
pub fn cross_entropy<T: Real>(logits: &Array2<T>, labels: &[usize]) -> Result<(f64, Array2<T>)> {
    let (b, k) = logits.dim();
    check_labels(b, k, labels)?;
    let logp = log_softmax_rows(logits);
    let loss = labels.iter().enumerate().map(|(i, &y)| -logp[[i, y]]).sum::<f64>() / b as f64;
    let mut grad = logp.mapv(f64::exp);
    for (i, &y) in labels.iter().enumerate() {
        grad[[i, y]] -= 1.0;
    }
    Ok((loss, grad.mapv(|g| T::of(g / b as f64))))
}

/// Mean `KL(softmax(teacher) ‖ softmax(student))` and its gradient w.r.t. the
/// student logits, `(q − p) / B`. The teacher receives no gradient.
pub fn kl_divergence<T: Real>(teacher: &Array2<T>, student: &Array2<T>) -> Result<(f64, Array2<T>)> {
    if teacher.dim() != student.dim() {
        return Err(A3dError::Shape(format!(
            "teacher logits {:?} vs student logits {:?}",
            teacher.dim(),
            student.dim()
        )));
    }
    let b = teacher.nrows() as f64;
    let (logp, logq) = (log_softmax_rows(teacher), log_softmax_rows(student));
    let p = softmax_rows(teacher);
    let loss = (&p * &(&logp - &logq)).sum() / b;
    let grad = (softmax_rows(student) - &p).mapv(|g| T::of(g / b));
    Ok((loss.max(0.0), grad))
}

/// Spatial-temporal distillation loss: CE of the full network plus one KL term
/// per sub-network against the detached full-network distribution.
#[derive(Debug, Clone)]
pub struct StdLoss<T> {
    pub total: f64,
    pub ce: f64,
    pub kl: Vec<f64>,
    pub d_full: Array2<T>,
    pub d_subs: Vec<Array2<T>>,
}

pub fn std_loss<T: Real>(full: &Array2<T>, subs: &[Array2<T>], labels: &[usize]) -> Result<StdLoss<T>> {
    let (ce, d_full) = cross_entropy(full, labels)?;
    let mut kl = Vec::with_capacity(subs.len());
    let mut d_subs = Vec::with_capacity(subs.len());
    for s in subs {
        let (l, d) = kl_divergence(full, s)?;
        kl.push(l);
        d_subs.push(d);
    }
    let total = ce + kl.iter().sum::<f64>();
    if !total.is_finite() {
        return Err(A3dError::NonFiniteLoss(format!("ce = {ce}, kl = {kl:?}")));
    }
    Ok(StdLoss {
        total,
        ce,
        kl,
        d_full,
        d_subs,
    })
}

/// Number of rows whose true label is among the `k` largest logits.
pub fn top_k_correct<T: Real>(logits: &Array2<T>, labels: &[usize], k: usize) -> usize {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| {
            let target = row[y];
            let above = row.iter().enumerate().filter(|&(j, &v)| v > target || (v == target && j < y)).count();
            above < k
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn equal_logits_give_zero_kl() {
        let z = array![[0.3, -1.2, 2.0], [1.0, 1.0, 0.5]];
        let l = std_loss(&z, &[z.clone(), z.clone()], &[2, 0]).unwrap();
        assert_eq!(l.kl, vec![0.0, 0.0]);
        assert_eq!(l.total, l.ce);
        assert!(l.d_subs.iter().all(|d| d.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn uniform_teacher_matches_direct_sum() {
        let teacher = array![[0.0, 0.0, 0.0, 0.0]];
        let student = array![[3.0, 0.0, 0.0, 0.0]];
        let (kl, _) = kl_divergence(&teacher, &student).unwrap();
        let z: f64 = 3f64.exp() + 3.0;
        let q = [3f64.exp() / z, 1.0 / z, 1.0 / z, 1.0 / z];
        let direct: f64 = q.iter().map(|qi| 0.25 * (0.25f64.ln() - qi.ln())).sum();
        assert!((kl - direct).abs() < 1e-12);
    }

    #[test]
    fn empty_sub_list_is_plain_ce() {
        let z = array![[0.5, 0.1], [0.0, 2.0]];
        let l = std_loss(&z, &[], &[0, 1]).unwrap();
        let (ce, _) = cross_entropy(&z, &[0, 1]).unwrap();
        assert_eq!(l.total, ce);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let z = array![[0.2, -0.4, 1.1], [0.7, 0.3, -0.9]];
        let t = array![[1.0, 0.0, -1.0], [0.2, 0.2, 0.9]];
        let labels = [1, 2];
        let (_, gce) = cross_entropy(&z, &labels).unwrap();
        let (_, gkl) = kl_divergence(&t, &z).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut a = z.clone();
                let mut b = z.clone();
                a[[i, j]] += h;
                b[[i, j]] -= h;
                let fce = (cross_entropy(&a, &labels).unwrap().0 - cross_entropy(&b, &labels).unwrap().0) / (2.0 * h);
                let fkl = (kl_divergence(&t, &a).unwrap().0 - kl_divergence(&t, &b).unwrap().0) / (2.0 * h);
                assert!((fce - gce[[i, j]]).abs() < 1e-7);
                assert!((fkl - gkl[[i, j]]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        let z = array![[0.0, 1.0]];
        assert!(cross_entropy(&z, &[2]).is_err());
        assert!(cross_entropy(&z, &[0, 1]).is_err());
        assert!(kl_divergence(&z, &array![[0.0, 1.0, 2.0]]).is_err());
    }

    #[test]
    fn top_k_counts() {
        let z = array![[0.1, 0.9, 0.5], [0.8, 0.1, 0.2]];
        assert_eq!(top_k_correct(&z, &[1, 2], 1), 1);
        assert_eq!(top_k_correct(&z, &[1, 2], 2), 2);
    }
}

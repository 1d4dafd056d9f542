//! Scalar training objectives with gradients on the student logits.
//!
//! Four losses cover every training strategy:
//!
//! - `classification_loss` — softmax cross-entropy against one-hot labels;
//! - `distillation_loss` — cross-entropy between temperature-softened
//!   teacher and student distributions (teacher treated as a constant);
//! - `flwf_loss` — `alpha * classification + (1 - alpha) * distillation`
//!   against the client's previous-round model;
//! - `flwf2t_loss` — three-term combination adding the server model as a
//!   second teacher with weight `1 - alpha - beta`.
//!
//! Values are means over the batch, so the learning rate is independent of
//! batch size (per-example sums would just rescale every loss by the batch
//! size). Log-probabilities are computed with the max-subtraction identity,
//! which keeps all losses invariant to a constant shift of a logit row.

use crate::error::{Error, Result};
use crate::nn::{Logits, NUM_CLASSES};
use crate::tensor::Tensor;

/// A scalar loss and its gradient with respect to the student logits.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    /// `[batch, 6]`, same shape as the student logits.
    pub grad_on_logits: Tensor,
}

/// Temperature and mixing weights for the distillation losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub temperature: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }

    fn validate_two_teacher(&self) -> Result<()> {
        self.validate()?;
        if self.alpha + self.beta > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha + beta must not exceed 1, got {} + {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Row-wise log-softmax of `row / t` via max subtraction.
fn log_softmax_row(row: &[f64], t: f64, out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max) / t;
        sum += o.exp();
    }
    let log_sum = sum.ln();
    for o in out.iter_mut() {
        *o -= log_sum;
    }
}

fn softmax_row(row: &[f64], t: f64, out: &mut [f64]) {
    log_softmax_row(row, t, out);
    for o in out.iter_mut() {
        *o = o.exp();
    }
}

/// Row-wise probabilities of the temperature-scaled logits `softmax(l / T)`.
pub fn temperature_softmax(logits: &Logits, t: f64) -> Result<Tensor> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be > 0, got {t}"
        )));
    }
    let batch = logits.batch();
    let mut data = vec![0.0; batch * NUM_CLASSES];
    for (i, out) in data.chunks_exact_mut(NUM_CLASSES).enumerate() {
        softmax_row(logits.row(i), t, out);
    }
    Tensor::from_vec(&[batch, NUM_CLASSES], data)
}

fn check_same_batch(student: &Logits, other: &Logits, what: &str) -> Result<()> {
    if student.batch() != other.batch() {
        return Err(Error::RejectedInput(format!(
            "{what} batch {} does not match student batch {}",
            other.batch(),
            student.batch()
        )));
    }
    Ok(())
}

fn check_labels(student: &Logits, labels: &Tensor) -> Result<()> {
    if labels.shape() != [student.batch(), NUM_CLASSES] {
        return Err(Error::RejectedInput(format!(
            "labels must be [{}, {NUM_CLASSES}], got {:?}",
            student.batch(),
            labels.shape()
        )));
    }
    for i in 0..student.batch() {
        let row = labels.row(i);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != NUM_CLASSES {
            return Err(Error::RejectedInput(format!(
                "label row {i} is not one-hot: {row:?}"
            )));
        }
    }
    Ok(())
}

/// Softmax cross-entropy against one-hot labels (unscaled logits, mean over
/// the batch). Gradient per example: `(softmax(student) - label) / batch`.
pub fn classification_loss(student: &Logits, labels: &Tensor) -> Result<LossValue> {
    check_labels(student, labels)?;
    let batch = student.batch();
    let inv = 1.0 / batch as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; batch * NUM_CLASSES];
    let mut lsm = [0.0; NUM_CLASSES];
    for i in 0..batch {
        log_softmax_row(student.row(i), 1.0, &mut lsm);
        let y = labels.row(i);
        let g = &mut grad[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            value -= y[c] * lsm[c];
            g[c] = (lsm[c].exp() - y[c]) * inv;
        }
    }
    Ok(LossValue {
        value: value * inv,
        grad_on_logits: Tensor::from_vec(&[batch, NUM_CLASSES], grad)?,
    })
}

/// Distillation cross-entropy: `-sum_i pi_i(teacher) * log pi_i(student)`
/// with both sides temperature-scaled, mean over the batch. The gradient is
/// taken with respect to the student logits only.
pub fn distillation_loss(student: &Logits, teacher: &Logits, t: f64) -> Result<LossValue> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be > 0, got {t}"
        )));
    }
    check_same_batch(student, teacher, "teacher")?;
    let batch = student.batch();
    let inv = 1.0 / batch as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; batch * NUM_CLASSES];
    let mut lsm_s = [0.0; NUM_CLASSES];
    let mut pi_t = [0.0; NUM_CLASSES];
    for i in 0..batch {
        log_softmax_row(student.row(i), t, &mut lsm_s);
        softmax_row(teacher.row(i), t, &mut pi_t);
        let g = &mut grad[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            value -= pi_t[c] * lsm_s[c];
            g[c] = (lsm_s[c].exp() - pi_t[c]) / t * inv;
        }
    }
    Ok(LossValue {
        value: value * inv,
        grad_on_logits: Tensor::from_vec(&[batch, NUM_CLASSES], grad)?,
    })
}

/// Linear combination of already-computed loss terms.
fn combine(terms: &[(f64, &LossValue)], batch: usize) -> Result<LossValue> {
    let mut value = 0.0;
    let mut grad = vec![0.0; batch * NUM_CLASSES];
    for &(w, term) in terms {
        value += w * term.value;
        for (acc, &g) in grad.iter_mut().zip(term.grad_on_logits.data()) {
            *acc += w * g;
        }
    }
    Ok(LossValue {
        value,
        grad_on_logits: Tensor::from_vec(&[batch, NUM_CLASSES], grad)?,
    })
}

/// One-teacher loss: `alpha * L_class + (1 - alpha) * L_dis` with the
/// client's previous-round model as the teacher. `cfg.beta` is unused.
pub fn flwf_loss(
    student: &Logits,
    prev_client: &Logits,
    labels: &Tensor,
    cfg: &DistillConfig,
) -> Result<LossValue> {
    cfg.validate()?;
    let batch = student.batch();
    let mut terms: Vec<(f64, LossValue)> = Vec::with_capacity(2);
    if cfg.alpha != 0.0 {
        terms.push((cfg.alpha, classification_loss(student, labels)?));
    } else {
        check_labels(student, labels)?;
    }
    let dis_w = 1.0 - cfg.alpha;
    if dis_w != 0.0 {
        terms.push((
            dis_w,
            distillation_loss(student, prev_client, cfg.temperature)?,
        ));
    }
    let refs: Vec<(f64, &LossValue)> = terms.iter().map(|(w, t)| (*w, t)).collect();
    combine(&refs, batch)
}

/// Two-teacher loss:
/// `alpha * L_class + beta * L_dis(prev) + (1 - alpha - beta) * L_dis(server)`.
///
/// On a client's first communication round the caller passes `beta = 0`, so
/// the previous-model term is dropped and its weight moves to the server
/// teacher.
pub fn flwf2t_loss(
    student: &Logits,
    prev_client: &Logits,
    server: &Logits,
    labels: &Tensor,
    cfg: &DistillConfig,
) -> Result<LossValue> {
    cfg.validate_two_teacher()?;
    let batch = student.batch();
    let server_w = 1.0 - cfg.alpha - cfg.beta;
    let mut terms: Vec<(f64, LossValue)> = Vec::with_capacity(3);
    if cfg.alpha != 0.0 {
        terms.push((cfg.alpha, classification_loss(student, labels)?));
    } else {
        check_labels(student, labels)?;
    }
    if cfg.beta != 0.0 {
        terms.push((
            cfg.beta,
            distillation_loss(student, prev_client, cfg.temperature)?,
        ));
    }
    if server_w != 0.0 {
        terms.push((server_w, distillation_loss(student, server, cfg.temperature)?));
    }
    let refs: Vec<(f64, &LossValue)> = terms.iter().map(|(w, t)| (*w, t)).collect();
    combine(&refs, batch)
}

/// Shannon entropy of each row of a probability tensor, mean over rows.
/// Matches `distillation_loss(s, s, t)` when `probs = temperature_softmax(s, t)`.
pub fn mean_row_entropy(probs: &Tensor) -> f64 {
    let rows = probs.shape()[0];
    let mut total = 0.0;
    for i in 0..rows {
        for &p in probs.row(i) {
            if p > 0.0 {
                total -= p * p.ln();
            }
        }
    }
    total / rows as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logits_from(rows: &[[f64; NUM_CLASSES]]) -> Logits {
        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        Logits::new(Tensor::from_vec(&[rows.len(), NUM_CLASSES], flat).unwrap()).unwrap()
    }

    fn one_hot(rows: &[usize]) -> Tensor {
        let mut data = vec![0.0; rows.len() * NUM_CLASSES];
        for (i, &c) in rows.iter().enumerate() {
            data[i * NUM_CLASSES + c] = 1.0;
        }
        Tensor::from_vec(&[rows.len(), NUM_CLASSES], data).unwrap()
    }

    fn random_logits(rng: &mut ChaCha8Rng, batch: usize, scale: f64) -> Logits {
        let data: Vec<f64> = (0..batch * NUM_CLASSES)
            .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale)
            .collect();
        Logits::new(Tensor::from_vec(&[batch, NUM_CLASSES], data).unwrap()).unwrap()
    }

    // Independent per-element summation, no shared helpers.
    fn brute_force_ce(student: &Logits, labels: &Tensor) -> f64 {
        let batch = student.batch();
        let mut total = 0.0;
        for i in 0..batch {
            let row = student.row(i);
            let denom: f64 = row.iter().map(|&v| v.exp()).sum();
            for c in 0..NUM_CLASSES {
                total -= labels.row(i)[c] * (row[c].exp() / denom).ln();
            }
        }
        total / batch as f64
    }

    fn brute_force_distill(student: &Logits, teacher: &Logits, t: f64) -> f64 {
        let batch = student.batch();
        let mut total = 0.0;
        for i in 0..batch {
            let s = student.row(i);
            let tr = teacher.row(i);
            let ds: f64 = s.iter().map(|&v| (v / t).exp()).sum();
            let dt: f64 = tr.iter().map(|&v| (v / t).exp()).sum();
            for c in 0..NUM_CLASSES {
                let pi_t = (tr[c] / t).exp() / dt;
                let pi_s = (s[c] / t).exp() / ds;
                total -= pi_t * pi_s.ln();
            }
        }
        total / batch as f64
    }

    #[test]
    fn temperature_softmax_uniform_rows() {
        let l = logits_from(&[[3.0; NUM_CLASSES]]);
        for t in [0.5, 1.0, 2.0, 10.0] {
            let p = temperature_softmax(&l, t).unwrap();
            for &v in p.row(0) {
                assert!((v - 1.0 / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn temperature_one_equals_plain_softmax() {
        let l = logits_from(&[[1.0, -2.0, 0.5, 3.0, 0.0, -1.0]]);
        let p = temperature_softmax(&l, 1.0).unwrap();
        let denom: f64 = l.row(0).iter().map(|&v| v.exp()).sum();
        for (c, &v) in p.row(0).iter().enumerate() {
            assert!((v - l.row(0)[c].exp() / denom).abs() < 1e-14);
        }
    }

    #[test]
    fn temperature_softmax_known_value() {
        // softmax([2,0,0,0,0,0] / 2) entry 0 = e^1 / (e^1 + 5e^0),
        // high-precision value of e/(e+5).
        let l = logits_from(&[[2.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
        let p = temperature_softmax(&l, 2.0).unwrap();
        assert!((p.row(0)[0] - 0.352_187_428_351_751_5).abs() < 1e-15);
    }

    #[test]
    fn temperature_softmax_rejects_nonpositive_t() {
        let l = logits_from(&[[0.0; NUM_CLASSES]]);
        assert!(matches!(
            temperature_softmax(&l, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(temperature_softmax(&l, -1.0).is_err());
    }

    #[test]
    fn temperature_softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in [0.5, 1.0, 2.0, 10.0] {
            let l = random_logits(&mut rng, 8, 50.0);
            let p = temperature_softmax(&l, t).unwrap();
            for i in 0..8 {
                let s: f64 = p.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(p.row(i).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn classification_uniform_logits_is_ln6() {
        let l = logits_from(&[[0.0; NUM_CLASSES], [2.5; NUM_CLASSES]]);
        let loss = classification_loss(&l, &one_hot(&[3, 0])).unwrap();
        assert!((loss.value - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn classification_decreases_as_true_logit_grows() {
        let labels = one_hot(&[2]);
        let mut prev = f64::INFINITY;
        for step in 0..8 {
            let mut row = [0.0; NUM_CLASSES];
            row[2] = step as f64 * 2.0;
            let loss = classification_loss(&logits_from(&[row]), &labels).unwrap();
            assert!(loss.value < prev);
            prev = loss.value;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn classification_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = random_logits(&mut rng, 16, 4.0);
        let labels = one_hot(&(0..16).map(|i| i % NUM_CLASSES).collect::<Vec<_>>());
        let loss = classification_loss(&l, &labels).unwrap();
        assert!((loss.value - brute_force_ce(&l, &labels)).abs() < 1e-10);
    }

    #[test]
    fn classification_rejects_bad_labels() {
        let l = logits_from(&[[0.0; NUM_CLASSES]]);
        let mut bad = vec![0.0; NUM_CLASSES];
        bad[0] = 0.5;
        bad[1] = 0.5;
        let bad = Tensor::from_vec(&[1, NUM_CLASSES], bad).unwrap();
        assert!(matches!(
            classification_loss(&l, &bad),
            Err(Error::RejectedInput(_))
        ));
    }

    #[test]
    fn distillation_uniform_rows_is_ln6() {
        let l = logits_from(&[[1.0; NUM_CLASSES]]);
        let loss = distillation_loss(&l, &l, 2.0).unwrap();
        assert!((loss.value - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn distillation_self_equals_entropy_and_is_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let teacher = random_logits(&mut rng, 4, 3.0);
        let t = 2.0;
        let self_loss = distillation_loss(&teacher, &teacher, t).unwrap();
        let entropy = mean_row_entropy(&temperature_softmax(&teacher, t).unwrap());
        assert!((self_loss.value - entropy).abs() < 1e-12);

        // Gibbs: any student perturbation cannot go below the entropy.
        for _ in 0..20 {
            let student = random_logits(&mut rng, 4, 3.0);
            let loss = distillation_loss(&student, &teacher, t).unwrap();
            assert!(loss.value >= entropy - 1e-12);
        }
    }

    #[test]
    fn distillation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let s = random_logits(&mut rng, 12, 5.0);
        let t = random_logits(&mut rng, 12, 5.0);
        let loss = distillation_loss(&s, &t, 2.0).unwrap();
        assert!((loss.value - brute_force_distill(&s, &t, 2.0)).abs() < 1e-10);
    }

    #[test]
    fn flwf_degenerate_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let s = random_logits(&mut rng, 6, 2.0);
        let prev = random_logits(&mut rng, 6, 2.0);
        let labels = one_hot(&[0, 1, 2, 3, 4, 5]);

        let pure_class = flwf_loss(
            &s,
            &prev,
            &labels,
            &DistillConfig {
                temperature: 2.0,
                alpha: 1.0,
                beta: 0.0,
            },
        )
        .unwrap();
        let class = classification_loss(&s, &labels).unwrap();
        assert_eq!(pure_class.value, class.value);
        assert_eq!(pure_class.grad_on_logits, class.grad_on_logits);

        let pure_dis = flwf_loss(
            &s,
            &prev,
            &labels,
            &DistillConfig {
                temperature: 2.0,
                alpha: 0.0,
                beta: 0.0,
            },
        )
        .unwrap();
        let dis = distillation_loss(&s, &prev, 2.0).unwrap();
        assert_eq!(pure_dis.value, dis.value);
    }

    #[test]
    fn flwf_recomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let s = random_logits(&mut rng, 8, 3.0);
        let prev = random_logits(&mut rng, 8, 3.0);
        let labels = one_hot(&(0..8).map(|i| i % NUM_CLASSES).collect::<Vec<_>>());
        let cfg = DistillConfig {
            temperature: 2.0,
            alpha: 0.001,
            beta: 0.0,
        };
        let combined = flwf_loss(&s, &prev, &labels, &cfg).unwrap();
        let expect = 0.001 * classification_loss(&s, &labels).unwrap().value
            + 0.999 * distillation_loss(&s, &prev, 2.0).unwrap().value;
        assert!((combined.value - expect).abs() < 1e-12);
    }

    #[test]
    fn flwf2t_degenerate_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let s = random_logits(&mut rng, 5, 2.0);
        let prev = random_logits(&mut rng, 5, 2.0);
        let server = random_logits(&mut rng, 5, 2.0);
        let labels = one_hot(&[1, 2, 3, 4, 5]);

        let c = flwf2t_loss(
            &s,
            &prev,
            &server,
            &labels,
            &DistillConfig {
                temperature: 2.0,
                alpha: 1.0,
                beta: 0.0,
            },
        )
        .unwrap();
        assert_eq!(c.value, classification_loss(&s, &labels).unwrap().value);

        let d = flwf2t_loss(
            &s,
            &prev,
            &server,
            &labels,
            &DistillConfig {
                temperature: 2.0,
                alpha: 0.0,
                beta: 1.0,
            },
        )
        .unwrap();
        assert_eq!(d.value, distillation_loss(&s, &prev, 2.0).unwrap().value);
    }

    #[test]
    fn flwf2t_recomposition_paper_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let s = random_logits(&mut rng, 8, 3.0);
        let prev = random_logits(&mut rng, 8, 3.0);
        let server = random_logits(&mut rng, 8, 3.0);
        let labels = one_hot(&(0..8).map(|i| (i + 2) % NUM_CLASSES).collect::<Vec<_>>());
        let cfg = DistillConfig {
            temperature: 2.0,
            alpha: 0.001,
            beta: 0.7,
        };
        let combined = flwf2t_loss(&s, &prev, &server, &labels, &cfg).unwrap();
        let expect = 0.001 * classification_loss(&s, &labels).unwrap().value
            + 0.7 * distillation_loss(&s, &prev, 2.0).unwrap().value
            + 0.299 * distillation_loss(&s, &server, 2.0).unwrap().value;
        assert!((combined.value - expect).abs() < 1e-12);
    }

    #[test]
    fn flwf2t_rejects_weight_overflow() {
        let l = logits_from(&[[0.0; NUM_CLASSES]]);
        let labels = one_hot(&[0]);
        let cfg = DistillConfig {
            temperature: 2.0,
            alpha: 0.5,
            beta: 0.8,
        };
        assert!(matches!(
            flwf2t_loss(&l, &l, &l, &labels, &cfg),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn flwf2t_with_zero_server_weight_equals_flwf() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let s = random_logits(&mut rng, 7, 2.0);
        let prev = random_logits(&mut rng, 7, 2.0);
        let server = random_logits(&mut rng, 7, 40.0);
        let labels = one_hot(&(0..7).map(|i| i % NUM_CLASSES).collect::<Vec<_>>());
        let alpha = 0.25;
        let two = flwf2t_loss(
            &s,
            &prev,
            &server,
            &labels,
            &DistillConfig {
                temperature: 2.0,
                alpha,
                beta: 1.0 - alpha,
            },
        )
        .unwrap();
        let one = flwf_loss(
            &s,
            &prev,
            &labels,
            &DistillConfig {
                temperature: 2.0,
                alpha,
                beta: 0.0,
            },
        )
        .unwrap();
        assert_eq!(two.value, one.value);
        assert_eq!(two.grad_on_logits, one.grad_on_logits);
    }

    #[test]
    fn losses_are_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let batch = 6;
        let s = random_logits(&mut rng, batch, 4.0);
        let prev = random_logits(&mut rng, batch, 4.0);
        let server = random_logits(&mut rng, batch, 4.0);
        let labels = one_hot(&(0..batch).map(|i| i % NUM_CLASSES).collect::<Vec<_>>());
        let cfg = DistillConfig {
            temperature: 2.0,
            alpha: 0.001,
            beta: 0.7,
        };

        let shift = |l: &Logits, by: f64| {
            let data: Vec<f64> = l.values.data().iter().map(|&v| v + by).collect();
            Logits::new(Tensor::from_vec(&[batch, NUM_CLASSES], data).unwrap()).unwrap()
        };
        let s2 = shift(&s, 37.5);

        let a = classification_loss(&s, &labels).unwrap().value;
        let b = classification_loss(&s2, &labels).unwrap().value;
        assert!((a - b).abs() < 1e-10);

        let a = distillation_loss(&s, &prev, 2.0).unwrap().value;
        let b = distillation_loss(&s2, &prev, 2.0).unwrap().value;
        assert!((a - b).abs() < 1e-10);

        let a = flwf2t_loss(&s, &prev, &server, &labels, &cfg).unwrap().value;
        let b = flwf2t_loss(&s2, &prev, &server, &labels, &cfg).unwrap().value;
        assert!((a - b).abs() < 1e-10);
    }

    // Finite differences of each loss value against its own reported gradient.
    fn check_grad<F>(batch: usize, f: F)
    where
        F: Fn(&Logits) -> LossValue,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let base = random_logits(&mut rng, batch, 3.0);
        let loss = f(&base);
        let eps = 1e-4;
        for i in 0..batch * NUM_CLASSES {
            let mut up = base.values.data().to_vec();
            let mut down = up.clone();
            up[i] += eps;
            down[i] -= eps;
            let lu = f(&Logits::new(Tensor::from_vec(&[batch, NUM_CLASSES], up).unwrap()).unwrap());
            let ld =
                f(&Logits::new(Tensor::from_vec(&[batch, NUM_CLASSES], down).unwrap()).unwrap());
            let numeric = (lu.value - ld.value) / (2.0 * eps);
            let analytic = loss.grad_on_logits.data()[i];
            let denom = (numeric.abs() + analytic.abs()).max(1e-6);
            assert!(
                (numeric - analytic).abs() / denom < 1e-4,
                "index {i}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let labels = one_hot(&[0, 3, 5, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let prev = random_logits(&mut rng, 4, 3.0);
        let server = random_logits(&mut rng, 4, 3.0);
        let cfg = DistillConfig {
            temperature: 2.0,
            alpha: 0.001,
            beta: 0.7,
        };

        check_grad(4, |s| classification_loss(s, &labels).unwrap());
        check_grad(4, |s| distillation_loss(s, &prev, 2.0).unwrap());
        check_grad(4, |s| {
            flwf_loss(
                s,
                &prev,
                &labels,
                &DistillConfig {
                    temperature: 2.0,
                    alpha: 0.001,
                    beta: 0.0,
                },
            )
            .unwrap()
        });
        check_grad(4, |s| flwf2t_loss(s, &prev, &server, &labels, &cfg).unwrap());
    }
}

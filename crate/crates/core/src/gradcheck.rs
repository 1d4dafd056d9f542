//! Finite-difference verification of the analytic backpropagation.
//!
//! For each loss (classification, one-teacher distillation mix, two-teacher
//! mix) and each parameter group, a sample of parameters is perturbed with a
//! central difference and compared against the gradient returned by
//! [`crate::nn::backward`]. The largest relative error per (loss, group)
//! pair is reported; anything at or above `1e-4` counts as a failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::{classification_loss, flwf2t_loss, flwf_loss, DistillConfig, LossValue};
use crate::nn::{backward, forward, init_params, CnnParams, Logits, Phase, NUM_CLASSES, SIGNAL_LEN};
use crate::tensor::Tensor;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub loss: String,
    pub group: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < GRADCHECK_TOLERANCE
    }
}

fn perturb(p: &CnnParams, group: usize, index: usize, delta: f64) -> CnnParams {
    let mut q = p.clone();
    q.fields_mut()[group].data_mut()[index] += delta;
    q
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Run the finite-difference suite on a random `[2, 128, 6]` batch.
///
/// `samples_per_group` parameters are probed in every parameter group for
/// each loss.
pub fn run_gradcheck(seed: u64, samples_per_group: usize) -> Result<GradCheckReport> {
    run_gradcheck_with_step(seed, samples_per_group, DEFAULT_STEP)
}

/// Central-difference step. At 1e-5 the difference quotient resolves the
/// loss to ~1e-8 absolute in f64 while staying below the width of the
/// ReLU/max-pool kink regions that a coarser step would straddle.
pub const DEFAULT_STEP: f64 = 1e-5;

pub fn run_gradcheck_with_step(
    seed: u64,
    samples_per_group: usize,
    eps: f64,
) -> Result<GradCheckReport> {
    let channels = 6;
    let batch = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params(rng.random::<u64>(), channels);

    let x = Tensor::from_vec(
        &[batch, SIGNAL_LEN, channels],
        (0..batch * SIGNAL_LEN * channels)
            .map(|_| (rng.random::<f64>() - 0.5) * 4.0)
            .collect(),
    )?;
    let mut labels = vec![0.0; batch * NUM_CLASSES];
    for row in 0..batch {
        labels[row * NUM_CLASSES + rng.random_range(0..NUM_CLASSES)] = 1.0;
    }
    let labels = Tensor::from_vec(&[batch, NUM_CLASSES], labels)?;
    let random_logits = |rng: &mut ChaCha8Rng| -> Logits {
        Logits::new(
            Tensor::from_vec(
                &[batch, NUM_CLASSES],
                (0..batch * NUM_CLASSES)
                    .map(|_| (rng.random::<f64>() - 0.5) * 6.0)
                    .collect(),
            )
            .unwrap(),
        )
        .unwrap()
    };
    let prev = random_logits(&mut rng);
    let server = random_logits(&mut rng);

    let flwf_cfg = DistillConfig {
        temperature: 2.0,
        alpha: 0.001,
        beta: 0.0,
    };
    let flwf2t_cfg = DistillConfig {
        temperature: 2.0,
        alpha: 0.001,
        beta: 0.7,
    };

    type LossFn<'a> = Box<dyn Fn(&Logits) -> Result<LossValue> + 'a>;
    let cases: Vec<(&str, Phase, LossFn)> = vec![
        (
            "classification",
            Phase::Eval,
            Box::new(|s: &Logits| classification_loss(s, &labels)),
        ),
        (
            "flwf(T=2, a=0.001)",
            Phase::Eval,
            Box::new(|s: &Logits| flwf_loss(s, &prev, &labels, &flwf_cfg)),
        ),
        (
            "flwf2t(T=2, a=0.001, b=0.7)",
            Phase::Eval,
            Box::new(|s: &Logits| flwf2t_loss(s, &prev, &server, &labels, &flwf2t_cfg)),
        ),
        (
            "classification[dropout]",
            Phase::Train {
                dropout_rate: 0.5,
                dropout_seed: 0xD20F,
            },
            Box::new(|s: &Logits| classification_loss(s, &labels)),
        ),
    ];

    let mut entries = Vec::new();
    for (name, phase, loss_fn) in &cases {
        let logits = forward(&params, &x, *phase)?;
        let loss = loss_fn(&logits)?;
        let grads = backward(&params, &x, &loss.grad_on_logits, *phase)?;

        for (group, group_name) in CnnParams::field_names().iter().enumerate() {
            let len = params.fields()[group].len();
            let count = samples_per_group.min(len);
            let picks = rand::seq::index::sample(&mut rng, len, count);
            let mut worst = 0.0f64;
            for index in picks {
                let up = perturb(&params, group, index, eps);
                let down = perturb(&params, group, index, -eps);
                let lu = loss_fn(&forward(&up, &x, *phase)?)?.value;
                let ld = loss_fn(&forward(&down, &x, *phase)?)?.value;
                let numeric = (lu - ld) / (2.0 * eps);
                let analytic = grads.fields()[group].data()[index];
                worst = worst.max(rel_error(numeric, analytic));
            }
            entries.push(GradCheckEntry {
                loss: name.to_string(),
                group: group_name.to_string(),
                max_rel_error: worst,
            });
        }
    }
    Ok(GradCheckReport { entries })
}

//! The fixed 1D convolutional network and its analytic backpropagation.
//!
//! Architecture, applied to a `[batch, 128, C_in]` window of signal
//! channels:
//!
//! ```text
//! conv1d: 196 filters, kernel 16, valid padding, stride 1   -> [batch, 113, 196]
//! ReLU, then 1x4 max pooling (non-overlapping, tail dropped) -> [batch, 28, 196]
//! flatten (position-major)                                   -> [batch, 5488]
//! dense 1024 + ReLU + dropout (train mode only)              -> [batch, 1024]
//! dense 6                                                    -> logits [batch, 6]
//! ```
//!
//! All arithmetic is in f64. `backward` returns the exact gradient of
//! `sum_b <loss_grad[b], logits[b]>` with respect to every parameter, which
//! composes with any scalar loss differentiated on the logits. The heavy
//! lifting (conv-as-GEMM and the dense layers) goes through `ndarray::dot`.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 6;
pub const SIGNAL_LEN: usize = 128;
pub const CONV_FILTERS: usize = 196;
pub const CONV_KERNEL: usize = 16;
pub const POOL_WIDTH: usize = 4;
/// 128 - 16 + 1
pub const CONV_OUT_LEN: usize = SIGNAL_LEN - CONV_KERNEL + 1;
/// floor(113 / 4); the trailing timestep is discarded.
pub const POOLED_LEN: usize = CONV_OUT_LEN / POOL_WIDTH;
/// 28 * 196
pub const FLAT_DIM: usize = POOLED_LEN * CONV_FILTERS;
pub const HIDDEN_DIM: usize = 1024;

/// Full parameter set of the network. Shapes (with `c` input channels):
/// conv_w `[196, 16, c]`, conv_b `[196]`, fc1_w `[5488, 1024]`,
/// fc1_b `[1024]`, out_w `[1024, 6]`, out_b `[6]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// Gradients, shape-congruent with [`CnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// Pre-softmax network outputs, shape `[batch, 6]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: Tensor,
}

impl Logits {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.shape().len() != 2 || values.shape()[1] != NUM_CLASSES {
            return Err(Error::RejectedInput(format!(
                "logits must be [batch, {NUM_CLASSES}], got {:?}",
                values.shape()
            )));
        }
        Ok(Logits { values })
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}

/// Forward-pass mode. Training applies inverted dropout on the 1024-unit
/// activations; evaluation is a pure function of (params, input).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Eval,
    Train { dropout_rate: f64, dropout_seed: u64 },
}

impl CnnParams {
    /// Number of input channels this parameter set was built for.
    pub fn input_channels(&self) -> usize {
        self.conv_w.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.fields().iter().map(|t| t.len()).sum()
    }

    pub fn fields(&self) -> [&Tensor; 6] {
        [
            &self.conv_w,
            &self.conv_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn fields_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn field_names() -> [&'static str; 6] {
        ["conv_w", "conv_b", "fc1_w", "fc1_b", "out_w", "out_b"]
    }
}

impl GradientSet {
    pub fn zeros_like(p: &CnnParams) -> Self {
        GradientSet {
            conv_w: Tensor::zeros(p.conv_w.shape()),
            conv_b: Tensor::zeros(p.conv_b.shape()),
            fc1_w: Tensor::zeros(p.fc1_w.shape()),
            fc1_b: Tensor::zeros(p.fc1_b.shape()),
            out_w: Tensor::zeros(p.out_w.shape()),
            out_b: Tensor::zeros(p.out_b.shape()),
        }
    }

    pub fn fields(&self) -> [&Tensor; 6] {
        [
            &self.conv_w,
            &self.conv_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.out_w,
            &self.out_b,
        ]
    }
}

/// Deterministic fan-in-scaled uniform initialization; biases start at zero.
pub fn init_params(seed: u64, input_channels: usize) -> CnnParams {
    assert!(input_channels > 0, "input_channels must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        (0..n)
            .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
            .collect()
    };
    let conv_len = CONV_FILTERS * CONV_KERNEL * input_channels;
    let conv_w = uniform(conv_len, CONV_KERNEL * input_channels);
    let fc1_w = uniform(FLAT_DIM * HIDDEN_DIM, FLAT_DIM);
    let out_w = uniform(HIDDEN_DIM * NUM_CLASSES, HIDDEN_DIM);
    CnnParams {
        conv_w: Tensor::from_vec(&[CONV_FILTERS, CONV_KERNEL, input_channels], conv_w).unwrap(),
        conv_b: Tensor::zeros(&[CONV_FILTERS]),
        fc1_w: Tensor::from_vec(&[FLAT_DIM, HIDDEN_DIM], fc1_w).unwrap(),
        fc1_b: Tensor::zeros(&[HIDDEN_DIM]),
        out_w: Tensor::from_vec(&[HIDDEN_DIM, NUM_CLASSES], out_w).unwrap(),
        out_b: Tensor::zeros(&[NUM_CLASSES]),
    }
}

/// Cached intermediate state of one forward pass; consumed by
/// [`backward_from_trace`] so training avoids a second forward evaluation.
pub(crate) struct ForwardTrace {
    batch: usize,
    channels: usize,
    /// Unrolled conv input, `[batch * 113, 16 * channels]`.
    x_col: Vec<f64>,
    /// Post ReLU+pool activations, `[batch, 5488]`, position-major.
    pooled: Vec<f64>,
    /// Flat conv-row offset (within 0..113) of each pooling argmax.
    pool_src: Vec<u32>,
    /// Dense pre-activations, `[batch, 1024]`.
    hidden_pre: Vec<f64>,
    /// Activations fed to the output layer (post ReLU and dropout).
    hidden_act: Vec<f64>,
    /// Dropout keep mask in train mode.
    keep_mask: Option<Vec<bool>>,
    dropout_scale: f64,
    pub(crate) logits: Logits,
}

fn validate_input(p: &CnnParams, x: &Tensor) -> Result<(usize, usize)> {
    let shape = x.shape();
    let channels = p.input_channels();
    if shape.len() != 3 || shape[1] != SIGNAL_LEN || shape[2] != channels {
        return Err(Error::RejectedInput(format!(
            "input must be [batch, {SIGNAL_LEN}, {channels}], got {shape:?}"
        )));
    }
    Ok((shape[0], channels))
}

fn dropout_keep_mask(batch: usize, rate: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batch * HIDDEN_DIM)
        .map(|_| rng.random::<f64>() >= rate)
        .collect()
}

pub(crate) fn forward_trace(p: &CnnParams, x: &Tensor, phase: Phase) -> Result<ForwardTrace> {
    let (batch, channels) = validate_input(p, x)?;
    if let Phase::Train { dropout_rate, .. } = phase {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate must be in [0, 1), got {dropout_rate}"
            )));
        }
    }
    let patch = CONV_KERNEL * channels;
    let xdata = x.data();

    // im2col: each conv output position maps to a contiguous input slice.
    let mut x_col = vec![0.0; batch * CONV_OUT_LEN * patch];
    for b in 0..batch {
        let sig = &xdata[b * SIGNAL_LEN * channels..(b + 1) * SIGNAL_LEN * channels];
        for pos in 0..CONV_OUT_LEN {
            let dst = (b * CONV_OUT_LEN + pos) * patch;
            x_col[dst..dst + patch].copy_from_slice(&sig[pos * channels..pos * channels + patch]);
        }
    }

    // Convolution as one GEMM against the flattened filter bank.
    let a = ArrayView2::from_shape((batch * CONV_OUT_LEN, patch), &x_col).unwrap();
    let w = ArrayView2::from_shape((CONV_FILTERS, patch), p.conv_w.data()).unwrap();
    let mut conv = a.dot(&w.t()); // [batch*113, 196]
    {
        let conv_b = p.conv_b.data();
        for mut row in conv.rows_mut() {
            let row = row.as_slice_mut().unwrap();
            for (v, &b) in row.iter_mut().zip(conv_b) {
                *v += b;
                if *v < 0.0 {
                    *v = 0.0; // ReLU
                }
            }
        }
    }

    // 1x4 non-overlapping max pooling over positions; argmax kept for backprop.
    let conv = conv.as_slice().unwrap();
    let mut pooled = vec![0.0; batch * FLAT_DIM];
    let mut pool_src = vec![0u32; batch * FLAT_DIM];
    for b in 0..batch {
        for window in 0..POOLED_LEN {
            let base_row = b * CONV_OUT_LEN + window * POOL_WIDTH;
            let out = b * FLAT_DIM + window * CONV_FILTERS;
            for f in 0..CONV_FILTERS {
                let mut best = conv[base_row * CONV_FILTERS + f];
                let mut best_pos = window * POOL_WIDTH;
                for off in 1..POOL_WIDTH {
                    let v = conv[(base_row + off) * CONV_FILTERS + f];
                    if v > best {
                        best = v;
                        best_pos = window * POOL_WIDTH + off;
                    }
                }
                pooled[out + f] = best;
                pool_src[out + f] = best_pos as u32;
            }
        }
    }

    // Dense 1024 layer.
    let a = ArrayView2::from_shape((batch, FLAT_DIM), &pooled).unwrap();
    let w = ArrayView2::from_shape((FLAT_DIM, HIDDEN_DIM), p.fc1_w.data()).unwrap();
    let mut hidden = a.dot(&w);
    {
        let fc1_b = p.fc1_b.data();
        for mut row in hidden.rows_mut() {
            let row = row.as_slice_mut().unwrap();
            for (v, &b) in row.iter_mut().zip(fc1_b) {
                *v += b;
            }
        }
    }
    let hidden_pre = hidden.as_slice().unwrap().to_vec();

    let (keep_mask, dropout_scale) = match phase {
        Phase::Eval => (None, 1.0),
        Phase::Train {
            dropout_rate,
            dropout_seed,
        } => (
            Some(dropout_keep_mask(batch, dropout_rate, dropout_seed)),
            1.0 / (1.0 - dropout_rate),
        ),
    };
    let mut hidden_act = hidden_pre.clone();
    match &keep_mask {
        None => {
            for v in hidden_act.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Some(mask) => {
            for (v, &keep) in hidden_act.iter_mut().zip(mask) {
                *v = if keep && *v > 0.0 {
                    *v * dropout_scale
                } else {
                    0.0
                };
            }
        }
    }

    // Output layer.
    let a = ArrayView2::from_shape((batch, HIDDEN_DIM), &hidden_act).unwrap();
    let w = ArrayView2::from_shape((HIDDEN_DIM, NUM_CLASSES), p.out_w.data()).unwrap();
    let mut out = a.dot(&w);
    {
        let out_b = p.out_b.data();
        for mut row in out.rows_mut() {
            let row = row.as_slice_mut().unwrap();
            for (v, &b) in row.iter_mut().zip(out_b) {
                *v += b;
            }
        }
    }
    let logits = Logits::new(Tensor::from_vec(
        &[batch, NUM_CLASSES],
        out.as_slice().unwrap().to_vec(),
    )?)?;

    Ok(ForwardTrace {
        batch,
        channels,
        x_col,
        pooled,
        pool_src,
        hidden_pre,
        hidden_act,
        keep_mask,
        dropout_scale,
        logits,
    })
}

/// Run the network. Evaluation mode is deterministic in (params, input);
/// train mode applies inverted dropout driven by the seed in `phase`.
pub fn forward(p: &CnnParams, x: &Tensor, phase: Phase) -> Result<Logits> {
    Ok(forward_trace(p, x, phase)?.logits)
}

/// Dense-layer pre-activations (the 1024-unit layer before ReLU), used for
/// the activation-space PCA export. Always evaluation mode.
pub fn hidden_pre_activations(p: &CnnParams, x: &Tensor) -> Result<Tensor> {
    let trace = forward_trace(p, x, Phase::Eval)?;
    Tensor::from_vec(&[trace.batch, HIDDEN_DIM], trace.hidden_pre)
}

pub(crate) fn backward_from_trace(
    p: &CnnParams,
    trace: &ForwardTrace,
    loss_grad: &Tensor,
) -> Result<GradientSet> {
    let batch = trace.batch;
    if loss_grad.shape() != [batch, NUM_CLASSES] {
        return Err(Error::RejectedInput(format!(
            "loss gradient must be [{batch}, {NUM_CLASSES}], got {:?}",
            loss_grad.shape()
        )));
    }
    let patch = CONV_KERNEL * trace.channels;
    let g_logits = ArrayView2::from_shape((batch, NUM_CLASSES), loss_grad.data()).unwrap();

    // Output layer.
    let hidden_act = ArrayView2::from_shape((batch, HIDDEN_DIM), &trace.hidden_act).unwrap();
    let grad_out_w = hidden_act.t().dot(&g_logits); // [1024, 6]
    let mut grad_out_b = vec![0.0; NUM_CLASSES];
    for row in loss_grad.data().chunks_exact(NUM_CLASSES) {
        for (acc, &g) in grad_out_b.iter_mut().zip(row) {
            *acc += g;
        }
    }

    // Back through dropout and the dense ReLU.
    let out_w = ArrayView2::from_shape((HIDDEN_DIM, NUM_CLASSES), p.out_w.data()).unwrap();
    let mut grad_hidden = g_logits.dot(&out_w.t()); // [batch, 1024]
    {
        let g = grad_hidden.as_slice_mut().unwrap();
        match &trace.keep_mask {
            None => {
                for (gv, &pre) in g.iter_mut().zip(&trace.hidden_pre) {
                    if pre <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            Some(mask) => {
                for ((gv, &pre), &keep) in g.iter_mut().zip(&trace.hidden_pre).zip(mask) {
                    *gv = if keep && pre > 0.0 {
                        *gv * trace.dropout_scale
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    // Dense 1024 layer.
    let pooled = ArrayView2::from_shape((batch, FLAT_DIM), &trace.pooled).unwrap();
    let grad_fc1_w = pooled.t().dot(&grad_hidden); // [5488, 1024]
    let mut grad_fc1_b = vec![0.0; HIDDEN_DIM];
    for row in grad_hidden.as_slice().unwrap().chunks_exact(HIDDEN_DIM) {
        for (acc, &g) in grad_fc1_b.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let grad_pooled = grad_hidden.dot(
        &ArrayView2::from_shape((FLAT_DIM, HIDDEN_DIM), p.fc1_w.data())
            .unwrap()
            .t(),
    ); // [batch, 5488]

    // Unpool: route each gradient to its argmax conv position, gated by the
    // ReLU (pooled value 0 means the winning pre-activation was <= 0).
    let grad_pooled = grad_pooled.as_slice().unwrap();
    let mut grad_conv = vec![0.0; batch * CONV_OUT_LEN * CONV_FILTERS];
    for b in 0..batch {
        for window in 0..POOLED_LEN {
            let flat = b * FLAT_DIM + window * CONV_FILTERS;
            for f in 0..CONV_FILTERS {
                let g = grad_pooled[flat + f];
                if g != 0.0 && trace.pooled[flat + f] > 0.0 {
                    let pos = trace.pool_src[flat + f] as usize;
                    grad_conv[(b * CONV_OUT_LEN + pos) * CONV_FILTERS + f] = g;
                }
            }
        }
    }

    // Convolution weights: [196, batch*113] . [batch*113, patch].
    let g_conv = ArrayView2::from_shape((batch * CONV_OUT_LEN, CONV_FILTERS), &grad_conv).unwrap();
    let x_col = ArrayView2::from_shape((batch * CONV_OUT_LEN, patch), &trace.x_col).unwrap();
    let grad_conv_w = g_conv.t().dot(&x_col); // [196, patch]
    let mut grad_conv_b = vec![0.0; CONV_FILTERS];
    for row in grad_conv.chunks_exact(CONV_FILTERS) {
        for (acc, &g) in grad_conv_b.iter_mut().zip(row) {
            *acc += g;
        }
    }

    Ok(GradientSet {
        conv_w: Tensor::from_vec(
            &[CONV_FILTERS, CONV_KERNEL, trace.channels],
            grad_conv_w.as_slice().unwrap().to_vec(),
        )?,
        conv_b: Tensor::from_vec(&[CONV_FILTERS], grad_conv_b)?,
        fc1_w: Tensor::from_vec(
            &[FLAT_DIM, HIDDEN_DIM],
            grad_fc1_w.as_slice().unwrap().to_vec(),
        )?,
        fc1_b: Tensor::from_vec(&[HIDDEN_DIM], grad_fc1_b)?,
        out_w: Tensor::from_vec(
            &[HIDDEN_DIM, NUM_CLASSES],
            grad_out_w.as_slice().unwrap().to_vec(),
        )?,
        out_b: Tensor::from_vec(&[NUM_CLASSES], grad_out_b)?,
    })
}

/// Exact parameter gradients of `sum_b <loss_grad[b], logits[b]>`.
///
/// Must be called with the same phase (mode and dropout seed) as the paired
/// forward pass so the dropout mask is reproduced.
pub fn backward(
    p: &CnnParams,
    x: &Tensor,
    loss_grad_on_logits: &Tensor,
    phase: Phase,
) -> Result<GradientSet> {
    let trace = forward_trace(p, x, phase)?;
    backward_from_trace(p, &trace, loss_grad_on_logits)
}

/// One SGD step: every parameter decremented by `eta * gradient`.
pub fn sgd_step(p: &CnnParams, g: &GradientSet, eta: f64) -> CnnParams {
    let mut next = p.clone();
    sgd_step_in_place(&mut next, g, eta);
    next
}

pub fn sgd_step_in_place(p: &mut CnnParams, g: &GradientSet, eta: f64) {
    let grads = g.fields();
    for (param, grad) in p.fields_mut().into_iter().zip(grads) {
        debug_assert_eq!(param.shape(), grad.shape());
        for (w, &gv) in param.data_mut().iter_mut().zip(grad.data()) {
            *w -= eta * gv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_input(batch: usize, channels: usize) -> Tensor {
        Tensor::from_vec(
            &[batch, SIGNAL_LEN, channels],
            vec![1.0; batch * SIGNAL_LEN * channels],
        )
        .unwrap()
    }

    #[test]
    fn shape_pipeline_constants() {
        assert_eq!(CONV_OUT_LEN, 113);
        assert_eq!(POOLED_LEN, 28);
        assert_eq!(FLAT_DIM, 5488);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_params(42, 6);
        let b = init_params(42, 6);
        assert_eq!(a, b);
        let c = init_params(1, 6);
        let d = init_params(2, 6);
        assert_ne!(c.conv_w, d.conv_w);
    }

    #[test]
    fn init_biases_are_zero() {
        let p = init_params(9, 6);
        assert!(p.conv_b.data().iter().all(|&v| v == 0.0));
        assert!(p.fc1_b.data().iter().all(|&v| v == 0.0));
        assert!(p.out_b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn param_count_matches_fixed_architecture() {
        let p = init_params(3, 6);
        assert_eq!(
            p.param_count(),
            196 * 16 * 6 + 196 + 5488 * 1024 + 1024 + 1024 * 6 + 6
        );
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let p = CnnParams {
            conv_w: Tensor::zeros(&[CONV_FILTERS, CONV_KERNEL, 6]),
            conv_b: Tensor::zeros(&[CONV_FILTERS]),
            fc1_w: Tensor::zeros(&[FLAT_DIM, HIDDEN_DIM]),
            fc1_b: Tensor::zeros(&[HIDDEN_DIM]),
            out_w: Tensor::zeros(&[HIDDEN_DIM, NUM_CLASSES]),
            out_b: Tensor::zeros(&[NUM_CLASSES]),
        };
        let y = forward(&p, &ones_input(2, 6), Phase::Eval).unwrap();
        assert!(y.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let p = init_params(5, 6);
        let bad = Tensor::from_vec(&[1, 64, 6], vec![0.0; 64 * 6]).unwrap();
        assert!(matches!(
            forward(&p, &bad, Phase::Eval),
            Err(Error::RejectedInput(_))
        ));
        let bad_channels = Tensor::from_vec(&[1, SIGNAL_LEN, 3], vec![0.0; SIGNAL_LEN * 3]).unwrap();
        assert!(forward(&p, &bad_channels, Phase::Eval).is_err());
    }

    #[test]
    fn eval_forward_is_pure() {
        let p = init_params(11, 6);
        let x = ones_input(3, 6);
        let a = forward(&p, &x, Phase::Eval).unwrap();
        let b = forward(&p, &x, Phase::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_forward_is_deterministic_given_seed() {
        let p = init_params(11, 6);
        let x = ones_input(2, 6);
        let phase = Phase::Train {
            dropout_rate: 0.5,
            dropout_seed: 77,
        };
        let a = forward(&p, &x, phase).unwrap();
        let b = forward(&p, &x, phase).unwrap();
        assert_eq!(a, b);
        let c = forward(
            &p,
            &x,
            Phase::Train {
                dropout_rate: 0.5,
                dropout_seed: 78,
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let p = init_params(4, 6);
        let x = ones_input(2, 6);
        let g = backward(&p, &x, &Tensor::zeros(&[2, NUM_CLASSES]), Phase::Eval).unwrap();
        for t in g.fields() {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn sgd_step_identities() {
        let p = init_params(8, 6);
        let zero = GradientSet::zeros_like(&p);
        assert_eq!(sgd_step(&p, &zero, 0.5), p);

        let mut g = GradientSet::zeros_like(&p);
        g.out_b = Tensor::from_vec(&[NUM_CLASSES], vec![1.0; NUM_CLASSES]).unwrap();
        assert_eq!(sgd_step(&p, &g, 0.0), p);
    }

    #[test]
    fn sgd_step_arithmetic() {
        let mut p = init_params(8, 6);
        p.out_b = Tensor::from_vec(&[NUM_CLASSES], vec![1.0; NUM_CLASSES]).unwrap();
        let mut g = GradientSet::zeros_like(&p);
        g.out_b = Tensor::from_vec(&[NUM_CLASSES], vec![0.5; NUM_CLASSES]).unwrap();
        let next = sgd_step(&p, &g, 0.01);
        for &v in next.out_b.data() {
            assert!((v - 0.995).abs() < 1e-15);
        }
    }
}

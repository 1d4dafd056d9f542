//! Evaluation: accuracy metrics over rounds and tasks, forgetting, and the
//! activation-space PCA export.
//!
//! Notation used throughout: for client `k`, `whole` is the accuracy on the
//! full test set after a round (`a_0`), `per_task[d]` is the accuracy on the
//! test examples of task `d`'s classes while task `t` is active (`a_{t,d}`),
//! and `personal` is the accuracy on the union of the classes the client has
//! learnt so far. Predictions are always class-incremental: the argmax runs
//! over all six outputs with no task hint.

use std::collections::BTreeSet;

use ndarray::ArrayView2;
use rand::Rng;

use crate::continual::TaskSequence;
use crate::data::{stack_signals, Dataset};
use crate::error::{Error, Result};
use crate::nn::{forward, hidden_pre_activations, CnnParams, Phase, NUM_CLASSES};
use crate::seeding;

const EVAL_BATCH: usize = 256;

/// Argmax class per example, evaluated in deterministic batches.
pub fn predictions(params: &CnnParams, ds: &Dataset) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(ds.len());
    let examples = ds.examples();
    for chunk in examples.chunks(EVAL_BATCH) {
        let refs: Vec<_> = chunk.iter().collect();
        let x = stack_signals(&refs)?;
        let logits = forward(params, &x, Phase::Eval)?;
        for i in 0..chunk.len() {
            let row = logits.row(i);
            let mut best = 0;
            for c in 1..NUM_CLASSES {
                if row[c] > row[best] {
                    best = c;
                }
            }
            preds.push(best);
        }
    }
    Ok(preds)
}

/// Accuracy over the examples whose label is in `classes`, from cached
/// predictions.
pub fn accuracy_from_preds(
    preds: &[usize],
    ds: &Dataset,
    classes: &BTreeSet<usize>,
) -> Result<f64> {
    if classes.is_empty() {
        return Err(Error::UndefinedMetric("empty class subset".into()));
    }
    let mut total = 0usize;
    let mut hits = 0usize;
    for (pred, e) in preds.iter().zip(ds.examples()) {
        if classes.contains(&e.label) {
            total += 1;
            if *pred == e.label {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric(format!(
            "test set has no examples of classes {classes:?}"
        )));
    }
    Ok(hits as f64 / total as f64)
}

/// Fraction of test examples with label in `classes` that the model assigns
/// to their true class (argmax over all six outputs).
pub fn subset_accuracy(
    params: &CnnParams,
    test: &Dataset,
    classes: &BTreeSet<usize>,
) -> Result<f64> {
    let preds = predictions(params, test)?;
    accuracy_from_preds(&preds, test, classes)
}

/// Per-round evaluation of one entity's model on the common test set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoundRecord {
    /// Index into the experiment's client list.
    pub client: usize,
    /// Accuracy on the whole test set.
    pub whole: f64,
    /// Accuracy on the union of the client's learnt classes.
    pub personal: f64,
    /// Task active during this round.
    pub current_task: usize,
    /// `(d, accuracy on task d classes)` for every learnt task `d`.
    pub per_task: Vec<(usize, f64)>,
    /// Accuracy restricted to each individual class.
    pub per_class: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub server_whole: f64,
    pub server_per_class: [f64; NUM_CLASSES],
    pub clients: Vec<ClientRoundRecord>,
}

/// Mean of per-round whole-test accuracies.
pub fn general_accuracy(whole_by_round: &[f64]) -> f64 {
    assert!(!whole_by_round.is_empty(), "need at least one round");
    whole_by_round.iter().sum::<f64>() / whole_by_round.len() as f64
}

/// Mean over rounds of the stored personal accuracies of one client.
pub fn personal_accuracy(records: &[RoundRecord], client: usize) -> f64 {
    let series: Vec<f64> = records.iter().map(|r| r.clients[client].personal).collect();
    general_accuracy(&series)
}

fn recorded_task_accuracy(record: &RoundRecord, client: usize, d: usize) -> Result<f64> {
    record.clients[client]
        .per_task
        .iter()
        .find(|(task, _)| *task == d)
        .map(|(_, a)| *a)
        .ok_or_else(|| {
            Error::UndefinedMetric(format!(
                "round {} has no accuracy for task {d} of client {client}",
                record.round
            ))
        })
}

/// Window average: the accuracy on task `d`'s classes averaged over the
/// rounds in which task `observed_at` was active.
pub fn task_window_avg(
    records: &[RoundRecord],
    seq: &TaskSequence,
    client: usize,
    observed_at: usize,
    d: usize,
) -> Result<f64> {
    if d > observed_at {
        return Err(Error::RejectedInput(format!(
            "task {d} is not learnt yet at task {observed_at}"
        )));
    }
    let (first, last) = seq.window(observed_at)?;
    let mut values = Vec::with_capacity(last - first + 1);
    for record in records {
        if record.round >= first && record.round <= last {
            values.push(recorded_task_accuracy(record, client, d)?);
        }
    }
    if values.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "no records in the window of task {observed_at}"
        )));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Average accuracy at task `t`: mean over `d <= t` of the window averages.
pub fn avg_accuracy_at_task(
    records: &[RoundRecord],
    seq: &TaskSequence,
    client: usize,
    t: usize,
) -> Result<f64> {
    if t == 0 || t > seq.num_tasks() {
        return Err(Error::RejectedInput(format!(
            "task {t} outside 1..={}",
            seq.num_tasks()
        )));
    }
    let mut total = 0.0;
    for d in 1..=t {
        total += task_window_avg(records, seq, client, t, d)?;
    }
    Ok(total / t as f64)
}

/// Forgetting of task `d` after learning task `t`: the best window average
/// over tasks `d..t-1` minus the window average at `t`. Negative values mean
/// the task improved.
pub fn forgetting(
    records: &[RoundRecord],
    seq: &TaskSequence,
    client: usize,
    t: usize,
    d: usize,
) -> Result<f64> {
    if d >= t {
        return Err(Error::RejectedInput(format!(
            "forgetting needs d < t, got d={d}, t={t}"
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for i in d..t {
        best = best.max(task_window_avg(records, seq, client, i, d)?);
    }
    Ok(best - task_window_avg(records, seq, client, t, d)?)
}

/// Mean forgetting over all tasks learnt before `t`.
pub fn avg_forgetting(
    records: &[RoundRecord],
    seq: &TaskSequence,
    client: usize,
    t: usize,
) -> Result<f64> {
    if t < 2 {
        return Err(Error::RejectedInput(
            "average forgetting needs at least two tasks".into(),
        ));
    }
    let mut total = 0.0;
    for d in 1..t {
        total += forgetting(records, seq, client, t, d)?;
    }
    Ok(total / (t - 1) as f64)
}

/// Final metric aggregates of one experiment, labeled per entity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    /// `(entity label, A_gen)` for every client plus the server.
    pub general: Vec<(String, f64)>,
    /// `(client label, A_per)`.
    pub personal: Vec<(String, f64)>,
    /// `(client label, t, A_t)` for every client task.
    pub avg_acc_at_task: Vec<(String, usize, f64)>,
    /// `(client label, t, d, f_{t,d})` for every d < t.
    pub forgetting: Vec<(String, usize, usize, f64)>,
    /// `(client label, t, F_t)` for t >= 2.
    pub avg_forgetting: Vec<(String, usize, f64)>,
}

/// Aggregate all round records into the final report.
pub fn build_report(
    records: &[RoundRecord],
    clients: &[(String, TaskSequence)],
) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    if records.is_empty() {
        return Ok(report);
    }
    for (idx, (label, seq)) in clients.iter().enumerate() {
        let whole: Vec<f64> = records.iter().map(|r| r.clients[idx].whole).collect();
        report.general.push((label.clone(), general_accuracy(&whole)));
        report
            .personal
            .push((label.clone(), personal_accuracy(records, idx)));
        for t in 1..=seq.num_tasks() {
            report.avg_acc_at_task.push((
                label.clone(),
                t,
                avg_accuracy_at_task(records, seq, idx, t)?,
            ));
            if t >= 2 {
                for d in 1..t {
                    report.forgetting.push((
                        label.clone(),
                        t,
                        d,
                        forgetting(records, seq, idx, t, d)?,
                    ));
                }
                report.avg_forgetting.push((
                    label.clone(),
                    t,
                    avg_forgetting(records, seq, idx, t)?,
                ));
            }
        }
    }
    let server: Vec<f64> = records.iter().map(|r| r.server_whole).collect();
    report
        .general
        .push(("server".to_string(), general_accuracy(&server)));
    Ok(report)
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

/// Which activations feed the PCA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaLayer {
    /// The 1024-unit dense layer before its ReLU (default).
    HiddenPreActivation,
    /// The 6-way output logits.
    Logits,
}

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Per-example projections, `[n][components]`.
    pub coords: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Top eigenvalues of the covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues as fractions of the total variance.
    pub explained_variance: Vec<f64>,
    /// Principal directions, `[components][dim]`.
    pub components: Vec<Vec<f64>>,
    /// Set when rank deficiency cut the component count short.
    pub warning: Option<String>,
}

/// Top-k eigenpairs of a symmetric matrix by power iteration with deflation.
///
/// Stops early (returning fewer pairs) when the residual spectrum is
/// numerically zero relative to the trace.
pub fn top_eigenpairs_symmetric(
    matrix: &[f64],
    dim: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if matrix.len() != dim * dim {
        return Err(Error::RejectedInput(format!(
            "matrix of {} entries is not {dim}x{dim}",
            matrix.len()
        )));
    }
    let mut work = matrix.to_vec();
    let trace: f64 = (0..dim).map(|i| matrix[i * dim + i]).sum();
    let floor = 1e-12 * trace.abs().max(1e-300);
    let mut rng = seeding::rng_for(seed, &[seeding::purpose::PCA]);

    let mut eigenvalues = Vec::new();
    let mut eigenvectors: Vec<Vec<f64>> = Vec::new();
    for _ in 0..k.min(dim) {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        let mut lambda = 0.0;
        for _ in 0..20_000 {
            // w = A v
            let mut w = vec![0.0; dim];
            for i in 0..dim {
                let row = &work[i * dim..(i + 1) * dim];
                w[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < floor {
                lambda = 0.0;
                break;
            }
            for x in w.iter_mut() {
                *x /= norm;
            }
            let mut av = vec![0.0; dim];
            for i in 0..dim {
                let row = &work[i * dim..(i + 1) * dim];
                av[i] = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            }
            let new_lambda: f64 = w.iter().zip(&av).map(|(a, b)| a * b).sum();
            v = w;
            if (new_lambda - lambda).abs() <= 1e-13 * new_lambda.abs().max(1.0) {
                lambda = new_lambda;
                break;
            }
            lambda = new_lambda;
        }
        if lambda.abs() <= floor {
            break;
        }
        // deflate: A -= lambda v v^T
        for i in 0..dim {
            for j in 0..dim {
                work[i * dim + j] -= lambda * v[i] * v[j];
            }
        }
        eigenvalues.push(lambda);
        eigenvectors.push(v);
    }
    Ok((eigenvalues, eigenvectors))
}

/// PCA of a raw `[n, dim]` matrix: mean-center, covariance, top-k eigenpairs
/// and per-row projections.
pub fn pca_of_matrix(
    rows: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    if n < 2 {
        return Err(Error::RejectedInput("PCA needs at least two rows".into()));
    }
    if rows.len() != n * dim {
        return Err(Error::RejectedInput(format!(
            "matrix of {} entries is not {n}x{dim}",
            rows.len()
        )));
    }
    let mut centered = rows.to_vec();
    for j in 0..dim {
        let mean: f64 = (0..n).map(|i| rows[i * dim + j]).sum::<f64>() / n as f64;
        for i in 0..n {
            centered[i * dim + j] -= mean;
        }
    }
    let a = ArrayView2::from_shape((n, dim), &centered).unwrap();
    let cov = a.t().dot(&a) / (n as f64 - 1.0);
    let cov_slice = cov.as_slice().unwrap();
    let total_variance: f64 = (0..dim).map(|i| cov_slice[i * dim + i]).sum();

    let (eigenvalues, components) = top_eigenpairs_symmetric(cov_slice, dim, k, seed)?;
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| {
                    centered[i * dim..(i + 1) * dim]
                        .iter()
                        .zip(c)
                        .map(|(x, w)| x * w)
                        .sum()
                })
                .collect()
        })
        .collect();
    let explained: Vec<f64> = eigenvalues
        .iter()
        .map(|l| if total_variance > 0.0 { l / total_variance } else { 0.0 })
        .collect();
    Ok((coords, eigenvalues, explained, components))
}

/// Project network activations of a class-balanced sample onto the top
/// principal directions.
///
/// `per_class` examples of every class present in `ds` are sampled
/// deterministically from `seed`; each present class must have at least
/// `per_class` examples.
pub fn pca_last_layer(
    params: &CnnParams,
    ds: &Dataset,
    n_components: usize,
    per_class: usize,
    layer: PcaLayer,
    seed: u64,
) -> Result<PcaResult> {
    if per_class == 0 || n_components == 0 {
        return Err(Error::InvalidParameter(
            "per_class and n_components must be positive".into(),
        ));
    }
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, e) in ds.examples().iter().enumerate() {
        by_class[e.label].push(i);
    }
    let mut picked = Vec::new();
    for (class, pool) in by_class.iter().enumerate() {
        if pool.is_empty() {
            continue;
        }
        if pool.len() < per_class {
            return Err(Error::RejectedInput(format!(
                "class {class} has {} examples, fewer than per_class={per_class}",
                pool.len()
            )));
        }
        let mut rng = seeding::rng_for(seed, &[seeding::purpose::PCA, class as u64]);
        let picks = rand::seq::index::sample(&mut rng, pool.len(), per_class);
        picked.extend(picks.into_iter().map(|i| pool[i]));
    }
    if picked.is_empty() {
        return Err(Error::RejectedInput("dataset has no examples".into()));
    }

    let dim = match layer {
        PcaLayer::HiddenPreActivation => crate::nn::HIDDEN_DIM,
        PcaLayer::Logits => NUM_CLASSES,
    };
    let n = picked.len();
    let mut activations = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for chunk in picked.chunks(EVAL_BATCH) {
        let refs: Vec<_> = chunk.iter().map(|&i| ds.get(i)).collect();
        let x = stack_signals(&refs)?;
        match layer {
            PcaLayer::HiddenPreActivation => {
                activations.extend_from_slice(hidden_pre_activations(params, &x)?.data());
            }
            PcaLayer::Logits => {
                activations.extend_from_slice(forward(params, &x, Phase::Eval)?.values.data());
            }
        }
        labels.extend(refs.iter().map(|e| e.label));
    }

    let (coords, eigenvalues, explained_variance, components) =
        pca_of_matrix(&activations, n, dim, n_components, seed)?;
    let warning = if eigenvalues.len() < n_components {
        Some(format!(
            "input is rank deficient: only {} of {n_components} components extracted",
            eigenvalues.len()
        ))
    } else {
        None
    };
    Ok(PcaResult {
        coords,
        labels,
        eigenvalues,
        explained_variance,
        components,
        warning,
    })
}

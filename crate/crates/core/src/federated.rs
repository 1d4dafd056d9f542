//! FedAvg orchestration: local client training, dataset-size-weighted
//! aggregation and the synchronous round loop.
//!
//! Every round, each client starts from the freshly redistributed global
//! model, runs `E` epochs of mini-batch SGD with its strategy's loss, and
//! returns its parameters. The server aggregates only after every client
//! has finished and redistributes the weighted average. Client updates are
//! mutually independent (nothing but the incoming global model, the
//! client's own previous model and its own data flows in), so sequential
//! execution and any parallel schedule produce identical results.
//!
//! The "generalized" client stands in for the K-1 well-behaved clients: it
//! trains once per round on balanced all-class data and its aggregation
//! weight is scaled by K-1 instead of instantiating K-1 clones.

use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::continual::{
    compose_round_dataset, scenario_client1, scenario_generalized, ExemplarStore, TaskSequence,
};
use crate::data::{
    build_experiment_data, channel_stats, load_uci, make_synthetic, one_hot_labels, stack_signals,
    standardize, Dataset, ExperimentData, PartitionSpec,
};
use crate::error::{Error, Result};
use crate::losses::{classification_loss, flwf2t_loss, flwf_loss, DistillConfig, LossValue};
use crate::metrics::{
    accuracy_from_preds, build_report, predictions, ClientRoundRecord, MetricsReport, RoundRecord,
};
use crate::nn::{
    backward_from_trace, forward, forward_trace, init_params, sgd_step_in_place, CnnParams,
    Logits, Phase, NUM_CLASSES,
};
use crate::seeding::{self, purpose};
use crate::tensor::Tensor;

/// Local training strategy of a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Plain fine-tuning on the round's data.
    FineTune,
    /// Distillation against the client's previous-round model.
    Flwf,
    /// Distillation against both the previous model and the server model.
    Flwf2T,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "FT" => Ok(Strategy::FineTune),
            "FLwF" => Ok(Strategy::Flwf),
            "FLwF2T" => Ok(Strategy::Flwf2T),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?}; expected FT, FLwF or FLwF2T"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FineTune => "FT",
            Strategy::Flwf => "FLwF",
            Strategy::Flwf2T => "FLwF2T",
        }
    }
}

/// The per-round training knobs shared by all clients.
#[derive(Debug, Clone)]
pub struct TrainingHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub dropout: f64,
    pub distill: DistillConfig,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    /// 1-based client id, also the seeding namespace.
    pub id: usize,
    pub label: String,
    /// The model this client trained in the current round.
    pub current_params: CnnParams,
    /// The model this client returned last round (the pre-trained init
    /// before round 1); teacher 1 for the distillation strategies.
    pub prev_params: CnnParams,
    pub strategy: Strategy,
    pub exemplars: ExemplarStore,
    pub sequence: TaskSequence,
    /// Weight multiplier in aggregation; K-1 for the generalized stand-in.
    pub aggregation_factor: usize,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub global_params: CnnParams,
    pub round: usize,
}

/// Per-client sample counts for the weighted average.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationWeights {
    counts: Vec<u64>,
}

impl AggregationWeights {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::RejectedInput("no aggregation weights".into()));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::RejectedInput(
                "aggregation weights must be positive".into(),
            ));
        }
        Ok(AggregationWeights { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `m_k / m` per client.
    pub fn coefficients(&self) -> Vec<f64> {
        let m = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / m).collect()
    }
}

/// Element-wise convex combination of parameter sets with coefficients
/// `m_k / m`.
pub fn aggregate(models: &[&CnnParams], weights: &AggregationWeights) -> Result<CnnParams> {
    if models.is_empty() {
        return Err(Error::RejectedInput("no models to aggregate".into()));
    }
    if models.len() != weights.counts().len() {
        return Err(Error::RejectedInput(format!(
            "{} models but {} weights",
            models.len(),
            weights.counts().len()
        )));
    }
    for m in models.iter().skip(1) {
        for (a, b) in m.fields().into_iter().zip(models[0].fields()) {
            if a.shape() != b.shape() {
                return Err(Error::RejectedInput(format!(
                    "model parameter shapes differ: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
    }

    let coefficients = weights.coefficients();
    let mut out = CnnParams {
        conv_w: Tensor::zeros(models[0].conv_w.shape()),
        conv_b: Tensor::zeros(models[0].conv_b.shape()),
        fc1_w: Tensor::zeros(models[0].fc1_w.shape()),
        fc1_b: Tensor::zeros(models[0].fc1_b.shape()),
        out_w: Tensor::zeros(models[0].out_w.shape()),
        out_b: Tensor::zeros(models[0].out_b.shape()),
    };
    for (model, &coef) in models.iter().zip(&coefficients) {
        for (acc, src) in out.fields_mut().into_iter().zip(model.fields()) {
            for (o, &v) in acc.data_mut().iter_mut().zip(src.data()) {
                *o += coef * v;
            }
        }
    }
    Ok(out)
}

/// Evaluation-mode logits for a whole dataset, in dataset order.
fn eval_logits(params: &CnnParams, data: &Dataset, batch_size: usize) -> Result<Vec<[f64; 6]>> {
    let mut rows = Vec::with_capacity(data.len());
    for chunk in data.examples().chunks(batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        let x = stack_signals(&refs)?;
        let logits = forward(params, &x, Phase::Eval)?;
        for i in 0..chunk.len() {
            let mut row = [0.0; 6];
            row.copy_from_slice(logits.row(i));
            rows.push(row);
        }
    }
    Ok(rows)
}

fn gather_logits(all: &[[f64; 6]], indices: &[usize]) -> Logits {
    let mut data = Vec::with_capacity(indices.len() * NUM_CLASSES);
    for &i in indices {
        data.extend_from_slice(&all[i]);
    }
    Logits::new(Tensor::from_vec(&[indices.len(), NUM_CLASSES], data).unwrap()).unwrap()
}

/// One client's local training for one round.
///
/// Starts from the incoming global model and runs `epochs` epochs of
/// mini-batch SGD with the strategy's loss. Teachers (the previous-round
/// model and, for the two-teacher strategy, the global model itself) are
/// fixed for the whole round, so their logits are computed once. On a
/// client's first round the previous-model term is dropped and its weight
/// moves to the server teacher.
pub fn client_update(
    client_id: usize,
    round: usize,
    global: &CnnParams,
    prev: &CnnParams,
    data: &Dataset,
    strategy: Strategy,
    h: &TrainingHyper,
) -> Result<CnnParams> {
    if data.is_empty() {
        return Err(Error::Config(format!(
            "client {client_id} has no data for round {round}"
        )));
    }
    if h.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut params = global.clone();
    if h.epochs == 0 {
        return Ok(params);
    }

    let distill = match (strategy, round) {
        // First communication round: only the server model teaches.
        (Strategy::Flwf2T, r) if r <= 1 => DistillConfig {
            beta: 0.0,
            ..h.distill
        },
        _ => h.distill,
    };
    let prev_rows = match strategy {
        Strategy::Flwf => Some(eval_logits(prev, data, h.batch_size)?),
        Strategy::Flwf2T if distill.beta != 0.0 => Some(eval_logits(prev, data, h.batch_size)?),
        _ => None,
    };
    let server_rows = match strategy {
        Strategy::Flwf2T if 1.0 - distill.alpha - distill.beta != 0.0 => {
            Some(eval_logits(global, data, h.batch_size)?)
        }
        _ => None,
    };

    let n = data.len();
    for epoch in 0..h.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        {
            use rand::seq::SliceRandom;
            let mut rng = seeding::rng_for(
                h.master_seed,
                &[purpose::SHUFFLE, client_id as u64, round as u64, epoch as u64],
            );
            order.shuffle(&mut rng);
        }
        for (batch_idx, chunk) in order.chunks(h.batch_size).enumerate() {
            let refs: Vec<_> = chunk.iter().map(|&i| data.get(i)).collect();
            let x = stack_signals(&refs)?;
            let labels = one_hot_labels(&refs);
            let phase = Phase::Train {
                dropout_rate: h.dropout,
                dropout_seed: seeding::derive_seed(
                    h.master_seed,
                    &[
                        purpose::DROPOUT,
                        client_id as u64,
                        round as u64,
                        epoch as u64,
                        batch_idx as u64,
                    ],
                ),
            };
            let trace = forward_trace(&params, &x, phase)?;
            let loss: LossValue = match strategy {
                Strategy::FineTune => classification_loss(&trace.logits, &labels)?,
                Strategy::Flwf => {
                    let teacher = gather_logits(prev_rows.as_ref().unwrap(), chunk);
                    flwf_loss(&trace.logits, &teacher, &labels, &distill)?
                }
                Strategy::Flwf2T => {
                    let prev_logits = match &prev_rows {
                        Some(rows) => gather_logits(rows, chunk),
                        None => trace.logits.clone(), // weight 0, value unused
                    };
                    let server_logits = match &server_rows {
                        Some(rows) => gather_logits(rows, chunk),
                        None => trace.logits.clone(),
                    };
                    flwf2t_loss(&trace.logits, &prev_logits, &server_logits, &labels, &distill)?
                }
            };
            let grads = backward_from_trace(&params, &trace, &loss.grad_on_logits)?;
            sgd_step_in_place(&mut params, &grads, h.eta);
        }
    }
    Ok(params)
}

fn per_class_accuracy(preds: &[usize], ds: &Dataset) -> [f64; NUM_CLASSES] {
    let mut hits = [0usize; NUM_CLASSES];
    let mut totals = [0usize; NUM_CLASSES];
    for (pred, e) in preds.iter().zip(ds.examples()) {
        totals[e.label] += 1;
        if *pred == e.label {
            hits[e.label] += 1;
        }
    }
    let mut acc = [0.0; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        acc[c] = if totals[c] > 0 {
            hits[c] as f64 / totals[c] as f64
        } else {
            0.0
        };
    }
    acc
}

fn all_classes() -> std::collections::BTreeSet<usize> {
    (0..NUM_CLASSES).collect()
}

/// One synchronous communication round: every client trains from the same
/// incoming global model, aggregation happens only after all of them finish,
/// and the post-round evaluations are recorded.
pub fn run_round(
    server: &mut ServerState,
    clients: &mut [ClientState],
    fresh: &[&Dataset],
    test: &Dataset,
    h: &TrainingHyper,
    use_exemplars: bool,
) -> Result<RoundRecord> {
    if clients.is_empty() {
        return Err(Error::Config("no clients".into()));
    }
    if fresh.len() != clients.len() {
        return Err(Error::Config(format!(
            "{} datasets for {} clients",
            fresh.len(),
            clients.len()
        )));
    }
    let round = server.round + 1;

    let mut counts = Vec::with_capacity(clients.len());
    for (client, data) in clients.iter_mut().zip(fresh) {
        let task = client.sequence.current_task(round)?;
        let composed =
            compose_round_dataset(data, &client.exemplars, task.task_id, use_exemplars)?;
        client.current_params = client_update(
            client.id,
            round,
            &server.global_params,
            &client.prev_params,
            &composed,
            client.strategy,
            h,
        )?;
        if use_exemplars {
            let mut rng = seeding::rng_for(
                h.master_seed,
                &[purpose::EXEMPLAR, client.id as u64, round as u64],
            );
            client.exemplars.update(task.task_id, data, &mut rng);
        }
        // Aggregation counts follow the fresh per-round draw; the generalized
        // stand-in scales by the K-1 clients it represents.
        counts.push((data.len() * client.aggregation_factor) as u64);
    }

    let weights = AggregationWeights::new(counts)?;
    let models: Vec<&CnnParams> = clients.iter().map(|c| &c.current_params).collect();
    server.global_params = aggregate(&models, &weights)?;
    server.round = round;

    // Post-round evaluations on the common test set.
    let server_preds = predictions(&server.global_params, test)?;
    let mut record = RoundRecord {
        round,
        server_whole: accuracy_from_preds(&server_preds, test, &all_classes())?,
        server_per_class: per_class_accuracy(&server_preds, test),
        clients: Vec::with_capacity(clients.len()),
    };
    for (idx, client) in clients.iter().enumerate() {
        let preds = predictions(&client.current_params, test)?;
        let task = client.sequence.current_task(round)?;
        let mut per_task = Vec::with_capacity(task.task_id);
        for d in 1..=task.task_id {
            let classes = &client.sequence.tasks()[d - 1].classes;
            per_task.push((d, accuracy_from_preds(&preds, test, classes)?));
        }
        record.clients.push(ClientRoundRecord {
            client: idx,
            whole: accuracy_from_preds(&preds, test, &all_classes())?,
            personal: accuracy_from_preds(
                &preds,
                test,
                &client.sequence.cumulative_classes(round)?,
            )?,
            current_task: task.task_id,
            per_task,
            per_class: per_class_accuracy(&preds, test),
        });
    }

    // The returned model becomes next round's teacher 1.
    for client in clients.iter_mut() {
        client.prev_params = client.current_params.clone();
    }
    Ok(record)
}

/// Everything a finished experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Echo of the resolved configuration the run used.
    pub config: ExperimentConfig,
    /// Whole-test accuracy of the shared pre-trained initial model.
    pub pretrain_accuracy: f64,
    pub records: Vec<RoundRecord>,
    pub report: MetricsReport,
    /// Labels of the client entities, in record order.
    pub client_labels: Vec<String>,
    pub wall_time_secs: f64,
}

/// Resolve the configured data source into a standardized example pool.
pub fn resolve_pool(cfg: &ExperimentConfig) -> Result<Dataset> {
    if cfg.dataset == "synthetic" {
        Ok(make_synthetic(cfg.master_seed, cfg.synthetic_per_class))
    } else {
        let channels = cfg.channel_selection()?;
        let (train, test) = load_uci(std::path::Path::new(&cfg.dataset), &channels)?;
        let stats = channel_stats(&train)?;
        let train = standardize(&train, &stats)?;
        let test = standardize(&test, &stats)?;
        Ok(train.concat(&test))
    }
}

/// The client scenarios of an experiment: the observed two-task client plus
/// the generalized stand-in.
pub fn experiment_sequences(rounds: usize) -> Result<Vec<TaskSequence>> {
    Ok(vec![
        scenario_client1(rounds)?,
        scenario_generalized(rounds)?,
    ])
}

/// Run the full pipeline: partition data, pre-train the shared init, run all
/// rounds and aggregate the metrics.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let started = Instant::now();
    cfg.validate()?;
    let pool = resolve_pool(cfg)?;
    let channels = pool
        .signal_channels()
        .ok_or_else(|| Error::Config("data pool is empty".into()))?;

    let sequences = if cfg.rounds > 0 {
        experiment_sequences(cfg.rounds)?
    } else {
        Vec::new()
    };
    let data: ExperimentData = build_experiment_data(
        &pool,
        &PartitionSpec {
            sequences: &sequences,
            rounds: cfg.rounds,
            round_size: cfg.round_size,
            test_per_class: cfg.test_per_class,
            pretrain_per_class: cfg.pretrain_per_class,
        },
        cfg.master_seed,
    )?;

    // Shared initial weights: pre-train on the small balanced set.
    let init = init_params(
        seeding::derive_seed(cfg.master_seed, &[purpose::INIT]),
        channels,
    );
    let pretrain_hyper = TrainingHyper {
        epochs: cfg.pretrain_epochs,
        batch_size: cfg.batch_size,
        eta: cfg.pretrain_eta,
        dropout: cfg.dropout,
        distill: cfg.distill(),
        master_seed: cfg.master_seed,
    };
    let pretrained = client_update(
        0,
        0,
        &init,
        &init,
        &data.pretrain,
        Strategy::FineTune,
        &pretrain_hyper,
    )?;
    let pretrain_preds = predictions(&pretrained, &data.test)?;
    let pretrain_accuracy = accuracy_from_preds(&pretrain_preds, &data.test, &all_classes())?;

    let mut result = ExperimentResult {
        config: cfg.clone(),
        pretrain_accuracy,
        records: Vec::with_capacity(cfg.rounds),
        report: MetricsReport::default(),
        client_labels: Vec::new(),
        wall_time_secs: 0.0,
    };
    if cfg.rounds == 0 {
        result.wall_time_secs = started.elapsed().as_secs_f64();
        return Ok(result);
    }

    let strategies = cfg.parsed_strategies()?;
    let mut clients = vec![
        ClientState {
            id: 1,
            label: "client1".to_string(),
            current_params: pretrained.clone(),
            prev_params: pretrained.clone(),
            strategy: strategies.0,
            exemplars: ExemplarStore::new(cfg.exemplars_per_task),
            sequence: sequences[0].clone(),
            aggregation_factor: 1,
        },
        ClientState {
            id: 2,
            label: "generalized".to_string(),
            current_params: pretrained.clone(),
            prev_params: pretrained.clone(),
            strategy: strategies.1,
            exemplars: ExemplarStore::new(cfg.exemplars_per_task),
            sequence: sequences[1].clone(),
            aggregation_factor: cfg.clients - 1,
        },
    ];
    let mut server = ServerState {
        global_params: pretrained,
        round: 0,
    };
    let hyper = cfg.hyper();

    for round in 1..=cfg.rounds {
        let fresh: Vec<&Dataset> = (0..clients.len())
            .map(|c| &data.per_round[&(c, round)])
            .collect();
        let record = run_round(
            &mut server,
            &mut clients,
            &fresh,
            &data.test,
            &hyper,
            cfg.use_exemplars,
        )?;
        result.records.push(record);
    }

    let meta: Vec<(String, TaskSequence)> = clients
        .iter()
        .map(|c| (c.label.clone(), c.sequence.clone()))
        .collect();
    result.report = build_report(&result.records, &meta)?;
    result.client_labels = clients.iter().map(|c| c.label.clone()).collect();
    result.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng) -> CnnParams {
        let mut p = init_params(rng.random::<u64>(), 6);
        // init leaves biases at zero; randomize them too
        for t in [&mut p.conv_b, &mut p.fc1_b, &mut p.out_b] {
            let shape = t.shape().to_vec();
            let data: Vec<f64> = (0..t.len()).map(|_| rng.random::<f64>() - 0.5).collect();
            *t = Tensor::from_vec(&shape, data).unwrap();
        }
        p
    }

    #[test]
    fn aggregate_identical_models_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng);
        let w = AggregationWeights::new(vec![120, 480]).unwrap();
        let out = aggregate(&[&p, &p], &w).unwrap();
        for (a, b) in out.fields().into_iter().zip(p.fields()) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_equal_weights_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_params(&mut rng);
        let b = random_params(&mut rng);
        let w = AggregationWeights::new(vec![60, 60]).unwrap();
        let out = aggregate(&[&a, &b], &w).unwrap();
        for ((o, x), y) in out.fields().into_iter().zip(a.fields()).zip(b.fields()) {
            for ((&ov, &xv), &yv) in o.data().iter().zip(x.data()).zip(y.data()) {
                assert!((ov - 0.5 * (xv + yv)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_coefficients_match_generalized_setup() {
        // observed client 120 examples, generalized stand-in 480
        let w = AggregationWeights::new(vec![120, 480]).unwrap();
        let coef = w.coefficients();
        assert!((coef[0] - 0.2).abs() < 1e-15);
        assert!((coef[1] - 0.8).abs() < 1e-15);
        assert!((coef.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn aggregate_rejects_shape_mismatch_and_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_params(&mut rng);
        let b = init_params(1, 3); // 3 channels: different conv shape
        let w = AggregationWeights::new(vec![1, 1]).unwrap();
        assert!(matches!(
            aggregate(&[&a, &b], &w),
            Err(Error::RejectedInput(_))
        ));
        assert!(AggregationWeights::new(vec![5, 0]).is_err());
        assert!(AggregationWeights::new(vec![]).is_err());
    }
}

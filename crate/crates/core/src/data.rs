//! Dataset ingestion, synthetic stand-in generation and experiment
//! partitioning.
//!
//! Real data follows the public UCI HAR raw-signal layout: per-channel
//! fixed-width text matrices of 128 columns under
//! `<root>/{train,test}/Inertial Signals/`, plus `y_{train,test}.txt` label
//! files. Labels are remapped from the published 1..6 to 0..5
//! (0 Walking, 1 Walking Up, 2 Walking Down, 3 Sitting, 4 Standing,
//! 5 Laying).
//!
//! The synthetic generator produces six Gaussian class templates over
//! `[128, 6]` whose geometry mirrors the real embedding: two classes share
//! nearby templates (3 "Sitting" and 4 "Standing"), the three walking
//! classes sit in a common region, and class 5 ("Laying") is far separated
//! from everything else.
//!
//! Every example carries a `source_index` so the experiment partitioner can
//! assert global disjointness of the per-round training sets, the
//! pre-training set and the common test set.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::continual::TaskSequence;
use crate::error::{Error, Result};
use crate::nn::{NUM_CLASSES, SIGNAL_LEN};
use crate::seeding;
use crate::tensor::Tensor;

/// One labeled signal window.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// `[128, channels]`, row-major (time-major).
    pub signal: Tensor,
    pub label: usize,
    /// Provenance within the experiment's source pool; unique per example.
    pub source_index: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Dataset { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn push(&mut self, e: Example) {
        self.examples.push(e);
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0usize; NUM_CLASSES];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    /// Channel count of the stored signals (None when empty).
    pub fn signal_channels(&self) -> Option<usize> {
        self.examples.first().map(|e| e.signal.shape()[1])
    }

    /// Concatenation preserving example order.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut all = self.examples.clone();
        all.extend(other.examples.iter().cloned());
        Dataset::new(all)
    }
}

/// Stack example signals into one `[n, 128, channels]` input tensor.
pub fn stack_signals(examples: &[&Example]) -> Result<Tensor> {
    if examples.is_empty() {
        return Err(Error::RejectedInput("cannot stack zero examples".into()));
    }
    let channels = examples[0].signal.shape()[1];
    let mut data = Vec::with_capacity(examples.len() * SIGNAL_LEN * channels);
    for e in examples {
        if e.signal.shape() != [SIGNAL_LEN, channels] {
            return Err(Error::RejectedInput(format!(
                "signal shape {:?} does not match [{SIGNAL_LEN}, {channels}]",
                e.signal.shape()
            )));
        }
        data.extend_from_slice(e.signal.data());
    }
    Tensor::from_vec(&[examples.len(), SIGNAL_LEN, channels], data)
}

/// One-hot label matrix `[n, 6]` for a slice of examples.
pub fn one_hot_labels(examples: &[&Example]) -> Tensor {
    let mut data = vec![0.0; examples.len() * NUM_CLASSES];
    for (i, e) in examples.iter().enumerate() {
        data[i * NUM_CLASSES + e.label] = 1.0;
    }
    Tensor::from_vec(&[examples.len(), NUM_CLASSES], data).unwrap()
}

// ---------------------------------------------------------------------------
// UCI HAR ingestion
// ---------------------------------------------------------------------------

/// The nine raw inertial channels shipped with the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    BodyAccX,
    BodyAccY,
    BodyAccZ,
    BodyGyroX,
    BodyGyroY,
    BodyGyroZ,
    TotalAccX,
    TotalAccY,
    TotalAccZ,
}

impl Channel {
    pub fn file_stem(&self) -> &'static str {
        match self {
            Channel::BodyAccX => "body_acc_x",
            Channel::BodyAccY => "body_acc_y",
            Channel::BodyAccZ => "body_acc_z",
            Channel::BodyGyroX => "body_gyro_x",
            Channel::BodyGyroY => "body_gyro_y",
            Channel::BodyGyroZ => "body_gyro_z",
            Channel::TotalAccX => "total_acc_x",
            Channel::TotalAccY => "total_acc_y",
            Channel::TotalAccZ => "total_acc_z",
        }
    }

    pub fn parse(s: &str) -> Result<Channel> {
        let all = [
            Channel::BodyAccX,
            Channel::BodyAccY,
            Channel::BodyAccZ,
            Channel::BodyGyroX,
            Channel::BodyGyroY,
            Channel::BodyGyroZ,
            Channel::TotalAccX,
            Channel::TotalAccY,
            Channel::TotalAccZ,
        ];
        all.into_iter()
            .find(|c| c.file_stem() == s)
            .ok_or_else(|| Error::Config(format!("unknown channel name: {s}")))
    }
}

/// Total accelerometer plus gyroscope, three axes each.
pub fn default_channels() -> Vec<Channel> {
    vec![
        Channel::TotalAccX,
        Channel::TotalAccY,
        Channel::TotalAccZ,
        Channel::BodyGyroX,
        Channel::BodyGyroY,
        Channel::BodyGyroZ,
    ]
}

fn read_signal_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let fname = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::Ingestion {
        file: fname.clone(),
        line: 0,
        message: format!("cannot open: {e}"),
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Ingestion {
            file: fname.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Ingestion {
                    file: fname.clone(),
                    line: i + 1,
                    message: format!("not a number: {tok:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != SIGNAL_LEN {
            return Err(Error::Ingestion {
                file: fname.clone(),
                line: i + 1,
                message: format!("expected {SIGNAL_LEN} columns, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let fname = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::Ingestion {
        file: fname.clone(),
        line: 0,
        message: format!("cannot open: {e}"),
    })?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Ingestion {
            file: fname.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let raw: usize = t.parse().map_err(|_| Error::Ingestion {
            file: fname.clone(),
            line: i + 1,
            message: format!("not a label: {t:?}"),
        })?;
        if !(1..=NUM_CLASSES).contains(&raw) {
            return Err(Error::Ingestion {
                file: fname.clone(),
                line: i + 1,
                message: format!("label {raw} outside 1..{NUM_CLASSES}"),
            });
        }
        labels.push(raw - 1);
    }
    Ok(labels)
}

fn load_split(
    root: &Path,
    split: &str,
    channels: &[Channel],
    index_offset: u64,
) -> Result<Dataset> {
    let labels = read_labels(&root.join(split).join(format!("y_{split}.txt")))?;
    let mut per_channel = Vec::with_capacity(channels.len());
    for ch in channels {
        let path = root
            .join(split)
            .join("Inertial Signals")
            .join(format!("{}_{split}.txt", ch.file_stem()));
        let rows = read_signal_matrix(&path)?;
        if rows.len() != labels.len() {
            return Err(Error::Ingestion {
                file: path.display().to_string(),
                line: 0,
                message: format!(
                    "{} rows but {} labels in split {split}",
                    rows.len(),
                    labels.len()
                ),
            });
        }
        per_channel.push(rows);
    }

    let c = channels.len();
    let mut examples = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let mut data = vec![0.0; SIGNAL_LEN * c];
        for (ci, rows) in per_channel.iter().enumerate() {
            for (t, &v) in rows[i].iter().enumerate() {
                data[t * c + ci] = v;
            }
        }
        examples.push(Example {
            signal: Tensor::from_vec(&[SIGNAL_LEN, c], data)?,
            label,
            source_index: index_offset + i as u64,
        });
    }
    Ok(Dataset::new(examples))
}

/// Load the raw train and test partitions. Values are read as published;
/// apply [`standardize`] before training.
pub fn load_uci(root: &Path, channels: &[Channel]) -> Result<(Dataset, Dataset)> {
    if channels.is_empty() {
        return Err(Error::Config("channel selection is empty".into()));
    }
    // Accept either the archive root or its inner directory.
    let root: PathBuf = if root.join("train").is_dir() {
        root.to_path_buf()
    } else if root.join("UCI HAR Dataset").join("train").is_dir() {
        root.join("UCI HAR Dataset")
    } else {
        return Err(Error::Ingestion {
            file: root.display().to_string(),
            line: 0,
            message: "no train/ directory found under dataset root".into(),
        });
    };
    let train = load_split(&root, "train", channels, 0)?;
    let test = load_split(&root, "test", channels, train.len() as u64)?;
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-channel mean and standard deviation over all examples and timesteps.
pub fn channel_stats(ds: &Dataset) -> Result<ChannelStats> {
    let c = ds
        .signal_channels()
        .ok_or_else(|| Error::RejectedInput("empty dataset".into()))?;
    let mut sum = vec![0.0; c];
    let mut sum_sq = vec![0.0; c];
    let n = (ds.len() * SIGNAL_LEN) as f64;
    for e in ds.examples() {
        for row in e.signal.data().chunks_exact(c) {
            for (ci, &v) in row.iter().enumerate() {
                sum[ci] += v;
                sum_sq[ci] += v * v;
            }
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0)).sqrt().max(1e-12))
        .collect();
    Ok(ChannelStats { mean, std })
}

/// Apply `(x - mean) / std` per channel.
pub fn standardize(ds: &Dataset, stats: &ChannelStats) -> Result<Dataset> {
    let c = stats.mean.len();
    let mut out = Vec::with_capacity(ds.len());
    for e in ds.examples() {
        if e.signal.shape()[1] != c {
            return Err(Error::RejectedInput(format!(
                "example has {} channels, stats have {c}",
                e.signal.shape()[1]
            )));
        }
        let data: Vec<f64> = e
            .signal
            .data()
            .chunks_exact(c)
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(ci, &v)| (v - stats.mean[ci]) / stats.std[ci])
            })
            .collect();
        out.push(Example {
            signal: Tensor::from_vec(&[SIGNAL_LEN, c], data)?,
            label: e.label,
            source_index: e.source_index,
        });
    }
    Ok(Dataset::new(out))
}

// ---------------------------------------------------------------------------
// Synthetic stand-in
// ---------------------------------------------------------------------------

const SYNTH_CHANNELS: usize = 6;

/// Smooth random vector built from a few low-frequency harmonics per channel.
fn smooth_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = vec![0.0; SIGNAL_LEN * SYNTH_CHANNELS];
    for c in 0..SYNTH_CHANNELS {
        let mut terms = Vec::new();
        for h in 1..=4u32 {
            let amp = rng.random::<f64>() - 0.5;
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            terms.push((h as f64, amp, phase));
        }
        let offset = (rng.random::<f64>() - 0.5) * 0.5;
        for t in 0..SIGNAL_LEN {
            let tau = t as f64 / SIGNAL_LEN as f64;
            let mut val = offset;
            for &(h, amp, phase) in &terms {
                val += amp * (std::f64::consts::TAU * h * tau + phase).sin();
            }
            v[t * SYNTH_CHANNELS + c] = val;
        }
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram_schmidt(mut vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for i in 0..vs.len() {
        for j in 0..i {
            let proj = dot(&vs[i], &vs[j]);
            let prev = vs[j].clone();
            for (x, p) in vs[i].iter_mut().zip(prev) {
                *x -= proj * p;
            }
        }
        let norm = dot(&vs[i], &vs[i]).sqrt();
        for x in vs[i].iter_mut() {
            *x /= norm;
        }
    }
    vs
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 bounded away from zero.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Balanced six-class synthetic dataset over `[128, 6]` signals.
///
/// Class means sit on an orthonormal smooth basis with unit isotropic noise:
/// classes 0..2 form a cluster of mutually close templates, classes 3 and 4
/// share nearby templates (center distance 2 sigma, so a linear rule cannot
/// exceed ~84% between them), and class 5 is ~14 sigma away from everything,
/// which makes it linearly separable at essentially 100%.
pub fn make_synthetic(seed: u64, per_class: usize) -> Dataset {
    assert!(per_class >= 1, "per_class must be >= 1");
    let mut rng = seeding::rng_for(seed, &[seeding::purpose::SYNTHETIC]);
    let basis = gram_schmidt((0..6).map(|_| smooth_vector(&mut rng)).collect());
    let (walk_a, walk_b, walk_c, static_axis, static_dir, laying_dir) = (
        &basis[0], &basis[1], &basis[2], &basis[3], &basis[4], &basis[5],
    );

    let dim = SIGNAL_LEN * SYNTH_CHANNELS;
    let template = |parts: &[(f64, &Vec<f64>)]| -> Vec<f64> {
        let mut t = vec![0.0; dim];
        for &(w, v) in parts {
            for (x, &b) in t.iter_mut().zip(v) {
                *x += w * b;
            }
        }
        t
    };
    let templates = [
        template(&[(2.2, walk_a)]),
        template(&[(2.2, walk_b)]),
        template(&[(2.2, walk_c)]),
        template(&[(8.0, static_dir), (1.0, static_axis)]),
        template(&[(8.0, static_dir), (-1.0, static_axis)]),
        template(&[(14.0, laying_dir)]),
    ];

    let mut examples = Vec::with_capacity(per_class * NUM_CLASSES);
    let mut source_index = 0u64;
    for (label, tpl) in templates.iter().enumerate() {
        for _ in 0..per_class {
            let data: Vec<f64> = tpl.iter().map(|&m| m + standard_normal(&mut rng)).collect();
            examples.push(Example {
                signal: Tensor::from_vec(&[SIGNAL_LEN, SYNTH_CHANNELS], data).unwrap(),
                label,
                source_index,
            });
            source_index += 1;
        }
    }
    Dataset::new(examples)
}

// ---------------------------------------------------------------------------
// Experiment partitioning
// ---------------------------------------------------------------------------

/// What to carve out of the source pool.
pub struct PartitionSpec<'a> {
    /// Task sequence per client, in client order.
    pub sequences: &'a [TaskSequence],
    pub rounds: usize,
    /// Fresh examples per client per round.
    pub round_size: usize,
    pub test_per_class: usize,
    pub pretrain_per_class: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentData {
    /// Balanced warm-up set used to produce the shared initial weights.
    pub pretrain: Dataset,
    /// Fresh per-round training data, keyed by (client index, round).
    pub per_round: BTreeMap<(usize, usize), Dataset>,
    /// Common balanced test set.
    pub test: Dataset,
}

struct ClassPools {
    by_class: [Vec<usize>; NUM_CLASSES],
    cursor: [usize; NUM_CLASSES],
}

impl ClassPools {
    fn draw(&mut self, class: usize, n: usize, what: &str) -> Result<Vec<usize>> {
        let pool = &self.by_class[class];
        let available = pool.len() - self.cursor[class];
        if available < n {
            return Err(Error::Config(format!(
                "insufficient data for class {class} while drawing {what}: \
                 need {n}, have {available} left"
            )));
        }
        let start = self.cursor[class];
        self.cursor[class] = start + n;
        Ok(pool[start..start + n].to_vec())
    }
}

/// Split `round_size` across `classes` as evenly as possible; the first
/// `round_size % classes.len()` classes (ascending order) take the remainder.
fn per_class_split(round_size: usize, classes: &[usize]) -> Vec<(usize, usize)> {
    let base = round_size / classes.len();
    let extra = round_size % classes.len();
    classes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, base + usize::from(i < extra)))
        .collect()
}

/// Carve disjoint test / pretrain / per-round sets from the pool.
///
/// All draws are disjoint by `source_index`; the fresh set for (client k,
/// round r) contains only classes of client k's task active at round r.
pub fn build_experiment_data(
    pool: &Dataset,
    spec: &PartitionSpec,
    seed: u64,
) -> Result<ExperimentData> {
    for seq in spec.sequences {
        if seq.total_rounds() != spec.rounds {
            return Err(Error::Config(format!(
                "task sequence budgets sum to {} but the experiment has {} rounds",
                seq.total_rounds(),
                spec.rounds
            )));
        }
    }

    let mut rng = seeding::rng_for(seed, &[seeding::purpose::DATA]);
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, e) in pool.examples().iter().enumerate() {
        if e.label >= NUM_CLASSES {
            return Err(Error::RejectedInput(format!(
                "label {} outside 0..{NUM_CLASSES}",
                e.label
            )));
        }
        by_class[e.label].push(i);
    }
    for list in by_class.iter_mut() {
        list.shuffle(&mut rng);
    }
    let mut pools = ClassPools {
        by_class,
        cursor: [0; NUM_CLASSES],
    };

    let take = |indices: Vec<usize>| -> Vec<Example> {
        indices.into_iter().map(|i| pool.get(i).clone()).collect()
    };

    let mut test = Vec::new();
    for class in 0..NUM_CLASSES {
        test.extend(take(pools.draw(class, spec.test_per_class, "the test set")?));
    }
    let mut pretrain = Vec::new();
    for class in 0..NUM_CLASSES {
        pretrain.extend(take(
            pools.draw(class, spec.pretrain_per_class, "the pre-training set")?,
        ));
    }

    let mut per_round = BTreeMap::new();
    for (client, seq) in spec.sequences.iter().enumerate() {
        for round in 1..=spec.rounds {
            let task = seq.current_task(round)?;
            let classes: Vec<usize> = task.classes.iter().cloned().collect();
            let mut chunk = Vec::with_capacity(spec.round_size);
            for (class, n) in per_class_split(spec.round_size, &classes) {
                chunk.extend(take(pools.draw(
                    class,
                    n,
                    &format!("client {} round {round}", client + 1),
                )?));
            }
            per_round.insert((client, round), Dataset::new(chunk));
        }
    }

    Ok(ExperimentData {
        pretrain: Dataset::new(pretrain),
        per_round,
        test: Dataset::new(test),
    })
}

// ---------------------------------------------------------------------------
// Binary cache
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 4] = b"FCLD";
const CACHE_VERSION: u8 = 1;

/// Write the dataset as a little-endian binary blob:
/// magic `FCLD`, version byte, u32 example count, u32 signal length,
/// u32 channel count, then per example a u32 label, u64 source index and the
/// raw f64 signal values.
pub fn save_cache(ds: &Dataset, path: &Path) -> Result<()> {
    let channels = ds
        .signal_channels()
        .ok_or_else(|| Error::RejectedInput("cannot cache an empty dataset".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&[CACHE_VERSION])?;
    w.write_all(&(ds.len() as u32).to_le_bytes())?;
    w.write_all(&(SIGNAL_LEN as u32).to_le_bytes())?;
    w.write_all(&(channels as u32).to_le_bytes())?;
    for e in ds.examples() {
        w.write_all(&(e.label as u32).to_le_bytes())?;
        w.write_all(&e.source_index.to_le_bytes())?;
        for &v in e.signal.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_cache(path: &Path) -> Result<Dataset> {
    let fname = path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);
    let bad = |message: String| Error::Ingestion {
        file: fname.clone(),
        line: 0,
        message,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(bad("bad magic header".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != CACHE_VERSION {
        return Err(bad(format!("unsupported cache version {}", version[0])));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let sig_len = u32::from_le_bytes(u32buf) as usize;
    if sig_len != SIGNAL_LEN {
        return Err(bad(format!("signal length {sig_len} != {SIGNAL_LEN}")));
    }
    r.read_exact(&mut u32buf)?;
    let channels = u32::from_le_bytes(u32buf) as usize;

    let mut examples = Vec::with_capacity(n);
    let mut u64buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut u32buf)?;
        let label = u32::from_le_bytes(u32buf) as usize;
        if label >= NUM_CLASSES {
            return Err(bad(format!("label {label} outside 0..{NUM_CLASSES}")));
        }
        r.read_exact(&mut u64buf)?;
        let source_index = u64::from_le_bytes(u64buf);
        let mut data = Vec::with_capacity(sig_len * channels);
        for _ in 0..sig_len * channels {
            r.read_exact(&mut u64buf)?;
            data.push(f64::from_le_bytes(u64buf));
        }
        examples.push(Example {
            signal: Tensor::from_vec(&[sig_len, channels], data)?,
            label,
            source_index,
        });
    }
    Ok(Dataset::new(examples))
}

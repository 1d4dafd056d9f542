//! The TOML experiment schema.
//!
//! Every key is optional; unset keys fall back to the reference defaults
//! (8 rounds, 10 local epochs, 5 clients, batch 32, eta 0.01, dropout 0.5,
//! 120 examples per round, T = 2, alpha = 0.001, beta = 0.7). Unknown keys
//! are hard errors. A resolved config serializes back to TOML byte-stably,
//! which is what makes a run reproducible from its artifacts alone.

use serde::{Deserialize, Serialize};

use crate::data::{default_channels, Channel};
use crate::error::{Error, Result};
use crate::federated::{Strategy, TrainingHyper};
use crate::losses::DistillConfig;
use crate::metrics::PcaLayer;

/// Per-client strategy selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyMap {
    /// Strategy of the observed two-task client: FT, FLwF or FLwF2T.
    pub client1: String,
    /// Strategy of the generalized stand-in client.
    pub generalized: String,
}

impl Default for StrategyMap {
    fn default() -> Self {
        StrategyMap {
            client1: "FLwF2T".to_string(),
            generalized: "FT".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// "synthetic" or a path to a UCI HAR dataset root.
    pub dataset: String,
    /// Communication rounds (R).
    pub rounds: usize,
    /// Local epochs per round (E).
    pub local_epochs: usize,
    /// Total clients simulated (K); one observed plus K-1 generalized.
    pub clients: usize,
    /// Mini-batch size (B).
    pub batch_size: usize,
    /// SGD learning rate.
    pub eta: f64,
    /// Dropout rate on the 1024-unit layer during training.
    pub dropout: f64,
    /// Fresh examples per client per round.
    pub round_size: usize,
    /// Distillation temperature (T).
    pub temperature: f64,
    /// Classification-loss weight.
    pub alpha: f64,
    /// Previous-model distillation weight in the two-teacher loss.
    pub beta: f64,
    /// Stored exemplars per learnt task.
    pub exemplars_per_task: usize,
    /// Replay stored exemplars alongside fresh data.
    pub use_exemplars: bool,
    /// Root seed; every random choice in the run derives from it.
    pub master_seed: u64,
    /// Artifact directory for `run`.
    pub out_dir: String,
    /// Epochs of warm-up training on the balanced pre-training set.
    pub pretrain_epochs: usize,
    pub pretrain_eta: f64,
    /// Examples per class when generating synthetic data.
    pub synthetic_per_class: usize,
    /// Common test set size per class.
    pub test_per_class: usize,
    /// Pre-training set size per class.
    pub pretrain_per_class: usize,
    /// Signal channels to load from a UCI root.
    pub channels: Vec<String>,
    /// Also write the activation PCA export during `run`.
    pub export_pca: bool,
    pub pca_per_class: usize,
    pub pca_components: usize,
    /// "hidden" (1024-unit pre-activation) or "logits".
    pub pca_layer: String,
    /// Epochs for the centralized training used by the `pca` command.
    pub centralized_epochs: usize,
    pub strategies: StrategyMap,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "synthetic".to_string(),
            rounds: 8,
            local_epochs: 10,
            clients: 5,
            batch_size: 32,
            eta: 0.01,
            dropout: 0.5,
            round_size: 120,
            temperature: 2.0,
            alpha: 0.001,
            beta: 0.7,
            exemplars_per_task: 10,
            use_exemplars: false,
            master_seed: 17,
            out_dir: "results/run".to_string(),
            pretrain_epochs: 40,
            pretrain_eta: 0.01,
            synthetic_per_class: 800,
            test_per_class: 100,
            pretrain_per_class: 10,
            channels: default_channels()
                .iter()
                .map(|c| c.file_stem().to_string())
                .collect(),
            export_pca: false,
            pca_per_class: 200,
            pca_components: 3,
            pca_layer: "hidden".to_string(),
            centralized_epochs: 20,
            strategies: StrategyMap::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(key: &str, v: usize) -> Result<()> {
            if v == 0 {
                return Err(Error::Config(format!("{key} must be >= 1, got {v}")));
            }
            Ok(())
        }
        if self.dataset.is_empty() {
            return Err(Error::Config("dataset must not be empty".into()));
        }
        if self.clients < 2 {
            return Err(Error::Config(format!(
                "clients must be >= 2 (one observed plus the generalized stand-in), got {}",
                self.clients
            )));
        }
        positive("batch_size", self.batch_size)?;
        positive("round_size", self.round_size)?;
        positive("test_per_class", self.test_per_class)?;
        positive("pretrain_per_class", self.pretrain_per_class)?;
        positive("exemplars_per_task", self.exemplars_per_task)?;
        positive("synthetic_per_class", self.synthetic_per_class)?;
        positive("pca_per_class", self.pca_per_class)?;
        positive("pca_components", self.pca_components)?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "eta must be a finite non-negative number, got {}",
                self.eta
            )));
        }
        if !(self.pretrain_eta >= 0.0 && self.pretrain_eta.is_finite()) {
            return Err(Error::Config(format!(
                "pretrain_eta must be a finite non-negative number, got {}",
                self.pretrain_eta
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        if self.alpha + self.beta > 1.0 {
            return Err(Error::Config(format!(
                "alpha + beta must not exceed 1, got {} + {}",
                self.alpha, self.beta
            )));
        }
        self.parsed_strategies()?;
        self.channel_selection()?;
        self.parsed_pca_layer()?;
        Ok(())
    }

    /// (client1, generalized) strategies.
    pub fn parsed_strategies(&self) -> Result<(Strategy, Strategy)> {
        Ok((
            Strategy::parse(&self.strategies.client1)?,
            Strategy::parse(&self.strategies.generalized)?,
        ))
    }

    pub fn channel_selection(&self) -> Result<Vec<Channel>> {
        if self.channels.is_empty() {
            return Err(Error::Config("channels must not be empty".into()));
        }
        self.channels.iter().map(|s| Channel::parse(s)).collect()
    }

    pub fn parsed_pca_layer(&self) -> Result<PcaLayer> {
        match self.pca_layer.as_str() {
            "hidden" => Ok(PcaLayer::HiddenPreActivation),
            "logits" => Ok(PcaLayer::Logits),
            other => Err(Error::Config(format!(
                "pca_layer must be \"hidden\" or \"logits\", got {other:?}"
            ))),
        }
    }

    pub fn distill(&self) -> DistillConfig {
        DistillConfig {
            temperature: self.temperature,
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn hyper(&self) -> TrainingHyper {
        TrainingHyper {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            eta: self.eta,
            dropout: self.dropout,
            distill: self.distill(),
            master_seed: self.master_seed,
        }
    }

    /// Stable TOML echo of the resolved configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

/// Parse a config file's text; unset keys take the defaults, unknown keys
/// and type violations are errors naming the key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_file(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

//! Auditor configuration, input assembly and the mini-batch training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{sigmoid, Adam, ContractHead, Dense, LossWeights, Network};
use crate::contract::ContractSet;
use crate::error::{Error, Result};
use crate::metrics::PredictionBatch;
use crate::ratings::{EdgeSet, FeatureStore};
use crate::seed;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

/// Columns whose training spread falls below this are centered but not scaled.
pub const STD_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    #[default]
    Structured,
    IdEmbedding,
}

impl std::str::FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(HeadMode::Structured),
            "id_embedding" => Ok(HeadMode::IdEmbedding),
            other => Err(Error::Config(format!(
                "unknown head mode {other:?} (expected structured or id_embedding)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditorConfig {
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_mos: f64,
    pub lambda_contract: f64,
    pub seed: u64,
    pub contract_family: String,
    pub evidence_channels: bool,
    pub head_mode: HeadMode,
    /// Width of the contract ID embeddings (id_embedding head only).
    pub embedding_dim: usize,
}

impl Default for AuditorConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256, 64],
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 64,
            lambda_mos: 1.0,
            lambda_contract: 1.0,
            seed: 0,
            contract_family: "mid".into(),
            evidence_channels: true,
            head_mode: HeadMode::Structured,
            embedding_dim: 32,
        }
    }
}

impl AuditorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.hidden_dims.iter().position(|&h| h == 0) {
            return Err(Error::Config(format!("hidden_dims[{i}] must be positive")));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (name, w) in [
            ("lambda_mos", self.lambda_mos),
            ("lambda_contract", self.lambda_contract),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative number, got {w}"
                )));
            }
        }
        if self.lambda_mos == 0.0 && self.lambda_contract == 0.0 {
            return Err(Error::Config(
                "at least one loss weight must be positive".into(),
            ));
        }
        if self.head_mode == HeadMode::IdEmbedding && self.embedding_dim == 0 {
            return Err(Error::Config(
                "embedding_dim must be positive for the id_embedding head".into(),
            ));
        }
        Ok(())
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            mos: self.lambda_mos,
            contract: self.lambda_contract,
        }
    }
}

/// Per-column affine normalization fitted on a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[f64], dim: usize) -> Self {
        let n = x.len().checked_div(dim).unwrap_or(0);
        let mut mean = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        if n == 0 {
            return Self { mean, scale };
        }
        for row in x.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for j in 0..dim {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        for j in 0..dim {
            let sd = (var[j] / n as f64).sqrt();
            scale[j] = if sd > STD_EPSILON { sd } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        x.chunks_exact(d)
            .flat_map(|row| (0..d).map(move |j| (row[j] - self.mean[j]) / self.scale[j]))
            .collect()
    }
}

/// A raw design matrix with regression targets and contract labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainArrays {
    /// Row-major `n * dim` inputs.
    pub x: Vec<f64>,
    pub dim: usize,
    pub y_mos: Vec<f64>,
    /// `n` rows of `k` labels (empty rows for MOS-only training).
    pub labels: Vec<Vec<bool>>,
}

impl TrainArrays {
    pub fn len(&self) -> usize {
        self.y_mos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_mos.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.x.len() != self.dim * self.len() {
            return Err(Error::Validation(format!(
                "input matrix of {} values does not fit {} rows of width {}",
                self.x.len(),
                self.len(),
                self.dim
            )));
        }
        if self.is_empty() {
            return Err(Error::Validation("cannot train on zero edges".into()));
        }
        if !self.labels.is_empty() && self.labels.len() != self.len() {
            return Err(Error::Validation(
                "label rows do not match the input rows".into(),
            ));
        }
        if let Some(v) = self.x.iter().chain(&self.y_mos).find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite training value {v}")));
        }
        Ok(())
    }

    fn n_contracts(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }
}

/// Ground-truth contract labels, one row per edge.
pub fn contract_labels(edges: &EdgeSet, contracts: &ContractSet) -> Vec<Vec<bool>> {
    edges
        .iter()
        .map(|e| contracts.indicators(e.stats()))
        .collect()
}

/// Concatenates each edge's feature vector with its evidence vector when given.
pub fn assemble_inputs(
    edges: &EdgeSet,
    features: &FeatureStore,
    evidence: Option<&FeatureStore>,
) -> Result<Vec<f64>> {
    let base = features.gather(edges)?;
    let extra = evidence.map(|ev| ev.gather(edges)).transpose()?;
    let width = features.dim() + evidence.map_or(0, FeatureStore::dim);
    let mut x = Vec::with_capacity(edges.len() * width);
    for (i, row) in base.iter().enumerate() {
        x.extend_from_slice(row);
        if let Some(extra) = &extra {
            x.extend_from_slice(extra[i]);
        }
    }
    Ok(x)
}

/// Features, optional evidence channels and the edges they describe.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub edges: &'a EdgeSet,
    pub features: &'a FeatureStore,
    pub evidence: Option<&'a FeatureStore>,
}

impl<'a> TrainingData<'a> {
    pub fn new(edges: &'a EdgeSet, features: &'a FeatureStore) -> Self {
        Self {
            edges,
            features,
            evidence: None,
        }
    }

    pub fn with_evidence(mut self, evidence: Option<&'a FeatureStore>) -> Self {
        self.evidence = evidence;
        self
    }

    fn arrays(&self, contracts: Option<&ContractSet>, use_evidence: bool) -> Result<TrainArrays> {
        let evidence = self.evidence.filter(|_| use_evidence);
        Ok(TrainArrays {
            x: assemble_inputs(self.edges, self.features, evidence)?,
            dim: self.features.dim() + evidence.map_or(0, FeatureStore::dim),
            y_mos: self.edges.mos_values(),
            labels: contracts.map_or_else(Vec::new, |c| contract_labels(self.edges, c)),
        })
    }
}

/// Per-edge predictions of a trained auditor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub mos: Vec<f64>,
    /// Empty for MOS-only models.
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditorModel {
    pub config: AuditorConfig,
    pub contract_names: Vec<String>,
    pub feature_dim: usize,
    /// Zero when the model was trained without evidence channels.
    pub evidence_dim: usize,
    pub standardizer: Standardizer,
    pub network: Network,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
}

impl AuditorModel {
    pub fn input_dim(&self) -> usize {
        self.feature_dim + self.evidence_dim
    }

    pub fn has_contract_head(&self) -> bool {
        self.network.n_contracts() > 0
    }

    /// Predicts from an unstandardized row-major input matrix.
    pub fn predict_matrix(&self, x: &[f64]) -> Result<ModelOutput> {
        let d = self.input_dim();
        if !x.len().is_multiple_of(d) {
            return Err(Error::Validation(format!(
                "input of {} values is not a multiple of the model input width {d}",
                x.len()
            )));
        }
        let n = x.len() / d;
        let fwd = self.network.forward(&self.standardizer.apply(x), n);
        let k = self.network.n_contracts();
        let probs = if k == 0 {
            Vec::new()
        } else {
            fwd.logits
                .chunks_exact(k)
                .map(|row| row.iter().map(|&z| sigmoid(z)).collect())
                .collect()
        };
        Ok(ModelOutput {
            mos: fwd.mos,
            probs,
        })
    }

    pub fn predict(
        &self,
        edges: &EdgeSet,
        features: &FeatureStore,
        evidence: Option<&FeatureStore>,
    ) -> Result<ModelOutput> {
        if features.dim() != self.feature_dim {
            return Err(Error::Validation(format!(
                "feature dimension {} does not match the model's {}",
                features.dim(),
                self.feature_dim
            )));
        }
        let evidence = if self.evidence_dim == 0 {
            None
        } else {
            let ev = evidence.ok_or_else(|| {
                Error::Validation("model was trained with evidence channels; none supplied".into())
            })?;
            if ev.dim() != self.evidence_dim {
                return Err(Error::Validation(format!(
                    "evidence dimension {} does not match the model's {}",
                    ev.dim(),
                    self.evidence_dim
                )));
            }
            Some(ev)
        };
        self.predict_matrix(&assemble_inputs(edges, features, evidence)?)
    }

    /// Predictions paired with ground truth for metric computation.
    pub fn evaluate(
        &self,
        edges: &EdgeSet,
        features: &FeatureStore,
        evidence: Option<&FeatureStore>,
        contracts: Option<&ContractSet>,
    ) -> Result<PredictionBatch> {
        let out = self.predict(edges, features, evidence)?;
        let labels = match contracts {
            Some(c) if !out.probs.is_empty() => {
                if c.len() != self.network.n_contracts() {
                    return Err(Error::Validation(format!(
                        "contract set has {} contracts but the model predicts {}",
                        c.len(),
                        self.network.n_contracts()
                    )));
                }
                contract_labels(edges, c)
            }
            _ => Vec::new(),
        };
        let probs = if labels.is_empty() {
            Vec::new()
        } else {
            out.probs
        };
        Ok(PredictionBatch {
            mos_pred: out.mos,
            mos_true: edges.mos_values(),
            probs,
            labels,
        })
    }
}

/// Freshly initialized network for the given shapes.
pub fn init_network(
    config: &AuditorConfig,
    input_dim: usize,
    n_contracts: usize,
    mos_bias: f64,
) -> Network {
    let mut rng = seed::rng(config.seed, &[STREAM_INIT]);
    let mut backbone = Vec::with_capacity(config.hidden_dims.len());
    let mut width = input_dim;
    for &h in &config.hidden_dims {
        backbone.push(Dense::random(width, h, true, 2.0, &mut rng));
        width = h;
    }
    let mut mos_head = Dense::random(width, 1, true, 1.0, &mut rng);
    mos_head.b[0] = mos_bias;
    let contract_head = match (n_contracts, config.head_mode) {
        (0, _) => ContractHead::None,
        (k, HeadMode::Structured) => {
            ContractHead::Structured(Dense::random(width, k, true, 1.0, &mut rng))
        }
        (k, HeadMode::IdEmbedding) => {
            let e = config.embedding_dim;
            let proj = Dense::random(width, e, false, 1.0, &mut rng);
            let emb = Dense::random(e, k, false, 1.0, &mut rng).w;
            ContractHead::IdEmbedding {
                proj,
                emb,
                bias: vec![0.0],
            }
        }
    };
    Network {
        backbone,
        mos_head,
        contract_head,
    }
}

fn gather_rows(x: &[f64], dim: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * dim);
    for &r in rows {
        out.extend_from_slice(&x[r * dim..(r + 1) * dim]);
    }
    out
}

/// Trains an auditor on explicit arrays. Contract outputs are learned iff
/// `data.labels` is non-empty.
pub fn train_arrays(data: &TrainArrays, config: &AuditorConfig) -> Result<AuditorModel> {
    config.validate()?;
    data.validate()?;
    let n = data.len();
    let k = data.n_contracts();
    let standardizer = Standardizer::fit(&data.x, data.dim);
    let x = standardizer.apply(&data.x);
    let labels: Vec<f64> = data
        .labels
        .iter()
        .flatten()
        .map(|&b| b as u8 as f64)
        .collect();
    let mean_y = data.y_mos.iter().sum::<f64>() / n as f64;

    let mut net = init_network(config, data.dim, k, mean_y);
    let mut opt = Adam::new(&net, config.learning_rate);
    let mut rng = seed::rng(config.seed, &[STREAM_SHUFFLE]);
    let weights = config.weights();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let bx = gather_rows(&x, data.dim, batch);
            let by: Vec<f64> = batch.iter().map(|&r| data.y_mos[r]).collect();
            let bl = if k == 0 {
                Vec::new()
            } else {
                gather_rows(&labels, k, batch)
            };
            let fwd = net.forward(&bx, batch.len());
            let loss = net.loss(&fwd, &by, &bl, weights);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    learning_rate: config.learning_rate,
                    loss,
                });
            }
            total += loss * batch.len() as f64;
            let grads = net.backward(&fwd, &by, &bl, weights);
            opt.step(&mut net, &grads);
        }
        history.push(total / n as f64);
    }

    Ok(AuditorModel {
        config: config.clone(),
        contract_names: Vec::new(),
        feature_dim: data.dim,
        evidence_dim: 0,
        standardizer,
        network: net,
        loss_history: history,
    })
}

fn train_edges(
    data: &TrainingData,
    contracts: Option<&ContractSet>,
    config: &AuditorConfig,
) -> Result<AuditorModel> {
    let use_evidence = config.evidence_channels && data.evidence.is_some();
    let arrays = data.arrays(contracts, use_evidence)?;
    let mut model = train_arrays(&arrays, config)?;
    model.feature_dim = data.features.dim();
    model.evidence_dim = if use_evidence {
        data.evidence.map_or(0, FeatureStore::dim)
    } else {
        0
    };
    model.contract_names = contracts.map_or_else(Vec::new, |c| {
        c.names().iter().map(|s| s.to_string()).collect()
    });
    Ok(model)
}

/// MOS-only regressor: same backbone, MSE loss, no contract head and no
/// evidence channels.
pub fn train_mos_mlp(data: &TrainingData, config: &AuditorConfig) -> Result<AuditorModel> {
    let cfg = AuditorConfig {
        evidence_channels: false,
        lambda_mos: if config.lambda_mos > 0.0 {
            config.lambda_mos
        } else {
            1.0
        },
        ..config.clone()
    };
    train_edges(data, None, &cfg)
}

/// Two-head auditor trained on MSE plus mean BCE over the contract set.
pub fn train_contract_auditor(
    data: &TrainingData,
    contracts: &ContractSet,
    config: &AuditorConfig,
) -> Result<AuditorModel> {
    train_edges(data, Some(contracts), config)
}

/// C1 with the structured head replaced by per-contract ID embeddings.
pub fn ablation_id_contract(
    data: &TrainingData,
    contracts: &ContractSet,
    config: &AuditorConfig,
) -> Result<AuditorModel> {
    let cfg = AuditorConfig {
        head_mode: HeadMode::IdEmbedding,
        ..config.clone()
    };
    train_edges(data, Some(contracts), &cfg)
}

/// C1 without the auxiliary evidence channels in its input.
pub fn ablation_no_local_evidence(
    data: &TrainingData,
    contracts: &ContractSet,
    config: &AuditorConfig,
) -> Result<AuditorModel> {
    let cfg = AuditorConfig {
        evidence_channels: false,
        ..config.clone()
    };
    train_edges(data, Some(contracts), &cfg)
}

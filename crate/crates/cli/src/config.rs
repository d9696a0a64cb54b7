//! Run configuration: a TOML file, dotted-key overrides, then global flags.

use std::path::{Path, PathBuf};

use qoe_core::audit::{BootstrapConfig, DriftWeighting, ViewSpec};
use qoe_core::contract::{
    builtin_family_by_name, degenerate_mos_family, load_contract_file, ContractSet,
};
use qoe_core::io::{EdgeFormat, SchemaMap};
use qoe_core::metrics::Averaging;
use qoe_core::model::{AuditorConfig, GraphBaselineConfig, HeadMode, QHatMode, SplitPlan};
use qoe_core::synth::ScenarioConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub edges: Option<PathBuf>,
    /// Inferred from the file extension when absent.
    pub format: Option<EdgeFormat>,
    pub features: Option<PathBuf>,
    pub evidence: Option<PathBuf>,
    pub strict: bool,
    pub schema: SchemaMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractConfig {
    /// `simple`, `mid` or `full`; ignored when `file` or `mos_tau` is set.
    pub family: String,
    pub file: Option<PathBuf>,
    /// Single-threshold MOS family.
    pub mos_tau: Option<f64>,
    /// Contract names averaged into Q_total (default: all).
    pub q_total_subset: Option<Vec<String>>,
}

impl Default for ContractConfig {
    fn default() -> Self {
        Self {
            family: "mid".into(),
            file: None,
            mos_tau: None,
            q_total_subset: None,
        }
    }
}

impl ContractConfig {
    pub fn resolve(&self) -> CliResult<ContractSet> {
        let set = if let Some(file) = &self.file {
            load_contract_file(file)?
        } else if let Some(tau) = self.mos_tau {
            degenerate_mos_family(tau)?
        } else {
            builtin_family_by_name(&self.family)?
        };
        match &self.q_total_subset {
            None => Ok(set),
            Some(names) => {
                let idx = names
                    .iter()
                    .map(|n| {
                        set.index_of(n).ok_or_else(|| {
                            CliError::Config(format!("q_total_subset names unknown contract {n:?}"))
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(set.with_q_total_subset(idx)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewConfig {
    pub a: String,
    pub b: String,
    pub weighting: DriftWeighting,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            a: "system_id".into(),
            b: "system_type".into(),
            weighting: DriftWeighting::Edge,
        }
    }
}

impl ViewConfig {
    pub fn view_a(&self) -> ViewSpec {
        ViewSpec::new(&self.a)
    }

    pub fn view_b(&self) -> ViewSpec {
        ViewSpec::new(&self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub n_resamples: usize,
    pub level: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        Self {
            n_resamples: d.n_resamples,
            level: d.level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    /// Add the graph-only MOŜ baseline as a drift statistic.
    pub mos_hat: bool,
    /// Compute bootstrap intervals (point estimates only when false).
    pub bootstrap: bool,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            mos_hat: true,
            bootstrap: true,
        }
    }
}

/// Model hyperparameters; the seed comes from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_mos: f64,
    pub lambda_contract: f64,
    pub evidence_channels: bool,
    pub head_mode: HeadMode,
    pub embedding_dim: usize,
    pub knn_k: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = AuditorConfig::default();
        Self {
            hidden_dims: d.hidden_dims,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            lambda_mos: d.lambda_mos,
            lambda_contract: d.lambda_contract,
            evidence_channels: d.evidence_channels,
            head_mode: d.head_mode,
            embedding_dim: d.embedding_dim,
            knn_k: 5,
        }
    }
}

impl ModelSection {
    pub fn auditor(&self, seed: u64, family: &str) -> AuditorConfig {
        AuditorConfig {
            hidden_dims: self.hidden_dims.clone(),
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lambda_mos: self.lambda_mos,
            lambda_contract: self.lambda_contract,
            seed,
            contract_family: family.to_string(),
            evidence_channels: self.evidence_channels,
            head_mode: self.head_mode,
            embedding_dim: self.embedding_dim,
        }
    }
}

pub const MODEL_NAMES: [&str; 6] = [
    "mos_mlp",
    "knn",
    "c1",
    "id_contract",
    "no_local_evidence",
    "graph_only",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub models: Vec<String>,
    pub averaging: Averaging,
    pub save_checkpoints: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            models: MODEL_NAMES.iter().map(|s| s.to_string()).collect(),
            averaging: Averaging::Macro,
            save_checkpoints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultySection {
    pub families: Vec<String>,
    pub view: String,
    /// `c1`, `oracle` or `random`.
    pub predictor: String,
    pub q_hat: QHatMode,
}

impl Default for DifficultySection {
    fn default() -> Self {
        Self {
            families: vec!["simple".into(), "mid".into(), "full".into()],
            view: "system_id".into(),
            predictor: "c1".into(),
            q_hat: QHatMode::Threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinGainSection {
    pub step: f64,
}

impl Default for BinGainSection {
    fn default() -> Self {
        Self { step: 0.125 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    /// `p1`, `learnable`, `bottleneck` or `custom`.
    pub scenario: String,
    /// Size override for the `learnable` and `bottleneck` scenarios.
    pub edges_per_system: usize,
    pub format: EdgeFormat,
    /// Used when `scenario = "custom"`; its seed is replaced by the top-level seed.
    pub custom: Option<ScenarioConfig>,
}

impl Default for GenSection {
    fn default() -> Self {
        Self {
            scenario: "p1".into(),
            edges_per_system: 100,
            format: EdgeFormat::Jsonl,
            custom: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub contracts: ContractConfig,
    pub views: ViewConfig,
    pub bootstrap: BootstrapSection,
    pub drift: DriftSection,
    pub model: ModelSection,
    pub split: SplitPlan,
    pub train: TrainSection,
    pub difficulty: DifficultySection,
    pub bin_gain: BinGainSection,
    pub gen: GenSection,
    pub baseline: GraphBaselineConfig,
}

/// Parses `value` as a TOML value, falling back to a plain string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `section.key=value` to a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override key {path:?}")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override key {k:?} is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Loads the optional config file and applies overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("invalid config {}: {e}", p.display())))?
            }
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("invalid config: {e}")))
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn bootstrap(&self, parallel: bool) -> BootstrapConfig {
        BootstrapConfig {
            n_resamples: self.bootstrap.n_resamples,
            level: self.bootstrap.level,
            seed: self.seed,
            parallel,
        }
    }

    pub fn edges_path(&self) -> CliResult<&Path> {
        let p =
            self.data.edges.as_deref().ok_or_else(|| {
                CliError::Config("data.edges is required for this command".into())
            })?;
        if !p.exists() {
            return Err(CliError::Config(format!(
                "data.edges {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }

    pub fn edge_format(&self) -> CliResult<EdgeFormat> {
        let p = self.edges_path()?;
        self.data
            .format
            .or_else(|| EdgeFormat::from_path(p))
            .ok_or_else(|| {
                CliError::Config(format!(
                    "cannot infer the format of {}; set data.format",
                    p.display()
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_defaults() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "contracts.family=full").unwrap();
        apply_override(&mut t, "model.hidden_dims=[8, 4]").unwrap();
        apply_override(&mut t, "seed = 9").unwrap();
        let cfg: RunConfig = toml::Value::Table(t).try_into().unwrap();
        assert_eq!(cfg.contracts.family, "full");
        assert_eq!(cfg.model.hidden_dims, vec![8, 4]);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.bin_gain.step, 0.125);
        assert!(apply_override(&mut toml::Table::new(), "novalue").is_err());
    }

    #[test]
    fn canonical_form_round_trips_and_hash_is_stable() {
        let cfg = RunConfig::load(None, &["views.a=utterance_id".into()]).unwrap();
        let back: RunConfig = toml::from_str(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.hash(), back.hash());
        assert_ne!(cfg.hash(), RunConfig::default().hash());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = RunConfig::load(None, &["contracts.famly=mid".into()]).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }
}

//! Seeded synthetic rating ecosystems with known latent parameters.
//!
//! Each edge has a latent quality (system mean plus type shift plus jitter)
//! and a judge spread drawn from a mixture of disagreement regimes. Judges
//! score `round(quality + sigma * z)` clipped to 1..=5. Features are linear
//! in (quality, spread) plus Gaussian noise; optional evidence channels carry
//! the spread alone.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratings::{EdgeRecord, EdgeSet, FeatureStore, MAX_RATING, MIN_RATING};
use crate::seed;

/// What the feature and evidence channels encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTarget {
    /// Latent quality and judge sigma.
    #[default]
    Latent,
    /// The realized rating mean and population std of the edge.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureModel {
    pub dim: usize,
    pub quality_loading: f64,
    pub sigma_loading: f64,
    pub noise: f64,
    pub target: FeatureTarget,
}

impl Default for FeatureModel {
    fn default() -> Self {
        Self {
            dim: 8,
            quality_loading: 1.0,
            sigma_loading: 1.0,
            noise: 0.05,
            target: FeatureTarget::Latent,
        }
    }
}

/// Per-edge evidence vector encoding only the disagreement signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceModel {
    pub dim: usize,
    pub loading: f64,
    pub noise: f64,
}

impl Default for EvidenceModel {
    fn default() -> Self {
        Self {
            dim: 4,
            loading: 1.0,
            noise: 0.05,
        }
    }
}

/// A judge-spread regime and its mixture weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRegime {
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_types: usize,
    pub systems_per_type: usize,
    pub edges_per_system: usize,
    pub judges: usize,
    /// Latent mean quality of each system, type-major (`n_types * systems_per_type`).
    pub system_quality: Vec<f64>,
    /// Additive quality shift of each type.
    pub type_shift: Vec<f64>,
    /// Standard deviation of per-edge quality around its system mean.
    pub edge_quality_sd: f64,
    pub sigma_regimes: Vec<SigmaRegime>,
    pub features: FeatureModel,
    pub evidence: Option<EvidenceModel>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_types: 2,
            systems_per_type: 3,
            edges_per_system: 20,
            judges: 5,
            system_quality: vec![2.5, 3.0, 3.5, 3.0, 3.5, 4.0],
            type_shift: vec![0.0, 0.0],
            edge_quality_sd: 0.3,
            sigma_regimes: vec![
                SigmaRegime {
                    sigma: 0.4,
                    weight: 0.5,
                },
                SigmaRegime {
                    sigma: 1.2,
                    weight: 0.5,
                },
            ],
            features: FeatureModel::default(),
            evidence: None,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn n_systems(&self) -> usize {
        self.n_types * self.systems_per_type
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        for (name, v) in [
            ("n_types", self.n_types),
            ("systems_per_type", self.systems_per_type),
            ("edges_per_system", self.edges_per_system),
            ("judges", self.judges),
            ("features.dim", self.features.dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.system_quality.len() != self.n_systems() {
            return bad(format!(
                "system_quality has {} entries for {} systems",
                self.system_quality.len(),
                self.n_systems()
            ));
        }
        if self.type_shift.len() != self.n_types {
            return bad(format!(
                "type_shift has {} entries for {} types",
                self.type_shift.len(),
                self.n_types
            ));
        }
        let scale = MIN_RATING as f64..=MAX_RATING as f64;
        if let Some(mu) = self.system_quality.iter().find(|m| !scale.contains(*m)) {
            return bad(format!("system quality {mu} outside [1, 5]"));
        }
        if self.type_shift.iter().any(|s| !s.is_finite()) {
            return bad("type shifts must be finite".into());
        }
        if self.sigma_regimes.is_empty() {
            return bad("at least one sigma regime is required".into());
        }
        if let Some(r) = self.sigma_regimes.iter().find(|r| {
            !(r.sigma.is_finite() && r.sigma >= 0.0 && r.weight.is_finite() && r.weight >= 0.0)
        }) {
            return bad(format!("invalid sigma regime {r:?}"));
        }
        let total: f64 = self.sigma_regimes.iter().map(|r| r.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("sigma regime weights sum to {total}, not 1"));
        }
        let f = &self.features;
        let mut reals = vec![
            ("edge_quality_sd", self.edge_quality_sd),
            ("features.noise", f.noise),
        ];
        if let Some(ev) = &self.evidence {
            if ev.dim == 0 {
                return bad("evidence.dim must be positive".into());
            }
            reals.push(("evidence.noise", ev.noise));
        }
        if let Some((name, v)) = reals
            .into_iter()
            .find(|(_, v)| !(v.is_finite() && *v >= 0.0))
        {
            return bad(format!("{name} must be a non-negative number, got {v}"));
        }
        if !(f.quality_loading.is_finite() && f.sigma_loading.is_finite()) {
            return bad("feature loadings must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemTruth {
    pub system_id: String,
    pub system_type: String,
    /// Latent mean quality including the type shift.
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTruth {
    pub edge_id: String,
    pub quality: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub systems: Vec<SystemTruth>,
    pub edges: Vec<EdgeTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub edges: EdgeSet,
    pub features: FeatureStore,
    pub evidence: Option<FeatureStore>,
    pub truth: GroundTruth,
    pub config: ScenarioConfig,
}

pub fn system_id(s: usize) -> String {
    format!("sys{s:03}")
}

pub fn type_id(t: usize) -> String {
    format!("type{t}")
}

fn clip_round(v: f64) -> u8 {
    v.round().clamp(MIN_RATING as f64, MAX_RATING as f64) as u8
}

fn sample_sigma<R: Rng>(regimes: &[SigmaRegime], rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for r in regimes {
        acc += r.weight;
        if u < acc {
            return r.sigma;
        }
    }
    regimes.last().expect("validated non-empty").sigma
}

fn loadings(seed_value: u64, stream: &str, dim: usize) -> Vec<(f64, f64)> {
    let mut rng = seed::rng(seed_value, &[seed::name_stream(stream)]);
    (0..dim)
        .map(|_| {
            (
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect()
}

/// Draws a dataset; identical configs give identical datasets.
pub fn generate(config: &ScenarioConfig) -> Result<SynthDataset> {
    config.validate()?;
    let f = &config.features;
    let feat_load = loadings(config.seed, "features", f.dim);
    let ev_load = config
        .evidence
        .as_ref()
        .map(|ev| loadings(config.seed, "evidence", ev.dim));

    let mut records = Vec::with_capacity(config.n_systems() * config.edges_per_system);
    let mut features = FeatureStore::new(f.dim)?;
    let mut evidence = config
        .evidence
        .as_ref()
        .map(|ev| FeatureStore::new(ev.dim))
        .transpose()?;
    let mut truth = GroundTruth {
        systems: Vec::with_capacity(config.n_systems()),
        edges: Vec::with_capacity(records.capacity()),
    };
    let jitter =
        Normal::new(0.0, config.edge_quality_sd).map_err(|e| Error::Validation(e.to_string()))?;

    for s in 0..config.n_systems() {
        let t = s / config.systems_per_type;
        let (sid, tid) = (system_id(s), type_id(t));
        let mu = config.system_quality[s] + config.type_shift[t];
        truth.systems.push(SystemTruth {
            system_id: sid.clone(),
            system_type: tid.clone(),
            quality: mu,
        });
        // one stream per system, so systems could be drawn in any order
        let mut rng = seed::rng(config.seed, &[s as u64]);
        for u in 0..config.edges_per_system {
            let quality =
                (mu + jitter.sample(&mut rng)).clamp(MIN_RATING as f64, MAX_RATING as f64);
            let sigma = sample_sigma(&config.sigma_regimes, &mut rng);
            let ratings: Vec<u8> = (0..config.judges)
                .map(|_| clip_round(quality + sigma * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let edge_id = format!("{sid}-u{u:04}");
            let mut attrs = BTreeMap::new();
            attrs.insert("system_id".to_string(), sid.clone());
            attrs.insert("system_type".to_string(), tid.clone());
            attrs.insert("utterance_id".to_string(), format!("utt{u:04}"));
            let rec = EdgeRecord::new(edge_id.clone(), ratings, attrs, None)?;

            let (a, b) = match f.target {
                FeatureTarget::Latent => (quality, sigma),
                FeatureTarget::Observed => (rec.stats().mean, rec.stats().std),
            };
            let x: Vec<f64> = feat_load
                .iter()
                .map(|(la, lb)| {
                    let z: f64 = rng.sample(StandardNormal);
                    f.quality_loading * la * a + f.sigma_loading * lb * b + f.noise * z
                })
                .collect();
            features.insert(edge_id.clone(), &x)?;
            if let (Some(ev), Some(load), Some(store)) =
                (&config.evidence, &ev_load, evidence.as_mut())
            {
                let e: Vec<f64> = load
                    .iter()
                    .map(|(l, _)| {
                        let z: f64 = rng.sample(StandardNormal);
                        ev.loading * l * b + ev.noise * z
                    })
                    .collect();
                store.insert(edge_id.clone(), &e)?;
            }
            truth.edges.push(EdgeTruth {
                edge_id,
                quality,
                sigma,
            });
            records.push(rec);
        }
    }
    let edges = EdgeSet::new(
        records,
        vec![
            "system_id".into(),
            "system_type".into(),
            "utterance_id".into(),
        ],
    )?;
    Ok(SynthDataset {
        edges,
        features,
        evidence,
        truth,
        config: config.clone(),
    })
}

/// Configuration of [`p1_scenario`]: system means spread widely inside each
/// type while every system shares the same disagreement mixture, so MOS
/// varies across views and disagreement does not.
pub fn p1_config(seed_value: u64) -> ScenarioConfig {
    let (n_types, per_type) = (2, 6);
    let mut rng = seed::rng(seed_value, &[seed::name_stream("p1-quality")]);
    let system_quality = (0..n_types * per_type)
        .map(|_| rng.random_range(1.8..4.2))
        .collect();
    ScenarioConfig {
        n_types,
        systems_per_type: per_type,
        edges_per_system: 40,
        judges: 5,
        system_quality,
        type_shift: vec![0.0; n_types],
        edge_quality_sd: 0.3,
        sigma_regimes: vec![
            SigmaRegime {
                sigma: 0.4,
                weight: 0.6,
            },
            SigmaRegime {
                sigma: 1.3,
                weight: 0.4,
            },
        ],
        features: FeatureModel::default(),
        evidence: None,
        seed: seed_value,
    }
}

pub fn p1_scenario(seed_value: u64) -> SynthDataset {
    generate(&p1_config(seed_value)).expect("built-in scenario is valid")
}

/// Features that linearly encode each edge's observed (mean, std), with
/// the std also available as evidence.
pub fn learnable_config(seed_value: u64, edges_per_system: usize) -> ScenarioConfig {
    let mut rng = seed::rng(seed_value, &[seed::name_stream("learnable-quality")]);
    ScenarioConfig {
        n_types: 2,
        systems_per_type: 5,
        edges_per_system,
        judges: 5,
        system_quality: (0..10).map(|_| rng.random_range(2.0..4.5)).collect(),
        type_shift: vec![0.0, 0.0],
        edge_quality_sd: 0.5,
        sigma_regimes: vec![
            SigmaRegime {
                sigma: 0.3,
                weight: 0.5,
            },
            SigmaRegime {
                sigma: 1.4,
                weight: 0.5,
            },
        ],
        features: FeatureModel {
            dim: 8,
            quality_loading: 1.0,
            sigma_loading: 1.0,
            noise: 0.01,
            target: FeatureTarget::Observed,
        },
        evidence: Some(EvidenceModel {
            dim: 4,
            loading: 1.0,
            noise: 0.01,
        }),
        seed: seed_value,
    }
}

/// Like [`learnable_config`], but disagreement reaches the model only
/// through the evidence channels.
pub fn bottleneck_config(seed_value: u64, edges_per_system: usize) -> ScenarioConfig {
    let mut cfg = learnable_config(seed_value, edges_per_system);
    cfg.features.sigma_loading = 0.0;
    cfg
}

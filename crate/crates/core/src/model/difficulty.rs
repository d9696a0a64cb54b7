//! Difficulty curves: how far predicted Q_total lands from the truth, per
//! contract family, training fraction and seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{make_splits, SplitPlan};
use super::train::{contract_labels, train_contract_auditor, AuditorConfig, TrainingData};
use crate::audit::{partition, ViewSpec};
use crate::contract::ContractSet;
use crate::error::{Error, Result};
use crate::metrics::graph_error;
use crate::ratings::{EdgeSet, FeatureStore};
use crate::seed;

/// How per-edge probabilities become a predicted satisfaction rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QHatMode {
    /// Average of `p >= 0.5` indicators.
    #[default]
    Threshold,
    /// Average of the probabilities themselves.
    Expected,
}

/// Everything a predictor may use for one grid cell.
#[derive(Debug, Clone, Copy)]
pub struct CellInputs<'a> {
    pub family: &'a ContractSet,
    pub train: &'a EdgeSet,
    pub test: &'a EdgeSet,
    pub features: &'a FeatureStore,
    pub evidence: Option<&'a FeatureStore>,
    /// Seed derived for this cell.
    pub seed: u64,
}

/// Produces per-contract probabilities for every test edge of a cell.
pub trait ContractPredictor: Sync {
    fn name(&self) -> &str;
    fn predict(&self, cell: &CellInputs) -> Result<Vec<Vec<f64>>>;
}

/// The two-head auditor, trained from scratch in each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditorPredictor {
    pub config: AuditorConfig,
}

impl ContractPredictor for AuditorPredictor {
    fn name(&self) -> &str {
        "c1"
    }

    fn predict(&self, cell: &CellInputs) -> Result<Vec<Vec<f64>>> {
        let cfg = AuditorConfig {
            seed: cell.seed,
            ..self.config.clone()
        };
        let data = TrainingData::new(cell.train, cell.features).with_evidence(cell.evidence);
        let model = train_contract_auditor(&data, cell.family, &cfg)?;
        Ok(model
            .predict(cell.test, cell.features, cell.evidence)?
            .probs)
    }
}

/// Returns the true labels as certain probabilities.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl ContractPredictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, cell: &CellInputs) -> Result<Vec<Vec<f64>>> {
        Ok(contract_labels(cell.test, cell.family)
            .into_iter()
            .map(|row| row.into_iter().map(|b| b as u8 as f64).collect())
            .collect())
    }
}

/// Independent uniform probabilities, ignoring all inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomCoinPredictor;

impl ContractPredictor for RandomCoinPredictor {
    fn name(&self) -> &str {
        "random"
    }

    fn predict(&self, cell: &CellInputs) -> Result<Vec<Vec<f64>>> {
        let mut rng = seed::rng(cell.seed, &[seed::name_stream("coin")]);
        Ok((0..cell.test.len())
            .map(|_| {
                (0..cell.family.len())
                    .map(|_| rng.random::<f64>())
                    .collect()
            })
            .collect())
    }
}

/// Mean over view groups of |Q̂_total − Q_total|.
pub fn group_difficulty(
    edges: &EdgeSet,
    view: &ViewSpec,
    contracts: &ContractSet,
    probs: &[Vec<f64>],
    mode: QHatMode,
) -> Result<f64> {
    if probs.len() != edges.len() || probs.iter().any(|r| r.len() != contracts.len()) {
        return Err(Error::Validation(format!(
            "expected {} x {} probabilities",
            edges.len(),
            contracts.len()
        )));
    }
    let labels = contract_labels(edges, contracts);
    let part = partition(edges, view)?;
    let k = contracts.len();
    let mut q_hat = Vec::with_capacity(part.len());
    let mut q_true = Vec::with_capacity(part.len());
    for (_, idx) in part.iter() {
        let mut hat = vec![0.0; k];
        let mut truth = vec![0.0; k];
        for &e in idx {
            for c in 0..k {
                let p = probs[e][c];
                hat[c] += match mode {
                    QHatMode::Threshold => (p >= 0.5) as u8 as f64,
                    QHatMode::Expected => p,
                };
                truth[c] += labels[e][c] as u8 as f64;
            }
        }
        let n = idx.len() as f64;
        hat.iter_mut().for_each(|v| *v /= n);
        truth.iter_mut().for_each(|v| *v /= n);
        q_hat.push(contracts.q_total_of(&hat));
        q_true.push(contracts.q_total_of(&truth));
    }
    graph_error(&q_hat, &q_true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyCell {
    pub family: String,
    pub fraction: f64,
    pub seed: u64,
    /// `None` when the cell failed; see `error`.
    pub d: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyTable {
    pub predictor: String,
    pub cells: Vec<DifficultyCell>,
}

impl DifficultyTable {
    pub fn get(&self, family: &str, fraction: f64, seed: u64) -> Option<&DifficultyCell> {
        self.cells
            .iter()
            .find(|c| c.family == family && c.fraction == fraction && c.seed == seed)
    }

    /// Seed-averaged D per (family, fraction) over the completed cells, in
    /// grid order; `None` if every seed failed.
    pub fn seed_means(&self) -> Vec<(String, f64, Option<f64>)> {
        let mut keys: Vec<(String, f64)> = Vec::new();
        for c in &self.cells {
            if !keys.iter().any(|(f, x)| *f == c.family && *x == c.fraction) {
                keys.push((c.family.clone(), c.fraction));
            }
        }
        keys.into_iter()
            .map(|(family, fraction)| {
                let ds: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.family == family && c.fraction == fraction)
                    .filter_map(|c| c.d)
                    .collect();
                let mean = (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64);
                (family, fraction, mean)
            })
            .collect()
    }

    /// `family,fraction,seed,D` with one row per cell followed by seed means
    /// (seed column `mean`). Failed cells have an empty D.
    pub fn to_csv(&self) -> String {
        let fmt = |d: Option<f64>| d.map_or(String::new(), |v| format!("{v:.6}"));
        let mut out = String::from("family,fraction,seed,D\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.family,
                c.fraction,
                c.seed,
                fmt(c.d)
            ));
        }
        for (family, fraction, d) in self.seed_means() {
            out.push_str(&format!("{family},{fraction},mean,{}\n", fmt(d)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultyOptions {
    pub q_hat: QHatMode,
    /// Run grid cells on the rayon pool.
    pub parallel: bool,
    /// Base seed mixed into every cell seed.
    pub seed: u64,
}

impl Default for DifficultyOptions {
    fn default() -> Self {
        Self {
            q_hat: QHatMode::Threshold,
            parallel: false,
            seed: 0,
        }
    }
}

/// Evaluates `predictor` on the family × fraction × seed grid. Cells are
/// independent; a failing cell is kept with `d = None`.
pub fn difficulty_curve(
    data: &TrainingData,
    families: &[ContractSet],
    plan: &SplitPlan,
    view: &ViewSpec,
    predictor: &dyn ContractPredictor,
    opts: &DifficultyOptions,
) -> Result<DifficultyTable> {
    if families.is_empty() {
        return Err(Error::Config(
            "difficulty curve needs at least one contract family".into(),
        ));
    }
    let splits = make_splits(data.edges.len(), plan)?;
    let test_sets: Vec<EdgeSet> = splits
        .iter()
        .map(|s| data.edges.subset(&s.test))
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for (fi, family) in families.iter().enumerate() {
        for (xi, &fraction) in plan.train_fractions.iter().enumerate() {
            for (si, split) in splits.iter().enumerate() {
                jobs.push((fi, family, xi, fraction, si, split));
            }
        }
    }

    let run = |&(fi, family, xi, fraction, si, split): &(
        usize,
        &ContractSet,
        usize,
        f64,
        usize,
        &super::split::SeedSplit,
    )| {
        let result = (|| {
            let train = data.edges.subset(&split.train[xi].1)?;
            let cell = CellInputs {
                family,
                train: &train,
                test: &test_sets[si],
                features: data.features,
                evidence: data.evidence,
                seed: seed::derive_seed(opts.seed, &[split.seed, fi as u64, xi as u64]),
            };
            let probs = predictor.predict(&cell)?;
            group_difficulty(&test_sets[si], view, family, &probs, opts.q_hat)
        })();
        DifficultyCell {
            family: family.label().to_string(),
            fraction,
            seed: split.seed,
            d: result.as_ref().ok().copied(),
            error: result.err().map(|e| e.to_string()),
        }
    };

    let cells = if opts.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    Ok(DifficultyTable {
        predictor: predictor.name().to_string(),
        cells,
    })
}

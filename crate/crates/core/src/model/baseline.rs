//! Graph-only MOS regression: ridge on system/type indicators and rating
//! summaries, with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contract::StatField;
use crate::error::{Error, Result};
use crate::ratings::EdgeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphBaselineConfig {
    pub lambda: f64,
    pub system_key: String,
    pub type_key: String,
    pub one_hot_system: bool,
    pub one_hot_type: bool,
    /// Rating-derived summary columns.
    pub summaries: Vec<StatField>,
}

impl Default for GraphBaselineConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            system_key: "system_id".into(),
            type_key: "system_type".into(),
            one_hot_system: true,
            one_hot_type: true,
            summaries: StatField::ALL.to_vec(),
        }
    }
}

impl GraphBaselineConfig {
    pub fn intercept_only() -> Self {
        Self {
            one_hot_system: false,
            one_hot_type: false,
            summaries: Vec::new(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphBaseline {
    pub config: GraphBaselineConfig,
    /// One-hot levels seen at fit time; unseen levels encode as all zeros.
    pub system_levels: Vec<String>,
    pub type_levels: Vec<String>,
    pub column_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Fitted MOŜ for every training edge.
    pub predictions: Vec<f64>,
}

fn levels(edges: &EdgeSet, key: &str) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for e in edges {
        let v = e.attr(key).ok_or_else(|| {
            Error::Validation(format!("edge {:?} lacks attribute {key:?}", e.edge_id()))
        })?;
        if !out.iter().any(|l| l == v) {
            out.push(v.to_string());
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn one_hot(edges: &EdgeSet, key: &str, levels: &[String], cols: &mut Vec<Vec<f64>>) -> Result<()> {
    let mut block = vec![vec![0.0; edges.len()]; levels.len()];
    for (i, e) in edges.iter().enumerate() {
        let v = e.attr(key).ok_or_else(|| {
            Error::Validation(format!("edge {:?} lacks attribute {key:?}", e.edge_id()))
        })?;
        if let Ok(j) = levels.binary_search_by(|l| l.as_str().cmp(v)) {
            block[j][i] = 1.0;
        }
    }
    cols.extend(block);
    Ok(())
}

impl GraphBaseline {
    fn columns(&self, edges: &EdgeSet) -> Result<Vec<Vec<f64>>> {
        let cfg = &self.config;
        let mut cols = Vec::with_capacity(self.column_names.len());
        if cfg.one_hot_system {
            one_hot(edges, &cfg.system_key, &self.system_levels, &mut cols)?;
        }
        if cfg.one_hot_type {
            one_hot(edges, &cfg.type_key, &self.type_levels, &mut cols)?;
        }
        for &f in &cfg.summaries {
            cols.push(edges.iter().map(|e| f.value(e.stats())).collect());
        }
        Ok(cols)
    }

    /// MOŜ for arbitrary edges carrying the same attributes.
    pub fn predict(&self, edges: &EdgeSet) -> Result<Vec<f64>> {
        let cols = self.columns(edges)?;
        Ok((0..edges.len())
            .map(|i| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .zip(&cols)
                        .map(|(b, c)| b * c[i])
                        .sum::<f64>()
            })
            .collect())
    }
}

pub fn train_graph_only_baseline(
    edges: &EdgeSet,
    cfg: &GraphBaselineConfig,
) -> Result<GraphBaseline> {
    if !(cfg.lambda.is_finite() && cfg.lambda > 0.0) {
        return Err(Error::Config(format!(
            "ridge lambda must be positive, got {}",
            cfg.lambda
        )));
    }
    if edges.is_empty() {
        return Err(Error::Validation(
            "cannot fit a baseline on zero edges".into(),
        ));
    }
    let n = edges.len();
    let mut model = GraphBaseline {
        config: cfg.clone(),
        system_levels: if cfg.one_hot_system {
            levels(edges, &cfg.system_key)?
        } else {
            Vec::new()
        },
        type_levels: if cfg.one_hot_type {
            levels(edges, &cfg.type_key)?
        } else {
            Vec::new()
        },
        column_names: Vec::new(),
        coefficients: Vec::new(),
        intercept: 0.0,
        predictions: Vec::new(),
    };
    let mut names: Vec<String> = Vec::new();
    names.extend(
        model
            .system_levels
            .iter()
            .map(|l| format!("{}={l}", cfg.system_key)),
    );
    names.extend(
        model
            .type_levels
            .iter()
            .map(|l| format!("{}={l}", cfg.type_key)),
    );
    names.extend(cfg.summaries.iter().map(|f| f.name().to_string()));
    model.column_names = names;
    let cols = model.columns(edges)?;

    let y = edges.mos_values();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let p = cols.len();
    if p == 0 {
        model.intercept = y_mean;
        model.predictions = vec![y_mean; n];
        return Ok(model);
    }
    let means: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i] - means[j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    let mut gram = x.transpose() * &x;
    for j in 0..p {
        gram[(j, j)] += cfg.lambda;
    }
    let rhs = x.transpose() * yc;
    let beta = gram
        .cholesky()
        .ok_or_else(|| Error::Domain("ridge system is not positive definite".into()))?
        .solve(&rhs);
    model.intercept = y_mean - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    model.coefficients = beta.iter().copied().collect();
    model.predictions = model.predict(edges)?;
    Ok(model)
}

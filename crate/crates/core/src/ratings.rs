//! Rating vectors, their derived statistics, and the edge/feature containers.
//!
//! An edge is one evaluation episode: a clip (or utterance) rated by a panel
//! of judges on the 1..5 opinion scale. Edges carry string attributes such as
//! `system_id` and `system_type`, which graph views group on.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

/// Summary statistics of one rating vector.
///
/// `std` is the population standard deviation (divides by the judge count),
/// so a single judge yields `std == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingStats {
    pub mean: f64,
    pub std: f64,
    pub min: u8,
    pub max: u8,
    pub range: u8,
    pub count: usize,
}

pub fn validate_ratings(ratings: &[u8]) -> Result<()> {
    if ratings.is_empty() {
        return Err(Error::Validation("rating vector is empty".into()));
    }
    if let Some((idx, r)) = ratings
        .iter()
        .enumerate()
        .find(|(_, r)| !(MIN_RATING..=MAX_RATING).contains(*r))
    {
        return Err(Error::Validation(format!(
            "rating out of range at index {idx}: {r} (expected {MIN_RATING}..={MAX_RATING})"
        )));
    }
    Ok(())
}

pub fn compute_stats(ratings: &[u8]) -> Result<RatingStats> {
    validate_ratings(ratings)?;
    let count = ratings.len();
    let n = count as f64;
    let sum: u64 = ratings.iter().map(|&r| r as u64).sum();
    let mean = sum as f64 / n;
    let ss: f64 = ratings
        .iter()
        .map(|&r| {
            let d = r as f64 - mean;
            d * d
        })
        .sum();
    let min = *ratings.iter().min().expect("non-empty");
    let max = *ratings.iter().max().expect("non-empty");
    Ok(RatingStats {
        mean,
        std: (ss / n).sqrt(),
        min,
        max,
        range: max - min,
        count,
    })
}

/// Mean opinion score of one rating vector.
pub fn mos(ratings: &[u8]) -> Result<f64> {
    compute_stats(ratings).map(|s| s.mean)
}

/// One evaluation episode. Construct with [`EdgeRecord::new`], which validates
/// the rating vector and caches its statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    edge_id: String,
    ratings: Vec<u8>,
    attrs: BTreeMap<String, String>,
    feature_id: Option<String>,
    stats: RatingStats,
}

impl EdgeRecord {
    pub fn new(
        edge_id: impl Into<String>,
        ratings: Vec<u8>,
        attrs: BTreeMap<String, String>,
        feature_id: Option<String>,
    ) -> Result<Self> {
        let edge_id = edge_id.into();
        let stats = compute_stats(&ratings)
            .map_err(|e| Error::Validation(format!("edge {edge_id}: {e}")))?;
        Ok(Self {
            edge_id,
            ratings,
            attrs,
            feature_id,
            stats,
        })
    }

    /// Convenience constructor from `(key, value)` attribute pairs.
    pub fn with_attrs<'a>(
        edge_id: impl Into<String>,
        ratings: Vec<u8>,
        attrs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let attrs = attrs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self::new(edge_id, ratings, attrs, None)
    }

    pub fn edge_id(&self) -> &str {
        &self.edge_id
    }

    pub fn ratings(&self) -> &[u8] {
        &self.ratings
    }

    pub fn attrs(&self) -> &BTreeMap<String, String> {
        &self.attrs
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }

    pub fn feature_id(&self) -> Option<&str> {
        self.feature_id.as_deref()
    }

    /// Key used to look this edge up in a [`FeatureStore`]; falls back to the edge id.
    pub fn feature_key(&self) -> &str {
        self.feature_id.as_deref().unwrap_or(&self.edge_id)
    }

    pub fn stats(&self) -> &RatingStats {
        &self.stats
    }

    pub fn mos(&self) -> f64 {
        self.stats.mean
    }
}

/// Ordered, validated collection of edges sharing a declared attribute schema.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeSet {
    edges: Vec<EdgeRecord>,
    schema: Vec<String>,
}

impl EdgeSet {
    /// Builds an edge set, rejecting duplicate ids and edges missing a schema key.
    pub fn new(edges: Vec<EdgeRecord>, schema: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if !seen.insert(e.edge_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate edge_id {:?} at position {i}",
                    e.edge_id
                )));
            }
            if let Some(k) = schema.iter().find(|k| !e.attrs.contains_key(*k)) {
                return Err(Error::Validation(format!(
                    "edge {:?} is missing schema attribute {k:?}",
                    e.edge_id
                )));
            }
        }
        Ok(Self { edges, schema })
    }

    /// Builds an edge set whose schema is every attribute key shared by all edges.
    pub fn from_edges(edges: Vec<EdgeRecord>) -> Result<Self> {
        let schema = match edges.first() {
            None => Vec::new(),
            Some(first) => first
                .attrs
                .keys()
                .filter(|k| edges.iter().all(|e| e.attrs.contains_key(*k)))
                .cloned()
                .collect(),
        };
        Self::new(edges, schema)
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&EdgeRecord> {
        self.edges.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EdgeRecord> {
        self.edges.iter()
    }

    /// Copies out the edges at `indices` (in that order; repeats are rejected
    /// by the uniqueness invariant).
    pub fn subset(&self, indices: &[usize]) -> Result<EdgeSet> {
        let edges = indices
            .iter()
            .map(|&i| {
                self.edges
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("edge index {i} out of bounds")))
            })
            .collect::<Result<Vec<_>>>()?;
        EdgeSet::new(edges, self.schema.clone())
    }

    pub fn mos_values(&self) -> Vec<f64> {
        self.edges.iter().map(EdgeRecord::mos).collect()
    }
}

impl<'a> IntoIterator for &'a EdgeSet {
    type Item = &'a EdgeRecord;
    type IntoIter = std::slice::Iter<'a, EdgeRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.edges.iter()
    }
}

/// Dense feature vectors of a fixed dimension, keyed by feature id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation(
                "feature dimension must be positive".into(),
            ));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Validation(format!(
                "feature {id:?} has dimension {} (expected {})",
                vector.len(),
                self.dim
            )));
        }
        if let Some(j) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature {id:?} has a non-finite entry at column {j}"
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate feature id {id:?}")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&r| self.row(r))
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// Looks up the vector of every edge, in edge order.
    pub fn gather(&self, edges: &EdgeSet) -> Result<Vec<&[f64]>> {
        edges
            .iter()
            .map(|e| {
                self.get(e.feature_key()).ok_or_else(|| {
                    Error::Validation(format!(
                        "edge {:?} has no feature vector (key {:?})",
                        e.edge_id(),
                        e.feature_key()
                    ))
                })
            })
            .collect()
    }
}

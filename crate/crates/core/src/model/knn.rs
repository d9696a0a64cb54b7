//! k-nearest-neighbour MOS regression over unit-normalized embeddings.

use crate::error::{Error, Result};
use crate::ratings::{EdgeSet, FeatureStore};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnMemory {
    dim: usize,
    k: usize,
    /// Row-major unit vectors (zero vectors stay zero).
    embeddings: Vec<f64>,
    targets: Vec<f64>,
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

impl KnnMemory {
    pub fn new(vectors: &[&[f64]], targets: &[f64], k: usize) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Validation("kNN memory must not be empty".into()));
        }
        if vectors.len() != targets.len() {
            return Err(Error::Validation(format!(
                "{} memory vectors but {} targets",
                vectors.len(),
                targets.len()
            )));
        }
        if k == 0 || k > vectors.len() {
            return Err(Error::Config(format!(
                "k = {k} must lie in 1..={} (memory size)",
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::Validation("kNN embeddings must be non-empty".into()));
        }
        let mut embeddings = Vec::with_capacity(vectors.len() * dim);
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Validation(format!(
                    "memory vector {i} has dimension {} (expected {dim})",
                    v.len()
                )));
            }
            embeddings.extend(normalize(v));
        }
        Ok(Self {
            dim,
            k,
            embeddings,
            targets: targets.to_vec(),
        })
    }

    /// Memory of the training edges' feature vectors and MOS values.
    pub fn fit(edges: &EdgeSet, features: &FeatureStore, k: usize) -> Result<Self> {
        let rows = features.gather(edges)?;
        Self::new(&rows, &edges.mos_values(), k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Mean target of the `k` nearest memory points; equal distances keep
    /// memory order.
    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.dim {
            return Err(Error::Validation(format!(
                "query has dimension {} (expected {})",
                query.len(),
                self.dim
            )));
        }
        let q = normalize(query);
        let mut dist: Vec<(f64, usize)> = self
            .embeddings
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| {
                (
                    row.iter()
                        .zip(&q)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>(),
                    i,
                )
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(dist[..self.k]
            .iter()
            .map(|&(_, i)| self.targets[i])
            .sum::<f64>()
            / self.k as f64)
    }

    pub fn predict_edges(&self, edges: &EdgeSet, features: &FeatureStore) -> Result<Vec<f64>> {
        features
            .gather(edges)?
            .into_iter()
            .map(|row| self.predict(row))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_match_with_k_one() {
        let pts: [&[f64]; 3] = [&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.2]];
        let mem = KnnMemory::new(&pts, &[2.0, 3.5, 4.0], 1).unwrap();
        assert_eq!(mem.predict(&[0.0, 1.0]).unwrap(), 3.5);
        assert_eq!(
            mem.predict(&[0.0, 7.0]).unwrap(),
            3.5,
            "scale is normalized away"
        );
    }

    #[test]
    fn full_memory_gives_global_mean() {
        let pts: [&[f64]; 4] = [&[1.0], &[2.0], &[-1.0], &[0.5]];
        let mem = KnnMemory::new(&pts, &[1.0, 2.0, 3.0, 5.0], 4).unwrap();
        assert_eq!(mem.predict(&[3.0]).unwrap(), 2.75);
    }

    #[test]
    fn two_clusters() {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        let mut targets = Vec::new();
        for i in 0..10 {
            let jitter = 0.01 * i as f64;
            pts.push(vec![1.0, jitter]);
            targets.push(2.0);
            pts.push(vec![-jitter, 1.0]);
            targets.push(4.0);
        }
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let mem = KnnMemory::new(&refs, &targets, 5).unwrap();
        assert_eq!(mem.predict(&[1.0, 0.03]).unwrap(), 2.0);
        assert_eq!(mem.predict(&[0.0, 2.0]).unwrap(), 4.0);
    }

    #[test]
    fn ties_follow_memory_order() {
        let pts: [&[f64]; 3] = [&[1.0], &[1.0], &[1.0]];
        let mem = KnnMemory::new(&pts, &[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(mem.predict(&[1.0]).unwrap(), 1.5);
    }

    #[test]
    fn errors() {
        let pts: [&[f64]; 2] = [&[1.0, 0.0], &[0.0, 1.0]];
        assert!(matches!(
            KnnMemory::new(&pts, &[1.0, 2.0], 3),
            Err(Error::Config(_))
        ));
        assert!(KnnMemory::new(&[], &[], 1).is_err());
        let mem = KnnMemory::new(&pts, &[1.0, 2.0], 1).unwrap();
        assert!(matches!(mem.predict(&[1.0]), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn duplicated_memory_matches_half_k(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..20),
            targets_seed in prop::collection::vec(1.0f64..5.0, 20),
            query in prop::collection::vec(-5.0f64..5.0, 3),
            half_k in 1usize..4,
        ) {
            let n = pts.len();
            prop_assume!(half_k <= n);
            let targets = &targets_seed[..n];
            let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
            let dup_refs: Vec<&[f64]> = refs.iter().flat_map(|r| [*r, *r]).collect();
            let dup_targets: Vec<f64> = targets.iter().flat_map(|&t| [t, t]).collect();
            let base = KnnMemory::new(&refs, targets, half_k).unwrap();
            let dup = KnnMemory::new(&dup_refs, &dup_targets, 2 * half_k).unwrap();
            let a = base.predict(&query).unwrap();
            let b = dup.predict(&query).unwrap();
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }
}

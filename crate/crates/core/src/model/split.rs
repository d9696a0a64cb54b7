//! Seeded train/test splits with nested training fractions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const STREAM_SPLIT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    pub test_fraction: f64,
    pub train_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            train_fractions: vec![0.1, 0.2, 0.5],
            seeds: vec![13, 21, 42],
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.train_fractions.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "split plan needs at least one fraction and one seed".into(),
            ));
        }
        if let Some(f) = self
            .train_fractions
            .iter()
            .find(|f| !(**f > 0.0 && **f <= 1.0))
        {
            return Err(Error::Config(format!("train fraction {f} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Index sets for one seed. `train[i]` belongs to `plan.train_fractions[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSplit {
    pub seed: u64,
    pub test: Vec<usize>,
    pub train: Vec<(f64, Vec<usize>)>,
}

/// Shuffles `0..n_edges` per seed, holds out the test share and takes each
/// training fraction as a prefix of the shuffled remainder, so larger
/// fractions contain smaller ones. Index lists are returned sorted.
pub fn make_splits(n_edges: usize, plan: &SplitPlan) -> Result<Vec<SeedSplit>> {
    plan.validate()?;
    if n_edges < 10 {
        return Err(Error::Validation(format!(
            "need at least 10 edges to split, got {n_edges}"
        )));
    }
    let n_test = (plan.test_fraction * n_edges as f64).round() as usize;
    plan.seeds
        .iter()
        .map(|&s| {
            let mut order: Vec<usize> = (0..n_edges).collect();
            order.shuffle(&mut seed::rng(s, &[STREAM_SPLIT]));
            let (test, rest) = order.split_at(n_test);
            let mut test = test.to_vec();
            test.sort_unstable();
            let train = plan
                .train_fractions
                .iter()
                .map(|&f| {
                    let m = (f * rest.len() as f64).round() as usize;
                    if m == 0 {
                        return Err(Error::Config(format!(
                            "train fraction {f} of {} edges yields no training edges",
                            rest.len()
                        )));
                    }
                    let mut idx = rest[..m].to_vec();
                    idx.sort_unstable();
                    Ok((f, idx))
                })
                .collect::<Result<_>>()?;
            Ok(SeedSplit {
                seed: s,
                test,
                train,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_for_one_hundred_edges() {
        let splits = make_splits(100, &SplitPlan::default()).unwrap();
        assert_eq!(splits.len(), 3);
        let s13 = &splits[0];
        assert_eq!(s13.seed, 13);
        assert_eq!(s13.test.len(), 20);
        let sizes: Vec<usize> = s13.train.iter().map(|(_, t)| t.len()).collect();
        assert_eq!(sizes, vec![8, 16, 40]);
    }

    #[test]
    fn deterministic_nested_and_disjoint() {
        let a = make_splits(237, &SplitPlan::default()).unwrap();
        assert_eq!(a, make_splits(237, &SplitPlan::default()).unwrap());
        for s in &a {
            for w in s.train.windows(2) {
                assert!(w[0].1.iter().all(|i| w[1].1.contains(i)));
            }
            for (_, t) in &s.train {
                assert!(t.iter().all(|i| s.test.binary_search(i).is_err()));
            }
        }
        assert_ne!(a[0].test, a[1].test);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            make_splits(9, &SplitPlan::default()),
            Err(Error::Validation(_))
        ));
        let tiny = SplitPlan {
            train_fractions: vec![0.01],
            ..Default::default()
        };
        assert!(matches!(make_splits(20, &tiny), Err(Error::Config(_))));
        let bad = SplitPlan {
            test_fraction: 1.0,
            ..Default::default()
        };
        assert!(make_splits(100, &bad).is_err());
    }
}

//! Nonparametric percentile bootstrap over edges.
//!
//! Resample `r` draws from its own ChaCha stream seeded by `(seed, r)`, so the
//! parallel and serial paths produce identical intervals.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Redraws allowed per resample when the statistic is undefined on a draw.
const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub parallel: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: 2000,
            level: 0.95,
            seed: 0,
            parallel: false,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_resamples == 0 {
            return Err(Error::Config("n_resamples must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn resample<T, F>(n_items: usize, r: usize, seed: u64, statistic: &F) -> Result<T>
where
    F: Fn(&[usize]) -> Option<T>,
{
    let mut rng = seed::rng(seed, &[r as u64]);
    let mut sample = vec![0usize; n_items];
    for _ in 0..=MAX_REDRAWS {
        for s in sample.iter_mut() {
            *s = rng.random_range(0..n_items);
        }
        if let Some(v) = statistic(&sample) {
            return Ok(v);
        }
    }
    Err(Error::Domain(format!(
        "statistic undefined on resample {r} after {MAX_REDRAWS} redraws"
    )))
}

/// Bootstrap interval for a vector-valued statistic of an index multiset.
///
/// `statistic` receives the indices of a resample (length `n_items`, drawn
/// with replacement); it returns `None` when undefined on that draw.
pub fn bootstrap_ci_multi<F>(
    n_items: usize,
    statistic: F,
    cfg: &BootstrapConfig,
) -> Result<Vec<Interval>>
where
    F: Fn(&[usize]) -> Option<Vec<f64>> + Sync,
{
    cfg.validate()?;
    if n_items == 0 {
        return Err(Error::Domain("cannot bootstrap an empty sample".into()));
    }
    let all: Vec<usize> = (0..n_items).collect();
    let point = statistic(&all)
        .ok_or_else(|| Error::Domain("statistic undefined on the full sample".into()))?;

    let draws: Vec<Vec<f64>> = if cfg.parallel {
        (0..cfg.n_resamples)
            .into_par_iter()
            .map(|r| resample(n_items, r, cfg.seed, &statistic))
            .collect::<Result<_>>()?
    } else {
        (0..cfg.n_resamples)
            .map(|r| resample(n_items, r, cfg.seed, &statistic))
            .collect::<Result<_>>()?
    };

    let alpha = (1.0 - cfg.level) / 2.0;
    let mut column = Vec::with_capacity(draws.len());
    point
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            column.clear();
            for d in &draws {
                let v = *d.get(j).ok_or_else(|| {
                    Error::Domain("statistic changed length between resamples".into())
                })?;
                column.push(v);
            }
            column.sort_by(f64::total_cmp);
            Ok(Interval {
                point: p,
                lo: percentile(&column, alpha),
                hi: percentile(&column, 1.0 - alpha),
            })
        })
        .collect()
}

pub fn bootstrap_ci<F>(n_items: usize, statistic: F, cfg: &BootstrapConfig) -> Result<Interval>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    let mut v = bootstrap_ci_multi(n_items, |s| statistic(s).map(|x| vec![x]), cfg)?;
    Ok(v.remove(0))
}

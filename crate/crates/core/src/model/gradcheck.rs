//! Finite-difference verification of the network's analytic gradients.

use rand::seq::SliceRandom;

use super::network::{LossWeights, Network};
use crate::seed;

/// One batch of standardized inputs with targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBatch {
    pub x: Vec<f64>,
    pub n: usize,
    pub y_mos: Vec<f64>,
    /// Row-major `n * k` 0/1 labels; empty without a contract head.
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a ±step perturbation flipped a ReLU.
    pub skipped_kinks: usize,
}

/// Denominator floor of the relative error.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Max relative error over a seeded sample of at least 100 parameters (or
/// all of them, if fewer).
pub fn grad_check(net: &Network, batch: &GradBatch, weights: LossWeights, step: f64) -> f64 {
    grad_check_with(net, batch, weights, step, 100, 0).max_rel_error
}

pub fn grad_check_with(
    net: &Network,
    batch: &GradBatch,
    weights: LossWeights,
    step: f64,
    n_samples: usize,
    seed_value: u64,
) -> GradCheckReport {
    let base = net.forward(&batch.x, batch.n);
    let mask = base.relu_mask();
    let grads = net.backward(&base, &batch.y_mos, &batch.labels, weights);

    let mut params: Vec<(usize, usize)> = net
        .blocks()
        .iter()
        .enumerate()
        .flat_map(|(b, block)| (0..block.len()).map(move |i| (b, i)))
        .collect();
    params.shuffle(&mut seed::rng(
        seed_value,
        &[seed::name_stream("gradcheck")],
    ));

    let eval = |b: usize, i: usize, delta: f64| {
        let mut probe = net.clone();
        probe.blocks_mut()[b][i] += delta;
        let fwd = probe.forward(&batch.x, batch.n);
        let same_region = fwd.relu_mask() == mask;
        (
            probe.loss(&fwd, &batch.y_mos, &batch.labels, weights),
            same_region,
        )
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for (b, i) in params {
        if report.checked >= n_samples {
            break;
        }
        let (lp, ok_p) = eval(b, i, step);
        let (lm, ok_m) = eval(b, i, -step);
        if !(ok_p && ok_m) {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * step);
        report.max_rel_error = report
            .max_rel_error
            .max(relative_error(grads[b][i], numeric));
        report.checked += 1;
    }
    report
}

//! Cross-view drift: how much a group statistic moves when edges are
//! regrouped from one view to another.
//!
//! Every audited statistic is a group mean of a per-edge column: contract
//! rates average 0/1 indicators, Q_total averages per-edge Q_total, and the
//! group MOS averages edge MOS. Drift between views A and B is
//!
//! * edge-weighted (default): the mean over edges of
//!   `|stat(A-group of e) - stat(B-group of e)|`;
//! * group-weighted: the mean over A-groups of the same quantity averaged
//!   within each A-group.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci_multi, BootstrapConfig};
use super::{partition, IndicatorTable, ViewSpec};
use crate::contract::ContractSet;
use crate::error::{Error, Result};
use crate::ratings::EdgeSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftWeighting {
    #[default]
    Edge,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatKind {
    Mos,
    Contract,
    QTotal,
}

#[derive(Debug, Clone, PartialEq)]
struct Column {
    name: String,
    kind: StatKind,
    values: Vec<f64>,
}

/// Precomputed per-edge columns and group memberships for two views.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftInputs {
    columns: Vec<Column>,
    member_a: Vec<usize>,
    member_b: Vec<usize>,
    groups_a: usize,
    groups_b: usize,
}

impl DriftInputs {
    /// Columns in report order: `mos`, one per contract, then `q_total`.
    pub fn new(
        edges: &EdgeSet,
        view_a: &ViewSpec,
        view_b: &ViewSpec,
        contracts: &ContractSet,
    ) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Domain(
                "drift is undefined on an empty edge set".into(),
            ));
        }
        let pa = partition(edges, view_a)?;
        let pb = partition(edges, view_b)?;
        let table = IndicatorTable::new(edges, contracts);
        let mut columns = vec![Column {
            name: "mos".into(),
            kind: StatKind::Mos,
            values: table.mos().to_vec(),
        }];
        for (k, c) in contracts.contracts().iter().enumerate() {
            columns.push(Column {
                name: c.name.clone(),
                kind: StatKind::Contract,
                values: table.column(k),
            });
        }
        columns.push(Column {
            name: "q_total".into(),
            kind: StatKind::QTotal,
            values: table.edge_q_total().to_vec(),
        });
        Ok(Self {
            columns,
            groups_a: pa.len(),
            groups_b: pb.len(),
            member_a: pa.membership().to_vec(),
            member_b: pb.membership().to_vec(),
        })
    }

    /// Inserts an extra MOS-scale column (e.g. a baseline's predicted MOS)
    /// right after `mos`.
    pub fn with_mos_column(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.member_a.len() {
            return Err(Error::Validation(format!(
                "column {name:?} has {} values for {} edges",
                values.len(),
                self.member_a.len()
            )));
        }
        self.columns.insert(
            1,
            Column {
                name: name.to_string(),
                kind: StatKind::Mos,
                values,
            },
        );
        Ok(self)
    }

    pub fn n_edges(&self) -> usize {
        self.member_a.len()
    }

    pub fn statistic_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Drift of every column on the index multiset `sample`.
    pub fn drift_on(&self, sample: &[usize], weighting: DriftWeighting) -> Vec<f64> {
        let nc = self.columns.len();
        let mut sum_a = vec![0.0; self.groups_a * nc];
        let mut sum_b = vec![0.0; self.groups_b * nc];
        let mut cnt_a = vec![0usize; self.groups_a];
        let mut cnt_b = vec![0usize; self.groups_b];
        for &e in sample {
            let (ga, gb) = (self.member_a[e], self.member_b[e]);
            cnt_a[ga] += 1;
            cnt_b[gb] += 1;
            for (c, col) in self.columns.iter().enumerate() {
                sum_a[ga * nc + c] += col.values[e];
                sum_b[gb * nc + c] += col.values[e];
            }
        }
        let mean_a = |g: usize, c: usize| sum_a[g * nc + c] / cnt_a[g] as f64;
        let mean_b = |g: usize, c: usize| sum_b[g * nc + c] / cnt_b[g] as f64;

        let mut out = vec![0.0; nc];
        match weighting {
            DriftWeighting::Edge => {
                for &e in sample {
                    let (ga, gb) = (self.member_a[e], self.member_b[e]);
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += (mean_a(ga, c) - mean_b(gb, c)).abs();
                    }
                }
                let n = sample.len() as f64;
                out.iter_mut().for_each(|o| *o /= n);
            }
            DriftWeighting::Group => {
                let mut within = vec![0.0; self.groups_a * nc];
                for &e in sample {
                    let (ga, gb) = (self.member_a[e], self.member_b[e]);
                    for c in 0..nc {
                        within[ga * nc + c] += (mean_a(ga, c) - mean_b(gb, c)).abs();
                    }
                }
                let present: Vec<usize> = (0..self.groups_a).filter(|&g| cnt_a[g] > 0).collect();
                for &g in &present {
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += within[g * nc + c] / cnt_a[g] as f64;
                    }
                }
                let n = present.len() as f64;
                out.iter_mut().for_each(|o| *o /= n);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub statistic: String,
    pub kind: StatKind,
    pub point: f64,
    /// Bootstrap interval, absent for point-only reports.
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub view_a: String,
    pub view_b: String,
    pub weighting: DriftWeighting,
    pub rows: Vec<DriftRow>,
    pub n_resamples: usize,
    pub seed: Option<u64>,
}

impl DriftReport {
    pub fn get(&self, statistic: &str) -> Option<&DriftRow> {
        self.rows.iter().find(|r| r.statistic == statistic)
    }

    pub fn point(&self, statistic: &str) -> Option<f64> {
        self.get(statistic).map(|r| r.point)
    }

    /// `statistic,point,ci_lo,ci_hi,n_resamples,seed`, six decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("statistic,point,ci_lo,ci_hi,n_resamples,seed\n");
        let seed = self.seed.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let (lo, hi) = match r.ci {
                Some((lo, hi)) => (format!("{lo:.6}"), format!("{hi:.6}")),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                s,
                "{},{:.6},{lo},{hi},{},{seed}",
                r.statistic, r.point, self.n_resamples
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "drift {} vs {} ({:?}-weighted, {} resamples)\n",
            self.view_a, self.view_b, self.weighting, self.n_resamples
        );
        let _ = writeln!(s, "{:<16} {:>10} {:>24}", "statistic", "drift", "95% CI");
        for r in &self.rows {
            let ci = match r.ci {
                Some((lo, hi)) => format!("[{lo:.6}, {hi:.6}]"),
                None => "-".into(),
            };
            let _ = writeln!(s, "{:<16} {:>10.6} {:>24}", r.statistic, r.point, ci);
        }
        s
    }
}

#[allow(clippy::too_many_arguments)]
fn report(
    inputs: &DriftInputs,
    view_a: &ViewSpec,
    view_b: &ViewSpec,
    weighting: DriftWeighting,
    points: Vec<f64>,
    cis: Option<Vec<(f64, f64)>>,
    n_resamples: usize,
    seed: Option<u64>,
) -> DriftReport {
    let rows = inputs
        .columns
        .iter()
        .zip(points)
        .enumerate()
        .map(|(i, (col, point))| DriftRow {
            statistic: col.name.clone(),
            kind: col.kind,
            point,
            ci: cis.as_ref().map(|v| v[i]),
        })
        .collect();
    DriftReport {
        view_a: view_a.label.clone(),
        view_b: view_b.label.clone(),
        weighting,
        rows,
        n_resamples,
        seed,
    }
}

/// Point estimates of MOS, per-contract and Q_total drift between two views.
pub fn view_drift(
    edges: &EdgeSet,
    view_a: &ViewSpec,
    view_b: &ViewSpec,
    contracts: &ContractSet,
    weighting: DriftWeighting,
) -> Result<DriftReport> {
    let inputs = DriftInputs::new(edges, view_a, view_b, contracts)?;
    Ok(drift_points(&inputs, view_a, view_b, weighting))
}

/// Point estimates for prepared inputs (e.g. with an extra MOS column).
pub fn drift_points(
    inputs: &DriftInputs,
    view_a: &ViewSpec,
    view_b: &ViewSpec,
    weighting: DriftWeighting,
) -> DriftReport {
    let all: Vec<usize> = (0..inputs.n_edges()).collect();
    let points = inputs.drift_on(&all, weighting);
    report(inputs, view_a, view_b, weighting, points, None, 0, None)
}

/// Drift with percentile bootstrap intervals over edges.
///
/// The reported interval is widened to include the point estimate when the
/// percentile interval excludes it, which happens for small-drift statistics
/// because resampling noise biases absolute differences upward.
pub fn drift_with_bootstrap(
    inputs: &DriftInputs,
    view_a: &ViewSpec,
    view_b: &ViewSpec,
    weighting: DriftWeighting,
    cfg: &BootstrapConfig,
) -> Result<DriftReport> {
    let intervals = bootstrap_ci_multi(
        inputs.n_edges(),
        |s| Some(inputs.drift_on(s, weighting)),
        cfg,
    )?;
    let points: Vec<f64> = intervals.iter().map(|i| i.point).collect();
    let cis = intervals
        .iter()
        .map(|i| (i.lo.min(i.point), i.hi.max(i.point)))
        .collect();
    Ok(report(
        inputs,
        view_a,
        view_b,
        weighting,
        points,
        Some(cis),
        cfg.n_resamples,
        Some(cfg.seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::edges;
    use super::*;
    use crate::contract::{builtin_family, BuiltinFamily};
    use proptest::prelude::*;

    fn sys() -> ViewSpec {
        ViewSpec::new("system_id")
    }

    fn typ() -> ViewSpec {
        ViewSpec::new("system_type")
    }

    #[test]
    fn identical_views_have_zero_drift() {
        let set = edges(&[
            ("s1", "a", &[1, 5]),
            ("s2", "a", &[3, 4]),
            ("s3", "b", &[2]),
        ]);
        let mid = builtin_family(BuiltinFamily::Mid);
        for w in [DriftWeighting::Edge, DriftWeighting::Group] {
            let r = view_drift(&set, &sys(), &sys(), &mid, w).unwrap();
            assert!(r.rows.iter().all(|row| row.point == 0.0), "{r:?}");
        }
    }

    #[test]
    fn hand_computed_two_system_example() {
        // s1 satisfies lenient, s2 does not; one type with rate 0.5.
        let set = edges(&[("s1", "t", &[4]), ("s2", "t", &[2])]);
        let c = ContractSet::from_pairs("l", [("lenient", "mean >= 3.0")]).unwrap();
        let r = view_drift(&set, &sys(), &typ(), &c, DriftWeighting::Edge).unwrap();
        assert!((r.point("lenient").unwrap() - 0.5).abs() < 1e-12);
        assert!((r.point("mos").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bijective_regrouping_has_zero_drift() {
        let set = edges(&[
            ("s1", "t1", &[1, 2]),
            ("s1", "t1", &[5]),
            ("s2", "t2", &[3, 3]),
        ]);
        let mid = builtin_family(BuiltinFamily::Mid);
        let r = view_drift(&set, &sys(), &typ(), &mid, DriftWeighting::Edge).unwrap();
        assert!(r.rows.iter().all(|row| row.point == 0.0));
    }

    #[test]
    fn group_weighting_treats_systems_equally() {
        // s1 has 3 lenient edges, s2 one failing edge; type rate 0.75.
        let set = edges(&[
            ("s1", "t", &[4]),
            ("s1", "t", &[4]),
            ("s1", "t", &[4]),
            ("s2", "t", &[2]),
        ]);
        let c = ContractSet::from_pairs("l", [("lenient", "mean >= 3.0")]).unwrap();
        let e = view_drift(&set, &sys(), &typ(), &c, DriftWeighting::Edge).unwrap();
        let g = view_drift(&set, &sys(), &typ(), &c, DriftWeighting::Group).unwrap();
        assert!((e.point("lenient").unwrap() - 0.375).abs() < 1e-12);
        assert!((g.point("lenient").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mos_hat_column_and_csv_layout() {
        let set = edges(&[("s1", "t", &[4]), ("s2", "t", &[2])]);
        let c = ContractSet::from_pairs("l", [("lenient", "mean >= 3.0")]).unwrap();
        let inputs = DriftInputs::new(&set, &sys(), &typ(), &c)
            .unwrap()
            .with_mos_column("mos_hat", vec![3.0, 3.0])
            .unwrap();
        assert_eq!(
            inputs.statistic_names(),
            vec!["mos", "mos_hat", "lenient", "q_total"]
        );
        assert!(inputs.clone().with_mos_column("bad", vec![1.0]).is_err());
        let cfg = BootstrapConfig {
            n_resamples: 50,
            seed: 1,
            ..Default::default()
        };
        let r = drift_with_bootstrap(&inputs, &sys(), &typ(), DriftWeighting::Edge, &cfg).unwrap();
        assert_eq!(r.point("mos_hat"), Some(0.0));
        let csv = r.to_csv();
        assert!(csv.starts_with("statistic,point,ci_lo,ci_hi,n_resamples,seed\nmos,1.000000,"));
        assert!(csv.lines().all(|l| l.split(',').count() == 6));
        for row in &r.rows {
            let (lo, hi) = row.ci.unwrap();
            assert!(lo <= row.point && row.point <= hi);
        }
    }

    fn arb_refined() -> impl Strategy<Value = EdgeSet> {
        prop::collection::vec((0usize..6, prop::collection::vec(1u8..=5, 1..5)), 1..30).prop_map(
            |rows| {
                let spec: Vec<(String, String, Vec<u8>)> = rows
                    .into_iter()
                    .map(|(s, r)| (format!("s{s}"), format!("t{}", s / 3), r))
                    .collect();
                let refs: Vec<(&str, &str, &[u8])> = spec
                    .iter()
                    .map(|(s, t, r)| (s.as_str(), t.as_str(), r.as_slice()))
                    .collect();
                edges(&refs)
            },
        )
    }

    proptest! {
        #[test]
        fn refinement_drift_is_bounded(set in arb_refined()) {
            let mid = builtin_family(BuiltinFamily::Mid);
            let r = view_drift(&set, &sys(), &typ(), &mid, DriftWeighting::Edge).unwrap();
            let qs = super::super::group_q_vectors(&set, &sys(), &mid).unwrap();
            for (k, name) in mid.names().iter().enumerate() {
                let d = r.point(name).unwrap();
                let rates: Vec<f64> = qs.iter().map(|q| q.rates[k]).collect();
                let spread = rates.iter().cloned().fold(f64::MIN, f64::max)
                    - rates.iter().cloned().fold(f64::MAX, f64::min);
                prop_assert!((0.0..=1.0).contains(&d));
                prop_assert!(d <= spread + 1e-12);
            }
            let m = r.point("mos").unwrap();
            prop_assert!((0.0..=4.0).contains(&m));
        }
    }
}

//! Graph views, contract satisfaction vectors and cross-view auditing.
//!
//! A view regroups edges by one attribute (`system_id`, `system_type`, ...).
//! Each group gets a [`QVector`]: the fraction of its edges satisfying every
//! contract, plus the Q_total summary.

mod bin_gain;
mod bootstrap;
mod drift;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bin_gain::{bin_gain, BinRow};
pub use bootstrap::{bootstrap_ci, bootstrap_ci_multi, percentile, BootstrapConfig, Interval};
pub use drift::{
    drift_points, drift_with_bootstrap, view_drift, DriftInputs, DriftReport, DriftRow,
    DriftWeighting, StatKind,
};

use crate::contract::ContractSet;
use crate::error::{Error, Result};
use crate::ratings::EdgeSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub key: String,
    pub label: String,
}

impl ViewSpec {
    pub fn new(key: impl Into<String>) -> Self {
        let key = key.into();
        Self {
            label: key.clone(),
            key,
        }
    }
}

/// Edge partition induced by a view. Groups are sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    view: ViewSpec,
    group_ids: Vec<String>,
    groups: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl Partition {
    pub fn view(&self) -> &ViewSpec {
        &self.view
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group_ids(&self) -> &[String] {
        &self.group_ids
    }

    /// Edge indices of group `g`, in edge order.
    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.group_ids
            .iter()
            .map(String::as_str)
            .zip(self.groups.iter().map(Vec::as_slice))
    }

    /// Group index of each edge.
    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn edge_sets(&self, edges: &EdgeSet) -> Result<Vec<(String, EdgeSet)>> {
        self.iter()
            .map(|(id, idx)| Ok((id.to_string(), edges.subset(idx)?)))
            .collect()
    }
}

pub fn partition(edges: &EdgeSet, view: &ViewSpec) -> Result<Partition> {
    let mut by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        let value = e.attr(&view.key).ok_or_else(|| {
            Error::Validation(format!(
                "edge {:?} lacks view attribute {:?}",
                e.edge_id(),
                view.key
            ))
        })?;
        by_id.entry(value).or_default().push(i);
    }
    let mut membership = vec![0; edges.len()];
    let mut group_ids = Vec::with_capacity(by_id.len());
    let mut groups = Vec::with_capacity(by_id.len());
    for (g, (id, idx)) in by_id.into_iter().enumerate() {
        for &i in &idx {
            membership[i] = g;
        }
        group_ids.push(id.to_string());
        groups.push(idx);
    }
    Ok(Partition {
        view: view.clone(),
        group_ids,
        groups,
        membership,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVector {
    pub group_id: String,
    pub n_edges: usize,
    pub rates: Vec<f64>,
    pub q_total: f64,
}

/// Per-edge contract indicators, computed once per (edge set, contract set).
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTable {
    k: usize,
    bits: Vec<bool>,
    mos: Vec<f64>,
    edge_q_total: Vec<f64>,
}

impl IndicatorTable {
    pub fn new(edges: &EdgeSet, contracts: &ContractSet) -> Self {
        let k = contracts.len();
        let mut bits = Vec::with_capacity(edges.len() * k);
        let mut edge_q_total = Vec::with_capacity(edges.len());
        for e in edges {
            let ind = contracts.indicators(e.stats());
            let as_f: Vec<f64> = ind.iter().map(|&b| b as u8 as f64).collect();
            edge_q_total.push(contracts.q_total_of(&as_f));
            bits.extend(ind);
        }
        Self {
            k,
            bits,
            mos: edges.mos_values(),
            edge_q_total,
        }
    }

    pub fn n_contracts(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.mos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mos.is_empty()
    }

    pub fn row(&self, e: usize) -> &[bool] {
        &self.bits[e * self.k..(e + 1) * self.k]
    }

    pub fn mos(&self) -> &[f64] {
        &self.mos
    }

    /// Mean of the Q_total subset of each edge's indicators.
    pub fn edge_q_total(&self) -> &[f64] {
        &self.edge_q_total
    }

    /// Indicator column of contract `k` as 0/1 reals.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.len())
            .map(|e| self.bits[e * self.k + k] as u8 as f64)
            .collect()
    }

    /// Q-vector of the (multi)set of edges at `indices`.
    pub fn q_vector(
        &self,
        indices: &[usize],
        contracts: &ContractSet,
        group_id: &str,
    ) -> Result<QVector> {
        if indices.is_empty() {
            return Err(Error::Domain(format!(
                "contract satisfaction is undefined on the empty group {group_id:?}"
            )));
        }
        let mut counts = vec![0usize; self.k];
        for &e in indices {
            for (c, &b) in counts.iter_mut().zip(self.row(e)) {
                *c += b as usize;
            }
        }
        let n = indices.len();
        let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(QVector {
            group_id: group_id.to_string(),
            n_edges: n,
            q_total: contracts.q_total_of(&rates),
            rates,
        })
    }
}

/// Contract satisfaction vector of a whole edge set.
pub fn q_vector(edges: &EdgeSet, contracts: &ContractSet) -> Result<QVector> {
    let table = IndicatorTable::new(edges, contracts);
    let all: Vec<usize> = (0..edges.len()).collect();
    table.q_vector(&all, contracts, "all")
}

/// One Q-vector per group of the view.
pub fn group_q_vectors(
    edges: &EdgeSet,
    view: &ViewSpec,
    contracts: &ContractSet,
) -> Result<Vec<QVector>> {
    let part = partition(edges, view)?;
    let table = IndicatorTable::new(edges, contracts);
    part.iter()
        .map(|(id, idx)| table.q_vector(idx, contracts, id))
        .collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::ratings::{EdgeRecord, EdgeSet};

    /// Edges from `(system, type, ratings)` triples.
    pub fn edges(spec: &[(&str, &str, &[u8])]) -> EdgeSet {
        let recs = spec
            .iter()
            .enumerate()
            .map(|(i, (s, t, r))| {
                EdgeRecord::with_attrs(
                    format!("e{i}"),
                    r.to_vec(),
                    [
                        ("system_id", *s),
                        ("system_type", *t),
                        ("utterance_id", "u"),
                    ],
                )
                .unwrap()
            })
            .collect();
        EdgeSet::new(recs, vec!["system_id".into(), "system_type".into()]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::edges;
    use super::*;
    use crate::contract::{builtin_family, BuiltinFamily};
    use crate::ratings::EdgeRecord;

    #[test]
    fn partition_sorts_groups_and_covers_edges() {
        let set = edges(&[("s2", "a", &[3]), ("s1", "a", &[4]), ("s1", "a", &[5])]);
        let p = partition(&set, &ViewSpec::new("system_id")).unwrap();
        assert_eq!(p.group_ids(), &["s1", "s2"]);
        assert_eq!(p.group(0), &[1, 2]);
        assert_eq!(p.group(1), &[0]);
        assert_eq!(p.membership(), &[1, 0, 0]);

        let single = partition(&set, &ViewSpec::new("system_type")).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.group(0), &[0, 1, 2]);
        let sets = single.edge_sets(&set).unwrap();
        assert_eq!(sets[0].1, set);
    }

    #[test]
    fn finest_view_gives_singletons() {
        let recs = (0..4)
            .map(|i| {
                EdgeRecord::with_attrs(
                    format!("e{i}"),
                    vec![3],
                    [("utterance_id", &*format!("u{i}"))],
                )
                .unwrap()
            })
            .collect();
        let set = EdgeSet::from_edges(recs).unwrap();
        let p = partition(&set, &ViewSpec::new("utterance_id")).unwrap();
        assert_eq!(p.len(), set.len());
    }

    #[test]
    fn missing_view_attribute_is_rejected() {
        let set = edges(&[("s1", "a", &[3])]);
        assert!(matches!(
            partition(&set, &ViewSpec::new("vocoder")),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn two_edge_lenient_average() {
        let set = edges(&[("s", "t", &[3, 4]), ("s", "t", &[1, 2])]);
        let c = ContractSet::from_pairs("l", [("lenient", "mean >= 3.0")]).unwrap();
        let q = q_vector(&set, &c).unwrap();
        assert_eq!(q.rates, vec![0.5]);
        assert_eq!(q.q_total, 0.5);
    }

    #[test]
    fn perfect_consensus_edges() {
        let set = edges(&[("s", "t", &[4, 4, 4]), ("s", "t", &[4, 4, 4])]);
        let q = q_vector(&set, &builtin_family(BuiltinFamily::Mid)).unwrap();
        assert_eq!(q.rates, vec![1.0; 4]);
        assert_eq!(q.q_total, 1.0);
    }

    #[test]
    fn four_edge_mid_pattern() {
        // indicator rows (1,0,1,1), (1,1,1,1), (0,0,0,0), (1,0,0,0)
        let set = edges(&[
            ("s", "t", &[3, 3, 4, 4, 4]),
            ("s", "t", &[4, 4, 4]),
            ("s", "t", &[1, 1, 5]),
            ("s", "t", &[1, 5, 5]),
        ]);
        let mid = builtin_family(BuiltinFamily::Mid);
        let table = IndicatorTable::new(&set, &mid);
        let rows: Vec<Vec<bool>> = (0..4).map(|e| table.row(e).to_vec()).collect();
        let t = true;
        let f = false;
        assert_eq!(
            rows,
            vec![
                vec![t, f, t, t],
                vec![t, t, t, t],
                vec![f, f, f, f],
                vec![t, f, f, f]
            ]
        );
        let q = q_vector(&set, &mid).unwrap();
        assert_eq!(q.rates, vec![0.75, 0.25, 0.5, 0.5]);
    }

    #[test]
    fn empty_set_is_a_domain_error() {
        let set = EdgeSet::default();
        let mid = builtin_family(BuiltinFamily::Mid);
        assert!(matches!(q_vector(&set, &mid), Err(Error::Domain(_))));
    }
}

//! Experience contracts: Boolean predicates over [`RatingStats`].
//!
//! Contracts are written in a small expression language (see [`parser`]) and
//! grouped into ordered, named [`ContractSet`]s. The builtin families are
//! `simple` (lenient, strict), `mid` (adds fair and consensus) and `full`
//! (mid plus a threshold grid over the MOS and disagreement scales).

mod parser;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use parser::{parse_contract, ParseError};

use crate::error::{Error, Result};
use crate::ratings::RatingStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatField {
    Mean,
    Std,
    Min,
    Max,
    Range,
    Count,
}

impl StatField {
    pub const ALL: [StatField; 6] = [
        StatField::Mean,
        StatField::Std,
        StatField::Min,
        StatField::Max,
        StatField::Range,
        StatField::Count,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "mean" => StatField::Mean,
            "std" => StatField::Std,
            "min" => StatField::Min,
            "max" => StatField::Max,
            "range" => StatField::Range,
            "count" => StatField::Count,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            StatField::Mean => "mean",
            StatField::Std => "std",
            StatField::Min => "min",
            StatField::Max => "max",
            StatField::Range => "range",
            StatField::Count => "count",
        }
    }

    pub fn value(self, s: &RatingStats) -> f64 {
        match self {
            StatField::Mean => s.mean,
            StatField::Std => s.std,
            StatField::Min => s.min as f64,
            StatField::Max => s.max as f64,
            StatField::Range => s.range as f64,
            StatField::Count => s.count as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Ge,
    Le,
    Gt,
    Lt,
    Eq,
}

impl CmpOp {
    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Eq => "==",
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContractExpr {
    Compare {
        field: StatField,
        op: CmpOp,
        value: f64,
    },
    And(Box<ContractExpr>, Box<ContractExpr>),
    Or(Box<ContractExpr>, Box<ContractExpr>),
    Not(Box<ContractExpr>),
}

impl ContractExpr {
    /// Exact evaluation; boundary equality satisfies inclusive operators.
    pub fn eval(&self, stats: &RatingStats) -> bool {
        match self {
            ContractExpr::Compare { field, op, value } => op.apply(field.value(stats), *value),
            ContractExpr::And(a, b) => a.eval(stats) && b.eval(stats),
            ContractExpr::Or(a, b) => a.eval(stats) || b.eval(stats),
            ContractExpr::Not(a) => !a.eval(stats),
        }
    }
}

pub fn eval_contract(expr: &ContractExpr, stats: &RatingStats) -> bool {
    expr.eval(stats)
}

/// Prints the minimal parenthesization that parses back to the same tree.
impl fmt::Display for ContractExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ContractExpr::*;
        match self {
            Compare { field, op, value } => write!(f, "{} {} {}", field.name(), op, value),
            Not(inner) => match **inner {
                Compare { .. } | Not(_) => write!(f, "!{inner}"),
                _ => write!(f, "!({inner})"),
            },
            And(a, b) => {
                match **a {
                    Or(..) => write!(f, "({a})")?,
                    _ => write!(f, "{a}")?,
                }
                f.write_str(" && ")?;
                match **b {
                    Or(..) | And(..) => write!(f, "({b})"),
                    _ => write!(f, "{b}"),
                }
            }
            Or(a, b) => {
                write!(f, "{a} || ")?;
                match **b {
                    Or(..) => write!(f, "({b})"),
                    _ => write!(f, "{b}"),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedContract {
    pub name: String,
    pub expr: ContractExpr,
}

/// Where a contract set came from.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    Builtin(BuiltinFamily),
    /// Single-threshold `mean >= tau` family under which MOS regression is a
    /// special case.
    DegenerateMos {
        tau: f64,
    },
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinFamily {
    Simple,
    Mid,
    Full,
}

impl BuiltinFamily {
    pub const ALL: [BuiltinFamily; 3] = [
        BuiltinFamily::Simple,
        BuiltinFamily::Mid,
        BuiltinFamily::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinFamily::Simple => "simple",
            BuiltinFamily::Mid => "mid",
            BuiltinFamily::Full => "full",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "simple" => Ok(BuiltinFamily::Simple),
            "mid" => Ok(BuiltinFamily::Mid),
            "full" => Ok(BuiltinFamily::Full),
            other => Err(Error::Config(format!(
                "unknown contract family {other:?} (valid: simple, mid, full)"
            ))),
        }
    }
}

impl fmt::Display for BuiltinFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered family of named contracts with the subset averaged into Q_total.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractSet {
    label: String,
    kind: FamilyKind,
    contracts: Vec<NamedContract>,
    q_total_subset: Vec<usize>,
}

pub const LENIENT: &str = "mean >= 3.0";
pub const STRICT: &str = "mean >= 4.0";
pub const FAIR: &str = "std <= 0.7 && range <= 2";
pub const CONSENSUS: &str = "mean >= 3.0 && std <= 0.7 && range <= 2";

/// Version tag of the `full` threshold grid; bump if the grid changes.
pub const FULL_GRID_VERSION: u32 = 1;
const FULL_GRID: [(&str, &str); 5] = [
    ("mean_ge_2_5", "mean >= 2.5"),
    ("mean_ge_3_5", "mean >= 3.5"),
    ("mean_ge_4_5", "mean >= 4.5"),
    ("std_le_0_5", "std <= 0.5"),
    ("std_le_1_0", "std <= 1.0"),
];

impl ContractSet {
    pub fn new(label: impl Into<String>, contracts: Vec<NamedContract>) -> Result<Self> {
        Self::with_kind(label, FamilyKind::Custom, contracts)
    }

    fn with_kind(
        label: impl Into<String>,
        kind: FamilyKind,
        contracts: Vec<NamedContract>,
    ) -> Result<Self> {
        if contracts.is_empty() {
            return Err(Error::Config(
                "a contract set needs at least one contract".into(),
            ));
        }
        let mut names = HashSet::new();
        for c in &contracts {
            if c.name.is_empty() {
                return Err(Error::Config("contract names must be non-empty".into()));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate contract name {:?}",
                    c.name
                )));
            }
        }
        let q_total_subset = (0..contracts.len()).collect();
        Ok(Self {
            label: label.into(),
            kind,
            contracts,
            q_total_subset,
        })
    }

    /// Parses `(name, expression)` pairs.
    pub fn from_pairs<'a>(
        label: impl Into<String>,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let contracts = pairs
            .into_iter()
            .map(|(name, text)| {
                Ok(NamedContract {
                    name: name.to_string(),
                    expr: parse_contract(text)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(label, contracts)
    }

    /// Restricts Q_total to the given 0-based contract indices.
    pub fn with_q_total_subset(mut self, subset: Vec<usize>) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::Config("q_total subset must be non-empty".into()));
        }
        let mut sorted = subset;
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&bad) = sorted.iter().find(|&&i| i >= self.contracts.len()) {
            return Err(Error::Config(format!(
                "q_total subset index {bad} out of range for {} contracts",
                self.contracts.len()
            )));
        }
        self.q_total_subset = sorted;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn contracts(&self) -> &[NamedContract] {
        &self.contracts
    }

    pub fn len(&self) -> usize {
        self.contracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contracts.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.contracts.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.contracts.iter().position(|c| c.name == name)
    }

    pub fn q_total_subset(&self) -> &[usize] {
        &self.q_total_subset
    }

    pub fn indicators(&self, stats: &RatingStats) -> Vec<bool> {
        self.contracts.iter().map(|c| c.expr.eval(stats)).collect()
    }

    /// Mean of the Q_total subset of a per-contract vector (rates or indicators).
    pub fn q_total_of(&self, values: &[f64]) -> f64 {
        let sum: f64 = self.q_total_subset.iter().map(|&k| values[k]).sum();
        sum / self.q_total_subset.len() as f64
    }

    /// Renders the set in the contract-file format.
    pub fn to_file_string(&self) -> String {
        self.contracts
            .iter()
            .map(|c| format!("{} : {}\n", c.name, c.expr))
            .collect()
    }
}

pub fn builtin_family(family: BuiltinFamily) -> ContractSet {
    let mut pairs = vec![("lenient", LENIENT), ("strict", STRICT)];
    if family != BuiltinFamily::Simple {
        pairs.push(("fair", FAIR));
        pairs.push(("consensus", CONSENSUS));
    }
    if family == BuiltinFamily::Full {
        pairs.extend(FULL_GRID);
    }
    let set = ContractSet::from_pairs(family.name(), pairs).expect("builtin contracts parse");
    ContractSet {
        kind: FamilyKind::Builtin(family),
        ..set
    }
}

pub fn builtin_family_by_name(name: &str) -> Result<ContractSet> {
    BuiltinFamily::from_name(name).map(builtin_family)
}

/// `{mos_tau: mean >= tau}`.
pub fn degenerate_mos_family(tau: f64) -> Result<ContractSet> {
    if !tau.is_finite() {
        return Err(Error::Config(format!(
            "threshold must be finite, got {tau}"
        )));
    }
    let expr = ContractExpr::Compare {
        field: StatField::Mean,
        op: CmpOp::Ge,
        value: tau,
    };
    ContractSet::with_kind(
        format!("mos_tau_{tau}"),
        FamilyKind::DegenerateMos { tau },
        vec![NamedContract {
            name: "mos_tau".into(),
            expr,
        }],
    )
}

/// Parses a contract file: one `name : expression` per line; blank lines and
/// lines starting with `#` are ignored.
pub fn parse_contract_file(text: &str, label: &str) -> Result<ContractSet> {
    let mut contracts = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, expr) = line.split_once(':').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected \"name : expression\"",
                lineno + 1
            ))
        })?;
        let expr = parse_contract(expr.trim()).map_err(|e| {
            Error::Config(format!(
                "line {}: contract {:?}: {e}",
                lineno + 1,
                name.trim()
            ))
        })?;
        contracts.push(NamedContract {
            name: name.trim().to_string(),
            expr,
        });
    }
    if contracts.is_empty() {
        return Err(Error::Config(format!(
            "contract file {label:?} defines no contracts"
        )));
    }
    ContractSet::new(label, contracts)
}

pub fn load_contract_file(path: &Path) -> Result<ContractSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("custom")
        .to_string();
    parse_contract_file(&text, &label)
}

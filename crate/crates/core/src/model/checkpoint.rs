//! Binary model checkpoints.
//!
//! Layout: magic `QOECKPT1`, u32 format version, u64 header length, a JSON
//! header (config echo and shapes), u64 value count, then little-endian f64
//! values: standardizer mean, standardizer scale, network blocks in
//! [`Network::blocks`] order, loss history.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{ContractHead, Dense, Network};
use super::train::{AuditorConfig, AuditorModel, Standardizer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"QOECKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
enum HeadShape {
    None,
    Structured { k: usize },
    IdEmbedding { k: usize, emb_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    crate_version: String,
    config: AuditorConfig,
    contract_names: Vec<String>,
    feature_dim: usize,
    evidence_dim: usize,
    /// `(in, out)` of each backbone layer.
    layers: Vec<(usize, usize)>,
    head: HeadShape,
    history_len: usize,
}

fn header_of(model: &AuditorModel) -> Header {
    let net = &model.network;
    let head = match &net.contract_head {
        ContractHead::None => HeadShape::None,
        ContractHead::Structured(d) => HeadShape::Structured { k: d.out_dim },
        ContractHead::IdEmbedding { proj, .. } => HeadShape::IdEmbedding {
            k: net.n_contracts(),
            emb_dim: proj.out_dim,
        },
    };
    Header {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: model.config.clone(),
        contract_names: model.contract_names.clone(),
        feature_dim: model.feature_dim,
        evidence_dim: model.evidence_dim,
        layers: net.backbone.iter().map(|l| (l.in_dim, l.out_dim)).collect(),
        head,
        history_len: model.loss_history.len(),
    }
}

pub fn encode_checkpoint(model: &AuditorModel) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&header_of(model))
        .map_err(|e| Error::Domain(format!("cannot encode checkpoint header: {e}")))?;
    let values: Vec<f64> = model
        .standardizer
        .mean
        .iter()
        .chain(&model.standardizer.scale)
        .chain(model.network.blocks().into_iter().flatten())
        .chain(&model.loss_history)
        .copied()
        .collect();
    let mut out = Vec::with_capacity(28 + header.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

fn skeleton(h: &Header) -> std::result::Result<Network, String> {
    let mut width = h.feature_dim + h.evidence_dim;
    let mut backbone = Vec::new();
    for &(i, o) in &h.layers {
        if i != width || o == 0 {
            return Err(format!(
                "layer shape ({i}, {o}) does not chain from width {width}"
            ));
        }
        backbone.push(Dense::zeros(i, o, true));
        width = o;
    }
    let contract_head = match h.head {
        HeadShape::None => ContractHead::None,
        HeadShape::Structured { k } => ContractHead::Structured(Dense::zeros(width, k, true)),
        HeadShape::IdEmbedding { k, emb_dim } => ContractHead::IdEmbedding {
            proj: Dense::zeros(width, emb_dim, false),
            emb: vec![0.0; k * emb_dim],
            bias: vec![0.0],
        },
    };
    Ok(Network {
        backbone,
        mos_head: Dense::zeros(width, 1, true),
        contract_head,
    })
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<AuditorModel, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a model checkpoint (bad magic)".into());
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let hlen = r.u64()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(hlen)?).map_err(|e| format!("bad header: {e}"))?;
    let mut network = skeleton(&header)?;
    let d = header.feature_dim + header.evidence_dim;
    let expected = 2 * d + network.n_params() + header.history_len;
    let count = r.u64()? as usize;
    if count != expected {
        return Err(format!(
            "header implies {expected} values, file declares {count}"
        ));
    }
    let raw = r.take(count.checked_mul(8).ok_or("value count overflows")?)?;
    let mut values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut next = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let standardizer = Standardizer {
        mean: next(d),
        scale: next(d),
    };
    for block in network.blocks_mut() {
        let n = block.len();
        *block = next(n);
    }
    let loss_history = next(header.history_len);
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(AuditorModel {
        config: header.config,
        contract_names: header.contract_names,
        feature_dim: header.feature_dim,
        evidence_dim: header.evidence_dim,
        standardizer,
        network,
        loss_history,
    })
}

pub fn save_checkpoint(model: &AuditorModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<AuditorModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|m| Error::format(path, m))
}

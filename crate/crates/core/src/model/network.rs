//! Dense ReLU backbone with a MOS head and an optional contract head.
//!
//! All matrices are row-major `f64`; a batch of `n` inputs of width `d` is a
//! flat `n * d` slice. Weights of a layer mapping `in -> out` are stored as
//! `out` rows of length `in`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    /// Empty for bias-free layers.
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, bias: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: if bias { vec![0.0; out_dim] } else { Vec::new() },
        }
    }

    pub fn random<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim, bias);
        let sd = (gain / in_dim.max(1) as f64).sqrt();
        for w in layer.w.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = sd * z;
        }
        layer
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.w[j * self.in_dim..(j + 1) * self.in_dim]
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut y = vec![0.0; n * self.out_dim];
        for r in 0..n {
            let xr = &x[r * self.in_dim..(r + 1) * self.in_dim];
            let yr = &mut y[r * self.out_dim..(r + 1) * self.out_dim];
            for (j, out) in yr.iter_mut().enumerate() {
                let dot: f64 = self.row(j).iter().zip(xr).map(|(w, v)| w * v).sum();
                *out = dot + self.b.get(j).copied().unwrap_or(0.0);
            }
        }
        y
    }

    /// Accumulates parameter gradients for upstream gradient `dy` and
    /// optionally returns the input gradient.
    fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        n: usize,
        gw: &mut [f64],
        gb: &mut [f64],
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let mut dx = want_dx.then(|| vec![0.0; n * self.in_dim]);
        for r in 0..n {
            let xr = &x[r * self.in_dim..(r + 1) * self.in_dim];
            let dyr = &dy[r * self.out_dim..(r + 1) * self.out_dim];
            for (j, &g) in dyr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let gw_row = &mut gw[j * self.in_dim..(j + 1) * self.in_dim];
                for (a, v) in gw_row.iter_mut().zip(xr) {
                    *a += g * v;
                }
                if !gb.is_empty() {
                    gb[j] += g;
                }
                if let Some(dx) = dx.as_mut() {
                    let dxr = &mut dx[r * self.in_dim..(r + 1) * self.in_dim];
                    for (d, w) in dxr.iter_mut().zip(self.row(j)) {
                        *d += g * w;
                    }
                }
            }
        }
        dx
    }
}

/// Contract output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContractHead {
    None,
    /// One affine logit per contract.
    Structured(Dense),
    /// Logit of contract `k` is `(P h) . e_k + b`: a learned ID embedding per
    /// contract scored against a projection of the shared representation.
    IdEmbedding {
        proj: Dense,
        /// `k` rows of length `proj.out_dim`
        emb: Vec<f64>,
        bias: Vec<f64>,
    },
}

impl ContractHead {
    pub fn n_contracts(&self) -> usize {
        match self {
            ContractHead::None => 0,
            ContractHead::Structured(d) => d.out_dim,
            ContractHead::IdEmbedding { proj, emb, .. } => emb.len() / proj.out_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub backbone: Vec<Dense>,
    pub mos_head: Dense,
    pub contract_head: ContractHead,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub n: usize,
    /// Input followed by each hidden layer's post-ReLU output.
    pub acts: Vec<Vec<f64>>,
    pub mos: Vec<f64>,
    /// `n * k` contract logits (empty without a contract head).
    pub logits: Vec<f64>,
    proj: Vec<f64>,
}

impl Forward {
    fn last(&self) -> &[f64] {
        self.acts.last().expect("input is always present")
    }

    /// Sign pattern of every ReLU input, used to detect kink crossings.
    pub fn relu_mask(&self) -> Vec<bool> {
        self.acts[1..].iter().flatten().map(|&a| a > 0.0).collect()
    }
}

/// Targets and weights of the joint loss.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub mos: f64,
    pub contract: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Network {
    pub fn input_dim(&self) -> usize {
        self.backbone
            .first()
            .map_or(self.mos_head.in_dim, |l| l.in_dim)
    }

    pub fn hidden_dim(&self) -> usize {
        self.mos_head.in_dim
    }

    pub fn n_contracts(&self) -> usize {
        self.contract_head.n_contracts()
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Forward {
        let mut acts = vec![x.to_vec()];
        for layer in &self.backbone {
            let mut z = layer.forward(acts.last().expect("non-empty"), n);
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            acts.push(z);
        }
        let h = acts.last().expect("non-empty");
        let mos = self.mos_head.forward(h, n);
        let (logits, proj) = match &self.contract_head {
            ContractHead::None => (Vec::new(), Vec::new()),
            ContractHead::Structured(d) => (d.forward(h, n), Vec::new()),
            ContractHead::IdEmbedding { proj, emb, bias } => {
                let z = proj.forward(h, n);
                let e = proj.out_dim;
                let k = emb.len() / e;
                let mut logits = vec![0.0; n * k];
                for r in 0..n {
                    let zr = &z[r * e..(r + 1) * e];
                    for c in 0..k {
                        let dot: f64 = zr
                            .iter()
                            .zip(&emb[c * e..(c + 1) * e])
                            .map(|(a, b)| a * b)
                            .sum();
                        logits[r * k + c] = dot + bias[0];
                    }
                }
                (logits, z)
            }
        };
        Forward {
            n,
            acts,
            mos,
            logits,
            proj,
        }
    }

    /// Weighted sum of MOS mean squared error and mean binary cross-entropy
    /// over all (edge, contract) pairs.
    pub fn loss(&self, fwd: &Forward, y_mos: &[f64], labels: &[f64], w: LossWeights) -> f64 {
        let n = fwd.n as f64;
        let mse: f64 = fwd
            .mos
            .iter()
            .zip(y_mos)
            .map(|(p, y)| (p - y).powi(2))
            .sum::<f64>()
            / n;
        let mut total = w.mos * mse;
        if !fwd.logits.is_empty() {
            let bce: f64 = fwd
                .logits
                .iter()
                .zip(labels)
                .map(|(&z, &y)| softplus(z) - y * z)
                .sum::<f64>()
                / fwd.logits.len() as f64;
            total += w.contract * bce;
        }
        total
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.blocks().iter().map(|b| vec![0.0; b.len()]).collect()
    }

    /// Parameter blocks in a fixed order: backbone (w, b) per layer, MOS head
    /// (w, b), then the contract head.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.backbone {
            v.push(&l.w);
            v.push(&l.b);
        }
        v.push(&self.mos_head.w);
        v.push(&self.mos_head.b);
        match &self.contract_head {
            ContractHead::None => {}
            ContractHead::Structured(d) => {
                v.push(&d.w);
                v.push(&d.b);
            }
            ContractHead::IdEmbedding { proj, emb, bias } => {
                v.push(&proj.w);
                v.push(emb);
                v.push(bias);
            }
        }
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = Vec::new();
        for l in &mut self.backbone {
            v.push(&mut l.w);
            v.push(&mut l.b);
        }
        v.push(&mut self.mos_head.w);
        v.push(&mut self.mos_head.b);
        match &mut self.contract_head {
            ContractHead::None => {}
            ContractHead::Structured(d) => {
                v.push(&mut d.w);
                v.push(&mut d.b);
            }
            ContractHead::IdEmbedding { proj, emb, bias } => {
                v.push(&mut proj.w);
                v.push(emb);
                v.push(bias);
            }
        }
        v
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Gradient of [`Network::loss`] with respect to every parameter block.
    pub fn backward(
        &self,
        fwd: &Forward,
        y_mos: &[f64],
        labels: &[f64],
        w: LossWeights,
    ) -> Vec<Vec<f64>> {
        let n = fwd.n;
        let mut grads = self.zero_grads();
        let h = fwd.last();
        let hd = self.hidden_dim();
        let nb = self.backbone.len();

        let dmos: Vec<f64> = fwd
            .mos
            .iter()
            .zip(y_mos)
            .map(|(p, y)| w.mos * 2.0 * (p - y) / n as f64)
            .collect();
        let (head_w, rest) = grads[2 * nb..].split_at_mut(1);
        let mut dh = self
            .mos_head
            .backward(h, &dmos, n, &mut head_w[0], &mut rest[0], nb > 0)
            .unwrap_or_default();

        if !fwd.logits.is_empty() {
            let scale = w.contract / fwd.logits.len() as f64;
            let dlogits: Vec<f64> = fwd
                .logits
                .iter()
                .zip(labels)
                .map(|(&z, &y)| scale * (sigmoid(z) - y))
                .collect();
            let base = 2 * nb + 2;
            let dh_c = match &self.contract_head {
                ContractHead::None => None,
                ContractHead::Structured(d) => {
                    let (gw, gb) = grads[base..].split_at_mut(1);
                    d.backward(h, &dlogits, n, &mut gw[0], &mut gb[0], nb > 0)
                }
                ContractHead::IdEmbedding { proj, emb, .. } => {
                    let e = proj.out_dim;
                    let k = emb.len() / e;
                    let mut dz = vec![0.0; n * e];
                    {
                        let (_, tail) = grads[base..].split_at_mut(1);
                        let (gemb, gbias) = tail.split_at_mut(1);
                        for r in 0..n {
                            let zr = &fwd.proj[r * e..(r + 1) * e];
                            for c in 0..k {
                                let g = dlogits[r * k + c];
                                gbias[0][0] += g;
                                let er = &emb[c * e..(c + 1) * e];
                                for j in 0..e {
                                    gemb[0][c * e + j] += g * zr[j];
                                    dz[r * e + j] += g * er[j];
                                }
                            }
                        }
                    }
                    let mut no_bias: Vec<f64> = Vec::new();
                    proj.backward(h, &dz, n, &mut grads[base], &mut no_bias, nb > 0)
                }
            };
            if let Some(extra) = dh_c {
                for (a, b) in dh.iter_mut().zip(extra) {
                    *a += b;
                }
            }
        }
        debug_assert!(nb == 0 || dh.len() == n * hd);

        for l in (0..nb).rev() {
            let out = &fwd.acts[l + 1];
            for (g, &a) in dh.iter_mut().zip(out) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            let (gw, gb) = grads[2 * l..].split_at_mut(1);
            let next =
                self.backbone[l].backward(&fwd.acts[l], &dh, n, &mut gw[0], &mut gb[0], l > 0);
            if let Some(next) = next {
                dh = next;
            }
        }
        grads
    }
}

/// Adam optimizer state over a network's parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Network, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: net.zero_grads(),
            v: net.zero_grads(),
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (bi, block) in net.blocks_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[bi], &mut self.v[bi], &grads[bi]);
            for i in 0..block.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                block[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

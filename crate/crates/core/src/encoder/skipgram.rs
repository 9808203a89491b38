//! Skip-gram with negative sampling over walk corpora, and the embedding
//! export format.

use std::io::{Read, Write};

use hdgnn_autodiff::{Optimizer, ParameterStore, Tape, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NodeEncoder;
use crate::error::{Error, Result};
use crate::graph::{distinct_sorted, HeteroGraph, NodeId, NodeKind};
use crate::sampler::NeighborSets;
use crate::util::{rng_for, stream};

pub const EMBEDDINGS_MAGIC: &[u8; 9] = b"HDGNN-EM\x01";

/// Mean over rows of `−log σ(c·x) − Σ_j log σ(−c·n_j)`; every input is
/// `[B, d]`, `negatives[j]` holding the `j`-th negative of each row.
pub fn skipgram_loss(t: &Tape, center: Var, context: Var, negatives: &[Var]) -> Result<Var> {
    let pos = t.log_sigmoid(t.row_sum(t.mul(center, context)?));
    let mut total = pos;
    for &n in negatives {
        let dot = t.row_sum(t.mul(center, n)?);
        total = t.add(total, t.log_sigmoid(t.scale(dot, -1.0)))?;
    }
    Ok(t.scale(t.mean(total), -1.0))
}

/// Draws negatives of a given kind with probability ∝ in_degree^0.75
/// (uniformly when no node of that kind has incoming edges).
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    nodes: [Vec<NodeId>; 3],
    cumulative: [Vec<f64>; 3],
}

impl NegativeSampler {
    pub fn new(g: &HeteroGraph) -> Self {
        let mut nodes: [Vec<NodeId>; 3] = Default::default();
        let mut cumulative: [Vec<f64>; 3] = Default::default();
        for kind in NodeKind::ALL {
            let members = g.nodes_of_kind(kind).to_vec();
            let weights: Vec<f64> = members.iter().map(|&n| (g.in_degree_of(n) as f64).powf(0.75)).collect();
            let uniform = weights.iter().all(|&w| w == 0.0);
            let mut acc = 0.0;
            cumulative[kind.ordinal()] = weights
                .iter()
                .map(|&w| {
                    acc += if uniform { 1.0 } else { w };
                    acc
                })
                .collect();
            nodes[kind.ordinal()] = members;
        }
        NegativeSampler { nodes, cumulative }
    }

    pub fn sample<R: Rng + ?Sized>(&self, kind: NodeKind, rng: &mut R) -> Option<NodeId> {
        let cum = &self.cumulative[kind.ordinal()];
        let total = *cum.last()?;
        let x = rng.random::<f64>() * total;
        let i = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
        Some(self.nodes[kind.ordinal()][i])
    }

    /// Probability of drawing `n` among nodes of its kind.
    pub fn probability(&self, g: &HeteroGraph, n: NodeId) -> f64 {
        let k = g.kind(n).ordinal();
        let cum = &self.cumulative[k];
        let Ok(i) = self.nodes[k].binary_search(&n) else {
            return 0.0;
        };
        let prev = if i == 0 { 0.0 } else { cum[i - 1] };
        (cum[i] - prev) / cum[cum.len() - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub window: usize,
    pub negatives: usize,
    pub steps: usize,
    /// (center, context) pairs per step.
    pub batch_pairs: usize,
    pub learning_rate: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            window: 5,
            negatives: 5,
            steps: 200,
            batch_pairs: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PretrainReport {
    pub losses: Vec<f64>,
}

/// One sampled minibatch: parallel lists of centers, contexts and
/// `negatives` rows of negatives.
fn sample_batch(
    g: &HeteroGraph,
    corpus: &[Vec<NodeId>],
    sampler: &NegativeSampler,
    cfg: &PretrainConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<NodeId>, Vec<NodeId>, Vec<Vec<NodeId>>) {
    let mut centers = Vec::with_capacity(cfg.batch_pairs);
    let mut contexts = Vec::with_capacity(cfg.batch_pairs);
    while centers.len() < cfg.batch_pairs {
        let walk = &corpus[rng.random_range(0..corpus.len())];
        if walk.len() < 2 {
            continue;
        }
        let i = rng.random_range(0..walk.len());
        let lo = i.saturating_sub(cfg.window);
        let hi = (i + cfg.window).min(walk.len() - 1);
        let mut j = rng.random_range(lo..hi);
        if j >= i {
            j += 1;
        }
        centers.push(walk[i]);
        contexts.push(walk[j]);
    }
    let negatives = (0..cfg.negatives)
        .map(|_| {
            contexts
                .iter()
                .map(|&c| sampler.sample(g.kind(c), rng).unwrap_or(c))
                .collect()
        })
        .collect();
    (centers, contexts, negatives)
}

/// Warm-starts the encoder parameters in `store` by minimising the
/// skip-gram loss on `corpus`, one Adam step per minibatch.
pub fn pretrain(
    store: &mut ParameterStore,
    encoder: &NodeEncoder,
    g: &HeteroGraph,
    sets: &NeighborSets,
    corpus: &[Vec<NodeId>],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainReport> {
    if corpus.iter().all(|w| w.len() < 2) {
        return Err(Error::Data("walk corpus is empty".into()));
    }
    if cfg.window == 0 || cfg.batch_pairs == 0 {
        return Err(Error::Config("window and batch_pairs must be positive".into()));
    }
    let optimizer = Optimizer::adam(cfg.learning_rate);
    let sampler = NegativeSampler::new(g);
    let mut rng = rng_for(seed, &[stream::NEGATIVE]);
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let (centers, contexts, negatives) = sample_batch(g, corpus, &sampler, cfg, &mut rng);
        let all = distinct_sorted(
            centers
                .iter()
                .chain(&contexts)
                .chain(negatives.iter().flatten())
                .copied(),
        );
        let t = Tape::new();
        let e = encoder.encode(&t, store, g, sets, &all)?;
        let rows = |ids: &[NodeId]| -> Vec<usize> {
            ids.iter()
                .map(|n| all.binary_search(n).expect("member"))
                .collect()
        };
        let c = t.gather_rows(e, &rows(&centers))?;
        let x = t.gather_rows(e, &rows(&contexts))?;
        let negs = negatives
            .iter()
            .map(|ns| t.gather_rows(e, &rows(ns)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let loss = skipgram_loss(&t, c, x, &negs)?;
        let value = t.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("skip-gram loss became {value}")));
        }
        t.backward(loss, store)?;
        optimizer.step(store)?;
        losses.push(value);
    }
    Ok(PretrainReport { losses })
}

/// `HDGNN-EM\x01`, node count (u64), dimension (u32), then per node its id
/// (u64) and the values as f32, all little-endian.
pub fn write_embeddings<W: Write>(mut w: W, embeddings: &[Vec<f64>]) -> Result<()> {
    let dim = embeddings.first().map_or(0, Vec::len);
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::Data("embeddings have inconsistent dimensions".into()));
    }
    let io = |e| Error::io("writing embeddings", e);
    w.write_all(EMBEDDINGS_MAGIC).map_err(io)?;
    w.write_all(&(embeddings.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    for (i, e) in embeddings.iter().enumerate() {
        w.write_all(&(i as u64).to_le_bytes()).map_err(io)?;
        for &v in e {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<Vec<(u64, Vec<f32>)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("reading embeddings", e))?;
    let bad = |m: &str| Error::Data(format!("embeddings.bin: {m}"));
    if bytes.len() < 21 || &bytes[..9] != EMBEDDINGS_MAGIC {
        return Err(bad("bad header"));
    }
    let count = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[17..21].try_into().expect("4 bytes")) as usize;
    if bytes.len() != 21 + count * (8 + 4 * dim) {
        return Err(bad("length does not match header"));
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 21;
    for _ in 0..count {
        let id = u64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes"));
        pos += 8;
        let values = (0..dim)
            .map(|k| f32::from_le_bytes(bytes[pos + 4 * k..pos + 4 * k + 4].try_into().expect("4 bytes")))
            .collect();
        pos += 4 * dim;
        out.push((id, values));
    }
    Ok(out)
}

//! Heterogeneous node encoder.
//!
//! `F(n)`: every content slot goes through its own one-hidden-layer MLP, the
//! slot outputs are read as a sequence by a Bi-GRU and the per-position
//! states are averaged. Each kind's sampled neighbour list is then read by a
//! kind-specific Bi-GRU (again averaged), and multi-head attention fuses
//! `F(n)` with the three neighbour aggregates into `E(n)`.

mod skipgram;

pub use skipgram::{
    pretrain, read_embeddings, skipgram_loss, write_embeddings, NegativeSampler, PretrainConfig, PretrainReport,
    EMBEDDINGS_MAGIC,
};

use std::collections::BTreeMap;

use hdgnn_autodiff::{Array, BiGru, Linear, ParamId, ParameterStore, PoolKind, SeqBatch, Tape, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{distinct_sorted, HeteroGraph, NodeId, NodeKind};
use crate::sampler::NeighborSets;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// `d_h`: content MLP output and content Bi-GRU hidden size.
    pub content_hidden: usize,
    /// Hidden width of the per-slot MLPs.
    pub mlp_hidden: usize,
    /// `d_s`: width of a neighbour aggregate (both directions together).
    pub neighbor_hidden: usize,
    /// `d_c`: common width the attention candidates are projected to.
    pub attention_dim: usize,
    /// `d_E`.
    pub embed_dim: usize,
    pub heads: usize,
    pub leaky_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            content_hidden: 64,
            mlp_hidden: 64,
            neighbor_hidden: 128,
            attention_dim: 128,
            embed_dim: 128,
            heads: 4,
            leaky_slope: hdgnn_autodiff::DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 {
            return Err(Error::Config("attention needs at least one head".into()));
        }
        let dims = [
            self.content_hidden,
            self.mlp_hidden,
            self.neighbor_hidden,
            self.attention_dim,
            self.embed_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.neighbor_hidden % 2 != 0 {
            return Err(Error::Config("neighbor_hidden must be even (two directions)".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky_slope must be finite".into()));
        }
        Ok(())
    }
}

/// One hidden layer with GeLU.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Mlp {
            first: Linear::new(store, &format!("{name}.l1"), input, hidden, rng)?,
            second: Linear::new(store, &format!("{name}.l2"), hidden, output, rng)?,
        })
    }

    pub fn forward(&self, t: &Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let h = t.gelu(self.first.forward(t, store, x)?);
        Ok(self.second.forward(t, store, h)?)
    }
}

#[derive(Clone, Debug)]
pub struct NodeEncoder {
    pub cfg: EncoderConfig,
    /// Per kind, per content slot: (slot width, MLP).
    pub slot_mlps: [Vec<(usize, Mlp)>; 3],
    pub content_gru: BiGru,
    pub neighbor_grus: [BiGru; 3],
    pub self_projection: Linear,
    pub neighbor_projections: [Linear; 3],
    /// `[2·d_c, K]`: column `k` is the attention vector of head `k`; the
    /// first `d_c` rows score the node itself, the rest the candidate.
    pub attention: ParamId,
    pub output: Linear,
}

impl NodeEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        g: &HeteroGraph,
        cfg: &EncoderConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let dh = cfg.content_hidden;
        let mut slot_mlps: [Vec<(usize, Mlp)>; 3] = Default::default();
        for kind in NodeKind::ALL {
            for (name, width) in &g.layout(kind).slots {
                let mlp = Mlp::new(
                    store,
                    &format!("encoder.content.{}.{name}", kind.name()),
                    *width,
                    cfg.mlp_hidden,
                    dh,
                    rng,
                )?;
                slot_mlps[kind.ordinal()].push((*width, mlp));
            }
        }
        let content_gru = BiGru::new(store, "encoder.content_gru", dh, dh, rng)?;
        let half = cfg.neighbor_hidden / 2;
        let mut neighbor = Vec::new();
        let mut projections = Vec::new();
        for kind in NodeKind::ALL {
            neighbor.push(BiGru::new(store, &format!("encoder.neighbor_gru.{}", kind.name()), 2 * dh, half, rng)?);
        }
        let self_projection = Linear::new(store, "encoder.project.self", 2 * dh, cfg.attention_dim, rng)?;
        for kind in NodeKind::ALL {
            projections.push(Linear::new(
                store,
                &format!("encoder.project.{}", kind.name()),
                cfg.neighbor_hidden,
                cfg.attention_dim,
                rng,
            )?);
        }
        let attention = store.add_glorot("encoder.attention", 2 * cfg.attention_dim, cfg.heads, rng)?;
        let output = Linear::new(store, "encoder.output", cfg.attention_dim, cfg.embed_dim, rng)?;
        Ok(NodeEncoder {
            cfg: cfg.clone(),
            slot_mlps,
            content_gru,
            neighbor_grus: three(neighbor),
            self_projection,
            neighbor_projections: three(projections),
            attention,
            output,
        })
    }

    pub fn content_dim(&self) -> usize {
        2 * self.cfg.content_hidden
    }

    /// `F(n)` for every node of `nodes`, one row each, in the given order.
    pub fn content(&self, t: &Tape, store: &ParameterStore, g: &HeteroGraph, nodes: &[NodeId]) -> Result<Var> {
        if nodes.is_empty() {
            return Err(Error::Data("no nodes to encode".into()));
        }
        let mut groups: [Vec<usize>; 3] = Default::default();
        for (i, &n) in nodes.iter().enumerate() {
            g.check(n)?;
            groups[g.kind(n).ordinal()].push(i);
        }
        let mut sequences = Vec::new();
        let mut lengths = Vec::new();
        let mut order = Vec::with_capacity(nodes.len());
        for kind in NodeKind::ALL {
            let members = &groups[kind.ordinal()];
            if members.is_empty() {
                continue;
            }
            let mlps = &self.slot_mlps[kind.ordinal()];
            let k = mlps.len();
            let mut per_slot = Vec::with_capacity(k);
            for (slot, (width, mlp)) in mlps.iter().enumerate() {
                let mut data = Vec::with_capacity(members.len() * width);
                for &i in members {
                    let v = &g.node(nodes[i]).content.slots[slot];
                    if v.len() != *width {
                        return Err(Error::Data(format!(
                            "content slot {slot} of node {:?} has width {} (expected {width})",
                            nodes[i],
                            v.len()
                        )));
                    }
                    data.extend_from_slice(v);
                }
                let x = t.constant(Array::matrix(members.len(), *width, data)?);
                per_slot.push(mlp.forward(t, store, x)?);
            }
            // slot-major rows -> node-major sequences
            let stacked = if k == 1 { per_slot[0] } else { t.concat_rows(&per_slot)? };
            let m = members.len();
            let interleave: Vec<usize> = (0..m).flat_map(|j| (0..k).map(move |s| s * m + j)).collect();
            sequences.push(t.gather_rows(stacked, &interleave)?);
            lengths.extend(std::iter::repeat_n(k, m));
            order.extend_from_slice(members);
        }
        let x = if sequences.len() == 1 {
            sequences[0]
        } else {
            t.concat_rows(&sequences)?
        };
        let batch = SeqBatch::new(lengths.clone())?;
        let run = self.content_gru.run(t, store, x, &batch)?;
        let pooled = t.segment_pool(run.states, PoolKind::Mean, &lengths)?;
        let mut back = vec![0; nodes.len()];
        for (row, &i) in order.iter().enumerate() {
            back[i] = row;
        }
        Ok(t.gather_rows(pooled, &back)?)
    }

    /// Reads `count` neighbour lists of length `len` (rows of `f_rows`, one
    /// list after the other) with the Bi-GRU of `kind`; mean of the states.
    pub fn aggregate_neighbors(
        &self,
        t: &Tape,
        store: &ParameterStore,
        kind: NodeKind,
        f_rows: Var,
        count: usize,
        len: usize,
    ) -> Result<Var> {
        let batch = SeqBatch::uniform(count, len)?;
        let run = self.neighbor_grus[kind.ordinal()].run(t, store, f_rows, &batch)?;
        Ok(t.segment_pool(run.states, PoolKind::Mean, &vec![len; count])?)
    }

    /// `E(n)` for each entry of `nodes` (rows in the same order).
    pub fn encode(
        &self,
        t: &Tape,
        store: &ParameterStore,
        g: &HeteroGraph,
        sets: &NeighborSets,
        nodes: &[NodeId],
    ) -> Result<Var> {
        if sets.len() != g.node_count() {
            return Err(Error::Data(format!(
                "neighbor sets cover {} nodes but the graph has {}",
                sets.len(),
                g.node_count()
            )));
        }
        for &n in nodes {
            g.check(n)?;
        }
        let mut all: Vec<NodeId> = nodes.to_vec();
        for &n in nodes {
            for kind in NodeKind::ALL {
                all.extend_from_slice(sets.get(n).of_kind(kind));
            }
        }
        let union = distinct_sorted(all);
        let f = self.content(t, store, g, &union)?;
        let pos = |n: NodeId| union.binary_search(&n).expect("member of union");

        let self_rows: Vec<usize> = nodes.iter().map(|&n| pos(n)).collect();
        let f_self = t.gather_rows(f, &self_rows)?;
        let mut candidates = vec![self.self_projection.forward(t, store, f_self)?];
        for kind in NodeKind::ALL {
            let len = sets.samples_per_type[kind.ordinal()];
            let rows: Vec<usize> = nodes
                .iter()
                .flat_map(|&n| sets.get(n).of_kind(kind).iter().map(|&m| pos(m)))
                .collect();
            let f_nb = t.gather_rows(f, &rows)?;
            let agg = self.aggregate_neighbors(t, store, kind, f_nb, nodes.len(), len)?;
            candidates.push(self.neighbor_projections[kind.ordinal()].forward(t, store, agg)?);
        }
        let attn = t.param(store, self.attention);
        let (fused, _) = attend(t, candidates[0], &candidates, attn, self.cfg.leaky_slope)?;
        self.output.forward(t, store, fused)
            .map_err(Error::from)
    }

    /// Embeddings of all nodes, evaluated in chunks on throwaway tapes.
    pub fn embed_all(
        &self,
        store: &ParameterStore,
        g: &HeteroGraph,
        sets: &NeighborSets,
        chunk: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let ids: Vec<NodeId> = (0..g.node_count()).map(NodeId::from_index).collect();
        let mut out = Vec::with_capacity(ids.len());
        for part in ids.chunks(chunk.max(1)) {
            let t = Tape::new();
            let e = t.value(self.encode(&t, store, g, sets, part)?);
            out.extend((0..e.rows()).map(|r| e.row_slice(r).to_vec()));
        }
        Ok(out)
    }
}

fn three<T>(v: Vec<T>) -> [T; 3] {
    v.try_into().unwrap_or_else(|_| unreachable!("one entry per node kind"))
}

/// Multi-head attention over `candidates` (each `[T, d]`, the node itself
/// included when the caller lists it). `attn` is `[2d, K]`; head `k` scores
/// candidate `i` as `LeakyReLU(u_k · [self ‖ candidate_i])`, normalises the
/// scores with a softmax over candidates and returns the weighted sum. The
/// result is the mean over heads, together with the per-head weights
/// (`[T, candidates]` each).
pub fn attend(t: &Tape, self_vec: Var, candidates: &[Var], attn: Var, slope: f64) -> Result<(Var, Vec<Var>)> {
    if candidates.is_empty() {
        return Err(Error::Data("attention needs at least one candidate".into()));
    }
    let d = t.shape(self_vec)[1];
    let shape = t.shape(attn);
    if shape[0] != 2 * d || shape[1] == 0 {
        return Err(Error::Data(format!(
            "attention parameter has shape {shape:?}, expected [{}, K>0]",
            2 * d
        )));
    }
    let heads = shape[1];
    let u_self = t.slice_rows(attn, 0, d)?;
    let u_cand = t.slice_rows(attn, d, d)?;
    let base = t.matmul(self_vec, u_self)?;
    let scores: Vec<Var> = candidates
        .iter()
        .map(|&c| Ok(t.leaky_relu(t.add(base, t.matmul(c, u_cand)?)?, slope)))
        .collect::<Result<_>>()?;
    let mut head_outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for k in 0..heads {
        let cols: Vec<Var> = scores.iter().map(|&s| t.slice_cols(s, k, 1)).collect::<std::result::Result<_, _>>()?;
        let logits = if cols.len() == 1 { cols[0] } else { t.concat_cols(&cols)? };
        let w = t.softmax(logits)?;
        let mut acc: Option<Var> = None;
        for (i, &c) in candidates.iter().enumerate() {
            let term = t.mul_col(c, t.slice_cols(w, i, 1)?)?;
            acc = Some(match acc {
                Some(a) => t.add(a, term)?,
                None => term,
            });
        }
        head_outputs.push(acc.expect("non-empty candidates"));
        weights.push(w);
    }
    let mut sum = head_outputs[0];
    for &h in &head_outputs[1..] {
        sum = t.add(sum, h)?;
    }
    Ok((t.scale(sum, 1.0 / heads as f64), weights))
}

/// Parameters of `store` whose name starts with `encoder.`, by name.
pub fn encoder_parameter_names(store: &ParameterStore) -> BTreeMap<String, ParamId> {
    store
        .iter()
        .filter(|(_, p)| p.name.starts_with("encoder."))
        .map(|(id, p)| (p.name.clone(), id))
        .collect()
}

#[cfg(test)]
mod tests;

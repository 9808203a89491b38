//! Citation-cascade model: author aggregation, a two-layer bidirectional
//! citation encoder (or a pooling stand-in) and a GeLU regression head that
//! predicts `log2` of the final citation count.

use std::io::Write;

use hdgnn_autodiff::{Array, BiGru, Gru, Linear, Optimizer, ParameterStore, PoolKind, SeqBatch, Tape, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Cascade, Dataset, Split};
use crate::encoder::{EncoderConfig, NodeEncoder};
use crate::error::{Error, Result};
use crate::graph::{distinct_sorted, HeteroGraph, NodeId};
use crate::sampler::NeighborSets;
use crate::util::{rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Rnn,
    MaxPool,
    SumPool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Authors per citing paper fed to the author GRU (byline order).
    pub author_seq_len: usize,
    pub citation_seq_len: usize,
    /// Hidden size per direction of the first and second Bi-GRU layer.
    pub layer1_units: usize,
    pub layer2_units: usize,
    /// Widths of the two GeLU layers of the head.
    pub mlp_units: [usize; 2],
    pub aggregator: Aggregator,
    pub use_author: bool,
    pub use_venue: bool,
    /// Feed the target's own embedding as an extra first event.
    pub prepend_target: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            author_seq_len: 6,
            citation_seq_len: 100,
            layer1_units: 128,
            layer2_units: 64,
            mlp_units: [64, 32],
            aggregator: Aggregator::Rnn,
            use_author: true,
            use_venue: true,
            prepend_target: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        let dims = [
            self.author_seq_len,
            self.citation_seq_len,
            self.layer1_units,
            self.layer2_units,
            self.mlp_units[0],
            self.mlp_units[1],
        ];
        if dims.contains(&0) {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        Ok(())
    }

    /// Width of one event vector `E(p_j) ‖ E(a_j) ‖ E(v_j)`.
    pub fn event_dim(&self) -> usize {
        let d = self.encoder.embed_dim;
        d * (1 + usize::from(self.use_author) + usize::from(self.use_venue))
    }

    pub fn representation_dim(&self) -> usize {
        match self.aggregator {
            Aggregator::Rnn => 2 * self.layer2_units,
            Aggregator::MaxPool | Aggregator::SumPool => self.event_dim(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CascadeModel {
    pub cfg: ModelConfig,
    pub encoder: NodeEncoder,
    pub author_gru: Option<Gru>,
    pub layers: Option<(BiGru, BiGru)>,
    pub head: [Linear; 3],
}

impl CascadeModel {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        g: &HeteroGraph,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let encoder = NodeEncoder::new(store, g, &cfg.encoder, rng)?;
        let d = cfg.encoder.embed_dim;
        let author_gru = if cfg.use_author {
            Some(Gru::new(store, "cascade.authors", d, d, rng)?)
        } else {
            None
        };
        let layers = if cfg.aggregator == Aggregator::Rnn {
            let first = BiGru::new(store, "cascade.layer1", cfg.event_dim(), cfg.layer1_units, rng)?;
            let second = BiGru::new(store, "cascade.layer2", 2 * cfg.layer1_units, cfg.layer2_units, rng)?;
            Some((first, second))
        } else {
            None
        };
        let [m1, m2] = cfg.mlp_units;
        let head = [
            Linear::new(store, "head.l1", cfg.representation_dim(), m1, rng)?,
            Linear::new(store, "head.l2", m1, m2, rng)?,
            Linear::new(store, "head.out", m2, 1, rng)?,
        ];
        Ok(CascadeModel {
            cfg: cfg.clone(),
            encoder,
            author_gru,
            layers,
            head,
        })
    }

    /// Events of `c` the model consumes.
    fn events<'a>(&self, c: &'a Cascade) -> &'a [crate::dataset::CitingEvent] {
        &c.events[..c.events.len().min(self.cfg.citation_seq_len)]
    }

    fn byline<'a>(&self, authors: &'a [NodeId]) -> &'a [NodeId] {
        &authors[..authors.len().min(self.cfg.author_seq_len)]
    }

    /// Every node whose embedding a forward pass over `cascades` needs.
    fn referenced_nodes(&self, cascades: &[&Cascade]) -> Vec<NodeId> {
        let mut nodes = Vec::new();
        for c in cascades {
            if self.cfg.prepend_target {
                nodes.push(c.target);
            }
            for e in self.events(c) {
                nodes.push(e.paper);
                if self.cfg.use_author {
                    nodes.extend_from_slice(self.byline(&e.authors));
                }
                if self.cfg.use_venue {
                    nodes.push(e.venue);
                }
            }
        }
        distinct_sorted(nodes)
    }

    /// `E(a_j)`: last state of the author GRU over each byline, `[B, d_E]`.
    pub fn aggregate_authors(
        &self,
        t: &Tape,
        store: &ParameterStore,
        embeddings: Var,
        rows: &[Vec<usize>],
    ) -> Result<Var> {
        let gru = self
            .author_gru
            .as_ref()
            .ok_or_else(|| Error::Config("author aggregation is disabled".into()))?;
        if rows.iter().any(Vec::is_empty) {
            return Err(Error::Data("citing paper without authors".into()));
        }
        let flat: Vec<usize> = rows.iter().flatten().copied().collect();
        let x = t.gather_rows(embeddings, &flat)?;
        let batch = SeqBatch::new(rows.iter().map(Vec::len).collect())?;
        Ok(gru.run(t, store, x, &batch, false)?.last)
    }

    /// Event matrix (all cascades back to back) and per-cascade lengths.
    /// `embeddings` holds `E(n)` for `nodes` (sorted) in row order.
    pub fn event_inputs(
        &self,
        t: &Tape,
        store: &ParameterStore,
        embeddings: Var,
        nodes: &[NodeId],
        cascades: &[&Cascade],
    ) -> Result<(Var, Vec<usize>)> {
        let pos = |n: NodeId| nodes.binary_search(&n).expect("embedded node");
        let d = self.cfg.encoder.embed_dim;
        let mut paper_rows = Vec::new();
        let mut author_rows = Vec::new();
        let mut venue_rows = Vec::new();
        let mut lengths = Vec::with_capacity(cascades.len());
        // embedding rows of the targets, when they are prepended
        let mut target_rows = Vec::new();
        for c in cascades {
            let events = self.events(c);
            if events.is_empty() {
                return Err(Error::Data("cascade without events".into()));
            }
            if self.cfg.prepend_target {
                target_rows.push(pos(c.target));
            }
            for e in events {
                paper_rows.push(pos(e.paper));
                if self.cfg.use_author {
                    author_rows.push(self.byline(&e.authors).iter().map(|&a| pos(a)).collect::<Vec<_>>());
                }
                if self.cfg.use_venue {
                    venue_rows.push(pos(e.venue));
                }
            }
            lengths.push(events.len() + usize::from(self.cfg.prepend_target));
        }
        let mut blocks = vec![t.gather_rows(embeddings, &paper_rows)?];
        if self.cfg.use_author {
            blocks.push(self.aggregate_authors(t, store, embeddings, &author_rows)?);
        }
        if self.cfg.use_venue {
            blocks.push(t.gather_rows(embeddings, &venue_rows)?);
        }
        let mut x = if blocks.len() == 1 {
            blocks[0]
        } else {
            t.concat_cols(&blocks)?
        };
        if !target_rows.is_empty() {
            // target row: E(target) in the paper block, zeros elsewhere
            let width = self.cfg.event_dim();
            let mut target = t.gather_rows(embeddings, &target_rows)?;
            if width > d {
                let pad = t.constant(Array::zeros(target_rows.len(), width - d));
                target = t.concat_cols(&[target, pad])?;
            }
            let n_events = paper_rows.len();
            let stacked = t.concat_rows(&[x, target])?;
            let mut order = Vec::with_capacity(n_events + target_rows.len());
            let mut next_event = 0;
            for (k, c) in cascades.iter().enumerate() {
                order.push(n_events + k);
                for _ in 0..self.events(c).len() {
                    order.push(next_event);
                    next_event += 1;
                }
            }
            x = t.gather_rows(stacked, &order)?;
        }
        Ok((x, lengths))
    }

    /// Cascade representation from the event matrix, `[B, rep_dim]`.
    pub fn represent(&self, t: &Tape, store: &ParameterStore, x: Var, lengths: &[usize]) -> Result<Var> {
        match (&self.layers, self.cfg.aggregator) {
            (Some((first, second)), Aggregator::Rnn) => {
                let batch = SeqBatch::new(lengths.to_vec())?;
                let h1 = first.run(t, store, x, &batch)?;
                let h2 = second.run(t, store, h1.states, &batch)?;
                Ok(t.concat_cols(&[h2.last_forward, h2.last_backward])?)
            }
            (_, Aggregator::MaxPool) => Ok(t.segment_pool(x, PoolKind::Max, lengths)?),
            (_, Aggregator::SumPool) => Ok(t.segment_pool(x, PoolKind::Sum, lengths)?),
            (None, Aggregator::Rnn) => Err(Error::Config("recurrent layers missing".into())),
        }
    }

    /// Predicted `log2` citation count, `[B, 1]`.
    pub fn head(&self, t: &Tape, store: &ParameterStore, rep: Var) -> Result<Var> {
        let h1 = t.gelu(self.head[0].forward(t, store, rep)?);
        let h2 = t.gelu(self.head[1].forward(t, store, h1)?);
        Ok(self.head[2].forward(t, store, h2)?)
    }

    /// Full forward pass from graph to `log2 ĉ`, `[B, 1]`.
    pub fn forward(
        &self,
        t: &Tape,
        store: &ParameterStore,
        g: &HeteroGraph,
        sets: &NeighborSets,
        cascades: &[&Cascade],
    ) -> Result<Var> {
        if cascades.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let nodes = self.referenced_nodes(cascades);
        let embeddings = self.encoder.encode(t, store, g, sets, &nodes)?;
        let (x, lengths) = self.event_inputs(t, store, embeddings, &nodes, cascades)?;
        let rep = self.represent(t, store, x, &lengths)?;
        self.head(t, store, rep)
    }

    /// `log2 ĉ` for every cascade, evaluated in chunks.
    pub fn predict_log2(
        &self,
        store: &ParameterStore,
        g: &HeteroGraph,
        sets: &NeighborSets,
        cascades: &[&Cascade],
        chunk: usize,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(cascades.len());
        for part in cascades.chunks(chunk.max(1)) {
            let t = Tape::new();
            let y = self.forward(&t, store, g, sets, part)?;
            out.extend(t.value(y).into_data());
        }
        Ok(out)
    }

    /// Sets the output bias, e.g. to the mean training `log2` label.
    pub fn set_output_bias(&self, store: &mut ParameterStore, value: f64) -> Result<()> {
        store.set_value(self.head[2].bias, Array::scalar(value))?;
        Ok(())
    }
}

/// `mean((y − log2 c)²)` for predicted `log2` counts `y` (`[B, 1]`).
pub fn training_loss(t: &Tape, y: Var, labels: &[u64]) -> Result<Var> {
    if labels.contains(&0) {
        return Err(Error::Data("labels must be positive".into()));
    }
    let target = Array::matrix(labels.len(), 1, labels.iter().map(|&c| (c as f64).log2()).collect())?;
    let diff = t.sub(y, t.constant(target))?;
    Ok(t.mean(t.square(diff)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global gradient-norm cap (0 disables clipping).
    pub clip_norm: f64,
    /// Learning rates tried by a grid search.
    pub lr_grid: Vec<f64>,
    /// Cascades per forward pass when evaluating.
    pub eval_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            clip_norm: 5.0,
            lr_grid: vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            eval_chunk: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.eval_chunk == 0 {
            return Err(Error::Config("batch_size, max_epochs and eval_chunk must be positive".into()));
        }
        if self.lr_grid.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config("lr_grid entries must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct History {
    pub learning_rate: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Mean squared `log2` error of the model on `cascades`.
pub fn evaluate_loss(
    model: &CascadeModel,
    store: &ParameterStore,
    g: &HeteroGraph,
    sets: &NeighborSets,
    cascades: &[&Cascade],
    chunk: usize,
) -> Result<f64> {
    let y = model.predict_log2(store, g, sets, cascades, chunk)?;
    let total: f64 = y
        .iter()
        .zip(cascades)
        .map(|(p, c)| (p - (c.label as f64).log2()).powi(2))
        .sum();
    Ok(total / cascades.len() as f64)
}

fn mean_log2(cascades: &[&Cascade]) -> f64 {
    cascades.iter().map(|c| (c.label as f64).log2()).sum::<f64>() / cascades.len() as f64
}

/// Minibatch Adam on the training split with early stopping on the
/// validation split. On return `store` holds the best-validation values.
pub fn train(
    model: &CascadeModel,
    store: &mut ParameterStore,
    g: &HeteroGraph,
    sets: &NeighborSets,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<History> {
    cfg.validate()?;
    let train_set = data.split(Split::Train);
    let val_set = data.split(Split::Val);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data("training needs non-empty train and validation splits".into()));
    }
    model.set_output_bias(store, mean_log2(&train_set))?;
    let optimizer = Optimizer::adam(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (f64::INFINITY, 0usize, store.clone());
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng_for(seed, &[stream::SHUFFLE, epoch as u64]));
        let mut weighted = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Cascade> = idx.iter().map(|&i| train_set[i]).collect();
            let labels: Vec<u64> = batch.iter().map(|c| c.label).collect();
            let t = Tape::new();
            let y = model.forward(&t, store, g, sets, &batch)?;
            let loss = training_loss(&t, y, &labels)?;
            let value = t.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Numeric(format!("training loss became {value} in epoch {epoch}")));
            }
            t.backward(loss, store)?;
            if cfg.clip_norm > 0.0 {
                store.clip_grad_norm(cfg.clip_norm);
            }
            optimizer.step(store)?;
            weighted += value * batch.len() as f64;
        }
        let val_loss = evaluate_loss(model, store, g, sets, &val_set, cfg.eval_chunk)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss became {val_loss} in epoch {epoch}")));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: weighted / train_set.len() as f64,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, store.clone());
        } else if epoch - best.1 >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    let (best_val_loss, best_epoch, best_store) = best;
    *store = best_store;
    Ok(History {
        learning_rate: cfg.learning_rate,
        epochs,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

/// `target_id,kind,label,prediction` rows, predictions with six decimals.
pub fn write_predictions<W: Write>(
    mut w: W,
    g: &HeteroGraph,
    cascades: &[&Cascade],
    predictions: &[f64],
) -> Result<()> {
    let io = |e| Error::io("writing predictions", e);
    writeln!(w, "target_id,kind,label,prediction").map_err(io)?;
    for (c, p) in cascades.iter().zip(predictions) {
        writeln!(
            w,
            "{},{},{},{:.6}",
            g.node(c.target).external_id,
            c.target_kind.name(),
            c.label,
            p
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Counts from `log2` predictions.
pub fn to_counts(log2: &[f64]) -> Vec<f64> {
    log2.iter().map(|y| y.exp2()).collect()
}

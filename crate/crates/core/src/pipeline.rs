//! Stage functions shared by the command line and the end-to-end tests.

use std::collections::BTreeMap;

use hdgnn_autodiff::ParameterStore;
use serde::Serialize;

use crate::cascade::{train, Aggregator, CascadeModel, History, ModelConfig, TrainConfig};
use crate::config::RunConfig;
use crate::dataset::{Cascade, Dataset, Split};
use crate::encoder::{encoder_parameter_names, pretrain, PretrainReport};
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, HeteroGraph, NodeKind};
use crate::metrics::{
    author_citation_years, ccdf, gini, paper_citation_years, pearson_year_matrix, productivity_profile,
    uniform_constant, EvalReport, FeatureModel, FeatureSet, ProductivityPoint,
};
use crate::sampler::{walk_corpus, NeighborSets};
use crate::util::{rng_for, stream};

/// Model variants compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    MaxPool,
    SumPool,
    NoAuthor,
    NoVenue,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::MaxPool,
        Variant::SumPool,
        Variant::NoAuthor,
        Variant::NoVenue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::MaxPool => "maxp",
            Variant::SumPool => "sump",
            Variant::NoAuthor => "noauthor",
            Variant::NoVenue => "novenue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::MaxPool => cfg.aggregator = Aggregator::MaxPool,
            Variant::SumPool => cfg.aggregator = Aggregator::SumPool,
            Variant::NoAuthor => cfg.use_author = false,
            Variant::NoVenue => cfg.use_venue = false,
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Uniform,
    FeatureCtr,
    Feature,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Uniform => "uniform",
            Baseline::FeatureCtr => "feature_ctr",
            Baseline::Feature => "feature",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Baseline::Uniform, Baseline::FeatureCtr, Baseline::Feature]
            .into_iter()
            .find(|b| b.name() == s)
    }
}

/// Count predictions of a baseline for `eval`, fitted on the training split.
pub fn baseline_predictions(
    g: &HeteroGraph,
    data: &Dataset,
    baseline: Baseline,
    t_r: f64,
    eval: &[&Cascade],
) -> Result<Vec<f64>> {
    let train_set = data.split(Split::Train);
    match baseline {
        Baseline::Uniform => {
            let labels: Vec<u64> = train_set.iter().map(|c| c.label).collect();
            let k = uniform_constant(&labels)?.exp2();
            Ok(vec![k; eval.len()])
        }
        Baseline::FeatureCtr | Baseline::Feature => {
            let set = if baseline == Baseline::Feature {
                FeatureSet::Full
            } else {
                FeatureSet::ObservedOnly
            };
            let m = FeatureModel::fit(g, &train_set, set, t_r)?;
            Ok(eval.iter().map(|c| m.predict(g, c)).collect())
        }
    }
}

pub struct Trained {
    pub model: CascadeModel,
    pub store: ParameterStore,
    pub history: History,
}

impl Trained {
    pub fn predict(&self, g: &HeteroGraph, sets: &NeighborSets, cascades: &[&Cascade], chunk: usize) -> Result<Vec<f64>> {
        predict_counts(&self.model, &self.store, g, sets, cascades, chunk)
    }
}

pub fn predict_counts(
    model: &CascadeModel,
    store: &ParameterStore,
    g: &HeteroGraph,
    sets: &NeighborSets,
    cascades: &[&Cascade],
    chunk: usize,
) -> Result<Vec<f64>> {
    let y = model.predict_log2(store, g, sets, cascades, chunk)?;
    Ok(y.into_iter().map(f64::exp2).collect())
}

/// A freshly initialised model; all draws come from `seed`.
pub fn init_model(g: &HeteroGraph, cfg: &ModelConfig, seed: u64) -> Result<(CascadeModel, ParameterStore)> {
    let mut store = ParameterStore::new();
    let model = CascadeModel::new(&mut store, g, cfg, &mut rng_for(seed, &[stream::INIT]))?;
    Ok((model, store))
}

/// Copies pretrained encoder parameters into `store`; returns how many.
pub fn warm_start(store: &mut ParameterStore, pretrained: &ParameterStore) -> usize {
    let mut only_encoder = ParameterStore::new();
    for (name, id) in encoder_parameter_names(pretrained) {
        only_encoder
            .add(name, pretrained.value(id).clone(), true)
            .expect("names are unique");
    }
    store.copy_values_from(&only_encoder)
}

pub fn fit(
    g: &HeteroGraph,
    sets: &NeighborSets,
    data: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    pretrained: Option<&ParameterStore>,
) -> Result<Trained> {
    let (model, mut store) = init_model(g, model_cfg, seed)?;
    if let Some(p) = pretrained {
        warm_start(&mut store, p);
    }
    let history = train(&model, &mut store, g, sets, data, train_cfg, seed)?;
    Ok(Trained { model, store, history })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrTrial {
    pub learning_rate: f64,
    /// `None` when training diverged.
    pub best_val_loss: Option<f64>,
}

/// Trains once per grid learning rate and keeps the best validation model.
/// Diverging rates are recorded and skipped.
pub fn lr_search(
    g: &HeteroGraph,
    sets: &NeighborSets,
    data: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    pretrained: Option<&ParameterStore>,
) -> Result<(Trained, Vec<LrTrial>)> {
    if train_cfg.lr_grid.is_empty() {
        return Err(Error::Config("lr_grid is empty".into()));
    }
    let mut best: Option<Trained> = None;
    let mut trials = Vec::new();
    let mut last_err = None;
    for &lr in &train_cfg.lr_grid {
        let cfg = TrainConfig {
            learning_rate: lr,
            ..train_cfg.clone()
        };
        match fit(g, sets, data, model_cfg, &cfg, seed, pretrained) {
            Ok(t) => {
                trials.push(LrTrial {
                    learning_rate: lr,
                    best_val_loss: Some(t.history.best_val_loss),
                });
                if best
                    .as_ref()
                    .is_none_or(|b| t.history.best_val_loss < b.history.best_val_loss)
                {
                    best = Some(t);
                }
            }
            Err(e @ Error::Numeric(_)) => {
                trials.push(LrTrial {
                    learning_rate: lr,
                    best_val_loss: None,
                });
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(b) => Ok((b, trials)),
        None => Err(last_err.expect("every rate failed")),
    }
}

/// Skip-gram warm start of the encoder over the walk corpus, plus the
/// resulting embedding of every node.
pub fn pretrain_encoder(
    g: &HeteroGraph,
    sets: &NeighborSets,
    cfg: &RunConfig,
) -> Result<(ParameterStore, Vec<Vec<f64>>, PretrainReport)> {
    let (model, mut store) = init_model(g, &cfg.model, cfg.seed)?;
    let corpus = walk_corpus(g, &cfg.walk)?;
    let report = pretrain(&mut store, &model.encoder, g, sets, &corpus, &cfg.pretrain, cfg.seed)?;
    let embeddings = model.encoder.embed_all(&store, g, sets, cfg.train.eval_chunk)?;
    Ok((store, embeddings, report))
}

pub fn report(g: &HeteroGraph, cascades: &[&Cascade], predictions: &[f64]) -> Result<EvalReport> {
    EvalReport::new(g, cascades, predictions)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphSummary {
    pub nodes: BTreeMap<String, usize>,
    pub edges: BTreeMap<String, usize>,
    pub horizon: Option<f64>,
}

pub fn summarize(g: &HeteroGraph) -> GraphSummary {
    let nodes = [NodeKind::Paper, NodeKind::Author, NodeKind::Venue]
        .into_iter()
        .map(|k| (k.name().to_string(), g.nodes_of_kind(k).len()))
        .collect();
    let mut edges: BTreeMap<String, usize> = BTreeMap::new();
    for e in g.edges() {
        *edges.entry(e.kind.name().to_string()).or_insert(0) += 1;
    }
    GraphSummary {
        nodes,
        edges,
        horizon: g.horizon(),
    }
}

/// Citation distributions, year-to-year correlations and the productivity
/// profile of a graph. Entries that need more data than exists are null.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub years: usize,
    /// Over papers with at least one citation.
    pub paper_citation_ccdf: Vec<(f64, f64)>,
    /// Over authors with at least one citation.
    pub author_citation_ccdf: Vec<(f64, f64)>,
    pub paper_citation_gini: f64,
    pub paper_pearson: Option<Vec<Vec<Option<f64>>>>,
    pub author_pearson: Option<Vec<Vec<Option<f64>>>>,
    pub productivity: Option<Vec<ProductivityPoint>>,
}

/// Total citations each paper received.
pub fn paper_citation_counts(g: &HeteroGraph) -> Vec<f64> {
    g.nodes_of_kind(NodeKind::Paper)
        .iter()
        .map(|&p| g.in_edges(p).filter(|e| e.kind == EdgeKind::PaperCitesPaper).count() as f64)
        .collect()
}

/// Total citations to each author's papers.
pub fn author_citation_counts(g: &HeteroGraph) -> Vec<f64> {
    g.nodes_of_kind(NodeKind::Author)
        .iter()
        .map(|&a| {
            g.out_edges(a)
                .filter(|e| e.kind == EdgeKind::AuthorWritesPaper)
                .map(|w| g.in_edges(w.dst).filter(|e| e.kind == EdgeKind::PaperCitesPaper).count())
                .sum::<usize>() as f64
        })
        .collect()
}

pub fn graph_stats(g: &HeteroGraph, years: usize) -> Result<GraphStats> {
    let positive = |v: Vec<f64>| -> Vec<f64> { v.into_iter().filter(|&x| x > 0.0).collect() };
    let papers = paper_citation_counts(g);
    let cited = positive(papers.clone());
    let cited_authors = positive(author_citation_counts(g));
    let authors = author_citation_years(g, years);
    Ok(GraphStats {
        years,
        paper_citation_ccdf: if cited.is_empty() { Vec::new() } else { ccdf(&cited)? },
        author_citation_ccdf: if cited_authors.is_empty() { Vec::new() } else { ccdf(&cited_authors)? },
        paper_citation_gini: gini(&papers),
        paper_pearson: pearson_year_matrix(&paper_citation_years(g, years)).ok(),
        author_pearson: pearson_year_matrix(&authors.cumulative_citations).ok(),
        productivity: productivity_profile(&authors.papers, &authors.new_citations).ok(),
    })
}

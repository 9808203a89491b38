//! Paper and author cascades observed up to the reference time, labelled
//! with the cumulative citation count at the prediction time.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, HeteroGraph, NodeId, NodeKind};
use crate::util::{fmt_f64, json_string, rng_for, stream, with_thread_pool};

const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Paper,
    Author,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Paper => "paper",
            TargetKind::Author => "author",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(TargetKind::Paper),
            "author" => Some(TargetKind::Author),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CitingEvent {
    pub paper: NodeId,
    /// Byline order, which the graph does not record: ascending node id.
    pub authors: Vec<NodeId>,
    pub venue: NodeId,
    /// Years since the target's birth.
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    pub target: NodeId,
    pub target_kind: TargetKind,
    /// Sorted by time, then citing paper; at most `max_seq` entries.
    pub events: Vec<CitingEvent>,
    /// Citations up to the prediction time.
    pub label: u64,
    /// Citations up to the reference time (before truncation and before
    /// dropping unusable events).
    pub observed: usize,
    /// Absolute birth time of the target.
    pub birth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub cascade: Cascade,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationConfig {
    pub t_r: f64,
    pub t_p: f64,
    pub min_observed: usize,
    pub max_seq: usize,
    /// Train, validation and test fractions.
    pub split_fractions: [f64; 3],
    pub seed: u64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig {
            t_r: 2.0,
            t_p: 20.0,
            min_observed: 10,
            max_seq: 100,
            split_fractions: [0.5, 0.25, 0.25],
            seed: 0,
        }
    }
}

impl ObservationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_r > 0.0 && self.t_r < self.t_p && self.t_p.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < t_r < t_p, got t_r={} t_p={}",
                self.t_r, self.t_p
            )));
        }
        if self.max_seq == 0 {
            return Err(Error::Config("max_seq must be positive".into()));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if self.split_fractions.iter().any(|&f| f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.split_fractions
            )));
        }
        Ok(())
    }
}

/// Samples plus bookkeeping about what the filters removed.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: TargetKind,
    pub samples: Vec<Sample>,
    pub eligible: usize,
    pub below_min_observed: usize,
    /// Observed citations whose citing paper has no author or no venue and
    /// therefore cannot be turned into an event.
    pub skipped_events: usize,
    /// Authors without any paper (they have no career start).
    pub authors_without_papers: usize,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&Cascade> {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| &s.cascade)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, g: &HeteroGraph, mut w: W) -> std::io::Result<()> {
        let ext = |n: NodeId| json_string(&g.node(n).external_id);
        for s in &self.samples {
            let c = &s.cascade;
            let events: Vec<String> = c
                .events
                .iter()
                .map(|e| {
                    let authors: Vec<String> = e.authors.iter().map(|&a| ext(a)).collect();
                    format!(
                        "{{\"authors\":[{}],\"paper\":{},\"t\":{},\"venue\":{}}}",
                        authors.join(","),
                        ext(e.paper),
                        fmt_f64(e.time),
                        ext(e.venue)
                    )
                })
                .collect();
            writeln!(
                w,
                "{{\"events\":[{}],\"kind\":\"{}\",\"label\":{},\"split\":\"{}\",\"target\":{}}}",
                events.join(","),
                c.target_kind.name(),
                c.label,
                s.split.name(),
                ext(c.target)
            )?;
        }
        w.flush()
    }
}

/// Authors of `p` (ascending id) and its venue (lowest id when several).
pub fn paper_context(g: &HeteroGraph, p: NodeId) -> (Vec<NodeId>, Option<NodeId>) {
    let mut authors: Vec<NodeId> = g
        .in_edges(p)
        .filter(|e| e.kind == EdgeKind::AuthorWritesPaper)
        .map(|e| e.src)
        .collect();
    authors.sort();
    authors.dedup();
    let venue = g
        .out_edges(p)
        .filter(|e| e.kind == EdgeKind::PaperPublishedInVenue)
        .map(|e| e.dst)
        .min();
    (authors, venue)
}

/// Venue a target is grouped under: a paper's own venue, or the venue an
/// author published in most (lowest id on ties).
pub fn target_venue(g: &HeteroGraph, target: NodeId) -> Option<NodeId> {
    match g.kind(target) {
        NodeKind::Paper => paper_context(g, target).1,
        NodeKind::Author => {
            let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
            for e in g.out_edges(target).filter(|e| e.kind == EdgeKind::AuthorWritesPaper) {
                if let Some(v) = paper_context(g, e.dst).1 {
                    *counts.entry(v).or_insert(0) += 1;
                }
            }
            counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(v, _)| v)
        }
        NodeKind::Venue => Some(target),
    }
}

/// Earliest authorship time of `a`, if it wrote anything.
pub fn career_start(g: &HeteroGraph, a: NodeId) -> Option<f64> {
    g.out_edges(a)
        .filter(|e| e.kind == EdgeKind::AuthorWritesPaper)
        .map(|e| e.time)
        .min_by(f64::total_cmp)
}

/// Citation edges `(citing paper, cited paper, absolute time)` received by
/// the target: its own for a paper, those of all its papers for an author.
fn incoming_citations(g: &HeteroGraph, target: NodeId) -> Vec<(NodeId, NodeId, f64)> {
    let cited: Vec<NodeId> = match g.kind(target) {
        NodeKind::Paper => vec![target],
        _ => g
            .out_edges(target)
            .filter(|e| e.kind == EdgeKind::AuthorWritesPaper)
            .map(|e| e.dst)
            .collect(),
    };
    cited
        .iter()
        .flat_map(|&p| {
            g.in_edges(p)
                .filter(|e| e.kind == EdgeKind::PaperCitesPaper)
                .map(move |e| (e.src, p, e.time))
        })
        .collect()
}

enum Outcome {
    Kept(Cascade, usize),
    BelowMin(usize),
}

fn build_cascade(g: &HeteroGraph, target: NodeId, kind: TargetKind, birth: f64, cfg: &ObservationConfig) -> Outcome {
    let mut cites = incoming_citations(g, target);
    cites.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let label = cites.iter().filter(|c| c.2 - birth <= cfg.t_p + TIME_EPS).count() as u64;
    let observed: Vec<_> = cites.iter().filter(|c| c.2 - birth <= cfg.t_r + TIME_EPS).collect();
    if observed.len() < cfg.min_observed || observed.is_empty() {
        return Outcome::BelowMin(0);
    }
    let mut skipped = 0;
    let mut events = Vec::new();
    for &&(citing, _, time) in &observed {
        let (authors, venue) = paper_context(g, citing);
        match venue {
            Some(venue) if !authors.is_empty() => events.push(CitingEvent {
                paper: citing,
                authors,
                venue,
                time: (time - birth).max(0.0),
            }),
            _ => skipped += 1,
        }
    }
    events.truncate(cfg.max_seq);
    if events.is_empty() {
        return Outcome::BelowMin(skipped);
    }
    Outcome::Kept(
        Cascade {
            target,
            target_kind: kind,
            events,
            label,
            observed: observed.len(),
            birth,
        },
        skipped,
    )
}

fn assemble(
    g: &HeteroGraph,
    kind: TargetKind,
    targets: Vec<(NodeId, f64)>,
    cfg: &ObservationConfig,
    authors_without_papers: usize,
) -> Result<Dataset> {
    cfg.validate()?;
    let horizon = g
        .horizon()
        .ok_or_else(|| Error::Data("graph has no edges, so no observation horizon".into()))?;
    let earliest = targets.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    if targets.is_empty() || horizon - earliest < cfg.t_p - TIME_EPS {
        return Err(Error::Data(format!(
            "data horizon {horizon} leaves no {} with t_p = {} years of history",
            kind.name(),
            cfg.t_p
        )));
    }
    let eligible: Vec<(NodeId, f64)> = targets
        .into_iter()
        .filter(|&(_, birth)| birth + cfg.t_p <= horizon + TIME_EPS)
        .collect();
    let outcomes: Vec<Outcome> = with_thread_pool(|| {
        eligible
            .par_iter()
            .map(|&(n, birth)| build_cascade(g, n, kind, birth, cfg))
            .collect()
    });
    let mut cascades = Vec::new();
    let mut below = 0;
    let mut skipped_events = 0;
    for o in outcomes {
        match o {
            Outcome::Kept(c, s) => {
                skipped_events += s;
                cascades.push(c);
            }
            Outcome::BelowMin(s) => {
                skipped_events += s;
                below += 1;
            }
        }
    }
    let splits = assign_splits(cascades.len(), cfg.split_fractions, cfg.seed);
    Ok(Dataset {
        kind,
        samples: cascades
            .into_iter()
            .zip(splits)
            .map(|(cascade, split)| Sample { cascade, split })
            .collect(),
        eligible: eligible.len(),
        below_min_observed: below,
        skipped_events,
        authors_without_papers,
    })
}

/// Seeded shuffle, then the first `⌊f_train·n⌋` positions go to train, the
/// next `⌊f_val·n⌋` to validation and the rest to test. Returned in input
/// order.
pub fn assign_splits(n: usize, fractions: [f64; 3], seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[stream::SPLIT]));
    let n_train = (fractions[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = ((fractions[1] * n as f64 + 1e-9).floor() as usize).min(n - n_train);
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

pub fn build_paper_dataset(g: &HeteroGraph, cfg: &ObservationConfig) -> Result<Dataset> {
    let targets = g
        .nodes_of_kind(NodeKind::Paper)
        .iter()
        .map(|&p| (p, g.node(p).birth_time))
        .collect();
    assemble(g, TargetKind::Paper, targets, cfg, 0)
}

pub fn build_author_dataset(g: &HeteroGraph, cfg: &ObservationConfig) -> Result<Dataset> {
    let mut without = 0;
    let mut targets = Vec::new();
    for &a in g.nodes_of_kind(NodeKind::Author) {
        match career_start(g, a) {
            Some(start) => targets.push((a, start)),
            None => without += 1,
        }
    }
    assemble(g, TargetKind::Author, targets, cfg, without)
}

pub fn build_dataset(g: &HeteroGraph, kind: TargetKind, cfg: &ObservationConfig) -> Result<Dataset> {
    match kind {
        TargetKind::Paper => build_paper_dataset(g, cfg),
        TargetKind::Author => build_author_dataset(g, cfg),
    }
}

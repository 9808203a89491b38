//! Type-weighted random walk with restart and fixed-size per-type neighbour
//! sets.
//!
//! From node `n` with predecessor `prev`, a walk steps back to `prev` with
//! probability `q`; otherwise it moves along an out-edge to `m` with
//! probability proportional to `coeff(kind(m)) · (1 + in_degree(m)) · weight`,
//! normalised over all out-edges of `n`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeRecord, HeteroGraph, NodeId, NodeKind};
use crate::util::{rng_for, stream, with_thread_pool};

pub const NEIGHBOR_SETS_MAGIC: &[u8; 9] = b"HDGNN-NS\x01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    /// Probability of stepping back to the previous node.
    pub restart_prob: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Type coefficients (paper, author, venue).
    pub type_coeffs: [f64; 3],
    /// Neighbour-set sizes (paper, author, venue).
    pub samples_per_type: [usize; 3],
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            restart_prob: 0.5,
            walk_length: 30,
            walks_per_node: 5,
            type_coeffs: [1.0, 1.0, 1.0],
            samples_per_type: [10, 10, 3],
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.restart_prob) {
            return Err(Error::Config(format!("restart_prob {} not in [0, 1]", self.restart_prob)));
        }
        if self.walk_length == 0 || self.walks_per_node == 0 {
            return Err(Error::Config("walk_length and walks_per_node must be positive".into()));
        }
        if self.type_coeffs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("type coefficients must be positive".into()));
        }
        if self.samples_per_type.contains(&0) {
            return Err(Error::Config("samples_per_type entries must be positive".into()));
        }
        Ok(())
    }

    fn coeff(&self, kind: NodeKind) -> f64 {
        self.type_coeffs[kind.ordinal()]
    }
}

/// `(1 + in_degree(m)) · weight(e)` for an edge `e` into `m`.
pub fn influence(g: &HeteroGraph, m: NodeId, e: &EdgeRecord) -> f64 {
    debug_assert_eq!(e.dst, m);
    (1.0 + g.in_degree_of(m) as f64) * e.weight
}

#[derive(Clone, Debug, PartialEq)]
pub enum Transition {
    /// Probability per candidate node, ascending by id; entries for the same
    /// node (the predecessor reached via an edge as well) are merged.
    Distribution(Vec<(NodeId, f64)>),
    /// Dead end without a predecessor: the walk restarts at its source.
    RestartAtSource,
}

pub fn transition_distribution(
    g: &HeteroGraph,
    n: NodeId,
    prev: Option<NodeId>,
    cfg: &WalkConfig,
) -> Result<Transition> {
    g.check(n)?;
    let weights: Vec<(NodeId, f64)> = g
        .out_edges(n)
        .map(|e| (e.dst, cfg.coeff(g.kind(e.dst)) * influence(g, e.dst, e)))
        .collect();
    let z: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut probs: BTreeMap<NodeId, f64> = BTreeMap::new();
    match (prev, weights.is_empty()) {
        (None, true) => return Ok(Transition::RestartAtSource),
        (Some(p), true) => {
            probs.insert(p, 1.0);
        }
        (prev, false) => {
            let move_mass = match prev {
                Some(p) => {
                    probs.insert(p, cfg.restart_prob);
                    1.0 - cfg.restart_prob
                }
                None => 1.0,
            };
            for (m, w) in weights {
                *probs.entry(m).or_insert(0.0) += move_mass * w / z;
            }
        }
    }
    Ok(Transition::Distribution(probs.into_iter().collect()))
}

/// Per-node cumulative out-edge weights, so a step costs one binary search.
pub struct WalkTable<'g> {
    graph: &'g HeteroGraph,
    targets: Vec<Vec<NodeId>>,
    cumulative: Vec<Vec<f64>>,
    cfg: WalkConfig,
}

impl<'g> WalkTable<'g> {
    pub fn new(graph: &'g HeteroGraph, cfg: &WalkConfig) -> Result<Self> {
        cfg.validate()?;
        let n = graph.node_count();
        let mut targets = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for i in 0..n {
            let node = NodeId::from_index(i);
            let mut acc = 0.0;
            let mut ts = Vec::new();
            let mut cs = Vec::new();
            for e in graph.out_edges(node) {
                acc += cfg.coeff(graph.kind(e.dst)) * influence(graph, e.dst, e);
                ts.push(e.dst);
                cs.push(acc);
            }
            targets.push(ts);
            cumulative.push(cs);
        }
        Ok(WalkTable {
            graph,
            targets,
            cumulative,
            cfg: cfg.clone(),
        })
    }

    pub fn graph(&self) -> &HeteroGraph {
        self.graph
    }

    fn step(&self, current: NodeId, prev: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
        let cum = &self.cumulative[current.index()];
        if cum.is_empty() {
            return prev;
        }
        let u: f64 = rng.random();
        let q = self.cfg.restart_prob;
        if u < q {
            return prev;
        }
        let total = *cum.last().expect("non-empty");
        let x = (u - q) / (1.0 - q) * total;
        let i = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
        self.targets[current.index()][i]
    }

    /// The `walk`-th walk from `source`, excluding the start node. Each
    /// `(seed, source, walk)` triple has its own random stream.
    pub fn walk(&self, source: NodeId, walk: usize) -> Vec<NodeId> {
        let mut rng = rng_for(self.cfg.seed, &[stream::WALK, source.0 as u64, walk as u64]);
        let mut path = Vec::with_capacity(self.cfg.walk_length);
        let (mut prev, mut current) = (source, source);
        for _ in 0..self.cfg.walk_length {
            let next = self.step(current, prev, &mut rng);
            prev = current;
            current = next;
            path.push(current);
        }
        path
    }

    /// Visit counts over all walks from `source`; the source is not counted.
    pub fn run_walks(&self, source: NodeId) -> BTreeMap<NodeId, u32> {
        let mut visits = BTreeMap::new();
        for w in 0..self.cfg.walks_per_node {
            for n in self.walk(source, w) {
                if n != source {
                    *visits.entry(n).or_insert(0) += 1;
                }
            }
        }
        visits
    }
}

pub fn run_walks(g: &HeteroGraph, source: NodeId, cfg: &WalkConfig) -> Result<BTreeMap<NodeId, u32>> {
    g.check(source)?;
    Ok(WalkTable::new(g, cfg)?.run_walks(source))
}

/// Fixed-size neighbour lists of one node, per kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub paper: Vec<NodeId>,
    pub author: Vec<NodeId>,
    pub venue: Vec<NodeId>,
}

impl NeighborSet {
    pub fn of_kind(&self, kind: NodeKind) -> &[NodeId] {
        match kind {
            NodeKind::Paper => &self.paper,
            NodeKind::Author => &self.author,
            NodeKind::Venue => &self.venue,
        }
    }
}

/// Ranks visited nodes per kind (count desc, in-degree desc, id asc) and
/// fills exactly `samples_per_type` slots per kind.
pub fn build_neighbor_sets(
    g: &HeteroGraph,
    source: NodeId,
    visits: &BTreeMap<NodeId, u32>,
    cfg: &WalkConfig,
) -> NeighborSet {
    let mut lists: [Vec<NodeId>; 3] = Default::default();
    for kind in NodeKind::ALL {
        let k = cfg.samples_per_type[kind.ordinal()];
        let mut ranked: Vec<(NodeId, u32)> = visits
            .iter()
            .filter(|(n, _)| g.kind(**n) == kind)
            .map(|(&n, &c)| (n, c))
            .collect();
        ranked.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then(g.in_degree_of(b.0).cmp(&g.in_degree_of(a.0)))
                .then(a.0.cmp(&b.0))
        });
        let mut pool: Vec<NodeId> = ranked.into_iter().take(k).map(|(n, _)| n).collect();
        if pool.is_empty() {
            let mut direct: Vec<NodeId> = g
                .out_edges(source)
                .map(|e| e.dst)
                .filter(|&n| g.kind(n) == kind)
                .collect();
            direct.dedup();
            direct.sort_by(|a, b| g.in_degree_of(*b).cmp(&g.in_degree_of(*a)).then(a.cmp(b)));
            direct.truncate(k);
            pool = direct;
        }
        if pool.is_empty() {
            pool.push(source);
        }
        lists[kind.ordinal()] = pool.iter().cycle().take(k).copied().collect();
    }
    let [paper, author, venue] = lists;
    NeighborSet { paper, author, venue }
}

/// Neighbour sets for every node of a graph, indexed by node id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborSets {
    pub samples_per_type: [usize; 3],
    pub sets: Vec<NeighborSet>,
}

impl NeighborSets {
    pub fn get(&self, n: NodeId) -> &NeighborSet {
        &self.sets[n.index()]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(NEIGHBOR_SETS_MAGIC)?;
        w.write_all(&(self.sets.len() as u64).to_le_bytes())?;
        for (i, s) in self.sets.iter().enumerate() {
            w.write_all(&(i as u64).to_le_bytes())?;
            for list in [&s.paper, &s.author, &s.venue] {
                for n in list {
                    w.write_all(&(n.0 as u64).to_le_bytes())?;
                }
            }
        }
        w.flush()
    }

    /// The binary format does not carry list sizes, so the caller supplies them.
    pub fn read_binary<R: Read>(mut r: R, samples_per_type: [usize; 3]) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("reading neighbor sets", e))?;
        let bad = |m: &str| Error::Data(format!("neighbor_sets.bin: {m}"));
        if bytes.len() < 17 || &bytes[..9] != NEIGHBOR_SETS_MAGIC {
            return Err(bad("bad header"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let count = word(9) as usize;
        let per_node = 1 + samples_per_type.iter().sum::<usize>();
        if bytes.len() != 17 + count * per_node * 8 {
            return Err(bad("length does not match node count and list sizes"));
        }
        let mut sets = Vec::with_capacity(count);
        let mut pos = 17;
        for i in 0..count {
            if word(pos) as usize != i {
                return Err(bad("node ids out of order"));
            }
            pos += 8;
            let mut lists: [Vec<NodeId>; 3] = Default::default();
            for (k, list) in lists.iter_mut().enumerate() {
                for _ in 0..samples_per_type[k] {
                    list.push(NodeId(word(pos) as u32));
                    pos += 8;
                }
            }
            let [paper, author, venue] = lists;
            sets.push(NeighborSet { paper, author, venue });
        }
        Ok(NeighborSets {
            samples_per_type,
            sets,
        })
    }

    /// One JSON object per node with external ids, for inspection.
    pub fn write_jsonl<W: Write>(&self, g: &HeteroGraph, mut w: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            author: Vec<&'a str>,
            id: &'a str,
            paper: Vec<&'a str>,
            venue: Vec<&'a str>,
        }
        let ext = |ids: &[NodeId]| ids.iter().map(|n| g.node(*n).external_id.as_str()).collect();
        for (i, s) in self.sets.iter().enumerate() {
            let line = Line {
                author: ext(&s.author),
                id: &g.node(NodeId::from_index(i)).external_id,
                paper: ext(&s.paper),
                venue: ext(&s.venue),
            };
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, g: &HeteroGraph, bin_path: &Path, jsonl_path: Option<&Path>) -> Result<()> {
        let f = File::create(bin_path).map_err(|e| Error::io(format!("creating {}", bin_path.display()), e))?;
        self.write_binary(BufWriter::new(f))
            .map_err(|e| Error::io("writing neighbor sets", e))?;
        if let Some(p) = jsonl_path {
            let f = File::create(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))?;
            self.write_jsonl(g, BufWriter::new(f))
                .map_err(|e| Error::io("writing neighbor sets dump", e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path, samples_per_type: [usize; 3]) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_binary(f, samples_per_type)
    }
}

/// Samples neighbour sets for every node, in parallel across sources.
pub fn sample_all(g: &HeteroGraph, cfg: &WalkConfig) -> Result<NeighborSets> {
    let table = WalkTable::new(g, cfg)?;
    let sets = with_thread_pool(|| {
        (0..g.node_count())
            .into_par_iter()
            .map(|i| {
                let source = NodeId::from_index(i);
                let visits = table.run_walks(source);
                build_neighbor_sets(g, source, &visits, cfg)
            })
            .collect()
    });
    Ok(NeighborSets {
        samples_per_type: cfg.samples_per_type,
        sets,
    })
}

/// All walks of every node, the corpus for skip-gram pretraining.
pub fn walk_corpus(g: &HeteroGraph, cfg: &WalkConfig) -> Result<Vec<Vec<NodeId>>> {
    let table = WalkTable::new(g, cfg)?;
    Ok(with_thread_pool(|| {
        (0..g.node_count())
            .into_par_iter()
            .flat_map_iter(|i| {
                let source = NodeId::from_index(i);
                let table = &table;
                (0..cfg.walks_per_node).map(move |w| {
                    let mut walk = vec![source];
                    walk.extend(table.walk(source, w));
                    walk
                })
            })
            .collect()
    }))
}

/// Empirical frequency of each node being the next step from `current` after
/// `prev`, over `steps` independent draws.
pub fn empirical_transition(
    table: &WalkTable<'_>,
    current: NodeId,
    prev: NodeId,
    steps: usize,
    seed: u64,
) -> HashMap<NodeId, f64> {
    let mut rng = rng_for(seed, &[stream::WALK, u64::MAX]);
    let mut counts: HashMap<NodeId, usize> = HashMap::new();
    for _ in 0..steps {
        *counts.entry(table.step(current, prev, &mut rng)).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(n, c)| (n, c as f64 / steps as f64))
        .collect()
}

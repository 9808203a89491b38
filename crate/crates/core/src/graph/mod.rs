//! Heterogeneous academic graph: papers, authors and venues joined by seven
//! directed, weighted, timestamped relations.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::hashed_vector;

pub use io::{load_graph, read_graph, write_edges, write_graph, write_nodes};

/// Tolerance for "edge happens no earlier than its endpoints exist".
pub const TIME_EPS: f64 = 1e-9;

/// Width of the hashed vector given to kinds that carry no features at all.
pub const FALLBACK_FEATURE_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> Self {
        NodeId(i as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Paper,
    Author,
    Venue,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Paper, NodeKind::Author, NodeKind::Venue];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Paper => "paper",
            NodeKind::Author => "author",
            NodeKind::Venue => "venue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        NodeKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    AuthorWritesPaper,
    AuthorCollabAuthor,
    AuthorPublishesVenue,
    AuthorCitesPaper,
    PaperPublishedInVenue,
    PaperCitesPaper,
    PaperCitesAuthor,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 7] = [
        EdgeKind::AuthorWritesPaper,
        EdgeKind::AuthorCollabAuthor,
        EdgeKind::AuthorPublishesVenue,
        EdgeKind::AuthorCitesPaper,
        EdgeKind::PaperPublishedInVenue,
        EdgeKind::PaperCitesPaper,
        EdgeKind::PaperCitesAuthor,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// `(source kind, target kind)`.
    pub fn signature(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            EdgeKind::AuthorWritesPaper => (Author, Paper),
            EdgeKind::AuthorCollabAuthor => (Author, Author),
            EdgeKind::AuthorPublishesVenue => (Author, Venue),
            EdgeKind::AuthorCitesPaper => (Author, Paper),
            EdgeKind::PaperPublishedInVenue => (Paper, Venue),
            EdgeKind::PaperCitesPaper => (Paper, Paper),
            EdgeKind::PaperCitesAuthor => (Paper, Author),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::AuthorWritesPaper => "author_writes_paper",
            EdgeKind::AuthorCollabAuthor => "author_collab_author",
            EdgeKind::AuthorPublishesVenue => "author_publishes_venue",
            EdgeKind::AuthorCitesPaper => "author_cites_paper",
            EdgeKind::PaperPublishedInVenue => "paper_published_in_venue",
            EdgeKind::PaperCitesPaper => "paper_cites_paper",
            EdgeKind::PaperCitesAuthor => "paper_cites_author",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        EdgeKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered content feature vectors of one node, one per slot of its kind's
/// [`FeatureLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ContentFeatureSet {
    pub slots: Vec<Vec<f64>>,
}

/// Slot names and widths shared by every node of a kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureLayout {
    pub slots: Vec<(String, usize)>,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub external_id: String,
    pub kind: NodeKind,
    pub birth_time: f64,
    pub content: ContentFeatureSet,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub weight: f64,
    pub time: f64,
}

/// Finalised, read-only graph.
#[derive(Clone, Debug)]
pub struct HeteroGraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    out_edges: Vec<Vec<u32>>,
    in_edges: Vec<Vec<u32>>,
    layouts: [FeatureLayout; 3],
    by_external: HashMap<String, NodeId>,
    by_kind: [Vec<NodeId>; 3],
}

impl HeteroGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    /// All edges sorted by `(src, dst, kind)`.
    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn check(&self, n: NodeId) -> Result<()> {
        if n.index() < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::InvalidNode(n))
        }
    }

    pub fn node(&self, n: NodeId) -> &NodeRecord {
        &self.nodes[n.index()]
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.nodes[n.index()].kind
    }

    pub fn lookup(&self, external_id: &str) -> Option<NodeId> {
        self.by_external.get(external_id).copied()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> &[NodeId] {
        &self.by_kind[kind.ordinal()]
    }

    pub fn layout(&self, kind: NodeKind) -> &FeatureLayout {
        &self.layouts[kind.ordinal()]
    }

    /// Out-edges in `(dst, kind)` order. Unchecked: panics on an invalid id.
    pub fn out_edges(&self, n: NodeId) -> impl ExactSizeIterator<Item = &EdgeRecord> + '_ {
        self.out_edges[n.index()].iter().map(|&e| &self.edges[e as usize])
    }

    /// In-edges in `(src, kind)` order. Unchecked: panics on an invalid id.
    pub fn in_edges(&self, n: NodeId) -> impl ExactSizeIterator<Item = &EdgeRecord> + '_ {
        self.in_edges[n.index()].iter().map(|&e| &self.edges[e as usize])
    }

    /// Out-neighbours of `n`, optionally only those of `kind_filter`, ordered
    /// by target id then edge-kind ordinal.
    pub fn neighbors(&self, n: NodeId, kind_filter: Option<NodeKind>) -> Result<Vec<(NodeId, EdgeRecord)>> {
        self.check(n)?;
        Ok(self
            .out_edges(n)
            .filter(|e| kind_filter.is_none_or(|k| self.kind(e.dst) == k))
            .map(|e| (e.dst, *e))
            .collect())
    }

    pub fn in_degree(&self, n: NodeId) -> Result<usize> {
        self.check(n)?;
        Ok(self.in_edges[n.index()].len())
    }

    pub fn out_degree(&self, n: NodeId) -> Result<usize> {
        self.check(n)?;
        Ok(self.out_edges[n.index()].len())
    }

    /// In-degree without bounds checking, for hot loops.
    pub fn in_degree_of(&self, n: NodeId) -> usize {
        self.in_edges[n.index()].len()
    }

    /// Latest edge time, used as "now" when deciding eligibility.
    pub fn horizon(&self) -> Option<f64> {
        self.edges.iter().map(|e| e.time).reduce(f64::max)
    }
}

#[derive(Clone, Debug)]
struct PendingNode {
    external_id: String,
    kind: NodeKind,
    birth_time: f64,
    features: BTreeMap<String, Vec<f64>>,
}

/// Single-writer construction of a [`HeteroGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<PendingNode>,
    by_external: HashMap<String, NodeId>,
    edges: BTreeMap<(NodeId, NodeId, EdgeKind), (f64, f64)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn lookup(&self, external_id: &str) -> Option<NodeId> {
        self.by_external.get(external_id).copied()
    }

    pub fn add_node(
        &mut self,
        external_id: impl Into<String>,
        kind: NodeKind,
        birth_time: f64,
        features: BTreeMap<String, Vec<f64>>,
    ) -> Result<NodeId> {
        let external_id = external_id.into();
        if self.by_external.contains_key(&external_id) {
            return Err(Error::DuplicateId(external_id));
        }
        if !birth_time.is_finite() {
            return Err(Error::Data(format!("node `{external_id}` has non-finite birth_time")));
        }
        for (name, values) in &features {
            if values.is_empty() {
                return Err(Error::Data(format!(
                    "node `{external_id}` has an empty feature vector `{name}`"
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "node `{external_id}` has a non-finite value in feature `{name}`"
                )));
            }
        }
        let id = NodeId::from_index(self.nodes.len());
        self.by_external.insert(external_id.clone(), id);
        self.nodes.push(PendingNode {
            external_id,
            kind,
            birth_time,
            features,
        });
        Ok(id)
    }

    /// Adds an edge; repeated `(src, dst, kind)` triples are merged by
    /// summing weights and keeping the earliest time.
    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind, weight: f64, time: f64) -> Result<()> {
        let n = self.nodes.len();
        for id in [src, dst] {
            if id.index() >= n {
                return Err(Error::InvalidNode(id));
            }
        }
        let (sk, dk) = kind.signature();
        let (s, d) = (&self.nodes[src.index()], &self.nodes[dst.index()]);
        if s.kind != sk || d.kind != dk {
            return Err(Error::KindMismatch {
                kind: kind.name(),
                expected: format!("{sk} -> {dk}"),
                actual: format!("{} -> {}", s.kind, d.kind),
            });
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Data(format!(
                "{kind} edge {} -> {} has non-positive weight {weight}",
                s.external_id, d.external_id
            )));
        }
        if !time.is_finite() {
            return Err(Error::Data(format!("{kind} edge has non-finite time")));
        }
        let earliest = s.birth_time.max(d.birth_time) - TIME_EPS;
        if time < earliest {
            return Err(Error::Data(format!(
                "{kind} edge {} -> {} at time {time} precedes its endpoints",
                s.external_id, d.external_id
            )));
        }
        self.edges
            .entry((src, dst, kind))
            .and_modify(|(w, t)| {
                *w += weight;
                *t = t.min(time);
            })
            .or_insert((weight, time));
        Ok(())
    }

    pub fn add_edge_by_external(&mut self, src: &str, dst: &str, kind: EdgeKind, weight: f64, time: f64) -> Result<()> {
        let s = self
            .lookup(src)
            .ok_or_else(|| Error::DanglingEndpoint(src.to_string()))?;
        let d = self
            .lookup(dst)
            .ok_or_else(|| Error::DanglingEndpoint(dst.to_string()))?;
        self.add_edge(s, d, kind, weight, time)
    }

    pub fn finalize(mut self) -> Result<HeteroGraph> {
        // collaboration is symmetric: supply the reverse record when absent
        let missing: Vec<_> = self
            .edges
            .iter()
            .filter(|((s, d, k), _)| {
                *k == EdgeKind::AuthorCollabAuthor && !self.edges.contains_key(&(*d, *s, *k))
            })
            .map(|(&(s, d, k), &v)| ((d, s, k), v))
            .collect();
        self.edges.extend(missing);

        let layouts = self.layouts()?;
        let nodes: Vec<NodeRecord> = self
            .nodes
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let layout = &layouts[p.kind.ordinal()];
                let slots = layout
                    .slots
                    .iter()
                    .map(|(name, dim)| {
                        p.features
                            .get(name)
                            .cloned()
                            .unwrap_or_else(|| hashed_vector(&format!("{}/{}", p.external_id, name), *dim))
                    })
                    .collect();
                NodeRecord {
                    id: NodeId::from_index(i),
                    external_id: p.external_id,
                    kind: p.kind,
                    birth_time: p.birth_time,
                    content: ContentFeatureSet { slots },
                }
            })
            .collect();

        let edges: Vec<EdgeRecord> = self
            .edges
            .into_iter()
            .map(|((src, dst, kind), (weight, time))| EdgeRecord {
                src,
                dst,
                kind,
                weight,
                time,
            })
            .collect();
        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        // edges are sorted by (src, dst, kind), so out-lists come out in (dst, kind)
        // order and in-lists in (src, kind) order
        for (i, e) in edges.iter().enumerate() {
            out_edges[e.src.index()].push(i as u32);
            in_edges[e.dst.index()].push(i as u32);
        }
        let mut by_kind: [Vec<NodeId>; 3] = Default::default();
        for n in &nodes {
            by_kind[n.kind.ordinal()].push(n.id);
        }
        Ok(HeteroGraph {
            nodes,
            edges,
            out_edges,
            in_edges,
            layouts,
            by_external: self.by_external,
            by_kind,
        })
    }

    /// Union of feature names per kind; widths must agree across nodes.
    fn layouts(&self) -> Result<[FeatureLayout; 3]> {
        let mut widths: [BTreeMap<String, usize>; 3] = Default::default();
        let mut present: [bool; 3] = [false; 3];
        for p in &self.nodes {
            present[p.kind.ordinal()] = true;
            for (name, v) in &p.features {
                let entry = widths[p.kind.ordinal()].entry(name.clone()).or_insert(v.len());
                if *entry != v.len() {
                    return Err(Error::Data(format!(
                        "feature `{name}` of {} nodes has inconsistent widths {} and {}",
                        p.kind,
                        entry,
                        v.len()
                    )));
                }
            }
        }
        let mut out: [FeatureLayout; 3] = Default::default();
        for kind in NodeKind::ALL {
            let k = kind.ordinal();
            out[k].slots = widths[k].iter().map(|(n, &w)| (n.clone(), w)).collect();
            if out[k].slots.is_empty() && present[k] {
                out[k].slots.push(("hashed_id".to_string(), FALLBACK_FEATURE_DIM));
            }
        }
        Ok(out)
    }
}

/// Distinct nodes of `kind` in ascending id order, handy for fixtures.
pub fn distinct_sorted(ids: impl IntoIterator<Item = NodeId>) -> Vec<NodeId> {
    ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nf() -> BTreeMap<String, Vec<f64>> {
        BTreeMap::new()
    }

    #[test]
    fn empty_edge_set() {
        let mut b = GraphBuilder::new();
        for (i, k) in NodeKind::ALL.into_iter().enumerate() {
            b.add_node(format!("n{i}"), k, 0.0, nf()).unwrap();
        }
        let g = b.finalize().unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 0);
        for n in 0..3 {
            assert_eq!(g.in_degree(NodeId(n)).unwrap(), 0);
        }
    }

    #[test]
    fn single_citation_bookkeeping() {
        let mut b = GraphBuilder::new();
        let p1 = b.add_node("p1", NodeKind::Paper, 0.0, nf()).unwrap();
        let p2 = b.add_node("p2", NodeKind::Paper, 0.0, nf()).unwrap();
        b.add_edge(p1, p2, EdgeKind::PaperCitesPaper, 1.0, 1.0).unwrap();
        let g = b.finalize().unwrap();
        assert_eq!(g.in_degree(p2).unwrap(), 1);
        assert_eq!(g.out_degree(p1).unwrap(), 1);
    }

    #[test]
    fn neighbors_order_and_filter() {
        let mut b = GraphBuilder::new();
        let p1 = b.add_node("p1", NodeKind::Paper, 0.0, nf()).unwrap();
        let a1 = b.add_node("a1", NodeKind::Author, 0.0, nf()).unwrap();
        let p2 = b.add_node("p2", NodeKind::Paper, 0.0, nf()).unwrap();
        b.add_edge(p1, p2, EdgeKind::PaperCitesPaper, 1.0, 1.0).unwrap();
        b.add_edge(p1, a1, EdgeKind::PaperCitesAuthor, 1.0, 1.0).unwrap();
        let g = b.finalize().unwrap();
        let authors = g.neighbors(p1, Some(NodeKind::Author)).unwrap();
        assert_eq!(authors.len(), 1);
        assert_eq!(authors[0].0, a1);
        // sort key (target id, kind ordinal): a1 = 1 precedes p2 = 2
        let all: Vec<_> = g.neighbors(p1, None).unwrap().into_iter().map(|(n, _)| n).collect();
        assert_eq!(all, vec![a1, p2]);
        assert!(g.neighbors(a1, None).unwrap().is_empty());
        assert!(matches!(g.neighbors(NodeId(9), None), Err(Error::InvalidNode(_))));
        assert!(g.in_degree(NodeId(9)).is_err());
    }

    #[test]
    fn star_in_degree() {
        let mut b = GraphBuilder::new();
        let hub = b.add_node("hub", NodeKind::Paper, 0.0, nf()).unwrap();
        for i in 0..5 {
            let p = b.add_node(format!("c{i}"), NodeKind::Paper, 1.0, nf()).unwrap();
            b.add_edge(p, hub, EdgeKind::PaperCitesPaper, 1.0, 1.0).unwrap();
        }
        let g = b.finalize().unwrap();
        assert_eq!(g.in_degree(hub).unwrap(), 5);
    }

    #[test]
    fn duplicate_edges_merge() {
        let mut b = GraphBuilder::new();
        let p1 = b.add_node("p1", NodeKind::Paper, 0.0, nf()).unwrap();
        let p2 = b.add_node("p2", NodeKind::Paper, 0.0, nf()).unwrap();
        b.add_edge(p1, p2, EdgeKind::PaperCitesPaper, 1.0, 3.0).unwrap();
        b.add_edge(p1, p2, EdgeKind::PaperCitesPaper, 0.5, 2.0).unwrap();
        let g = b.finalize().unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].weight, 1.5);
        assert_eq!(g.edges()[0].time, 2.0);
    }

    #[test]
    fn collaboration_is_stored_in_both_directions() {
        let mut b = GraphBuilder::new();
        let a = b.add_node("a", NodeKind::Author, 0.0, nf()).unwrap();
        let c = b.add_node("c", NodeKind::Author, 0.0, nf()).unwrap();
        b.add_edge(a, c, EdgeKind::AuthorCollabAuthor, 2.0, 1.0).unwrap();
        let g = b.finalize().unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.in_degree(a).unwrap(), 1);
        assert_eq!(g.in_degree(c).unwrap(), 1);
    }

    #[test]
    fn validation_errors() {
        let mut b = GraphBuilder::new();
        let p = b.add_node("p", NodeKind::Paper, 5.0, nf()).unwrap();
        let a = b.add_node("a", NodeKind::Author, 0.0, nf()).unwrap();
        assert!(matches!(b.add_node("p", NodeKind::Paper, 0.0, nf()), Err(Error::DuplicateId(_))));
        assert!(matches!(
            b.add_edge(p, a, EdgeKind::AuthorWritesPaper, 1.0, 6.0),
            Err(Error::KindMismatch { .. })
        ));
        assert!(b.add_edge(a, p, EdgeKind::AuthorWritesPaper, 0.0, 6.0).is_err());
        assert!(b.add_edge(a, p, EdgeKind::AuthorWritesPaper, 1.0, 4.0).is_err());
        assert!(matches!(
            b.add_edge_by_external("a", "zzz", EdgeKind::AuthorWritesPaper, 1.0, 6.0),
            Err(Error::DanglingEndpoint(_))
        ));
    }

    #[test]
    fn missing_features_fall_back_to_hashes() {
        let mut b = GraphBuilder::new();
        let mut f = nf();
        f.insert("year".to_string(), vec![0.5]);
        f.insert("title".to_string(), vec![0.1, 0.2]);
        b.add_node("p1", NodeKind::Paper, 0.0, f).unwrap();
        b.add_node("p2", NodeKind::Paper, 0.0, nf()).unwrap();
        b.add_node("v", NodeKind::Venue, 0.0, nf()).unwrap();
        let g = b.finalize().unwrap();
        let layout = g.layout(NodeKind::Paper);
        assert_eq!(layout.slots, vec![("title".to_string(), 2), ("year".to_string(), 1)]);
        let p2 = &g.node(NodeId(1)).content;
        assert_eq!(p2.slots[0], hashed_vector("p2/title", 2));
        assert_eq!(g.layout(NodeKind::Venue).slots[0].1, FALLBACK_FEATURE_DIM);
        assert!(g.layout(NodeKind::Author).is_empty());
    }
}

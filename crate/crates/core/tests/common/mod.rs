#![allow(dead_code)]

use std::collections::BTreeMap;

use hdgnn::dataset::{Cascade, CitingEvent, TargetKind};
use hdgnn::graph::{EdgeKind, GraphBuilder, HeteroGraph, NodeId, NodeKind};
use hdgnn_autodiff::ParameterStore;
use hdgnn::sampler::{transition_distribution, Transition, WalkConfig};

/// Three papers, two authors, one venue. The venue has no out-edges, so
/// walks reaching it must step back.
pub fn six_node_graph(weight_scale: f64) -> HeteroGraph {
    let mut b = GraphBuilder::new();
    let add = |b: &mut GraphBuilder, id: &str, kind| b.add_node(id, kind, 0.0, BTreeMap::new()).unwrap();
    let p1 = add(&mut b, "p1", NodeKind::Paper);
    let p2 = add(&mut b, "p2", NodeKind::Paper);
    let p3 = add(&mut b, "p3", NodeKind::Paper);
    let a1 = add(&mut b, "a1", NodeKind::Author);
    let a2 = add(&mut b, "a2", NodeKind::Author);
    let v1 = add(&mut b, "v1", NodeKind::Venue);
    let edges = [
        (p1, p2, EdgeKind::PaperCitesPaper, 1.0),
        (p1, p3, EdgeKind::PaperCitesPaper, 2.0),
        (p2, p3, EdgeKind::PaperCitesPaper, 1.0),
        (p1, a2, EdgeKind::PaperCitesAuthor, 1.0),
        (p2, a2, EdgeKind::PaperCitesAuthor, 0.5),
        (p1, v1, EdgeKind::PaperPublishedInVenue, 1.0),
        (p2, v1, EdgeKind::PaperPublishedInVenue, 1.0),
        (p3, v1, EdgeKind::PaperPublishedInVenue, 3.0),
        (a1, p1, EdgeKind::AuthorWritesPaper, 1.0),
        (a2, p2, EdgeKind::AuthorWritesPaper, 1.0),
        (a2, p3, EdgeKind::AuthorWritesPaper, 1.0),
        (a1, p2, EdgeKind::AuthorCitesPaper, 1.5),
        (a1, a2, EdgeKind::AuthorCollabAuthor, 2.0),
        (a1, v1, EdgeKind::AuthorPublishesVenue, 1.0),
        (a2, v1, EdgeKind::AuthorPublishesVenue, 0.25),
    ];
    for (s, d, k, w) in edges {
        b.add_edge(s, d, k, w * weight_scale, 0.0).unwrap();
    }
    b.finalize().unwrap()
}

pub fn six_node_config() -> WalkConfig {
    WalkConfig {
        restart_prob: 0.3,
        walk_length: 20,
        walks_per_node: 5,
        type_coeffs: [1.0, 2.0, 0.5],
        samples_per_type: [2, 2, 1],
        seed: 17,
    }
}

pub fn distribution(g: &HeteroGraph, n: NodeId, prev: NodeId, cfg: &WalkConfig) -> BTreeMap<NodeId, f64> {
    match transition_distribution(g, n, Some(prev), cfg).unwrap() {
        Transition::Distribution(d) => d.into_iter().collect(),
        Transition::RestartAtSource => BTreeMap::from([(n, 1.0)]),
    }
}

/// Exact probability that step `t` of a walk from `source` sits on each
/// node, averaged over `t = 1..=len`. The walk is second order, so the
/// chain runs over (prev, current) pairs.
pub fn occupancy(g: &HeteroGraph, source: NodeId, cfg: &WalkConfig) -> BTreeMap<NodeId, f64> {
    let mut state: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::from([((source, source), 1.0)]);
    let mut occ: BTreeMap<NodeId, f64> = BTreeMap::new();
    for _ in 0..cfg.walk_length {
        let mut next: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        for (&(prev, cur), &p) in &state {
            for (m, q) in distribution(g, cur, prev, cfg) {
                *next.entry((cur, m)).or_insert(0.0) += p * q;
            }
        }
        for (&(_, cur), &p) in &next {
            *occ.entry(cur).or_insert(0.0) += p / cfg.walk_length as f64;
        }
        state = next;
    }
    occ
}

/// Target paper `p0`, cited by `p1` and `p2`; three authors, two venues.
pub fn toy_graph() -> HeteroGraph {
    let mut b = GraphBuilder::new();
    let f = |pairs: &[(&str, Vec<f64>)]| -> BTreeMap<String, Vec<f64>> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    };
    let paper = |b: &mut GraphBuilder, name: &str, t: f64, x: f64| {
        b.add_node(name, NodeKind::Paper, t, f(&[("title", vec![x, 1.0 - x]), ("year", vec![t / 10.0])]))
            .unwrap()
    };
    let p0 = paper(&mut b, "p0", 0.0, 0.2);
    let p1 = paper(&mut b, "p1", 0.5, 0.9);
    let p2 = paper(&mut b, "p2", 1.0, -0.4);
    let authors: Vec<NodeId> = (0..3)
        .map(|i| {
            b.add_node(format!("a{i}"), NodeKind::Author, 0.0, f(&[("career", vec![0.3 * i as f64 - 0.2])]))
                .unwrap()
        })
        .collect();
    let v0 = b.add_node("v0", NodeKind::Venue, 0.0, f(&[("degree", vec![0.5, -0.1])])).unwrap();
    let v1 = b.add_node("v1", NodeKind::Venue, 0.0, f(&[("degree", vec![-0.3, 0.8])])).unwrap();
    let byline = [(p0, vec![0], v0, 0.0), (p1, vec![1, 2], v1, 0.5), (p2, vec![2, 0], v0, 1.0)];
    for (p, auth, v, t) in &byline {
        b.add_edge(*p, *v, EdgeKind::PaperPublishedInVenue, 1.0, *t).unwrap();
        for &a in auth {
            b.add_edge(authors[a], *p, EdgeKind::AuthorWritesPaper, 1.0, *t).unwrap();
            b.add_edge(authors[a], *v, EdgeKind::AuthorPublishesVenue, 1.0, *t).unwrap();
        }
    }
    for (citing, t) in [(p1, 0.5), (p2, 1.0)] {
        b.add_edge(citing, p0, EdgeKind::PaperCitesPaper, 1.0, t).unwrap();
        b.add_edge(citing, authors[0], EdgeKind::PaperCitesAuthor, 1.0, t).unwrap();
    }
    b.add_edge(authors[1], p0, EdgeKind::AuthorCitesPaper, 1.0, 0.5).unwrap();
    b.add_edge(authors[1], authors[2], EdgeKind::AuthorCollabAuthor, 1.0, 0.5).unwrap();
    b.finalize().unwrap()
}

pub fn toy_cascade(g: &HeteroGraph, label: u64) -> Cascade {
    let id = |s: &str| g.lookup(s).unwrap();
    let event = |p: &str, a: &[&str], v: &str, time: f64| CitingEvent {
        paper: id(p),
        authors: a.iter().map(|s| id(s)).collect(),
        venue: id(v),
        time,
    };
    Cascade {
        target: id("p0"),
        target_kind: TargetKind::Paper,
        events: vec![event("p1", &["a1", "a2"], "v1", 0.5), event("p2", &["a0", "a2"], "v0", 1.0)],
        label,
        observed: 2,
        birth: 0.0,
    }
}

/// Deterministic, non-degenerate parameter values.
pub fn fill_params(store: &mut ParameterStore, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        for (i, v) in store.value_mut(id).iter_mut().enumerate() {
            *v = scale * ((k * 17 + i) as f64 * 0.731).sin();
        }
    }
}

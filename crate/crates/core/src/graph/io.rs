//! JSONL node/edge files.
//!
//! Output is byte-stable: keys are written in sorted order and every float is
//! rounded to 9 significant digits before formatting.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{EdgeKind, GraphBuilder, HeteroGraph, NodeKind};
use crate::error::{Error, Result};
use crate::util::{fmt_f64, json_string};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeLine {
    id: String,
    kind: String,
    birth_time: f64,
    #[serde(default)]
    features: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeLine {
    src: String,
    dst: String,
    kind: String,
    weight: f64,
    time: f64,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))
}

pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<HeteroGraph> {
    read_graph(open(nodes_path)?, nodes_path, open(edges_path)?, edges_path)
}

/// Parses both files; `*_name` is used only for error messages.
pub fn read_graph<N: Read, E: Read>(nodes: N, nodes_name: &Path, edges: E, edges_name: &Path) -> Result<HeteroGraph> {
    let mut builder = GraphBuilder::new();
    for_each_line(nodes, nodes_name, |line_no, text| {
        let parse_err = |message: String| Error::Parse {
            path: nodes_name.to_path_buf(),
            line: line_no,
            message,
        };
        let n: NodeLine = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let kind = NodeKind::parse(&n.kind).ok_or_else(|| parse_err(format!("unknown node kind `{}`", n.kind)))?;
        builder
            .add_node(n.id, kind, n.birth_time, n.features)
            .map_err(|e| parse_err(e.to_string()))?;
        Ok(())
    })?;
    for_each_line(edges, edges_name, |line_no, text| {
        let parse_err = |message: String| Error::Parse {
            path: edges_name.to_path_buf(),
            line: line_no,
            message,
        };
        let e: EdgeLine = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let kind = EdgeKind::parse(&e.kind).ok_or_else(|| parse_err(format!("unknown edge kind `{}`", e.kind)))?;
        builder
            .add_edge_by_external(&e.src, &e.dst, kind, e.weight, e.time)
            .map_err(|err| match err {
                // keep the structured variants, they already name the offender
                Error::DanglingEndpoint(_) | Error::KindMismatch { .. } => Error::Parse {
                    path: edges_name.to_path_buf(),
                    line: line_no,
                    message: err.to_string(),
                },
                other => parse_err(other.to_string()),
            })
    })?;
    builder.finalize()
}

fn for_each_line<R: Read>(r: R, name: &Path, mut f: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    let reader = BufReader::new(r);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", name.display()), e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        f(i + 1, text)?;
    }
    Ok(())
}

pub fn write_nodes<W: Write>(g: &HeteroGraph, mut w: W) -> std::io::Result<()> {
    for n in g.nodes() {
        let layout = g.layout(n.kind);
        let mut features: Vec<(&str, &Vec<f64>)> = layout
            .slots
            .iter()
            .map(|(name, _)| name.as_str())
            .zip(&n.content.slots)
            .collect();
        features.sort_by(|a, b| a.0.cmp(b.0));
        let feats: Vec<String> = features
            .iter()
            .map(|(name, v)| {
                let vals: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
                format!("{}:[{}]", json_string(name), vals.join(","))
            })
            .collect();
        writeln!(
            w,
            "{{\"birth_time\":{},\"features\":{{{}}},\"id\":{},\"kind\":\"{}\"}}",
            fmt_f64(n.birth_time),
            feats.join(","),
            json_string(&n.external_id),
            n.kind.name()
        )?;
    }
    w.flush()
}

pub fn write_edges<W: Write>(g: &HeteroGraph, mut w: W) -> std::io::Result<()> {
    for e in g.edges() {
        writeln!(
            w,
            "{{\"dst\":{},\"kind\":\"{}\",\"src\":{},\"time\":{},\"weight\":{}}}",
            json_string(&g.node(e.dst).external_id),
            e.kind.name(),
            json_string(&g.node(e.src).external_id),
            fmt_f64(e.time),
            fmt_f64(e.weight)
        )?;
    }
    w.flush()
}

pub fn write_graph(g: &HeteroGraph, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    let create = |p: &PathBuf| File::create(p).map_err(|e| Error::io(format!("creating {}", p.display()), e));
    write_nodes(g, BufWriter::new(create(&nodes_path.to_path_buf())?))
        .map_err(|e| Error::io(format!("writing {}", nodes_path.display()), e))?;
    write_edges(g, BufWriter::new(create(&edges_path.to_path_buf())?))
        .map_err(|e| Error::io(format!("writing {}", edges_path.display()), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(nodes: &str, edges: &str) -> Result<HeteroGraph> {
        read_graph(nodes.as_bytes(), Path::new("nodes"), edges.as_bytes(), Path::new("edges"))
    }

    const NODES: &str = r#"{"id": "p1", "kind": "paper", "birth_time": 1.0, "features": {"year": [0.1]}}
{"id": "p2", "kind": "paper", "birth_time": 2.0, "features": {"year": [0.2]}}
{"id": "a1", "kind": "author", "birth_time": 1.0}
"#;

    #[test]
    fn parses_and_maps_ids_in_insertion_order() {
        let g = parse(
            NODES,
            r#"{"src": "p2", "dst": "p1", "kind": "paper_cites_paper", "weight": 1.0, "time": 2.0}"#,
        )
        .unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.lookup("a1").unwrap().index(), 2);
        assert_eq!(g.in_degree(g.lookup("p1").unwrap()).unwrap(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse(NODES, "\n{\"src\": \"p2\"").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("{\"id\":\"x\",\"kind\":\"journal\",\"birth_time\":0}", "").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn dangling_and_mismatched_edges_are_rejected() {
        let dangling = parse(
            NODES,
            r#"{"src": "p2", "dst": "nope", "kind": "paper_cites_paper", "weight": 1.0, "time": 2.0}"#,
        )
        .unwrap_err();
        assert!(dangling.to_string().contains("unknown node `nope`"), "{dangling}");
        let mismatch = parse(
            NODES,
            r#"{"src": "p2", "dst": "a1", "kind": "paper_cites_paper", "weight": 1.0, "time": 2.0}"#,
        )
        .unwrap_err();
        assert!(mismatch.to_string().contains("expects paper -> paper"), "{mismatch}");
        let dup = parse(&format!("{NODES}{}", r#"{"id": "p1", "kind": "paper", "birth_time": 0}"#), "").unwrap_err();
        assert!(dup.to_string().contains("duplicate node id `p1`"), "{dup}");
    }

    #[test]
    fn reserialisation_is_byte_stable() {
        let g = parse(
            NODES,
            r#"{"src": "p2", "dst": "p1", "kind": "paper_cites_paper", "weight": 0.1234567891234, "time": 2.0}"#,
        )
        .unwrap();
        let mut n1 = Vec::new();
        let mut e1 = Vec::new();
        write_nodes(&g, &mut n1).unwrap();
        write_edges(&g, &mut e1).unwrap();
        let edges = String::from_utf8(e1.clone()).unwrap();
        assert_eq!(
            edges,
            "{\"dst\":\"p1\",\"kind\":\"paper_cites_paper\",\"src\":\"p2\",\"time\":2.0,\"weight\":0.123456789}\n"
        );
        let g2 = read_graph(n1.as_slice(), Path::new("n"), e1.as_slice(), Path::new("e")).unwrap();
        let mut n2 = Vec::new();
        let mut e2 = Vec::new();
        write_nodes(&g2, &mut n2).unwrap();
        write_edges(&g2, &mut e2).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(e1, e2);
    }
}

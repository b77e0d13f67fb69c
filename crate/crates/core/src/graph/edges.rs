//! Edge-list files: `node_a<TAB>node_b[<TAB>weight]`, `#` comments.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Edge, NodeKey};
use crate::error::{Error, Result};

pub fn parse_edge_list(text: &str, path: &Path) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let bad = |msg: String| Error::parse(path, i + 1, msg);
        let (a, b, w) = match fields.as_slice() {
            [a, b] => (a, b, None),
            [a, b, w] => (a, b, Some(w)),
            _ => return Err(bad("expected node_a<TAB>node_b[<TAB>weight]".into())),
        };
        let a: NodeKey = a.parse().map_err(|e: Error| bad(e.to_string()))?;
        let b: NodeKey = b.parse().map_err(|e: Error| bad(e.to_string()))?;
        let weight = match w {
            None | Some(&"") => 1.0,
            Some(w) => w
                .parse::<f64>()
                .map_err(|_| bad(format!("bad weight `{w}`")))?,
        };
        edges.push(Edge::weighted(a, b, weight));
    }
    Ok(edges)
}

pub fn read_edge_list(path: &Path) -> Result<Vec<Edge>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

/// Weights of exactly 1 are written without the weight column.
pub fn write_edge_list<W: Write>(edges: &[Edge], mut out: W) -> std::io::Result<()> {
    for e in edges {
        if e.weight == 1.0 {
            writeln!(out, "{}\t{}", e.a, e.b)?;
        } else {
            writeln!(out, "{}\t{}\t{}", e.a, e.b, e.weight)?;
        }
    }
    Ok(())
}

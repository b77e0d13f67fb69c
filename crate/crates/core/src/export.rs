//! Plain-text embedding export: a `N D` header, then one
//! `role:partition:word v1 .. vD` line per node.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{EmbeddingState, NodeKey, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Which {
    #[default]
    Rho,
    Alpha,
    Both,
}

impl std::str::FromStr for Which {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(Which::Rho),
            "alpha" => Ok(Which::Alpha),
            "both" => Ok(Which::Both),
            _ => Err(Error::InvalidArgument(format!("expected rho, alpha or both, got `{s}`"))),
        }
    }
}

impl Which {
    fn accepts(self, role: Role) -> bool {
        match self {
            Which::Rho => role == Role::Rho,
            Which::Alpha => role == Role::Alpha,
            Which::Both => true,
        }
    }
}

/// Writes the selected rows in state order with six significant digits.
/// Returns the number of rows written.
pub fn export_embeddings<W: Write>(state: &EmbeddingState, which: Which, partition: Option<&str>, mut out: W) -> std::io::Result<usize> {
    let rows: Vec<usize> = (0..state.len())
        .filter(|&i| {
            let k = &state.keys()[i];
            which.accepts(k.role) && partition.is_none_or(|p| k.partition == p)
        })
        .collect();
    writeln!(out, "{} {}", rows.len(), state.dim())?;
    let mut line = String::new();
    for &i in &rows {
        line.clear();
        line.push_str(&state.keys()[i].to_string());
        for v in state.row(i) {
            line.push(' ');
            line.push_str(&format!("{v:.5e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(rows.len())
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<EmbeddingState> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, 1, "header must be `N D`"))?;
    let [n, d] = dims[..] else {
        return Err(Error::parse(path, 1, "header must be `N D`"));
    };
    let mut keys = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split_whitespace();
        let key: NodeKey = f
            .next()
            .expect("non-empty line")
            .parse()
            .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
        let vals: Vec<f64> = f
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, i + 1, "bad number"))?;
        if vals.len() != d {
            return Err(Error::parse(path, i + 1, format!("expected {d} values, got {}", vals.len())));
        }
        keys.push(key);
        data.extend(vals);
    }
    if keys.len() != n {
        return Err(Error::parse(path, 1, format!("header promises {n} rows, found {}", keys.len())));
    }
    EmbeddingState::from_data(keys, d, data)
}

pub fn import_embeddings(path: &Path) -> Result<EmbeddingState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn export_string(s: &EmbeddingState, which: Which, p: Option<&str>) -> String {
        let mut buf = Vec::new();
        export_embeddings(s, which, p, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn two_nodes_and_filters() {
        let s = EmbeddingState::from_rows(vec![
            ("rho:R:tax".parse().unwrap(), vec![0.5, -1.25]),
            ("rho:D:tax".parse().unwrap(), vec![1.0, 0.0]),
            ("alpha:_:tax".parse().unwrap(), vec![3.0, 4.0]),
        ])
        .unwrap();
        let text = export_string(&s, Which::Rho, None);
        assert_eq!(text, "2 2\nrho:R:tax 5.00000e-1 -1.25000e0\nrho:D:tax 1.00000e0 0.00000e0\n");
        let only_r = export_string(&s, Which::Both, Some("R"));
        assert_eq!(only_r.lines().count(), 2);
        assert!(only_r.lines().skip(1).all(|l| l.contains(":R:")));
        assert_eq!(export_string(&s, Which::Alpha, None).lines().count(), 2);
    }

    proptest! {
        #[test]
        fn round_trip_is_close_and_idempotent(vals in prop::collection::vec(-1e3f64..1e3, 6)) {
            let s = EmbeddingState::from_rows(vec![
                ("rho:a:x".parse().unwrap(), vals[..3].to_vec()),
                ("rho:a:y".parse().unwrap(), vals[3..].to_vec()),
            ]).unwrap();
            let first = export_string(&s, Which::Both, None);
            let back = parse_embeddings(&first, Path::new("e")).unwrap();
            for (a, b) in s.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
            }
            prop_assert_eq!(export_string(&back, Which::Both, None), first);
        }
    }

    #[test]
    fn rejects_malformed_files() {
        let p = Path::new("e");
        assert!(parse_embeddings("", p).is_err());
        assert!(parse_embeddings("1 2\nrho:_:a 1.0\n", p).is_err());
        assert!(parse_embeddings("2 1\nrho:_:a 1.0\n", p).is_err());
        assert!(parse_embeddings("1 1\nnokey 1.0\n", p).is_err());
    }
}

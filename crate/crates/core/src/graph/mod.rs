//! Weighted undirected graphs over parameter vectors and the Gaussian prior
//! whose precision is the augmented Laplacian `lambda1 * L + lambda0 * I`.

mod build;
mod edges;
mod state;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

pub use build::{
    build_chain_graph, build_dict_graph, build_dynamic_group_graph, build_group_complete_graph,
    build_translation_graph, group_time_label, parse_definitions, TranslationEdges,
};
pub use edges::{read_edge_list, write_edge_list, parse_edge_list};
pub use state::EmbeddingState;
pub(crate) use state::{dot, norm, sq_dist};

use crate::error::{Error, Result};
use crate::par::Parallelism;

/// Word vector (`rho`) or context vector (`alpha`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Alpha,
    Rho,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Rho => "rho",
            Role::Alpha => "alpha",
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(Role::Rho),
            "alpha" => Ok(Role::Alpha),
            _ => Err(Error::BadNodeKey(s.to_owned())),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one parameter vector: `role:partition:word`.
///
/// The partition is `_` for global vectors; grouped-dynamic partitions join
/// group and timestep with `@`. The word is everything after the second
/// colon, so it may itself contain colons.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub role: Role,
    pub partition: String,
    pub word: String,
}

impl NodeKey {
    pub fn new(role: Role, partition: impl Into<String>, word: impl Into<String>) -> Self {
        NodeKey {
            role,
            partition: partition.into(),
            word: word.into(),
        }
    }

    pub fn global(role: Role, word: impl Into<String>) -> Self {
        Self::new(role, crate::corpus::GLOBAL_PARTITION, word)
    }

    pub fn rho(partition: impl Into<String>, word: impl Into<String>) -> Self {
        Self::new(Role::Rho, partition, word)
    }

    pub fn alpha(partition: impl Into<String>, word: impl Into<String>) -> Self {
        Self::new(Role::Alpha, partition, word)
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.role, self.partition, self.word)
    }
}

impl FromStr for NodeKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(3, ':');
        let (Some(role), Some(partition), Some(word)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::BadNodeKey(s.to_owned()));
        };
        if partition.is_empty() || word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::BadNodeKey(s.to_owned()));
        }
        let role = role.parse().map_err(|_| Error::BadNodeKey(s.to_owned()))?;
        Ok(NodeKey::new(role, partition, word))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: NodeKey,
    pub b: NodeKey,
    pub weight: f64,
}

impl Edge {
    pub fn new(a: NodeKey, b: NodeKey) -> Self {
        Edge { a, b, weight: 1.0 }
    }

    pub fn weighted(a: NodeKey, b: NodeKey, weight: f64) -> Self {
        Edge { a, b, weight }
    }
}

/// Undirected weighted edges plus the prior's scale parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGraph {
    edges: Vec<Edge>,
    pub lambda0: f64,
    pub lambda1: f64,
}

impl PriorGraph {
    /// Validates: no self-loops, no repeated unordered pair, weights > 0,
    /// `lambda0 > 0`, `lambda1 >= 0`.
    pub fn new(edges: Vec<Edge>, lambda0: f64, lambda1: f64) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::Graph(format!("lambda0 must be > 0, got {lambda0}")));
        }
        if !(lambda1 >= 0.0 && lambda1.is_finite()) {
            return Err(Error::Graph(format!("lambda1 must be >= 0, got {lambda1}")));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.a == e.b {
                return Err(Error::Graph(format!("self-loop on `{}`", e.a)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::Graph(format!(
                    "edge `{}`-`{}` has non-positive weight {}",
                    e.a, e.b, e.weight
                )));
            }
            let pair = if e.a < e.b { (&e.a, &e.b) } else { (&e.b, &e.a) };
            if !seen.insert(pair) {
                return Err(Error::Graph(format!("duplicate edge `{}`-`{}`", e.a, e.b)));
            }
        }
        Ok(PriorGraph {
            edges,
            lambda0,
            lambda1,
        })
    }

    /// A graph with no edges: a pure ridge prior.
    pub fn ridge(lambda0: f64) -> Result<Self> {
        Self::new(Vec::new(), lambda0, 0.0)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Distinct endpoints in first-appearance order.
    pub fn nodes(&self) -> Vec<NodeKey> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for e in &self.edges {
            for k in [&e.a, &e.b] {
                if seen.insert(k) {
                    out.push(k.clone());
                }
            }
        }
        out
    }

    /// Drops edges whose endpoints are not in `keys`; returns the number dropped.
    pub fn retain_known(&mut self, state_keys: &HashSet<&NodeKey>) -> usize {
        let before = self.edges.len();
        self.edges
            .retain(|e| state_keys.contains(&e.a) && state_keys.contains(&e.b));
        before - self.edges.len()
    }

    /// Resolves node keys to rows of `state`.
    pub fn index(&self, state: &EmbeddingState) -> Result<IndexedPrior> {
        let edges = self
            .edges
            .iter()
            .map(|e| Ok((state.require(&e.a)?, state.require(&e.b)?, e.weight)))
            .collect::<Result<Vec<_>>>()?;
        Ok(IndexedPrior::new(
            state.len(),
            edges,
            self.lambda1,
            Ridge::Uniform(self.lambda0),
        ))
    }
}

/// Per-node diagonal of the precision matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Ridge {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl Ridge {
    fn at(&self, i: usize) -> f64 {
        match self {
            Ridge::Uniform(v) => *v,
            Ridge::PerNode(v) => v[i],
        }
    }
}

/// A prior resolved against row indices, with adjacency lists for
/// row-parallel gradient evaluation.
#[derive(Debug, Clone)]
pub struct IndexedPrior {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    lambda1: f64,
    ridge: Ridge,
    offsets: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
}

impl IndexedPrior {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>, lambda1: f64, ridge: Ridge) -> Self {
        if let Ridge::PerNode(d) = &ridge {
            assert_eq!(d.len(), n, "per-node ridge length");
        }
        let mut degree = vec![0usize; n];
        for &(a, b, _) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![(0usize, 0.0f64); offsets[n]];
        for &(a, b, w) in &edges {
            neighbors[fill[a]] = (b, w);
            fill[a] += 1;
            neighbors[fill[b]] = (a, w);
            fill[b] += 1;
        }
        IndexedPrior {
            n,
            edges,
            lambda1,
            ridge,
            offsets,
            neighbors,
        }
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// `-1/2 lambda1 sum_e a_e |x_a - x_b|^2 - 1/2 sum_v d_v |x_v|^2`.
    pub fn log_prior(&self, data: &[f64], dim: usize) -> f64 {
        let row = |i: usize| &data[i * dim..(i + 1) * dim];
        let edge_term: f64 = self
            .edges
            .iter()
            .map(|&(a, b, w)| w * sq_dist(row(a), row(b)))
            .sum();
        let ridge_term: f64 = (0..self.n)
            .map(|i| self.ridge.at(i) * dot(row(i), row(i)))
            .sum();
        -0.5 * self.lambda1 * edge_term - 0.5 * ridge_term
    }

    /// Writes `scale * grad` of the log prior into `out` for the rows
    /// starting at `first_row`; `out.len()` must be a multiple of `dim`.
    fn gradient_rows(&self, data: &[f64], dim: usize, scale: f64, first_row: usize, out: &mut [f64], accumulate: bool) {
        for (r, g) in out.chunks_mut(dim).enumerate() {
            let v = first_row + r;
            let xv = &data[v * dim..(v + 1) * dim];
            let d = self.ridge.at(v);
            let mut acc = vec![0.0; dim];
            for k in 0..dim {
                acc[k] = -d * xv[k];
            }
            for &(w, a) in &self.neighbors[self.offsets[v]..self.offsets[v + 1]] {
                let xw = &data[w * dim..(w + 1) * dim];
                let c = self.lambda1 * a;
                for k in 0..dim {
                    acc[k] -= c * (xv[k] - xw[k]);
                }
            }
            for k in 0..dim {
                if accumulate {
                    g[k] += scale * acc[k];
                } else {
                    g[k] = scale * acc[k];
                }
            }
        }
    }

    pub fn gradient(&self, data: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n * dim];
        self.gradient_rows(data, dim, 1.0, 0, &mut out, false);
        out
    }

    /// `out += scale * grad`, row-parallel.
    pub fn add_gradient(&self, data: &[f64], dim: usize, scale: f64, out: &mut [f64], par: &Parallelism) {
        const ROWS_PER_CHUNK: usize = 256;
        par.for_each_chunk_mut(out, ROWS_PER_CHUNK * dim, |start, chunk| {
            self.gradient_rows(data, dim, scale, start / dim, chunk, true)
        });
    }
}

/// Log prior density up to its normalizing constant.
pub fn log_prior(state: &EmbeddingState, graph: &PriorGraph) -> Result<f64> {
    Ok(graph.index(state)?.log_prior(state.as_slice(), state.dim()))
}

/// Gradient of [`log_prior`], same shape as the state (row-major).
pub fn prior_gradient(state: &EmbeddingState, graph: &PriorGraph) -> Result<Vec<f64>> {
    Ok(graph.index(state)?.gradient(state.as_slice(), state.dim()))
}

/// Row index lookup by key for a list of keys.
pub fn key_index(keys: &[NodeKey]) -> HashMap<&NodeKey, usize> {
    keys.iter().enumerate().map(|(i, k)| (k, i)).collect()
}

use std::collections::HashMap;

use super::NodeKey;
use crate::error::{Error, Result};

/// One `dim`-sized parameter vector per [`NodeKey`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    keys: Vec<NodeKey>,
    index: HashMap<NodeKey, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingState {
    pub fn zeros(keys: Vec<NodeKey>, dim: usize) -> Result<Self> {
        let n = keys.len();
        Self::from_data(keys, dim, vec![0.0; n * dim])
    }

    pub fn from_data(keys: Vec<NodeKey>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be >= 1".into()));
        }
        if data.len() != keys.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} keys of dimension {dim}",
                data.len(),
                keys.len()
            )));
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Shape(format!("duplicate node key `{k}`")));
            }
        }
        Ok(EmbeddingState {
            keys,
            index,
            dim,
            data,
        })
    }

    pub fn from_rows(rows: Vec<(NodeKey, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map(|r| r.1.len()).unwrap_or(1);
        let mut keys = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (k, v) in rows {
            if v.len() != dim {
                return Err(Error::Shape(format!("row `{k}` has {} values, expected {dim}", v.len())));
            }
            keys.push(k);
            data.extend(v);
        }
        Self::from_data(keys, dim, data)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn keys(&self) -> &[NodeKey] {
        &self.keys
    }

    pub fn index_of(&self, key: &NodeKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn require(&self, key: &NodeKey) -> Result<usize> {
        self.index_of(key)
            .ok_or_else(|| Error::UnknownNode(key.to_string()))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, key: &NodeKey) -> Option<&[f64]> {
        self.index_of(key).map(|i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// First non-finite entry, as (row, key).
    pub fn first_non_finite(&self) -> Option<(usize, &NodeKey)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.dim, &self.keys[p / self.dim]))
    }

    /// Applies `x -> x * R` to every row, with `r` a row-major `dim x dim` matrix.
    pub fn transform_rows(&mut self, r: &[f64]) {
        let d = self.dim;
        assert_eq!(r.len(), d * d);
        let mut tmp = vec![0.0; d];
        for row in self.data.chunks_mut(d) {
            for (j, t) in tmp.iter_mut().enumerate() {
                *t = (0..d).map(|i| row[i] * r[i * d + j]).sum();
            }
            row.copy_from_slice(&tmp);
        }
    }

    /// Copy restricted to `keys` (in that order).
    pub fn select(&self, keys: &[NodeKey]) -> Result<EmbeddingState> {
        let mut data = Vec::with_capacity(keys.len() * self.dim);
        for k in keys {
            data.extend_from_slice(self.row(self.require(k)?));
        }
        Self::from_data(keys.to_vec(), self.dim, data)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

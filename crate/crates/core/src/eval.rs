//! Evaluation: word similarity, nearest neighbors, lexicon induction,
//! Procrustes alignment and group divergence.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{dot, group_time_label, norm, sq_dist, EmbeddingState, NodeKey, Role};
use crate::par::Parallelism;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityBenchmark {
    pub pairs: Vec<(String, String, f64)>,
}

impl SimilarityBenchmark {
    /// `word1 word2 score` per line, whitespace or TAB separated. A first
    /// line whose score does not parse is treated as a header.
    pub fn parse(text: &str, path: &Path, lowercase: bool) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() || f[0].starts_with('#') {
                continue;
            }
            if f.len() != 3 {
                return Err(Error::parse(path, i + 1, "expected `word1 word2 score`"));
            }
            let score = match f[2].parse::<f64>() {
                Ok(s) if s.is_finite() => s,
                _ if i == 0 => continue,
                _ => return Err(Error::parse(path, i + 1, format!("bad score `{}`", f[2]))),
            };
            let norm = |s: &str| if lowercase { s.to_lowercase() } else { s.to_owned() };
            pairs.push((norm(f[0]), norm(f[1]), score));
        }
        Ok(SimilarityBenchmark { pairs })
    }

    pub fn read(path: &Path, lowercase: bool) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, lowercase)
    }
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman correlation: Pearson correlation of average ranks. Zero when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpearmanResult {
    pub rho: f64,
    /// Fraction of benchmark pairs with both words present.
    pub coverage: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Spearman between human scores and cosine similarity of `rho` vectors in
/// `partition`; pairs with a missing word are skipped.
pub fn spearman_eval(bench: &SimilarityBenchmark, state: &EmbeddingState, partition: &str) -> Result<SpearmanResult> {
    let (mut model, mut human) = (Vec::new(), Vec::new());
    for (a, b, s) in &bench.pairs {
        let (Some(va), Some(vb)) = (
            state.get(&NodeKey::rho(partition, a.as_str())),
            state.get(&NodeKey::rho(partition, b.as_str())),
        ) else {
            continue;
        };
        model.push(cosine(va, vb));
        human.push(*s);
    }
    if model.is_empty() {
        return Err(Error::NothingToEvaluate(format!("no benchmark pair found in partition `{partition}`")));
    }
    let total = bench.pairs.len();
    Ok(SpearmanResult {
        rho: spearman(&model, &human),
        coverage: model.len() as f64 / total as f64,
        evaluated: model.len(),
        skipped: total - model.len(),
    })
}

/// Restricts neighbor candidates by role and/or partition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborFilter {
    pub role: Option<Role>,
    pub partition: Option<String>,
}

impl NeighborFilter {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn same_role_partition(key: &NodeKey) -> Self {
        NeighborFilter {
            role: Some(key.role),
            partition: Some(key.partition.clone()),
        }
    }

    pub fn accepts(&self, key: &NodeKey) -> bool {
        self.role.is_none_or(|r| r == key.role) && self.partition.as_ref().is_none_or(|p| *p == key.partition)
    }
}

fn by_score_then_key(a: &(f64, String), b: &(f64, String)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

/// `k` nearest nodes by cosine similarity, most similar first; ties are
/// broken by the lexicographic order of the key text.
pub fn nearest_neighbors(query: &NodeKey, state: &EmbeddingState, k: usize, filter: NeighborFilter) -> Result<Vec<(NodeKey, f64)>> {
    let q = state.row(state.require(query)?);
    let mut scored: Vec<(f64, String, usize)> = state
        .keys()
        .iter()
        .enumerate()
        .filter(|(_, key)| *key != query && filter.accepts(key))
        .map(|(i, key)| (cosine(q, state.row(i)), key.to_string(), i))
        .collect();
    scored.sort_by(|a, b| by_score_then_key(&(a.0, a.1.clone()), &(b.0, b.1.clone())));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(s, _, i)| (state.keys()[i].clone(), s))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BliLexicon {
    pub pairs: Vec<(String, String)>,
    /// Free-form label such as `en-it`.
    pub direction: String,
}

impl BliLexicon {
    /// `source<TAB>target` lines (whitespace also accepted).
    pub fn parse(text: &str, path: &Path, direction: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                [] => continue,
                [c, ..] if c.starts_with('#') => continue,
                [a, b] => pairs.push((a.to_string(), b.to_string())),
                _ => return Err(Error::parse(path, i + 1, "expected `source<TAB>target`")),
            }
        }
        Ok(BliLexicon {
            pairs,
            direction: direction.to_owned(),
        })
    }

    pub fn read(path: &Path, direction: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, direction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BliReport {
    /// `(k, precision@k)` in the order requested.
    pub precision: Vec<(usize, f64)>,
    pub evaluated: usize,
    pub skipped: usize,
}

pub const BLI_LEVELS: [usize; 3] = [1, 5, 15];

/// Precision@k of translation retrieval: a source word scores a hit at `k`
/// when any gold target is among its `k` nearest `rho` vectors in the
/// target partition. The candidate pool is the whole target vocabulary.
pub fn bli_eval(
    lexicon: &BliLexicon,
    state: &EmbeddingState,
    source: &str,
    target: &str,
    k_levels: &[usize],
    par: &Parallelism,
) -> Result<BliReport> {
    let mut gold: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut skipped = 0;
    for (s, t) in &lexicon.pairs {
        let ok = state.index_of(&NodeKey::rho(source, s.as_str())).is_some()
            && state.index_of(&NodeKey::rho(target, t.as_str())).is_some();
        if ok {
            gold.entry(s.as_str()).or_default().push(t.as_str());
        } else {
            skipped += 1;
        }
    }
    if gold.is_empty() {
        return Err(Error::NothingToEvaluate("lexicon empty after OOV filtering".into()));
    }
    let unit = |v: &[f64]| {
        let n = norm(v);
        v.iter().map(|x| if n > 0.0 { x / n } else { 0.0 }).collect::<Vec<f64>>()
    };
    let cands: Vec<(&str, Vec<f64>)> = state
        .keys()
        .iter()
        .enumerate()
        .filter(|(_, k)| k.role == Role::Rho && k.partition == target)
        .map(|(i, k)| (k.word.as_str(), unit(state.row(i))))
        .collect();
    let queries: Vec<(&str, &Vec<&str>)> = gold.iter().map(|(s, g)| (*s, g)).collect();
    // Rank of the best gold target for each query (0-based).
    let best_rank: Vec<usize> = par.map(&queries, |(s, golds)| {
        let q = unit(state.get(&NodeKey::rho(source, *s)).expect("filtered"));
        let mut scored: Vec<(f64, &str)> = cands.iter().map(|(w, v)| (dot(&q, v), *w)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        scored
            .iter()
            .position(|(_, w)| golds.contains(w))
            .expect("gold target is a candidate")
    });
    let n = best_rank.len() as f64;
    let precision = k_levels
        .iter()
        .map(|&k| (k, best_rank.iter().filter(|&&r| r < k).count() as f64 / n))
        .collect();
    Ok(BliReport {
        precision,
        evaluated: best_rank.len(),
        skipped,
    })
}

/// Orthogonal `W` (row-major `d x d`) minimizing `sum_i |x_i W - y_i|^2`
/// for row-aligned `n x d` matrices: `W = U V^T` where `X^T Y = U S V^T`.
pub fn procrustes_map(x: &[f64], y: &[f64], d: usize) -> Result<Vec<f64>> {
    if d == 0 || x.len() != y.len() || !x.len().is_multiple_of(d) {
        return Err(Error::Shape("procrustes inputs must be row-aligned n x d matrices".into()));
    }
    let n = x.len() / d;
    let xm = DMatrix::from_row_slice(n, d, x);
    let ym = DMatrix::from_row_slice(n, d, y);
    let m = xm.transpose() * ym;
    if m.iter().all(|v| *v == 0.0) || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("X^T Y has rank 0".into()));
    }
    let svd = m.svd(true, true);
    let w = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(w[(i, j)]);
        }
    }
    Ok(out)
}

/// `sum_i |x_i W - y_i|^2`.
pub fn procrustes_residual(x: &[f64], y: &[f64], w: &[f64], d: usize) -> f64 {
    let mut total = 0.0;
    for (xr, yr) in x.chunks(d).zip(y.chunks(d)) {
        for j in 0..d {
            let v: f64 = (0..d).map(|i| xr[i] * w[i * d + j]).sum();
            total += (v - yr[j]) * (v - yr[j]);
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    /// Every comparable word with its distance, largest first; ties by word.
    pub ranked: Vec<(String, f64)>,
    /// Words lacking a vector in either partition.
    pub missing: Vec<String>,
}

impl DivergenceReport {
    pub fn top(&self, k: usize) -> &[(String, f64)] {
        &self.ranked[..k.min(self.ranked.len())]
    }
}

/// Euclidean distance between `rho:a:w` and `rho:b:w` for each word.
pub fn group_divergence<S: AsRef<str>>(state: &EmbeddingState, words: &[S], partition_a: &str, partition_b: &str) -> DivergenceReport {
    let mut ranked = Vec::new();
    let mut missing = Vec::new();
    for w in words {
        let w = w.as_ref();
        match (
            state.get(&NodeKey::rho(partition_a, w)),
            state.get(&NodeKey::rho(partition_b, w)),
        ) {
            (Some(a), Some(b)) => ranked.push((w.to_owned(), sq_dist(a, b).sqrt())),
            _ => missing.push(w.to_owned()),
        }
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    DivergenceReport { ranked, missing }
}

/// `(word, timestep, distance)` rows for each timestep's `group@timestep`
/// partitions, restricted to the words ranked in the top `top_k` at any
/// timestep.
pub fn divergence_series<S: AsRef<str>>(
    state: &EmbeddingState,
    words: &[S],
    group_a: &str,
    group_b: &str,
    timesteps: &[S],
    top_k: usize,
) -> Vec<(String, String, f64)> {
    let reports: Vec<(String, DivergenceReport)> = timesteps
        .iter()
        .map(|t| {
            let t = t.as_ref();
            let r = group_divergence(
                state,
                words,
                &group_time_label(group_a, t),
                &group_time_label(group_b, t),
            );
            (t.to_owned(), r)
        })
        .collect();
    let mut keep: Vec<&str> = reports
        .iter()
        .flat_map(|(_, r)| r.top(top_k).iter().map(|(w, _)| w.as_str()))
        .collect();
    keep.sort_unstable();
    keep.dedup();
    let mut rows = Vec::new();
    for w in keep {
        for (t, r) in &reports {
            if let Some((_, d)) = r.ranked.iter().find(|(x, _)| x == w) {
                rows.push((w.to_owned(), t.clone(), *d));
            }
        }
    }
    rows
}

pub fn write_series_csv<W: Write>(rows: &[(String, String, f64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "word,timestep,distance")?;
    for (w, t, d) in rows {
        writeln!(out, "{w},{t},{d}")?;
    }
    Ok(())
}

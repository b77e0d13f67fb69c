//! Negative-sampling likelihoods (CBOW and skip-gram), their analytic
//! gradients, and the log posterior.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{NoiseSampler, PartitionedCorpus, Vocabulary, WindowSample, GLOBAL_PARTITION};
use crate::error::{Error, Result};
use crate::graph::{dot, EmbeddingState, NodeKey, PriorGraph, Role};
use crate::par::Parallelism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    #[default]
    Cbow,
    Sgns,
}

/// Whether context vectors are one global set or one set per partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContextSharing {
    #[default]
    Shared,
    PerPartition,
}

const NO_ROW: u32 = u32::MAX;

/// Maps (partition, word) to `rho` rows and words to `alpha` rows.
///
/// Word vectors exist for every (partition, word) pair that occurs in the
/// corpus. Context vectors are global (`alpha:_:w`) under
/// [`ContextSharing::Shared`], otherwise per partition.
#[derive(Debug, Clone)]
pub struct LogitContext {
    keys: Vec<NodeKey>,
    partitions: Vec<String>,
    rho: Vec<Vec<u32>>,
    alpha: Vec<Vec<u32>>,
    sharing: ContextSharing,
}

impl LogitContext {
    pub fn from_corpus(corpus: &PartitionedCorpus, vocab: &Vocabulary, sharing: ContextSharing) -> Self {
        let counts = corpus.partition_counts(vocab.len());
        let present: Vec<Vec<bool>> = counts
            .iter()
            .map(|c| c.iter().map(|&n| n > 0).collect())
            .collect();
        Self::with_presence(&corpus.partitions, vocab, sharing, &present)
    }

    /// Every word in every partition.
    pub fn full(partitions: &[String], vocab: &Vocabulary, sharing: ContextSharing) -> Self {
        let present = vec![vec![true; vocab.len()]; partitions.len()];
        Self::with_presence(partitions, vocab, sharing, &present)
    }

    fn with_presence(
        partitions: &[String],
        vocab: &Vocabulary,
        sharing: ContextSharing,
        present: &[Vec<bool>],
    ) -> Self {
        let v = vocab.len();
        let mut keys = Vec::new();
        let mut rho = vec![vec![NO_ROW; v]; partitions.len()];
        for (p, label) in partitions.iter().enumerate() {
            for w in 0..v {
                if present[p][w] {
                    rho[p][w] = keys.len() as u32;
                    keys.push(NodeKey::rho(label.as_str(), vocab.word(w as u32)));
                }
            }
        }
        let alpha = match sharing {
            ContextSharing::Shared => {
                let mut row = vec![NO_ROW; v];
                for w in 0..v {
                    if present.iter().any(|p| p[w]) {
                        row[w] = keys.len() as u32;
                        keys.push(NodeKey::alpha(GLOBAL_PARTITION, vocab.word(w as u32)));
                    }
                }
                vec![row]
            }
            ContextSharing::PerPartition => {
                let mut out = vec![vec![NO_ROW; v]; partitions.len()];
                for (p, label) in partitions.iter().enumerate() {
                    for w in 0..v {
                        if present[p][w] {
                            out[p][w] = keys.len() as u32;
                            keys.push(NodeKey::alpha(label.as_str(), vocab.word(w as u32)));
                        }
                    }
                }
                out
            }
        };
        LogitContext {
            keys,
            partitions: partitions.to_vec(),
            rho,
            alpha,
            sharing,
        }
    }

    pub fn keys(&self) -> &[NodeKey] {
        &self.keys
    }

    pub fn partitions(&self) -> &[String] {
        &self.partitions
    }

    pub fn sharing(&self) -> ContextSharing {
        self.sharing
    }

    pub fn rho_row(&self, partition: usize, word: u32) -> Option<usize> {
        let r = self.rho[partition][word as usize];
        (r != NO_ROW).then_some(r as usize)
    }

    pub fn alpha_row(&self, partition: usize, word: u32) -> Option<usize> {
        let p = match self.sharing {
            ContextSharing::Shared => 0,
            ContextSharing::PerPartition => partition,
        };
        let r = self.alpha[p][word as usize];
        (r != NO_ROW).then_some(r as usize)
    }

    fn rho_of(&self, partition: usize, word: u32) -> usize {
        self.rho_row(partition, word)
            .unwrap_or_else(|| panic!("no rho row for word {word} in partition {partition}"))
    }

    fn alpha_of(&self, partition: usize, word: u32) -> usize {
        self.alpha_row(partition, word)
            .unwrap_or_else(|| panic!("no alpha row for word {word} in partition {partition}"))
    }

    /// Negative samplers restricted to the words present in each partition,
    /// weighted by per-partition `count^exponent`. Partitions without tokens
    /// get `None`.
    pub fn noise_samplers(&self, corpus: &PartitionedCorpus, vocab_len: usize, exponent: f64) -> Result<Vec<Option<NoiseSampler>>> {
        let counts = corpus.partition_counts(vocab_len);
        counts
            .iter()
            .enumerate()
            .map(|(p, c)| {
                let ids: Vec<u32> = (0..vocab_len as u32)
                    .filter(|&w| c[w as usize] > 0 && self.rho_row(p, w).is_some())
                    .collect();
                if ids.is_empty() {
                    return Ok(None);
                }
                let weights: Vec<f64> = c.iter().map(|&n| (n as f64).powf(exponent)).collect();
                NoiseSampler::new(ids, &weights).map(Some)
            })
            .collect()
    }
}

/// Positive windows plus their negative draws.
///
/// For CBOW `negatives[i]` has `K` entries; for skip-gram it holds `K`
/// entries per context word, in context order.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub samples: Vec<WindowSample>,
    pub negatives: Vec<Vec<u32>>,
    pub likelihood: Likelihood,
}

impl Minibatch {
    /// Draws negatives for each sample from its partition's sampler; samples
    /// with an empty context are dropped.
    pub fn draw<R: Rng + ?Sized>(
        samples: Vec<WindowSample>,
        likelihood: Likelihood,
        k: usize,
        samplers: &[Option<NoiseSampler>],
        rng: &mut R,
    ) -> Self {
        let samples: Vec<WindowSample> = samples.into_iter().filter(|s| !s.context.is_empty()).collect();
        let negatives = samples
            .iter()
            .map(|s| {
                let n = match likelihood {
                    Likelihood::Cbow => k,
                    Likelihood::Sgns => k * s.context.len(),
                };
                samplers[s.partition]
                    .as_ref()
                    .expect("sampler for every partition with samples")
                    .draw(n, rng)
            })
            .collect();
        Minibatch {
            samples,
            negatives,
            likelihood,
        }
    }

    pub fn validate(&self, k: usize, ctx: &LogitContext) -> Result<()> {
        if self.negatives.len() != self.samples.len() {
            return Err(Error::Shape("one negative list per sample".into()));
        }
        for (s, negs) in self.samples.iter().zip(&self.negatives) {
            let want = match self.likelihood {
                Likelihood::Cbow => k,
                Likelihood::Sgns => k * s.context.len(),
            };
            if negs.len() != want {
                return Err(Error::Shape(format!("expected {want} negatives, got {}", negs.len())));
            }
            let missing = || Error::InvalidArgument(format!("sample references a word absent from partition {}", s.partition));
            if s.partition >= ctx.partitions.len() {
                return Err(missing());
            }
            for &w in std::iter::once(&s.center).chain(&s.context).chain(negs) {
                if ctx.rho_row(s.partition, w).is_none() || ctx.alpha_row(s.partition, w).is_none() {
                    return Err(missing());
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln sigma(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `ln(1 - sigma(x))`.
pub fn log_one_minus_sigmoid(x: f64) -> f64 {
    -softplus(x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn row(data: &[f64], dim: usize, i: usize) -> &[f64] {
    &data[i * dim..(i + 1) * dim]
}

fn context_sum(sample: &WindowSample, data: &[f64], dim: usize, ctx: &LogitContext) -> Vec<f64> {
    let mut h = vec![0.0; dim];
    for &w in &sample.context {
        let a = row(data, dim, ctx.alpha_of(sample.partition, w));
        for (hk, ak) in h.iter_mut().zip(a) {
            *hk += ak;
        }
    }
    h
}

/// `rho_target . sum(alpha_context)`; `None` when the context is empty.
pub fn cbow_logit(sample: &WindowSample, target: u32, state: &EmbeddingState, ctx: &LogitContext) -> Option<f64> {
    if sample.context.is_empty() {
        return None;
    }
    let h = context_sum(sample, state.as_slice(), state.dim(), ctx);
    Some(dot(state.row(ctx.rho_of(sample.partition, target)), &h))
}

/// `alpha_center . rho_other` within `partition`.
pub fn sgns_logit(center: u32, other: u32, partition: usize, state: &EmbeddingState, ctx: &LogitContext) -> f64 {
    dot(
        state.row(ctx.alpha_of(partition, center)),
        state.row(ctx.rho_of(partition, other)),
    )
}

fn sample_log_likelihood(sample: &WindowSample, negs: &[u32], lik: Likelihood, data: &[f64], dim: usize, ctx: &LogitContext) -> f64 {
    let p = sample.partition;
    match lik {
        Likelihood::Cbow => {
            if sample.context.is_empty() {
                return 0.0;
            }
            let h = context_sum(sample, data, dim, ctx);
            let pos = dot(row(data, dim, ctx.rho_of(p, sample.center)), &h);
            let mut ll = log_sigmoid(pos);
            for &n in negs {
                ll += log_one_minus_sigmoid(dot(row(data, dim, ctx.rho_of(p, n)), &h));
            }
            ll
        }
        Likelihood::Sgns => {
            let a = row(data, dim, ctx.alpha_of(p, sample.center));
            let k = if sample.context.is_empty() { 0 } else { negs.len() / sample.context.len() };
            let mut ll = 0.0;
            for (j, &o) in sample.context.iter().enumerate() {
                ll += log_sigmoid(dot(a, row(data, dim, ctx.rho_of(p, o))));
                for &n in &negs[j * k..(j + 1) * k] {
                    ll += log_one_minus_sigmoid(dot(a, row(data, dim, ctx.rho_of(p, n))));
                }
            }
            ll
        }
    }
}

/// Sum of positive `ln sigma(eta)` and negative `ln(1 - sigma(eta))` terms.
pub fn log_likelihood(batch: &Minibatch, state: &EmbeddingState, ctx: &LogitContext) -> f64 {
    log_likelihood_par(batch, state.as_slice(), state.dim(), ctx, &Parallelism::sequential())
}

pub(crate) const SAMPLES_PER_SHARD: usize = 64;

pub fn log_likelihood_par(batch: &Minibatch, data: &[f64], dim: usize, ctx: &LogitContext, par: &Parallelism) -> f64 {
    let shards: Vec<usize> = (0..batch.samples.len()).step_by(SAMPLES_PER_SHARD).collect();
    par.map(&shards, |&start| {
        let end = (start + SAMPLES_PER_SHARD).min(batch.samples.len());
        (start..end)
            .map(|i| sample_log_likelihood(&batch.samples[i], &batch.negatives[i], batch.likelihood, data, dim, ctx))
            .sum::<f64>()
    })
    .into_iter()
    .sum()
}

/// Row-sparse gradient: only rows touched by a batch are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrad {
    dim: usize,
    rows: Vec<usize>,
    values: Vec<f64>,
    slot: HashMap<usize, usize>,
}

impl SparseGrad {
    pub fn new(dim: usize) -> Self {
        SparseGrad {
            dim,
            rows: Vec::new(),
            values: Vec::new(),
            slot: HashMap::new(),
        }
    }

    fn entry(&mut self, row: usize) -> &mut [f64] {
        let dim = self.dim;
        let s = match self.slot.get(&row) {
            Some(&s) => s,
            None => {
                let s = self.rows.len();
                self.rows.push(row);
                self.values.resize(self.values.len() + dim, 0.0);
                self.slot.insert(row, s);
                s
            }
        };
        &mut self.values[s * dim..(s + 1) * dim]
    }

    /// `grad[row] += coef * v`
    pub fn add_scaled(&mut self, row: usize, coef: f64, v: &[f64]) {
        for (g, x) in self.entry(row).iter_mut().zip(v) {
            *g += coef * x;
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn get(&self, row: usize) -> Option<&[f64]> {
        self.slot
            .get(&row)
            .map(|&s| &self.values[s * self.dim..(s + 1) * self.dim])
    }

    /// `out[row] += scale * grad[row]` in insertion order.
    pub fn add_into(&self, out: &mut [f64], scale: f64) {
        let d = self.dim;
        for (s, &r) in self.rows.iter().enumerate() {
            for (o, g) in out[r * d..(r + 1) * d].iter_mut().zip(&self.values[s * d..(s + 1) * d]) {
                *o += scale * g;
            }
        }
    }

    pub fn to_dense(&self, n_rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_rows * self.dim];
        self.add_into(&mut out, 1.0);
        out
    }
}

fn sample_gradient(sample: &WindowSample, negs: &[u32], lik: Likelihood, data: &[f64], dim: usize, ctx: &LogitContext, out: &mut SparseGrad) {
    let p = sample.partition;
    match lik {
        Likelihood::Cbow => {
            if sample.context.is_empty() {
                return;
            }
            let h = context_sum(sample, data, dim, ctx);
            let mut h_grad = vec![0.0; dim];
            let targets = std::iter::once((sample.center, true)).chain(negs.iter().map(|&n| (n, false)));
            for (t, positive) in targets {
                let r = ctx.rho_of(p, t);
                let rho = row(data, dim, r);
                let eta = dot(rho, &h);
                let coef = if positive { 1.0 - sigmoid(eta) } else { -sigmoid(eta) };
                out.add_scaled(r, coef, &h);
                for (g, x) in h_grad.iter_mut().zip(rho) {
                    *g += coef * x;
                }
            }
            for &w in &sample.context {
                out.add_scaled(ctx.alpha_of(p, w), 1.0, &h_grad);
            }
        }
        Likelihood::Sgns => {
            let ar = ctx.alpha_of(p, sample.center);
            let a = row(data, dim, ar);
            let k = negs.len() / sample.context.len().max(1);
            let mut a_grad = vec![0.0; dim];
            for (j, &o) in sample.context.iter().enumerate() {
                let targets = std::iter::once((o, true)).chain(negs[j * k..(j + 1) * k].iter().map(|&n| (n, false)));
                for (t, positive) in targets {
                    let r = ctx.rho_of(p, t);
                    let rho = row(data, dim, r);
                    let eta = dot(a, rho);
                    let coef = if positive { 1.0 - sigmoid(eta) } else { -sigmoid(eta) };
                    out.add_scaled(r, coef, a);
                    for (g, x) in a_grad.iter_mut().zip(rho) {
                        *g += coef * x;
                    }
                }
            }
            out.add_scaled(ar, 1.0, &a_grad);
        }
    }
}

/// Gradient of [`log_likelihood`] with respect to the touched rows.
pub fn likelihood_gradient(batch: &Minibatch, state: &EmbeddingState, ctx: &LogitContext) -> SparseGrad {
    let shards = likelihood_gradient_shards(batch, state.as_slice(), state.dim(), ctx, &Parallelism::sequential());
    let mut merged = SparseGrad::new(state.dim());
    for shard in &shards {
        for &r in shard.rows() {
            merged.add_scaled(r, 1.0, shard.get(r).expect("row present"));
        }
    }
    merged
}

/// Per-shard gradients in shard order. Shard boundaries are fixed, so the
/// ordered reduction of the result does not depend on the thread count.
pub fn likelihood_gradient_shards(
    batch: &Minibatch,
    data: &[f64],
    dim: usize,
    ctx: &LogitContext,
    par: &Parallelism,
) -> Vec<SparseGrad> {
    let shards: Vec<usize> = (0..batch.samples.len()).step_by(SAMPLES_PER_SHARD).collect();
    par.map(&shards, |&start| {
        let end = (start + SAMPLES_PER_SHARD).min(batch.samples.len());
        let mut g = SparseGrad::new(dim);
        for i in start..end {
            sample_gradient(&batch.samples[i], &batch.negatives[i], batch.likelihood, data, dim, ctx, &mut g);
        }
        g
    })
}

/// Log-likelihood of every batch plus the log prior.
pub fn log_posterior<'a, I>(batches: I, state: &EmbeddingState, ctx: &LogitContext, graph: &PriorGraph) -> Result<f64>
where
    I: IntoIterator<Item = &'a Minibatch>,
{
    let ll: f64 = batches.into_iter().map(|b| log_likelihood(b, state, ctx)).sum();
    Ok(ll + crate::graph::log_prior(state, graph)?)
}

/// Role of a row according to its key.
pub fn row_role(ctx: &LogitContext, row: usize) -> Role {
    ctx.keys()[row].role
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::iter_windows;
    use crate::graph::{Edge, PriorGraph};
    use crate::verify::{finite_diff_gradient, random_orthogonal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_vocab(n: usize) -> Vocabulary {
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        Vocabulary::from_counts(words.into_iter().zip((1..=n as u64).rev()), 1, None).unwrap()
    }

    fn state_for(ctx: &LogitContext, dim: usize, rows: &[(&str, Vec<f64>)]) -> EmbeddingState {
        let mut s = EmbeddingState::zeros(ctx.keys().to_vec(), dim).unwrap();
        for (k, v) in rows {
            let i = s.require(&k.parse().unwrap()).unwrap();
            s.row_mut(i).copy_from_slice(v);
        }
        s
    }

    fn single_ctx(v: &Vocabulary) -> LogitContext {
        LogitContext::full(&[GLOBAL_PARTITION.to_string()], v, ContextSharing::Shared)
    }

    #[test]
    fn cbow_logit_examples() {
        let v = toy_vocab(3);
        let ctx = single_ctx(&v);
        let s = state_for(&ctx, 2, &[
            ("rho:_:w0", vec![1.0, 2.0]),
            ("alpha:_:w1", vec![0.0, 1.0]),
            ("alpha:_:w2", vec![1.0, 0.0]),
        ]);
        let sample = WindowSample { center: 0, context: vec![1, 2], partition: 0 };
        assert_eq!(cbow_logit(&sample, 0, &s, &ctx), Some(3.0));
        let single = WindowSample { center: 0, context: vec![1], partition: 0 };
        assert_eq!(cbow_logit(&single, 0, &s, &ctx), Some(2.0));
        let zero = EmbeddingState::zeros(ctx.keys().to_vec(), 2).unwrap();
        assert_eq!(cbow_logit(&sample, 0, &zero, &ctx), Some(0.0));
        let empty = WindowSample { center: 0, context: vec![], partition: 0 };
        assert_eq!(cbow_logit(&empty, 0, &s, &ctx), None);
    }

    #[test]
    fn sgns_logit_examples() {
        let v = toy_vocab(2);
        let ctx = single_ctx(&v);
        let s = state_for(&ctx, 2, &[("alpha:_:w0", vec![1.0, 0.0]), ("rho:_:w1", vec![1.0, 0.0])]);
        assert_eq!(sgns_logit(0, 1, 0, &s, &ctx), 1.0);
        let s = state_for(&ctx, 2, &[("alpha:_:w0", vec![1.0, 0.0]), ("rho:_:w1", vec![0.0, 1.0])]);
        assert_eq!(sgns_logit(0, 1, 0, &s, &ctx), 0.0);
        let s = state_for(&ctx, 2, &[("alpha:_:w0", vec![2.0, 1.0]), ("rho:_:w1", vec![1.0, -1.0])]);
        assert_eq!(sgns_logit(0, 1, 0, &s, &ctx), 1.0);
    }

    #[test]
    fn log_likelihood_at_zero_logits() {
        let v = toy_vocab(3);
        let ctx = single_ctx(&v);
        let s = EmbeddingState::zeros(ctx.keys().to_vec(), 2).unwrap();
        let batch = Minibatch {
            samples: vec![WindowSample { center: 0, context: vec![1], partition: 0 }],
            negatives: vec![vec![2]],
            likelihood: Likelihood::Cbow,
        };
        let ll = log_likelihood(&batch, &s, &ctx);
        assert!((ll - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!((ll + 1.3863).abs() < 1e-4);
    }

    #[test]
    fn stable_log_terms() {
        assert!((log_sigmoid(5.0) + 0.006715348489118068).abs() < 1e-15);
        assert!(log_sigmoid(1e3).abs() < 1e-300);
        for x in [-1e3, 1e3, -745.0, 745.0] {
            assert!(log_sigmoid(x).is_finite());
            assert!(log_one_minus_sigmoid(x).is_finite());
        }
        let mut x: f64 = -8.0;
        while x <= 8.0 {
            let s = 1.0 / (1.0 + (-x).exp());
            assert!((log_sigmoid(x) - s.ln()).abs() < 1e-10, "{x}");
            assert!((log_one_minus_sigmoid(x) - (1.0 - s).ln()).abs() < 1e-10, "{x}");
            assert!((sigmoid(x) - s).abs() < 1e-15);
            x += 0.25;
        }
    }

    #[test]
    fn gradient_coefficients_at_zero() {
        let v = toy_vocab(3);
        let ctx = single_ctx(&v);
        let s = state_for(&ctx, 2, &[("alpha:_:w1", vec![0.4, -0.2])]);
        let batch = Minibatch {
            samples: vec![WindowSample { center: 0, context: vec![1], partition: 0 }],
            negatives: vec![vec![2]],
            likelihood: Likelihood::Cbow,
        };
        let g = likelihood_gradient(&batch, &s, &ctx);
        let r0 = s.require(&"rho:_:w0".parse().unwrap()).unwrap();
        let r2 = s.require(&"rho:_:w2".parse().unwrap()).unwrap();
        assert_eq!(g.get(r0).unwrap(), &[0.2, -0.1]);
        assert_eq!(g.get(r2).unwrap(), &[-0.2, 0.1]);
    }

    fn random_batch(rng: &mut ChaCha8Rng, lik: Likelihood, v: &Vocabulary, ctx: &LogitContext, k: usize) -> Minibatch {
        let segs: Vec<Vec<u32>> = (0..3)
            .map(|_| (0..6).map(|_| rng.random_range(0..v.len() as u32)).collect())
            .collect();
        let corpus = PartitionedCorpus::single(segs);
        let samples: Vec<_> = iter_windows(&corpus, 2).collect();
        let samplers = vec![Some(v.noise_sampler())];
        let b = Minibatch::draw(samples, lik, k, &samplers, rng);
        b.validate(k, ctx).unwrap();
        b
    }

    fn random_state(rng: &mut ChaCha8Rng, ctx: &LogitContext, dim: usize) -> EmbeddingState {
        let data = (0..ctx.keys().len() * dim).map(|_| rng.random_range(-0.8..0.8)).collect();
        EmbeddingState::from_data(ctx.keys().to_vec(), dim, data).unwrap()
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = toy_vocab(5);
        let ctx = single_ctx(&v);
        for lik in [Likelihood::Cbow, Likelihood::Sgns] {
            for _ in 0..5 {
                let batch = random_batch(&mut rng, lik, &v, &ctx, 3);
                let s = random_state(&mut rng, &ctx, 3);
                let g = likelihood_gradient(&batch, &s, &ctx).to_dense(s.len());
                let fd = finite_diff_gradient(|x| log_likelihood(&batch, x, &ctx), &s, 1e-5);
                for (a, n) in g.iter().zip(&fd) {
                    let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                    assert!(rel < 1e-5, "{lik:?}: {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn parallel_shards_match_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = toy_vocab(40);
        let ctx = single_ctx(&v);
        let segs: Vec<Vec<u32>> = (0..30)
            .map(|_| (0..20).map(|_| rng.random_range(0..40)).collect())
            .collect();
        let corpus = PartitionedCorpus::single(segs);
        let batch = Minibatch::draw(iter_windows(&corpus, 3).collect(), Likelihood::Sgns, 4, &[Some(v.noise_sampler())], &mut rng);
        let s = random_state(&mut rng, &ctx, 8);
        let seq = likelihood_gradient_shards(&batch, s.as_slice(), 8, &ctx, &Parallelism::sequential());
        let par = likelihood_gradient_shards(&batch, s.as_slice(), 8, &ctx, &Parallelism::new(4));
        assert_eq!(seq, par);
        let a = log_likelihood_par(&batch, s.as_slice(), 8, &ctx, &Parallelism::sequential());
        let b = log_likelihood_par(&batch, s.as_slice(), 8, &ctx, &Parallelism::new(4));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn log_posterior_of_empty_stream_is_log_prior() {
        let v = toy_vocab(3);
        let ctx = single_ctx(&v);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(&mut rng, &ctx, 2);
        let g = PriorGraph::new(
            vec![Edge::new("rho:_:w0".parse().unwrap(), "alpha:_:w1".parse().unwrap())],
            0.5,
            2.0,
        )
        .unwrap();
        let lp = crate::graph::log_prior(&s, &g).unwrap();
        assert_eq!(log_posterior(std::iter::empty(), &s, &ctx, &g).unwrap(), lp);
    }

    #[test]
    fn log_posterior_matches_straight_line_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = toy_vocab(4);
        let ctx = single_ctx(&v);
        let s = random_state(&mut rng, &ctx, 2);
        let batch = random_batch(&mut rng, Likelihood::Cbow, &v, &ctx, 2);
        let g = PriorGraph::new(
            vec![Edge::new("rho:_:w0".parse().unwrap(), "rho:_:w1".parse().unwrap())],
            0.3,
            1.5,
        )
        .unwrap();
        // Term-by-term, naive sigmoid, independent of the stable helpers.
        let vecs = |k: String| s.get(&k.parse().unwrap()).unwrap().to_vec();
        let mut oracle = 0.0;
        for (smp, negs) in batch.samples.iter().zip(&batch.negatives) {
            let mut h = [0.0; 2];
            for &c in &smp.context {
                let a = vecs(format!("alpha:_:w{c}"));
                h[0] += a[0];
                h[1] += a[1];
            }
            let eta = |t: u32| {
                let r = vecs(format!("rho:_:w{t}"));
                r[0] * h[0] + r[1] * h[1]
            };
            oracle += (1.0 / (1.0 + (-eta(smp.center)).exp())).ln();
            for &n in negs {
                oracle += (1.0 - 1.0 / (1.0 + (-eta(n)).exp())).ln();
            }
        }
        let (r0, r1) = (vecs("rho:_:w0".into()), vecs("rho:_:w1".into()));
        oracle -= 0.5 * 1.5 * ((r0[0] - r1[0]).powi(2) + (r0[1] - r1[1]).powi(2));
        oracle -= 0.5 * 0.3 * s.as_slice().iter().map(|x| x * x).sum::<f64>();
        let lp = log_posterior([&batch], &s, &ctx, &g).unwrap();
        assert!((lp - oracle).abs() < 1e-10, "{lp} vs {oracle}");
    }

    #[test]
    fn likelihood_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let v = toy_vocab(6);
        let ctx = single_ctx(&v);
        for lik in [Likelihood::Cbow, Likelihood::Sgns] {
            let batch = random_batch(&mut rng, lik, &v, &ctx, 2);
            let s = random_state(&mut rng, &ctx, 4);
            let mut r = s.clone();
            r.transform_rows(&random_orthogonal(4, &mut rng));
            assert!((log_likelihood(&batch, &s, &ctx) - log_likelihood(&batch, &r, &ctx)).abs() < 1e-8);
        }
    }

    #[test]
    fn layout_follows_occurrence_and_sharing() {
        let v = toy_vocab(3);
        let corpus = PartitionedCorpus {
            partitions: vec!["A".into(), "B".into()],
            segments: vec![
                crate::corpus::Segment { partition: 0, tokens: vec![0, 1] },
                crate::corpus::Segment { partition: 1, tokens: vec![1, 2] },
            ],
        };
        let shared = LogitContext::from_corpus(&corpus, &v, ContextSharing::Shared);
        let names: Vec<String> = shared.keys().iter().map(|k| k.to_string()).collect();
        assert_eq!(names, ["rho:A:w0", "rho:A:w1", "rho:B:w1", "rho:B:w2", "alpha:_:w0", "alpha:_:w1", "alpha:_:w2"]);
        let per = LogitContext::from_corpus(&corpus, &v, ContextSharing::PerPartition);
        assert_eq!(per.keys().len(), 8);
        assert!(per.alpha_row(0, 2).is_none());
        let samplers = per.noise_samplers(&corpus, v.len(), 0.75).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(samplers[0].as_ref().unwrap().draw(100, &mut rng).iter().all(|&w| w < 2));
    }
}

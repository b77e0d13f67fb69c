//! Numeric oracles: finite differences, the model-equivalence identities
//! and the asymptotic trend checks.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{iter_windows, PartitionedCorpus, Vocabulary, GLOBAL_PARTITION};
use crate::error::{Error, Result};
use crate::eval::{procrustes_map, procrustes_residual};
use crate::graph::{build_translation_graph, dot, sq_dist, Edge, EmbeddingState, IndexedPrior, NodeKey, PriorGraph, Ridge, Role};
use crate::model::{
    likelihood_gradient, log_likelihood, sigmoid, log_sigmoid, log_one_minus_sigmoid, ContextSharing, Likelihood,
    LogitContext, Minibatch,
};
use crate::par::Parallelism;
use crate::synth::Bilingual;
use crate::train::{TrainConfig, Trainer};

/// Central differences of `f` in every coordinate of `state`.
pub fn finite_diff_gradient<F>(f: F, state: &EmbeddingState, h: f64) -> Vec<f64>
where
    F: Fn(&EmbeddingState) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut x = state.clone();
    (0..state.as_slice().len())
        .map(|i| {
            let orig = x.as_slice()[i];
            x.as_mut_slice()[i] = orig + h;
            let up = f(&x);
            x.as_mut_slice()[i] = orig - h;
            let down = f(&x);
            x.as_mut_slice()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Haar-distributed orthogonal matrix, row-major.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    (0..dim * dim).map(|k| q[(k / dim, k % dim)]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    /// The check could not reach the regime its contract is about.
    Inconclusive,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "true",
            Outcome::Fail => "false",
            Outcome::Inconclusive => "inconclusive",
        })
    }
}

/// One line of a `check metric value threshold pass` report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub check: String,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub outcome: Outcome,
}

impl ReportRow {
    /// Passes when `value <= threshold`.
    pub fn at_most(check: &str, metric: impl Into<String>, value: f64, threshold: f64) -> Self {
        ReportRow {
            check: check.to_owned(),
            metric: metric.into(),
            value,
            threshold,
            outcome: if value <= threshold { Outcome::Pass } else { Outcome::Fail },
        }
    }

    pub fn with_outcome(mut self, outcome: Outcome) -> Self {
        self.outcome = outcome;
        self
    }
}

pub fn write_report<W: Write>(rows: &[ReportRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "check\tmetric\tvalue\tthreshold\tpass")?;
    for r in rows {
        writeln!(out, "{}\t{}\t{:e}\t{:e}\t{}", r.check, r.metric, r.value, r.threshold, r.outcome)?;
    }
    Ok(())
}

pub fn all_pass(rows: &[ReportRow]) -> bool {
    rows.iter().all(|r| r.outcome == Outcome::Pass)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

// ---------------------------------------------------------------------------
// Full-posterior gradient against finite differences.

#[derive(Debug, Clone, PartialEq)]
pub struct GradInstance {
    pub likelihood: Likelihood,
    pub vocab_size: usize,
    pub dim: usize,
    pub relative_error: f64,
}

/// Random tiny models (V <= 10, D <= 4) with random weighted graphs; the
/// relative error is `|g - fd| / max(|g|, |fd|)` in the Euclidean norm.
pub fn grad_check(instances: usize, h: f64, seed: u64) -> Result<Vec<GradInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(instances);
    for i in 0..instances {
        let likelihood = if i % 2 == 0 { Likelihood::Cbow } else { Likelihood::Sgns };
        let v = rng.random_range(3..=10usize);
        let dim = rng.random_range(1..=4usize);
        let words: Vec<String> = (0..v).map(|j| format!("w{j}")).collect();
        let vocab = Vocabulary::from_counts(words.iter().cloned().zip((1..=v as u64).rev()), 1, None)?;
        let parts = rng.random_range(1..=2usize);
        let partitions: Vec<String> = (0..parts).map(|p| format!("p{p}")).collect();
        let sharing = if rng.random::<bool>() { ContextSharing::Shared } else { ContextSharing::PerPartition };
        let ctx = LogitContext::full(&partitions, &vocab, sharing);
        let corpus = PartitionedCorpus {
            partitions: partitions.clone(),
            segments: (0..4)
                .map(|s| crate::corpus::Segment {
                    partition: s % parts,
                    tokens: (0..6).map(|_| rng.random_range(0..v as u32)).collect(),
                })
                .collect(),
        };
        let samplers: Vec<_> = (0..parts).map(|_| Some(vocab.noise_sampler())).collect();
        let k = rng.random_range(1..=3usize);
        let batch = Minibatch::draw(iter_windows(&corpus, 2).collect(), likelihood, k, &samplers, &mut rng);
        let keys = ctx.keys().to_vec();
        let mut edges = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..rng.random_range(0..=2 * keys.len()) {
            let a = rng.random_range(0..keys.len());
            let b = rng.random_range(0..keys.len());
            if a != b && seen.insert((a.min(b), a.max(b))) {
                edges.push(Edge::weighted(keys[a].clone(), keys[b].clone(), rng.random_range(0.1..3.0)));
            }
        }
        let graph = PriorGraph::new(edges, rng.random_range(0.1..2.0), rng.random_range(0.0..5.0))?;
        let data = (0..keys.len() * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let state = EmbeddingState::from_data(keys, dim, data)?;
        let prior = graph.index(&state)?;
        let objective = |s: &EmbeddingState| log_likelihood(&batch, s, &ctx) + prior.log_prior(s.as_slice(), dim);
        let mut g = likelihood_gradient(&batch, &state, &ctx).to_dense(state.len());
        prior.add_gradient(state.as_slice(), dim, 1.0, &mut g, &Parallelism::sequential());
        let fd = finite_diff_gradient(objective, &state, h);
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let scale = l2(&g).max(l2(&fd)).max(1e-12);
        out.push(GradInstance {
            likelihood,
            vocab_size: v,
            dim,
            relative_error: l2(&diff) / scale,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dynamic embeddings as a chain-graph prior.

#[derive(Debug, Clone)]
pub struct DbmSpec {
    pub gamma0: f64,
    pub gamma1: f64,
    pub timesteps: Vec<String>,
    pub words: Vec<String>,
}

impl DbmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0 && self.gamma1 >= 0.0) || self.timesteps.len() < 2 {
            return Err(Error::InvalidArgument("need gamma0 > 0, gamma1 >= 0 and at least two timesteps".into()));
        }
        Ok(())
    }

    /// `rho:t:w` for every timestep and word, then global `alpha:_:w`.
    pub fn keys(&self) -> Vec<NodeKey> {
        let mut keys: Vec<NodeKey> = self
            .timesteps
            .iter()
            .flat_map(|t| self.words.iter().map(move |w| NodeKey::rho(t.as_str(), w.as_str())))
            .collect();
        keys.extend(self.words.iter().map(|w| NodeKey::alpha(GLOBAL_PARTITION, w.as_str())));
        keys
    }
}

/// Gradient of the random-walk prior, written out directly:
/// `-g0/2 |rho_0|^2 - g1/2 sum_t |rho_t - rho_{t+1}|^2 - g0/2 |alpha|^2`.
pub fn dbm_prior_gradient(spec: &DbmSpec, state: &EmbeddingState) -> Result<Vec<f64>> {
    let d = state.dim();
    let mut g = vec![0.0; state.as_slice().len()];
    for w in &spec.words {
        let rows: Vec<usize> = spec
            .timesteps
            .iter()
            .map(|t| state.require(&NodeKey::rho(t.as_str(), w.as_str())))
            .collect::<Result<_>>()?;
        let alpha = state.require(&NodeKey::alpha(GLOBAL_PARTITION, w.as_str()))?;
        for k in 0..d {
            g[rows[0] * d + k] -= spec.gamma0 * state.row(rows[0])[k];
            g[alpha * d + k] -= spec.gamma0 * state.row(alpha)[k];
            for pair in rows.windows(2) {
                let diff = state.row(pair[0])[k] - state.row(pair[1])[k];
                g[pair[0] * d + k] -= spec.gamma1 * diff;
                g[pair[1] * d + k] += spec.gamma1 * diff;
            }
        }
    }
    Ok(g)
}

/// The equivalent chain-graph prior: `lambda1 = gamma1`, ridge `gamma0` on
/// first-timestep word vectors and on context vectors, zero elsewhere.
pub fn dbm_as_pelp(spec: &DbmSpec, state: &EmbeddingState) -> Result<IndexedPrior> {
    spec.validate()?;
    let mut edges = Vec::new();
    for w in &spec.words {
        for pair in spec.timesteps.windows(2) {
            edges.push((
                state.require(&NodeKey::rho(pair[0].as_str(), w.as_str()))?,
                state.require(&NodeKey::rho(pair[1].as_str(), w.as_str()))?,
                1.0,
            ));
        }
    }
    let first = &spec.timesteps[0];
    let ridge = state
        .keys()
        .iter()
        .map(|k| match k.role {
            Role::Alpha => spec.gamma0,
            Role::Rho if k.partition == *first => spec.gamma0,
            Role::Rho => 0.0,
        })
        .collect();
    Ok(IndexedPrior::new(state.len(), edges, spec.gamma1, Ridge::PerNode(ridge)))
}

/// Max coordinate difference between the two prior gradients at `state`.
pub fn check_prop2(spec: &DbmSpec, state: &EmbeddingState) -> Result<f64> {
    spec.validate()?;
    if state.len() != spec.keys().len() {
        return Err(Error::Shape("state does not match the dynamic layout".into()));
    }
    let dbm = dbm_prior_gradient(spec, state)?;
    let pelp = dbm_as_pelp(spec, state)?.gradient(state.as_slice(), state.dim());
    Ok(max_abs_diff(&dbm, &pelp))
}

// ---------------------------------------------------------------------------
// Grouped embeddings as complete per-word subgraphs.

#[derive(Debug, Clone)]
pub struct GbmSpec {
    /// Precision of the shared mean.
    pub gamma0: f64,
    /// Precision of each group vector around the mean.
    pub gamma1: f64,
    pub groups: Vec<String>,
    pub words: Vec<String>,
}

impl GbmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.len() < 2 {
            return Err(Error::InvalidArgument("need at least two groups".into()));
        }
        if !(self.gamma0 > 0.0 && self.gamma1 > 0.0) {
            return Err(Error::InvalidArgument("gamma0 and gamma1 must be positive".into()));
        }
        Ok(())
    }

    pub fn keys(&self) -> Vec<NodeKey> {
        self.groups
            .iter()
            .flat_map(|g| self.words.iter().map(move |w| NodeKey::rho(g.as_str(), w.as_str())))
            .collect()
    }

    /// Hierarchical log prior for one coordinate of one word, as a function
    /// of the group values `x` and the shared mean `m`.
    fn joint(&self, x: &[f64], m: f64) -> f64 {
        -0.5 * self.gamma1 * x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() - 0.5 * self.gamma0 * m * m
    }

    fn joint_dm(&self, x: &[f64], m: f64) -> f64 {
        self.gamma1 * x.iter().map(|v| v - m).sum::<f64>() - self.gamma0 * m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop3Report {
    /// Mean shrinkage recovered from the stationarity condition.
    pub gamma: f64,
    /// `gamma1 / (|S| gamma1 + gamma0)`.
    pub gamma_formula: f64,
    /// Recovered complete-graph edge weight.
    pub edge_weight: f64,
    /// Recovered per-node ridge.
    pub ridge: f64,
    pub max_discrepancy: f64,
}

/// Profiled-mean gradient of the grouped prior: `-g1 (rho_s - gamma sum rho)`.
/// The mean is profiled by solving its linear stationarity condition.
pub fn gbm_profiled_gradient(spec: &GbmSpec, state: &EmbeddingState) -> Result<Vec<f64>> {
    let d = state.dim();
    let mut g = vec![0.0; state.as_slice().len()];
    for w in &spec.words {
        let rows: Vec<usize> = spec
            .groups
            .iter()
            .map(|s| state.require(&NodeKey::rho(s.as_str(), w.as_str())))
            .collect::<Result<_>>()?;
        for k in 0..d {
            let x: Vec<f64> = rows.iter().map(|&r| state.row(r)[k]).collect();
            let m = profile_mean(spec, &x);
            for (&r, v) in rows.iter().zip(&x) {
                g[r * d + k] = -spec.gamma1 * (v - m);
            }
        }
    }
    Ok(g)
}

/// Root of the (affine) derivative of the joint log prior in the mean.
fn profile_mean(spec: &GbmSpec, x: &[f64]) -> f64 {
    let f0 = spec.joint_dm(x, 0.0);
    let f1 = spec.joint_dm(x, 1.0);
    f0 / (f0 - f1)
}

/// Profiled log prior of one word coordinate (used to read off the
/// quadratic form).
fn gbm_profiled_value(spec: &GbmSpec, x: &[f64]) -> f64 {
    spec.joint(x, profile_mean(spec, x))
}

/// Recovers `gamma`, then the edge weight and ridge of the equivalent
/// complete-graph prior from the profiled quadratic form on basis vectors,
/// and compares gradients at `state`.
pub fn check_prop3(spec: &GbmSpec, state: &EmbeddingState) -> Result<Prop3Report> {
    spec.validate()?;
    let s = spec.groups.len();
    let mut e1 = vec![0.0; s];
    e1[0] = 1.0;
    let gamma = profile_mean(spec, &e1);
    // Quadratic form P(x) = -1/2 x^T Q x; Q_ii = -2 P(e_i) and
    // Q_ij = -(P(e_i + e_j) - P(e_i) - P(e_j)).
    let p_i = gbm_profiled_value(spec, &e1);
    let mut e12 = e1.clone();
    e12[1] = 1.0;
    let p_ij = gbm_profiled_value(spec, &e12);
    let q_ii = -2.0 * p_i;
    let q_ij = -(p_ij - 2.0 * p_i);
    let edge_weight = -q_ij;
    let ridge = q_ii - (s as f64 - 1.0) * edge_weight;

    let mut edges = Vec::new();
    for w in &spec.words {
        let rows: Vec<usize> = spec
            .groups
            .iter()
            .map(|g| state.require(&NodeKey::rho(g.as_str(), w.as_str())))
            .collect::<Result<_>>()?;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                edges.push((rows[i], rows[j], edge_weight));
            }
        }
    }
    let pelp = IndexedPrior::new(state.len(), edges, 1.0, Ridge::Uniform(ridge));
    let a = gbm_profiled_gradient(spec, state)?;
    let b = pelp.gradient(state.as_slice(), state.dim());
    Ok(Prop3Report {
        gamma,
        gamma_formula: spec.gamma1 / (s as f64 * spec.gamma1 + spec.gamma0),
        edge_weight,
        ridge,
        max_discrepancy: max_abs_diff(&a, &b),
    })
}

// ---------------------------------------------------------------------------
// Dictionary-augmented skip-gram as a point-dependent Laplacian prior.

/// Skip-gram objective with negatives drawn once and aggregated into pair
/// counts, plus strong-pair terms and a ridge. Deterministic, so it can be
/// driven to a stationary point.
#[derive(Debug, Clone)]
pub struct Dict2VecObjective {
    pub n_rows: usize,
    pub dim: usize,
    /// `(alpha row, rho row, count)` for positive pairs.
    pub positive: Vec<(usize, usize, f64)>,
    pub negative: Vec<(usize, usize, f64)>,
    /// `(rho row, alpha row)` strong pairs.
    pub strong: Vec<(usize, usize)>,
    pub gamma0: f64,
}

impl Dict2VecObjective {
    /// Aggregates an SGNS batch over a single shared-context layout.
    pub fn new(batch: &Minibatch, ctx: &LogitContext, strong_edges: &[Edge], gamma0: f64, dim: usize) -> Result<Self> {
        if batch.likelihood != Likelihood::Sgns {
            return Err(Error::InvalidArgument("the dictionary objective uses the skip-gram likelihood".into()));
        }
        let mut pos: HashMap<(usize, usize), f64> = HashMap::new();
        let mut neg: HashMap<(usize, usize), f64> = HashMap::new();
        let row = |role: Role, p: usize, w: u32| match role {
            Role::Rho => ctx.rho_row(p, w),
            Role::Alpha => ctx.alpha_row(p, w),
        }
        .ok_or_else(|| Error::InvalidArgument("batch word outside the layout".into()));
        for (s, negs) in batch.samples.iter().zip(&batch.negatives) {
            let a = row(Role::Alpha, s.partition, s.center)?;
            let k = negs.len() / s.context.len().max(1);
            for (j, &o) in s.context.iter().enumerate() {
                *pos.entry((a, row(Role::Rho, s.partition, o)?)).or_default() += 1.0;
                for &n in &negs[j * k..(j + 1) * k] {
                    *neg.entry((a, row(Role::Rho, s.partition, n)?)).or_default() += 1.0;
                }
            }
        }
        let index: HashMap<&NodeKey, usize> = ctx.keys().iter().enumerate().map(|(i, k)| (k, i)).collect();
        let mut strong = Vec::new();
        for e in strong_edges {
            let (r, a) = match (e.a.role, e.b.role) {
                (Role::Rho, Role::Alpha) => (&e.a, &e.b),
                (Role::Alpha, Role::Rho) => (&e.b, &e.a),
                _ => return Err(Error::Graph("strong pairs link a word vector to a context vector".into())),
            };
            let lookup = |k: &NodeKey| index.get(k).copied().ok_or_else(|| Error::UnknownNode(k.to_string()));
            strong.push((lookup(r)?, lookup(a)?));
        }
        let sorted = |m: HashMap<(usize, usize), f64>| {
            let mut v: Vec<(usize, usize, f64)> = m.into_iter().map(|((a, b), c)| (a, b, c)).collect();
            v.sort_by_key(|x| (x.0, x.1));
            v
        };
        Ok(Dict2VecObjective {
            n_rows: ctx.keys().len(),
            dim,
            positive: sorted(pos),
            negative: sorted(neg),
            strong,
            gamma0,
        })
    }

    fn row<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[i * self.dim..(i + 1) * self.dim]
    }

    /// Skip-gram log-likelihood of the aggregated pairs.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let pos: f64 = self
            .positive
            .iter()
            .map(|&(a, r, c)| c * log_sigmoid(dot(self.row(x, a), self.row(x, r))))
            .sum();
        let neg: f64 = self
            .negative
            .iter()
            .map(|&(a, r, c)| c * log_one_minus_sigmoid(dot(self.row(x, a), self.row(x, r))))
            .sum();
        pos + neg
    }

    pub fn log_likelihood_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut add = |a: usize, r: usize, coef: f64| {
            for k in 0..self.dim {
                g[a * self.dim + k] += coef * x[r * self.dim + k];
                g[r * self.dim + k] += coef * x[a * self.dim + k];
            }
        };
        for &(a, r, c) in &self.positive {
            add(a, r, c * (1.0 - sigmoid(dot(self.row(x, a), self.row(x, r)))));
        }
        for &(a, r, c) in &self.negative {
            add(a, r, -c * sigmoid(dot(self.row(x, a), self.row(x, r))));
        }
        g
    }

    /// Strong-pair terms plus ridge: `sum log sigma(rho_r . alpha_a) - g0/2 |x|^2`.
    pub fn strong_pair_log_prior(&self, x: &[f64]) -> f64 {
        let pairs: f64 = self
            .strong
            .iter()
            .map(|&(r, a)| log_sigmoid(dot(self.row(x, r), self.row(x, a))))
            .sum();
        pairs - 0.5 * self.gamma0 * dot(x, x)
    }

    pub fn strong_pair_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = x.iter().map(|v| -self.gamma0 * v).collect();
        for &(r, a) in &self.strong {
            let l = 1.0 - sigmoid(dot(self.row(x, r), self.row(x, a)));
            for k in 0..self.dim {
                g[r * self.dim + k] += l * x[a * self.dim + k];
                g[a * self.dim + k] += l * x[r * self.dim + k];
            }
        }
        g
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.log_likelihood(x) + self.strong_pair_log_prior(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.log_likelihood_gradient(x);
        for (a, b) in g.iter_mut().zip(self.strong_pair_gradient(x)) {
            *a += b;
        }
        g
    }

    /// The weighted graph at `x`: edge weight `l = 1 - sigma(rho . alpha)`
    /// per strong pair, and per-node diagonal `gamma0 - sum of incident l`
    /// (which may be negative).
    pub fn equivalent_prior(&self, x: &[f64]) -> IndexedPrior {
        let mut diag = vec![self.gamma0; self.n_rows];
        let edges: Vec<(usize, usize, f64)> = self
            .strong
            .iter()
            .map(|&(r, a)| {
                let l = 1.0 - sigmoid(dot(self.row(x, r), self.row(x, a)));
                diag[r] -= l;
                diag[a] -= l;
                (r, a, l)
            })
            .collect();
        IndexedPrior::new(self.n_rows, edges, 1.0, Ridge::PerNode(diag))
    }

    /// Max coordinate difference between the strong-pair gradient and the
    /// equivalent Laplacian gradient at `x`.
    pub fn pointwise_discrepancy(&self, x: &[f64]) -> f64 {
        let a = self.strong_pair_gradient(x);
        let b = self.equivalent_prior(x).gradient(x, self.dim);
        max_abs_diff(&a, &b)
    }

    /// Minimizes the negative objective with L-BFGS from `x0`.
    pub fn optimize(&self, x0: Vec<f64>, grad_tol: f64, max_iters: u64) -> Result<(Vec<f64>, u64)> {
        let ls = MoreThuenteLineSearch::new();
        let solver = LBFGS::new(ls, 20)
            .with_tolerance_grad(grad_tol)
            .and_then(|s| s.with_tolerance_cost(0.0))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let res = Executor::new(NegObjective(self), solver)
            .configure(|s| s.param(x0).max_iters(max_iters))
            .run()
            .map_err(|e| Error::Degenerate(format!("optimizer: {e}")))?;
        let iters = res.state().get_iter();
        let best = res
            .state()
            .get_best_param()
            .cloned()
            .ok_or_else(|| Error::Degenerate("optimizer produced no iterate".into()))?;
        Ok((best, iters))
    }

    /// Newton steps driven by the gradient alone. L-BFGS stalls once cost
    /// decreases fall below f64 resolution; this finishes the job. The
    /// Hessian comes from central differences of the analytic gradient and
    /// is pseudo-inverted, since rotations of all rows leave the objective
    /// unchanged.
    pub fn newton_polish(&self, mut x: Vec<f64>, grad_tol: f64, max_steps: usize) -> (Vec<f64>, usize) {
        let n = x.len();
        let mut g = self.gradient(&x);
        for step in 0..max_steps {
            let norm = l2(&g);
            if norm <= grad_tol {
                return (x, step);
            }
            let h = 1e-5;
            let mut hess = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                let keep = x[j];
                x[j] = keep + h;
                let gp = self.gradient(&x);
                x[j] = keep - h;
                let gm = self.gradient(&x);
                x[j] = keep;
                for i in 0..n {
                    hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
                }
            }
            let hess = (&hess + hess.transpose()) * 0.5;
            let rhs = nalgebra::DVector::from_column_slice(&g);
            let Ok(dx) = hess.svd(true, true).solve(&rhs, 1e-9) else {
                return (x, step);
            };
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a - t * d).collect();
                let gc = self.gradient(&cand);
                if l2(&gc) < norm {
                    x = cand;
                    g = gc;
                    break;
                }
                t *= 0.5;
                if t < 1e-4 {
                    return (x, step);
                }
            }
        }
        (x, max_steps)
    }
}

struct NegObjective<'a>(&'a Dict2VecObjective);

impl CostFunction for NegObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(-self.0.value(p))
    }
}

impl Gradient for NegObjective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.0.gradient(p).into_iter().map(|g| -g).collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Prop1Config {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub gamma0: f64,
    pub seed: u64,
    pub grad_tol: f64,
    pub max_iters: u64,
}

impl Default for Prop1Config {
    fn default() -> Self {
        Prop1Config {
            dim: 2,
            window: 2,
            negatives: 2,
            gamma0: 1.0,
            seed: 0,
            grad_tol: 1e-6,
            max_iters: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub iterations: u64,
    /// Gradient norm of the dictionary objective at the returned point.
    pub dict_grad_norm: f64,
    /// Gradient norm of the equivalent Laplacian-prior posterior there.
    pub pelp_grad_norm: f64,
    pub pointwise_discrepancy: f64,
    pub min_diagonal: f64,
    pub converged: bool,
}

/// Drives the dictionary objective to a stationary point, then evaluates
/// the gradient of the likelihood plus the equivalent graph prior there.
pub fn check_prop1(corpus: &PartitionedCorpus, vocab: &Vocabulary, strong_edges: &[Edge], cfg: &Prop1Config) -> Result<Prop1Report> {
    let ctx = LogitContext::full(&corpus.partitions, vocab, ContextSharing::Shared);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samplers = vec![Some(vocab.noise_sampler()); corpus.partitions.len()];
    let batch = Minibatch::draw(iter_windows(corpus, cfg.window).collect(), Likelihood::Sgns, cfg.negatives, &samplers, &mut rng);
    let obj = Dict2VecObjective::new(&batch, &ctx, strong_edges, cfg.gamma0, cfg.dim)?;
    let bound = 0.5 / cfg.dim as f64;
    let x0: Vec<f64> = (0..obj.n_rows * cfg.dim).map(|_| rng.random_range(-bound..bound)).collect();
    let (x, iterations) = obj.optimize(x0, cfg.grad_tol * 0.1, cfg.max_iters)?;
    let (x, polish) = obj.newton_polish(x, cfg.grad_tol * 0.1, 20);
    let iterations = iterations + polish as u64;
    let dict_grad_norm = l2(&obj.gradient(&x));
    let prior = obj.equivalent_prior(&x);
    let mut g = obj.log_likelihood_gradient(&x);
    prior.add_gradient(&x, cfg.dim, 1.0, &mut g, &Parallelism::sequential());
    let min_diagonal = (0..obj.n_rows)
        .map(|i| {
            let incident: f64 = prior
                .edges()
                .iter()
                .filter(|(a, b, _)| *a == i || *b == i)
                .map(|e| e.2)
                .sum();
            cfg.gamma0 - incident
        })
        .fold(f64::INFINITY, f64::min);
    Ok(Prop1Report {
        iterations,
        dict_grad_norm,
        pelp_grad_norm: l2(&g),
        pointwise_discrepancy: obj.pointwise_discrepancy(&x),
        min_diagonal,
        converged: dict_grad_norm <= cfg.grad_tol,
    })
}

/// Random reciprocal strong pairs among the `pool` most frequent words.
pub fn random_strong_pairs<R: Rng + ?Sized>(vocab: &Vocabulary, pairs: usize, pool: usize, rng: &mut R) -> Vec<Edge> {
    let pool = pool.min(vocab.len());
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    let mut attempts = 0;
    while seen.len() < pairs && attempts < 100 * pairs.max(1) {
        attempts += 1;
        let a = rng.random_range(0..pool as u32);
        let b = rng.random_range(0..pool as u32);
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        let (v, w) = (vocab.word(a.min(b)), vocab.word(a.max(b)));
        edges.push(Edge::new(NodeKey::rho(GLOBAL_PARTITION, v), NodeKey::alpha(GLOBAL_PARTITION, w)));
        edges.push(Edge::new(NodeKey::rho(GLOBAL_PARTITION, w), NodeKey::alpha(GLOBAL_PARTITION, v)));
    }
    edges
}

// ---------------------------------------------------------------------------
// Cross-lingual limits.

/// Trains the cross-lingual model with translation edges on `pairs`
/// (per-language context vectors).
pub fn train_bilingual(data: &Bilingual, pairs: &[(String, String)], config: &TrainConfig) -> Result<EmbeddingState> {
    let t = build_translation_graph(pairs, &data.vocab, &data.vocab, &data.lang_a, &data.lang_b);
    let graph = PriorGraph::new(t.edges, config.lambda0, config.lambda1)?;
    let config = TrainConfig {
        context_sharing: ContextSharing::PerPartition,
        ..config.clone()
    };
    let mut trainer = Trainer::new(&data.corpus, &data.vocab, &graph, &config)?;
    trainer.train(&data.corpus)?;
    Ok(trainer.into_state())
}

/// Mean `|theta_v - theta_w|` over the word- and context-vector edges of
/// the translation pairs.
pub fn mean_pair_distance(state: &EmbeddingState, data: &Bilingual, pairs: &[(String, String)]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (a, b) in pairs {
        for role in [Role::Rho, Role::Alpha] {
            let x = state.get(&NodeKey::new(role, data.lang_a.as_str(), a.as_str()));
            let y = state.get(&NodeKey::new(role, data.lang_b.as_str(), b.as_str()));
            if let (Some(x), Some(y)) = (x, y) {
                total += sq_dist(x, y).sqrt();
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::NothingToEvaluate("no translation pair in the state".into()));
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderPoint {
    pub lambda1: f64,
    pub value: f64,
}

/// Mean translation-pair distance for each `lambda1`, same seed throughout.
pub fn check_prop4(
    data: &Bilingual,
    pairs: &[(String, String)],
    ladder: &[f64],
    base: &TrainConfig,
    par: &Parallelism,
) -> Result<Vec<LadderPoint>> {
    if ladder.len() < 3 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ladder must be strictly increasing with at least 3 values".into()));
    }
    par.map(ladder, |&lambda1| {
        let cfg = TrainConfig { lambda1, ..base.clone() };
        let s = train_bilingual(data, pairs, &cfg)?;
        Ok(LadderPoint {
            lambda1,
            value: mean_pair_distance(&s, data, pairs)?,
        })
    })
    .into_iter()
    .collect()
}

/// Strictly decreasing and `last / first < ratio`.
pub fn prop4_rows(curve: &[LadderPoint], ratio: f64) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = curve
        .windows(2)
        .map(|w| {
            let mut r = ReportRow::at_most("prop4", format!("distance(l1={:e})/distance(l1={:e})", w[1].lambda1, w[0].lambda1), w[1].value / w[0].value, 1.0);
            if w[1].value >= w[0].value {
                r.outcome = Outcome::Fail;
            }
            r
        })
        .collect();
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        rows.push(ReportRow::at_most("prop4", "final/initial distance", last.value / first.value, ratio));
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop5Point {
    pub lambda1: f64,
    /// Per-sample log-likelihood gap to the decoupled run.
    pub likelihood_gap: f64,
    /// `|residual(PELP) - residual(decoupled)|` after Procrustes.
    pub residual_gap: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop5Result {
    pub points: Vec<Prop5Point>,
    pub mono_residual: f64,
    pub mono_log_likelihood: f64,
}

/// Mean squared Procrustes residual between the word vectors of the pairs.
pub fn procrustes_pair_residual(state: &EmbeddingState, data: &Bilingual, pairs: &[(String, String)]) -> Result<f64> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (a, b) in pairs {
        if let (Some(u), Some(v)) = (
            state.get(&NodeKey::rho(data.lang_a.as_str(), a.as_str())),
            state.get(&NodeKey::rho(data.lang_b.as_str(), b.as_str())),
        ) {
            x.extend_from_slice(u);
            y.extend_from_slice(v);
        }
    }
    let d = state.dim();
    let w = procrustes_map(&x, &y, d)?;
    Ok(procrustes_residual(&x, &y, &w, d) / (x.len() / d) as f64)
}

/// For each `lambda1` (decreasing), the gaps between the cross-lingual
/// solution and the decoupled (`lambda1 = 0`) solution, which is two
/// independent monolingual problems trained with the same seed.
pub fn check_prop5(
    data: &Bilingual,
    pairs: &[(String, String)],
    ladder: &[f64],
    base: &TrainConfig,
    par: &Parallelism,
) -> Result<Prop5Result> {
    if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] >= w[0]) || ladder.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidArgument("ladder must be strictly decreasing and positive".into()));
    }
    let ctx = LogitContext::from_corpus(&data.corpus, &data.vocab, ContextSharing::PerPartition);
    let samplers = ctx.noise_samplers(&data.corpus, data.vocab.len(), base.noise_exponent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed ^ 0xe7a1);
    let eval = Minibatch::draw(iter_windows(&data.corpus, base.window).collect(), base.likelihood, base.negatives, &samplers, &mut rng);
    let per_sample = |s: &EmbeddingState| log_likelihood(&eval, s, &ctx) / eval.len().max(1) as f64;

    let mut all = vec![0.0];
    all.extend_from_slice(ladder);
    let states: Vec<EmbeddingState> = par
        .map(&all, |&lambda1| train_bilingual(data, pairs, &TrainConfig { lambda1, ..base.clone() }))
        .into_iter()
        .collect::<Result<_>>()?;
    let mono_ll = per_sample(&states[0]);
    let mono_res = procrustes_pair_residual(&states[0], data, pairs)?;
    let points = ladder
        .iter()
        .zip(&states[1..])
        .map(|(&lambda1, s)| {
            let res = procrustes_pair_residual(s, data, pairs)?;
            Ok(Prop5Point {
                lambda1,
                likelihood_gap: (per_sample(s) - mono_ll).abs(),
                residual_gap: (res - mono_res).abs(),
                residual: res,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Prop5Result {
        points,
        mono_residual: mono_res,
        mono_log_likelihood: mono_ll,
    })
}

/// Both gaps non-increasing along the ladder up to a relative `tolerance`.
pub fn prop5_rows(result: &Prop5Result, tolerance: f64) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for w in result.points.windows(2) {
        for (name, a, b) in [
            ("likelihood_gap", w[0].likelihood_gap, w[1].likelihood_gap),
            ("residual_gap", w[0].residual_gap, w[1].residual_gap),
        ] {
            let ratio = if a > 0.0 { b / a } else if b == 0.0 { 0.0 } else { f64::INFINITY };
            rows.push(ReportRow::at_most(
                "prop5",
                format!("{name}(l1={:e})/{name}(l1={:e})", w[1].lambda1, w[0].lambda1),
                ratio,
                1.0 + tolerance,
            ));
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Standard instances, as run by `pelp verify`.

/// Which standard check to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Grad,
    Prop1,
    Prop2,
    Prop3,
    Prop4,
    Prop5,
}

impl std::str::FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "grad" => Check::Grad,
            "prop1" => Check::Prop1,
            "prop2" => Check::Prop2,
            "prop3" => Check::Prop3,
            "prop4" => Check::Prop4,
            "prop5" => Check::Prop5,
            _ => return Err(Error::InvalidArgument(format!("unknown check `{s}`"))),
        })
    }
}

fn uniform_state<R: Rng>(keys: Vec<NodeKey>, dim: usize, rng: &mut R) -> Result<EmbeddingState> {
    let data = (0..keys.len() * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    EmbeddingState::from_data(keys, dim, data)
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Mirrored bilingual corpus (`10^5` tokens per language) and the training
/// setup used for the lambda1 ladders.
pub fn standard_bilingual(seed: u64) -> (Bilingual, TrainConfig) {
    let data = crate::synth::bilingual_corpus(&crate::synth::BilingualSpec {
        base: crate::synth::MarkovSpec {
            vocab_size: 500,
            tokens: 100_000,
            seed,
            ..Default::default()
        },
        ..Default::default()
    });
    let config = TrainConfig {
        dim: 20,
        window: 3,
        negatives: 5,
        epochs: 10,
        batch_size: 1024,
        learning_rate: 0.005,
        lr_schedule: crate::train::LrSchedule::Linear,
        seed,
        ..TrainConfig::default()
    };
    (data, config)
}

/// Runs one standard check and returns its report rows.
pub fn run_check(check: Check, seed: u64, par: &Parallelism) -> Result<Vec<ReportRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match check {
        Check::Grad => Ok(grad_check(20, 1e-5, seed)?
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                ReportRow::at_most(
                    "grad",
                    format!("relative_error[{i},{:?},V={},D={}]", g.likelihood, g.vocab_size, g.dim),
                    g.relative_error,
                    1e-4,
                )
            })
            .collect()),
        Check::Prop2 => {
            let mut worst = 0.0f64;
            for _ in 0..50 {
                let spec = DbmSpec {
                    gamma0: rng.random_range(0.1..5.0),
                    gamma1: rng.random_range(0.1..50.0),
                    timesteps: labels("t", 5),
                    words: labels("w", 10),
                };
                let state = uniform_state(spec.keys(), 5, &mut rng)?;
                worst = worst.max(check_prop2(&spec, &state)?);
            }
            Ok(vec![ReportRow::at_most("prop2", "max_discrepancy", worst, 1e-10)])
        }
        Check::Prop3 => {
            let (mut worst, mut gamma_err) = (0.0f64, 0.0f64);
            for i in 0..50 {
                let spec = GbmSpec {
                    gamma0: rng.random_range(0.1..5.0),
                    gamma1: rng.random_range(0.1..50.0),
                    groups: labels("g", 2 + i % 3),
                    words: labels("w", 6),
                };
                let state = uniform_state(spec.keys(), 4, &mut rng)?;
                let r = check_prop3(&spec, &state)?;
                worst = worst.max(r.max_discrepancy);
                gamma_err = gamma_err.max((r.gamma - r.gamma_formula).abs());
            }
            Ok(vec![
                ReportRow::at_most("prop3", "max_discrepancy", worst, 1e-8),
                ReportRow::at_most("prop3", "gamma_error", gamma_err, 1e-12),
            ])
        }
        Check::Prop1 => {
            let (corpus, vocab) = crate::synth::markov_corpus(&crate::synth::MarkovSpec {
                vocab_size: 50,
                tokens: 10_000,
                seed,
                ..Default::default()
            });
            let edges = random_strong_pairs(&vocab, 15, 30, &mut rng);
            let ctx = LogitContext::full(&corpus.partitions, &vocab, ContextSharing::Shared);
            let batch = Minibatch::draw(
                iter_windows(&corpus, 2).collect(),
                Likelihood::Sgns,
                2,
                &[Some(vocab.noise_sampler())],
                &mut rng,
            );
            let obj = Dict2VecObjective::new(&batch, &ctx, &edges, 1.0, 3)?;
            let mut pointwise = 0.0f64;
            for _ in 0..50 {
                let x: Vec<f64> = (0..obj.n_rows * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
                pointwise = pointwise.max(obj.pointwise_discrepancy(&x));
            }
            let r = check_prop1(&corpus, &vocab, &edges, &Prop1Config { seed, ..Prop1Config::default() })?;
            let transfer = ReportRow::at_most("prop1", "stationary_pelp_grad_norm", r.pelp_grad_norm, 1e-5);
            let transfer = if r.converged { transfer } else { transfer.with_outcome(Outcome::Inconclusive) };
            Ok(vec![
                ReportRow::at_most("prop1", "pointwise_discrepancy", pointwise, 1e-10),
                ReportRow::at_most("prop1", "stationary_dict_grad_norm", r.dict_grad_norm, 1e-6),
                transfer,
            ])
        }
        Check::Prop4 => {
            let (data, config) = standard_bilingual(seed);
            let curve = check_prop4(&data, &data.pairs, &[1.0, 1e2, 1e4, 1e6], &config, par)?;
            Ok(prop4_rows(&curve, 1e-2))
        }
        Check::Prop5 => {
            let (data, config) = standard_bilingual(seed);
            let res = check_prop5(&data, &data.pairs, &[1.0, 1e-1, 1e-2, 1e-3], &config, par)?;
            Ok(prop5_rows(&res, 0.1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{bilingual_corpus, markov_corpus, BilingualSpec, MarkovSpec};

    fn random_state<R: Rng>(keys: Vec<NodeKey>, dim: usize, rng: &mut R) -> EmbeddingState {
        let data = (0..keys.len() * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingState::from_data(keys, dim, data).unwrap()
    }

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn finite_differences_of_simple_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = random_state(vec![NodeKey::rho("_", "a"), NodeKey::rho("_", "b")], 3, &mut rng);
        let g = finite_diff_gradient(|x| 0.5 * dot(x.as_slice(), x.as_slice()), &s, 1e-5);
        assert!(max_abs_diff(&g, s.as_slice()) < 1e-9);
        let z = finite_diff_gradient(|_| 4.2, &s, 1e-5);
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..6 {
            let q = random_orthogonal(d, &mut rng);
            for i in 0..d {
                for j in 0..d {
                    let v: f64 = (0..d).map(|k| q[i * d + k] * q[j * d + k]).sum();
                    assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn grad_check_small_instances() {
        for inst in grad_check(10, 1e-5, 3).unwrap() {
            assert!(inst.relative_error < 1e-4, "{inst:?}");
        }
    }

    fn dbm(words: usize, t: usize, g0: f64, g1: f64) -> DbmSpec {
        DbmSpec {
            gamma0: g0,
            gamma1: g1,
            timesteps: names("t", t),
            words: names("w", words),
        }
    }

    #[test]
    fn prop2_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = dbm(1, 2, 0.7, 1.3);
        let s = random_state(spec.keys(), 1, &mut rng);
        assert!(check_prop2(&spec, &s).unwrap() < 1e-10);
        let z = EmbeddingState::zeros(spec.keys(), 1).unwrap();
        assert_eq!(dbm_prior_gradient(&spec, &z).unwrap(), vec![0.0; 3]);
        assert_eq!(check_prop2(&spec, &z).unwrap(), 0.0);
        // Decoupled limit: only the t=0 word vector and alpha are pulled in.
        let spec = dbm(1, 3, 2.0, 0.0);
        let s = random_state(spec.keys(), 2, &mut rng);
        let g = dbm_prior_gradient(&spec, &s).unwrap();
        assert_eq!(&g[2..6], &[0.0; 4]);
        assert!(check_prop2(&spec, &s).unwrap() < 1e-12);
        assert!(dbm(1, 1, 1.0, 1.0).validate().is_err());
    }

    #[test]
    fn prop3_examples() {
        let spec = GbmSpec {
            gamma0: 1.0,
            gamma1: 1.0,
            groups: names("g", 2),
            words: names("w", 1),
        };
        let s = EmbeddingState::from_data(spec.keys(), 1, vec![0.3, -0.4]).unwrap();
        let r = check_prop3(&spec, &s).unwrap();
        assert!((r.gamma - 1.0 / 3.0).abs() < 1e-12);
        // Equal group vectors: the edge term adds nothing, only the ridge.
        let eq = EmbeddingState::from_data(spec.keys(), 2, vec![0.5, 0.2, 0.5, 0.2]).unwrap();
        let g = gbm_profiled_gradient(&spec, &eq).unwrap();
        assert!((g[0] - g[2]).abs() < 1e-15 && (g[1] - g[3]).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = GbmSpec {
            gamma0: 0.4,
            gamma1: 2.5,
            groups: names("g", 3),
            words: names("w", 6),
        };
        let s = random_state(spec.keys(), 4, &mut rng);
        let r = check_prop3(&spec, &s).unwrap();
        assert!(r.max_discrepancy < 1e-8);
        let denom = 3.0 * 2.5 + 0.4;
        assert!((r.edge_weight - 2.5 * 2.5 / denom).abs() < 1e-12);
        assert!((r.ridge - 2.5 * 0.4 / denom).abs() < 1e-12);
        let bad = GbmSpec { groups: names("g", 1), ..spec };
        assert!(check_prop3(&bad, &s).is_err());
    }

    fn small_prop1_instance(pairs: usize) -> (PartitionedCorpus, Vocabulary, Vec<Edge>) {
        let (corpus, vocab) = markov_corpus(&MarkovSpec {
            vocab_size: 12,
            tokens: 400,
            segment_len: 20,
            seed: 4,
            ..MarkovSpec::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let edges = random_strong_pairs(&vocab, pairs, 8, &mut rng);
        (corpus, vocab, edges)
    }

    #[test]
    fn prop1_pointwise_identity() {
        let (corpus, vocab, edges) = small_prop1_instance(4);
        let ctx = LogitContext::full(&corpus.partitions, &vocab, ContextSharing::Shared);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = Minibatch::draw(iter_windows(&corpus, 2).collect(), Likelihood::Sgns, 2, &[Some(vocab.noise_sampler())], &mut rng);
        let obj = Dict2VecObjective::new(&batch, &ctx, &edges, 0.8, 3).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..obj.n_rows * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!(obj.pointwise_discrepancy(&x) < 1e-10);
            // Aggregated likelihood agrees with the per-sample likelihood.
            let s = EmbeddingState::from_data(ctx.keys().to_vec(), 3, x.clone()).unwrap();
            let direct = log_likelihood(&batch, &s, &ctx);
            assert!((obj.log_likelihood(&x) - direct).abs() < 1e-9 * direct.abs().max(1.0));
            let fd = finite_diff_gradient(|s| obj.value(s.as_slice()), &s, 1e-5);
            let g = obj.gradient(&x);
            assert!(l2(&g.iter().zip(&fd).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-5 * l2(&g).max(1.0));
        }
    }

    #[test]
    fn prop1_without_edges_is_exact_and_small_instance_transfers() {
        let (corpus, vocab, _) = small_prop1_instance(0);
        let r = check_prop1(&corpus, &vocab, &[], &Prop1Config::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert_eq!(r.pointwise_discrepancy, 0.0);
        assert!(r.pelp_grad_norm <= 1e-5, "{r:?}");
        let (corpus, vocab, edges) = small_prop1_instance(3);
        let r = check_prop1(&corpus, &vocab, &edges, &Prop1Config::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.pelp_grad_norm <= 1e-5, "{r:?}");
    }

    fn tiny_bilingual() -> Bilingual {
        bilingual_corpus(&BilingualSpec {
            base: MarkovSpec {
                vocab_size: 40,
                tokens: 4000,
                seed: 8,
                ..MarkovSpec::default()
            },
            ..BilingualSpec::default()
        })
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            dim: 6,
            window: 2,
            negatives: 3,
            epochs: 3,
            batch_size: 256,
            learning_rate: 0.02,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn translation_distance_at_zero_coupling_matches_random_pairs() {
        let b = tiny_bilingual();
        let cfg = TrainConfig { lambda1: 0.0, ..tiny_cfg() };
        let s = train_bilingual(&b, &b.pairs, &cfg).unwrap();
        let planted = mean_pair_distance(&s, &b, &b.pairs).unwrap();
        // Random pairing: shift targets by one position.
        let n = b.pairs.len();
        let shuffled: Vec<(String, String)> = (0..n).map(|i| (b.pairs[i].0.clone(), b.pairs[(i + 1) % n].1.clone())).collect();
        let random = mean_pair_distance(&s, &b, &shuffled).unwrap();
        assert!(planted > 0.5 * random && planted < 2.0 * random, "{planted} vs {random}");
        // Hard sharing: identical vectors give distance exactly zero.
        let mut shared = s.clone();
        for (x, y) in &b.pairs {
            for role in [Role::Rho, Role::Alpha] {
                let src = shared.require(&NodeKey::new(role, "A", x.as_str())).unwrap();
                let dst = shared.require(&NodeKey::new(role, "B", y.as_str())).unwrap();
                let v = shared.row(src).to_vec();
                shared.row_mut(dst).copy_from_slice(&v);
            }
        }
        assert_eq!(mean_pair_distance(&shared, &b, &b.pairs).unwrap(), 0.0);
    }

    #[test]
    fn report_formatting() {
        let rows = vec![
            ReportRow::at_most("prop2", "max_abs_diff", 1e-12, 1e-10),
            ReportRow::at_most("prop2", "max_abs_diff", 1e-9, 1e-10),
        ];
        assert!(!all_pass(&rows));
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "check\tmetric\tvalue\tthreshold\tpass");
        assert!(text.contains("prop2\tmax_abs_diff\t1e-12\t1e-10\ttrue"));
        assert!(text.lines().nth(2).unwrap().ends_with("false"));
    }

    #[test]
    fn ladders_are_validated() {
        let b = tiny_bilingual();
        let p = Parallelism::sequential();
        assert!(check_prop4(&b, &b.pairs, &[1.0, 10.0], &tiny_cfg(), &p).is_err());
        assert!(check_prop4(&b, &b.pairs, &[1.0, 10.0, 5.0], &tiny_cfg(), &p).is_err());
        assert!(check_prop5(&b, &b.pairs, &[0.1, 1.0], &tiny_cfg(), &p).is_err());
    }

    #[test]
    fn standard_identity_checks_pass() {
        let p = Parallelism::sequential();
        for check in ["grad", "prop2", "prop3"] {
            let rows = run_check(check.parse().unwrap(), 7, &p).unwrap();
            assert!(!rows.is_empty() && all_pass(&rows), "{check}: {rows:?}");
        }
        assert!("prop9".parse::<Check>().is_err());
    }
}

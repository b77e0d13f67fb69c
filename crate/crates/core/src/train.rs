//! MAP training: minibatch Adam (or SGD) on the negative log posterior,
//! with the prior spread evenly over the steps of each epoch.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{segment_windows, NoiseSampler, PartitionedCorpus, Vocabulary, DEFAULT_NOISE_EXPONENT};
use crate::error::{Error, Result};
use crate::graph::{EmbeddingState, IndexedPrior, NodeKey, PriorGraph};
use crate::model::{likelihood_gradient_shards, log_likelihood_par, ContextSharing, Likelihood, LogitContext, Minibatch};
use crate::par::Parallelism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear decay to 1e-4 of the base rate over the whole run.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    #[serde(alias = "D")]
    pub dim: usize,
    #[serde(alias = "M")]
    pub window: usize,
    #[serde(alias = "K")]
    pub negatives: usize,
    pub epochs: usize,
    /// Token positions per step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub likelihood: Likelihood,
    pub seed: u64,
    pub init_scale: f64,
    pub noise_exponent: f64,
    pub optimizer: Optimizer,
    pub lr_schedule: LrSchedule,
    /// Apply the prior every this many steps, scaled to keep its per-epoch
    /// weight at one.
    pub prior_every: usize,
    /// Frequent-word subsampling threshold; off when absent.
    pub subsample: Option<f64>,
    pub context_sharing: ContextSharing,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 50,
            window: 5,
            negatives: 5,
            epochs: 5,
            batch_size: 1024,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lambda0: 1.0,
            lambda1: 1.0,
            likelihood: Likelihood::Cbow,
            seed: 0,
            init_scale: 0.5,
            noise_exponent: DEFAULT_NOISE_EXPONENT,
            optimizer: Optimizer::Adam,
            lr_schedule: LrSchedule::Constant,
            prior_every: 1,
            subsample: None,
            context_sharing: ContextSharing::Shared,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.dim < 1 {
            return bad("dim must be >= 1");
        }
        if self.window < 1 {
            return bad("window must be >= 1");
        }
        if self.negatives < 1 {
            return bad("negatives must be >= 1");
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if self.prior_every < 1 {
            return bad("prior_every must be >= 1");
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return bad("lambda0 must be > 0");
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be > 0");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be >= 0");
        }
        if !(self.noise_exponent.is_finite()) {
            return bad("noise_exponent must be finite");
        }
        if let Some(t) = self.subsample {
            if !(t > 0.0 && t.is_finite()) {
                return bad("subsample threshold must be > 0");
            }
        }
        Ok(())
    }

    /// Parses JSON, rejecting unknown keys, and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 8 bytes (little-endian) of SHA-256 over the compact JSON form.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

/// Entries i.i.d. uniform in `[-init_scale/D, init_scale/D]`.
pub fn init_state(keys: Vec<NodeKey>, config: &TrainConfig) -> Result<EmbeddingState> {
    let d = config.dim;
    let bound = config.init_scale / d as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = keys.len() * d;
    let data = if bound > 0.0 {
        (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
    } else {
        vec![0.0; n]
    };
    EmbeddingState::from_data(keys, d, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub epochs_completed: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            epochs_completed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn from_config(c: &TrainConfig) -> Self {
        AdamParams {
            lr: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
        }
    }
}

const UPDATE_CHUNK: usize = 4096;

/// One bias-corrected Adam descent step on `grad` (the gradient of the
/// objective being minimized).
pub fn adam_step(params: &mut [f64], grad: &[f64], opt: &mut OptimizerState, hp: AdamParams, par: &Parallelism) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), opt.m.len());
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let work: Vec<_> = params
        .chunks_mut(UPDATE_CHUNK)
        .zip(grad.chunks(UPDATE_CHUNK))
        .zip(opt.m.chunks_mut(UPDATE_CHUNK))
        .zip(opt.v.chunks_mut(UPDATE_CHUNK))
        .collect();
    par.for_each_owned(work, |(((p, g), m), v)| {
        for i in 0..p.len() {
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
            p[i] -= hp.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + hp.epsilon);
        }
    });
}

pub fn sgd_step(params: &mut [f64], grad: &[f64], opt: &mut OptimizerState, lr: f64) {
    opt.step += 1;
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: u64,
    pub steps: u64,
    /// Log posterior of the monitor batch after the epoch, if one is set.
    pub monitor_log_posterior: Option<f64>,
}

/// Stochastic MAP optimizer over a fixed model layout.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    ctx: LogitContext,
    samplers: Vec<Option<NoiseSampler>>,
    prior: IndexedPrior,
    state: EmbeddingState,
    opt: OptimizerState,
    par: Parallelism,
    vocab: Vocabulary,
    full_batches: usize,
    monitor: Option<Minibatch>,
}

/// Number of steps for `positions` token positions (at least one, so the
/// prior is still applied on an empty corpus).
pub fn batches_per_epoch(positions: usize, batch_size: usize) -> usize {
    positions.div_ceil(batch_size).max(1)
}

impl Trainer {
    /// Fresh trainer: layout from the corpus, random initial state.
    pub fn new(corpus: &PartitionedCorpus, vocab: &Vocabulary, graph: &PriorGraph, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let ctx = LogitContext::from_corpus(corpus, vocab, config.context_sharing);
        Self::with_layout(corpus, vocab, ctx, graph, config)
    }

    /// Fresh trainer over an explicit layout, e.g. one with nodes that never
    /// occur in `corpus`.
    pub fn with_layout(
        corpus: &PartitionedCorpus,
        vocab: &Vocabulary,
        ctx: LogitContext,
        graph: &PriorGraph,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let state = init_state(ctx.keys().to_vec(), config)?;
        Self::assemble(corpus, vocab, ctx, graph, config, state, None)
    }

    /// Continues from a checkpoint. The layout, node set and config must
    /// match the ones that produced it.
    pub fn resume(
        corpus: &PartitionedCorpus,
        vocab: &Vocabulary,
        graph: &PriorGraph,
        config: &TrainConfig,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        config.validate()?;
        if checkpoint.config_hash != config.hash() {
            return Err(Error::Checkpoint("config hash mismatch".into()));
        }
        let ctx = LogitContext::from_corpus(corpus, vocab, config.context_sharing);
        if ctx.keys() != checkpoint.state.keys() {
            return Err(Error::Checkpoint("node set differs from the checkpoint".into()));
        }
        Self::assemble(corpus, vocab, ctx, graph, config, checkpoint.state, Some(checkpoint.opt))
    }

    fn assemble(
        corpus: &PartitionedCorpus,
        vocab: &Vocabulary,
        ctx: LogitContext,
        graph: &PriorGraph,
        config: &TrainConfig,
        state: EmbeddingState,
        opt: Option<OptimizerState>,
    ) -> Result<Self> {
        corpus.validate(vocab.len())?;
        if corpus.partitions != ctx.partitions() {
            return Err(Error::InvalidArgument("layout partitions differ from the corpus".into()));
        }
        let mut graph = graph.clone();
        graph.lambda0 = config.lambda0;
        graph.lambda1 = config.lambda1;
        let prior = graph.index(&state)?;
        let samplers = ctx.noise_samplers(corpus, vocab.len(), config.noise_exponent)?;
        let opt = opt.unwrap_or_else(|| OptimizerState::new(state.as_slice().len()));
        if opt.m.len() != state.as_slice().len() || opt.v.len() != opt.m.len() {
            return Err(Error::Shape("optimizer moments do not match the state".into()));
        }
        Ok(Trainer {
            config: config.clone(),
            full_batches: batches_per_epoch(corpus.positions(), config.batch_size),
            ctx,
            samplers,
            prior,
            state,
            opt,
            par: Parallelism::sequential(),
            vocab: vocab.clone(),
            monitor: None,
        })
    }

    pub fn with_parallelism(mut self, par: Parallelism) -> Self {
        self.par = par;
        self
    }

    /// A fixed batch whose log posterior is reported after every epoch.
    pub fn set_monitor(&mut self, batch: Minibatch) -> Result<()> {
        batch.validate(self.config.negatives, &self.ctx)?;
        self.monitor = Some(batch);
        Ok(())
    }

    /// A monitor batch of up to `max_samples` windows drawn with a stream
    /// reserved for monitoring.
    pub fn default_monitor(&self, corpus: &PartitionedCorpus, max_samples: usize) -> Minibatch {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(u64::MAX);
        let stride = (corpus.positions() / max_samples.max(1)).max(1);
        let samples = corpus
            .segments
            .iter()
            .flat_map(|s| segment_windows(s, self.config.window))
            .step_by(stride)
            .take(max_samples)
            .collect();
        Minibatch::draw(samples, self.config.likelihood, self.config.negatives, &self.samplers, &mut rng)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn context(&self) -> &LogitContext {
        &self.ctx
    }

    pub fn state(&self) -> &EmbeddingState {
        &self.state
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }

    pub fn prior(&self) -> &IndexedPrior {
        &self.prior
    }

    pub fn into_state(self) -> EmbeddingState {
        self.state
    }

    pub fn epochs_completed(&self) -> u64 {
        self.opt.epochs_completed
    }

    pub fn log_prior(&self) -> f64 {
        self.prior.log_prior(self.state.as_slice(), self.state.dim())
    }

    /// Log posterior on `batch`: its log-likelihood plus the full log prior.
    pub fn log_posterior(&self, batch: &Minibatch) -> f64 {
        log_likelihood_par(batch, self.state.as_slice(), self.state.dim(), &self.ctx, &self.par) + self.log_prior()
    }

    fn learning_rate(&self) -> f64 {
        let base = self.config.learning_rate;
        match self.config.lr_schedule {
            LrSchedule::Constant => base,
            LrSchedule::Linear => {
                let total = (self.config.epochs * self.full_batches) as f64;
                base * (1.0 - self.opt.step as f64 / total).max(1e-4)
            }
        }
    }

    /// Runs one epoch: shuffled segment order, windows in order within a
    /// segment, one update per `batch_size` positions.
    pub fn run_epoch(&mut self, corpus: &PartitionedCorpus) -> Result<EpochStats> {
        let epoch = self.opt.epochs_completed;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch + 1);
        let subsampled;
        let corpus = match self.config.subsample {
            Some(t) => {
                subsampled = corpus.subsample(&self.vocab, t, &mut rng);
                &subsampled
            }
            None => corpus,
        };
        let mut order: Vec<usize> = (0..corpus.segments.len()).collect();
        order.shuffle(&mut rng);

        let bsz = self.config.batch_size;
        let n_batches = batches_per_epoch(corpus.positions(), bsz);
        let every = self.config.prior_every;
        let window = self.config.window;
        let mut windows = order
            .iter()
            .flat_map(|&i| segment_windows(&corpus.segments[i], window));
        let mut grad = vec![0.0; self.state.as_slice().len()];
        let start_step = self.opt.step;
        for b in 0..n_batches {
            let samples: Vec<_> = windows.by_ref().take(bsz).collect();
            let batch = Minibatch::draw(samples, self.config.likelihood, self.config.negatives, &self.samplers, &mut rng);
            grad.iter_mut().for_each(|g| *g = 0.0);
            let dim = self.state.dim();
            let shards = likelihood_gradient_shards(&batch, self.state.as_slice(), dim, &self.ctx, &self.par);
            for s in &shards {
                s.add_into(&mut grad, -1.0);
            }
            // Prior weight per epoch is exactly one, including a final
            // partial group when `every` does not divide the batch count.
            let due = (b + 1) % every == 0 || b + 1 == n_batches;
            if due {
                let covered = if (b + 1) % every == 0 { every } else { (b + 1) % every };
                let scale = -(covered as f64) / n_batches as f64;
                self.prior.add_gradient(self.state.as_slice(), dim, scale, &mut grad, &self.par);
            }
            self.apply_update(&grad)?;
        }
        self.opt.epochs_completed += 1;
        let monitor_log_posterior = self.monitor.as_ref().map(|m| self.log_posterior(m));
        Ok(EpochStats {
            epoch,
            steps: self.opt.step - start_step,
            monitor_log_posterior,
        })
    }

    fn apply_update(&mut self, grad: &[f64]) -> Result<()> {
        let lr = self.learning_rate();
        match self.config.optimizer {
            Optimizer::Adam => {
                let hp = AdamParams {
                    lr,
                    ..AdamParams::from_config(&self.config)
                };
                adam_step(self.state.as_mut_slice(), grad, &mut self.opt, hp, &self.par)
            }
            Optimizer::Sgd => sgd_step(self.state.as_mut_slice(), grad, &mut self.opt, lr),
        }
        if let Some((_, key)) = self.state.first_non_finite() {
            return Err(Error::NonFinite {
                step: self.opt.step,
                node: key.to_string(),
            });
        }
        Ok(())
    }

    /// Runs the remaining epochs up to `config.epochs`.
    pub fn train(&mut self, corpus: &PartitionedCorpus) -> Result<Vec<EpochStats>> {
        let mut stats = Vec::new();
        while (self.opt.epochs_completed as usize) < self.config.epochs {
            stats.push(self.run_epoch(corpus)?);
        }
        Ok(stats)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.config.hash(),
            state: self.state.clone(),
            opt: self.opt.clone(),
        }
    }
}

/// Trains from scratch with the default single-worker mode.
pub fn train(corpus: &PartitionedCorpus, vocab: &Vocabulary, graph: &PriorGraph, config: &TrainConfig) -> Result<EmbeddingState> {
    let mut t = Trainer::new(corpus, vocab, graph, config)?;
    t.train(corpus)?;
    Ok(t.into_state())
}

const MAGIC: &[u8; 8] = b"PELP0001";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub state: EmbeddingState,
    pub opt: OptimizerState,
}

impl Checkpoint {
    /// Little-endian: magic, config hash, epochs completed, step, node
    /// count, dim, node table (u32 length + UTF-8 key), then vectors, first
    /// and second moments as row-major f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state;
        let mut out = Vec::with_capacity(48 + s.as_slice().len() * 24);
        out.extend_from_slice(MAGIC);
        for x in [
            self.config_hash,
            self.opt.epochs_completed,
            self.opt.step,
            s.len() as u64,
            s.dim() as u64,
        ] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for k in s.keys() {
            let k = k.to_string();
            out.extend_from_slice(&(k.len() as u32).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
        }
        for block in [s.as_slice(), &self.opt.m, &self.opt.v] {
            for x in block {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic or unsupported version".into()));
        }
        let config_hash = r.u64()?;
        let epochs_completed = r.u64()?;
        let step = r.u64()?;
        let n = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let floats = n
            .checked_mul(dim)
            .filter(|&f| f.checked_mul(24).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let mut keys = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let text = std::str::from_utf8(raw).map_err(|_| Error::Checkpoint("node key is not UTF-8".into()))?;
            keys.push(text.parse::<NodeKey>().map_err(|e| Error::Checkpoint(e.to_string()))?);
        }
        let mut block = || -> Result<Vec<f64>> { (0..floats).map(|_| r.f64()).collect() };
        let data = block()?;
        let m = block()?;
        let v = block()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let state = EmbeddingState::from_data(keys, dim, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Checkpoint {
            config_hash,
            state,
            opt: OptimizerState {
                m,
                v,
                step,
                epochs_completed,
            },
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(state: &EmbeddingState, opt: &OptimizerState, config: &TrainConfig, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        config_hash: config.hash(),
        state: state.clone(),
        opt: opt.clone(),
    };
    fs::write(path, ck.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

//! Corpus ingestion: vocabulary, partitioned token streams, context windows
//! and negative-sample drawing.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

/// Label used for the single partition of an unpartitioned corpus.
pub const GLOBAL_PARTITION: &str = "_";

/// Default smoothing exponent applied to counts for the noise distribution.
pub const DEFAULT_NOISE_EXPONENT: f64 = 0.75;

/// Word types with counts, dense ids and negative-sampling weights.
///
/// Ids are assigned by descending count, ties broken lexicographically, so the
/// id order doubles as the export order of [`Vocabulary::write_tsv`].
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    id_of: HashMap<String, u32>,
    noise_weights: Vec<f64>,
    noise_exponent: f64,
}

impl Vocabulary {
    /// Counts `tokens` and keeps words seen at least `min_count` times.
    ///
    /// When more than `max_vocab` words survive the most frequent are kept.
    pub fn build<I, S>(tokens: I, min_count: u64, max_vocab: Option<usize>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for tok in tokens {
            let tok = tok.as_ref();
            if let Some(c) = counts.get_mut(tok) {
                *c += 1;
            } else {
                counts.insert(tok.to_owned(), 1);
            }
        }
        Self::from_counts(counts, min_count, max_vocab)
    }

    pub fn from_counts<I>(counts: I, min_count: u64, max_vocab: Option<usize>) -> Result<Self>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        if min_count < 1 {
            return Err(Error::InvalidArgument("min_count must be >= 1".into()));
        }
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(max) = max_vocab {
            kept.truncate(max);
        }
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary { min_count });
        }
        let (words, counts): (Vec<_>, Vec<_>) = kept.into_iter().unzip();
        let id_of = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let mut vocab = Vocabulary {
            words,
            counts,
            id_of,
            noise_weights: Vec::new(),
            noise_exponent: DEFAULT_NOISE_EXPONENT,
        };
        vocab.recompute_noise();
        Ok(vocab)
    }

    pub fn with_noise_exponent(mut self, exponent: f64) -> Self {
        self.noise_exponent = exponent;
        self.recompute_noise();
        self
    }

    fn recompute_noise(&mut self) {
        let e = self.noise_exponent;
        self.noise_weights = self.counts.iter().map(|&c| (c as f64).powf(e)).collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.id_of.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn noise_weights(&self) -> &[f64] {
        &self.noise_weights
    }

    pub fn noise_exponent(&self) -> f64 {
        self.noise_exponent
    }

    /// Probability of drawing `id` as a negative sample.
    pub fn noise_probability(&self, id: u32) -> f64 {
        let total: f64 = self.noise_weights.iter().sum();
        self.noise_weights[id as usize] / total
    }

    pub fn noise_sampler(&self) -> NoiseSampler {
        NoiseSampler::new((0..self.len() as u32).collect(), &self.noise_weights)
            .expect("vocabulary is nonempty with positive weights")
    }

    /// Draws `k` i.i.d. negatives. Duplicates and the true target are allowed.
    pub fn draw_negatives<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<u32> {
        self.noise_sampler().draw(k, rng)
    }

    /// Writes `word<TAB>count` lines in id order (descending count).
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (w, c) in self.words.iter().zip(&self.counts) {
            writeln!(out, "{w}\t{c}")?;
        }
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut counts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(word), Some(count)) = (parts.next(), parts.next()) else {
                return Err(Error::parse(path, i + 1, "expected word<TAB>count"));
            };
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad count `{count}`")))?;
            counts.push((word.to_owned(), count));
        }
        Self::from_counts(counts, 1, None)
    }
}

/// Categorical sampler over a subset of word ids.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    ids: Vec<u32>,
    dist: WeightedIndex<f64>,
}

impl NoiseSampler {
    /// `weights` is indexed by word id; only `ids` are eligible.
    pub fn new(ids: Vec<u32>, weights: &[f64]) -> Result<Self> {
        let w: Vec<f64> = ids.iter().map(|&i| weights[i as usize]).collect();
        let dist = WeightedIndex::new(&w)
            .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
        Ok(NoiseSampler { ids, dist })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.ids[self.dist.sample(rng)]
    }

    pub fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<u32> {
        (0..k).map(|_| self.sample(rng)).collect()
    }
}

/// Tokenized text grouped into labelled segments, before vocabulary encoding.
#[derive(Debug, Clone, Default)]
pub struct RawCorpus {
    pub segments: Vec<(String, Vec<String>)>,
}

impl RawCorpus {
    /// One segment per line, whitespace-tokenized, all in the global partition.
    pub fn parse_plain(text: &str, lowercase: bool) -> Self {
        let segments = text
            .lines()
            .map(|line| (GLOBAL_PARTITION.to_owned(), tokenize(line, lowercase)))
            .filter(|(_, toks)| !toks.is_empty())
            .collect();
        RawCorpus { segments }
    }

    /// `partition<TAB>text` per line.
    pub fn parse_partitioned(text: &str, lowercase: bool, path: &Path) -> Result<Self> {
        let mut segments = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((label, body)) = line.split_once('\t') else {
                return Err(Error::parse(path, i + 1, "expected partition<TAB>text"));
            };
            let label = label.trim();
            if label.is_empty() || label.contains(':') {
                return Err(Error::parse(path, i + 1, format!("bad partition label `{label}`")));
            }
            let toks = tokenize(body, lowercase);
            if !toks.is_empty() {
                segments.push((label.to_owned(), toks));
            }
        }
        Ok(RawCorpus { segments })
    }

    pub fn read(path: &Path, partitioned: bool, lowercase: bool) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if partitioned {
            Self::parse_partitioned(&text, lowercase, path)
        } else {
            Ok(Self::parse_plain(&text, lowercase))
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.segments
            .iter()
            .flat_map(|(_, toks)| toks.iter().map(String::as_str))
    }

    /// Encodes against `vocab`, dropping out-of-vocabulary tokens.
    pub fn encode(&self, vocab: &Vocabulary) -> PartitionedCorpus {
        let mut partitions: Vec<String> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut segments = Vec::with_capacity(self.segments.len());
        for (label, toks) in &self.segments {
            let p = *index.entry(label.as_str()).or_insert_with(|| {
                partitions.push(label.clone());
                partitions.len() - 1
            });
            let ids: Vec<u32> = toks.iter().filter_map(|t| vocab.id(t)).collect();
            if !ids.is_empty() {
                segments.push(Segment {
                    partition: p,
                    tokens: ids,
                });
            }
        }
        PartitionedCorpus {
            partitions,
            segments,
        }
    }
}

fn tokenize(line: &str, lowercase: bool) -> Vec<String> {
    line.split_whitespace()
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_owned() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub partition: usize,
    pub tokens: Vec<u32>,
}

/// Encoded token sequences, each tagged with a partition (group, timestep,
/// language, or [`GLOBAL_PARTITION`]).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionedCorpus {
    pub partitions: Vec<String>,
    pub segments: Vec<Segment>,
}

impl PartitionedCorpus {
    /// A single-partition corpus from already-encoded segments.
    pub fn single(segments: Vec<Vec<u32>>) -> Self {
        PartitionedCorpus {
            partitions: vec![GLOBAL_PARTITION.to_owned()],
            segments: segments
                .into_iter()
                .map(|tokens| Segment {
                    partition: 0,
                    tokens,
                })
                .collect(),
        }
    }

    pub fn partition_index(&self, label: &str) -> Option<usize> {
        self.partitions.iter().position(|p| p == label)
    }

    /// Total token positions.
    pub fn positions(&self) -> usize {
        self.segments.iter().map(|s| s.tokens.len()).sum()
    }

    /// Checks that every id is below `vocab_len`.
    pub fn validate(&self, vocab_len: usize) -> Result<()> {
        for s in &self.segments {
            if s.partition >= self.partitions.len() {
                return Err(Error::InvalidArgument("segment partition out of range".into()));
            }
            if let Some(&bad) = s.tokens.iter().find(|&&t| t as usize >= vocab_len) {
                return Err(Error::InvalidArgument(format!(
                    "token id {bad} out of range for vocabulary of {vocab_len}"
                )));
            }
        }
        Ok(())
    }

    /// Per-partition occurrence counts, indexed `[partition][word id]`.
    pub fn partition_counts(&self, vocab_len: usize) -> Vec<Vec<u64>> {
        let mut counts = vec![vec![0u64; vocab_len]; self.partitions.len()];
        for s in &self.segments {
            for &t in &s.tokens {
                counts[s.partition][t as usize] += 1;
            }
        }
        counts
    }

    /// Frequent-word subsampling: each token is kept with probability
    /// `min(1, sqrt(t/f) + t/f)` where `f` is its relative frequency.
    pub fn subsample<R: Rng + ?Sized>(&self, vocab: &Vocabulary, threshold: f64, rng: &mut R) -> Self {
        let total: f64 = vocab.counts().iter().sum::<u64>() as f64;
        let keep: Vec<f64> = vocab
            .counts()
            .iter()
            .map(|&c| {
                let ratio = threshold / (c as f64 / total);
                (ratio.sqrt() + ratio).min(1.0)
            })
            .collect();
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                partition: s.partition,
                tokens: s
                    .tokens
                    .iter()
                    .copied()
                    .filter(|&t| rng.random::<f64>() < keep[t as usize])
                    .collect(),
            })
            .filter(|s| !s.tokens.is_empty())
            .collect();
        PartitionedCorpus {
            partitions: self.partitions.clone(),
            segments,
        }
    }
}

/// One token position with its symmetric context window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSample {
    pub center: u32,
    pub context: Vec<u32>,
    pub partition: usize,
}

/// Windows for one segment; never crosses the segment boundary.
pub fn segment_windows(segment: &Segment, window: usize) -> impl Iterator<Item = WindowSample> + '_ {
    let toks = &segment.tokens;
    (0..toks.len()).map(move |i| {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(toks.len());
        let context = toks[lo..i].iter().chain(&toks[i + 1..hi]).copied().collect();
        WindowSample {
            center: toks[i],
            context,
            partition: segment.partition,
        }
    })
}

/// All windows of the corpus in segment order.
pub fn iter_windows(corpus: &PartitionedCorpus, window: usize) -> impl Iterator<Item = WindowSample> + '_ {
    assert!(window >= 1, "window must be >= 1");
    corpus
        .segments
        .iter()
        .flat_map(move |s| segment_windows(s, window))
}

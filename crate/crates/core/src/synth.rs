//! Synthetic corpora with known structure, for tests, benches and checks.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{PartitionedCorpus, RawCorpus, Vocabulary, GLOBAL_PARTITION};

fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / ((r + 1) as f64).powf(exponent))).expect("positive weights")
}

fn finish(raw: RawCorpus) -> (PartitionedCorpus, Vocabulary) {
    let vocab = Vocabulary::build(raw.tokens(), 1, None).expect("synthetic corpus is non-empty");
    (raw.encode(&vocab), vocab)
}

/// First-order Markov text over `w0..w{V-1}` with Zipfian unigrams.
#[derive(Debug, Clone)]
pub struct MarkovSpec {
    pub vocab_size: usize,
    pub tokens: usize,
    pub segment_len: usize,
    pub zipf_exponent: f64,
    /// Preferred successors per word.
    pub successors: usize,
    /// Probability of moving to a preferred successor instead of a unigram draw.
    pub follow_prob: f64,
    pub seed: u64,
}

impl Default for MarkovSpec {
    fn default() -> Self {
        MarkovSpec {
            vocab_size: 1000,
            tokens: 100_000,
            segment_len: 20,
            zipf_exponent: 1.0,
            successors: 4,
            follow_prob: 0.7,
            seed: 0,
        }
    }
}

/// Token-id segments from the Markov model (ids are unigram ranks).
pub fn markov_ids(spec: &MarkovSpec) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let uni = zipf(spec.vocab_size, spec.zipf_exponent);
    let succ: Vec<Vec<usize>> = (0..spec.vocab_size)
        .map(|_| (0..spec.successors).map(|_| uni.sample(&mut rng)).collect())
        .collect();
    let mut segments = Vec::new();
    let mut left = spec.tokens;
    while left > 0 {
        let len = spec.segment_len.min(left);
        let mut seg = Vec::with_capacity(len);
        let mut cur = uni.sample(&mut rng);
        seg.push(cur);
        while seg.len() < len {
            cur = if spec.successors > 0 && rng.random::<f64>() < spec.follow_prob {
                succ[cur][rng.random_range(0..spec.successors)]
            } else {
                uni.sample(&mut rng)
            };
            seg.push(cur);
        }
        left -= len;
        segments.push(seg);
    }
    segments
}

pub fn markov_corpus(spec: &MarkovSpec) -> (PartitionedCorpus, Vocabulary) {
    let raw = RawCorpus {
        segments: markov_ids(spec)
            .into_iter()
            .map(|s| (GLOBAL_PARTITION.to_owned(), s.into_iter().map(|i| format!("w{i}")).collect()))
            .collect(),
    };
    finish(raw)
}

/// Markov background in which the collocation `q0 px py q1` is inserted
/// after a position with probability 0.02. Returns the pair `(px, py)`.
pub fn planted_pair_corpus(tokens: usize, seed: u64) -> (PartitionedCorpus, Vocabulary, (String, String)) {
    let spec = MarkovSpec {
        vocab_size: 200,
        tokens,
        seed,
        ..MarkovSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let segments = markov_ids(&spec)
        .into_iter()
        .map(|s| {
            let mut out = Vec::with_capacity(s.len() + 4);
            for i in s {
                out.push(format!("w{i}"));
                if rng.random::<f64>() < 0.02 {
                    out.extend(["q0", "px", "py", "q1"].map(str::to_owned));
                }
            }
            (GLOBAL_PARTITION.to_owned(), out)
        })
        .collect();
    let (corpus, vocab) = finish(RawCorpus { segments });
    (corpus, vocab, ("px".to_owned(), "py".to_owned()))
}

/// Two languages whose words are relabelled copies of one Markov source.
#[derive(Debug, Clone)]
pub struct BilingualSpec {
    /// Tokens per language.
    pub base: MarkovSpec,
    /// Language B repeats A's text exactly; otherwise B is drawn
    /// independently from the same chain.
    pub mirrored: bool,
    pub lang_a: String,
    pub lang_b: String,
}

impl Default for BilingualSpec {
    fn default() -> Self {
        BilingualSpec {
            base: MarkovSpec::default(),
            mirrored: true,
            lang_a: "A".to_owned(),
            lang_b: "B".to_owned(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bilingual {
    /// Partitions `lang_a` then `lang_b`; word `i` is `a{i}` in A, `b{i}` in B.
    pub corpus: PartitionedCorpus,
    pub vocab: Vocabulary,
    /// Translation pairs for words present in both languages, most frequent first.
    pub pairs: Vec<(String, String)>,
    pub lang_a: String,
    pub lang_b: String,
}

pub fn bilingual_corpus(spec: &BilingualSpec) -> Bilingual {
    let a = markov_ids(&spec.base);
    let b = if spec.mirrored {
        a.clone()
    } else {
        // Same chain (the seed fixes the transition table), new text.
        let mut other = markov_ids(&MarkovSpec {
            tokens: spec.base.tokens * 2,
            ..spec.base.clone()
        });
        other.drain(..a.len());
        other
    };
    let label = |lang: &str, prefix: char, segs: Vec<Vec<usize>>| -> Vec<(String, Vec<String>)> {
        segs.into_iter()
            .map(|s| (lang.to_owned(), s.into_iter().map(|i| format!("{prefix}{i}")).collect()))
            .collect()
    };
    let mut segments = label(&spec.lang_a, 'a', a);
    segments.extend(label(&spec.lang_b, 'b', b));
    let (corpus, vocab) = finish(RawCorpus { segments });
    let mut pairs: Vec<(String, String)> = vocab
        .words()
        .iter()
        .filter_map(|w| w.strip_prefix('a'))
        .map(|i| (format!("a{i}"), format!("b{i}")))
        .filter(|(_, b)| vocab.id(b).is_some())
        .collect();
    pairs.sort_by_key(|(a, _)| vocab.id(a));
    Bilingual {
        corpus,
        vocab,
        pairs,
        lang_a: spec.lang_a.clone(),
        lang_b: spec.lang_b.clone(),
    }
}

/// Two groups sharing topical text, plus planted words whose topic
/// association differs between the groups.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    pub vocab_size: usize,
    pub tokens_per_group: usize,
    pub topics: usize,
    pub planted: usize,
    pub segment_len: usize,
    /// Probability that a background token comes from the segment's topic.
    pub topic_prob: f64,
    /// Expected planted-word insertions per matching segment.
    pub plant_rate: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for GroupSpec {
    fn default() -> Self {
        GroupSpec {
            vocab_size: 2000,
            tokens_per_group: 100_000,
            topics: 20,
            planted: 10,
            segment_len: 20,
            topic_prob: 0.6,
            plant_rate: 1.0,
            zipf_exponent: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupCorpus {
    pub corpus: PartitionedCorpus,
    pub vocab: Vocabulary,
    pub groups: [String; 2],
    pub planted: Vec<String>,
    /// Background words present in both groups (planted words included).
    pub shared_words: Vec<String>,
}

/// Background words `w0..` are assigned round-robin to topics. Planted word
/// `p{i}` appears in topic `2i mod T` segments of group `D` and in topic
/// `2i+1 mod T` segments of group `R`, at the same rate in both.
pub fn group_corpus(spec: &GroupSpec) -> GroupCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = spec.vocab_size - spec.planted;
    let uni = zipf(background, spec.zipf_exponent);
    let topic_words: Vec<Vec<usize>> = (0..spec.topics)
        .map(|t| (t..background).step_by(spec.topics).collect())
        .collect();
    let topic_dists: Vec<WeightedIndex<f64>> = topic_words
        .iter()
        .map(|ws| zipf(ws.len(), spec.zipf_exponent))
        .collect();
    let groups = ["D".to_owned(), "R".to_owned()];
    let mut segments = Vec::new();
    for (g, label) in groups.iter().enumerate() {
        let mut left = spec.tokens_per_group;
        while left > 0 {
            let topic = rng.random_range(0..spec.topics);
            let len = spec.segment_len.min(left);
            let mut seg: Vec<String> = (0..len)
                .map(|_| {
                    let w = if rng.random::<f64>() < spec.topic_prob {
                        topic_words[topic][topic_dists[topic].sample(&mut rng)]
                    } else {
                        uni.sample(&mut rng)
                    };
                    format!("w{w}")
                })
                .collect();
            for p in 0..spec.planted {
                let home = (2 * p + g) % spec.topics;
                if home == topic && rng.random::<f64>() < spec.plant_rate {
                    let at = rng.random_range(0..=seg.len());
                    seg.insert(at, format!("p{p}"));
                }
            }
            left -= len;
            segments.push((label.clone(), seg));
        }
    }
    let (corpus, vocab) = finish(RawCorpus { segments });
    let counts = corpus.partition_counts(vocab.len());
    let shared_words = (0..vocab.len() as u32)
        .filter(|&w| counts.iter().all(|c| c[w as usize] > 0))
        .map(|w| vocab.word(w).to_owned())
        .collect();
    GroupCorpus {
        corpus,
        vocab,
        groups,
        planted: (0..spec.planted).map(|p| format!("p{p}")).collect(),
        shared_words,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_is_deterministic_and_sized() {
        let spec = MarkovSpec {
            tokens: 1234,
            ..MarkovSpec::default()
        };
        assert_eq!(markov_ids(&spec), markov_ids(&spec));
        let (c, _) = markov_corpus(&spec);
        assert_eq!(c.positions(), 1234);
    }

    #[test]
    fn mirrored_bilingual_is_relabelled_copy() {
        let b = bilingual_corpus(&BilingualSpec {
            base: MarkovSpec {
                tokens: 2000,
                ..MarkovSpec::default()
            },
            ..BilingualSpec::default()
        });
        assert_eq!(b.corpus.partitions, ["A", "B"]);
        let half = b.corpus.segments.len() / 2;
        for (sa, sb) in b.corpus.segments[..half].iter().zip(&b.corpus.segments[half..]) {
            let wa: Vec<String> = sa.tokens.iter().map(|&t| b.vocab.word(t)[1..].to_owned()).collect();
            let wb: Vec<String> = sb.tokens.iter().map(|&t| b.vocab.word(t)[1..].to_owned()).collect();
            assert_eq!(wa, wb);
        }
        assert!(!b.pairs.is_empty());
        let a_words = b.vocab.words().iter().filter(|w| w.starts_with('a')).count();
        assert_eq!(b.pairs.len(), a_words);
    }

    #[test]
    fn group_corpus_plants_words_in_both_groups() {
        let g = group_corpus(&GroupSpec {
            tokens_per_group: 20_000,
            ..GroupSpec::default()
        });
        let counts = g.corpus.partition_counts(g.vocab.len());
        for p in &g.planted {
            let id = g.vocab.id(p).unwrap() as usize;
            assert!(counts[0][id] > 0 && counts[1][id] > 0, "{p}");
        }
    }
}

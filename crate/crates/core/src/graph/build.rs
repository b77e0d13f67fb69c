//! Graph builders for the model families the Laplacian prior subsumes.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{Edge, NodeKey, Role};
use crate::corpus::Vocabulary;

/// Partition label for group `group` at timestep `timestep`.
pub fn group_time_label(group: &str, timestep: &str) -> String {
    format!("{group}@{timestep}")
}

/// Strong pairs from dictionary definitions: `v` and `w` are linked when each
/// appears in the other's definition. Each pair links word to context vectors
/// in both directions.
pub fn build_dict_graph(definitions: &BTreeMap<String, BTreeSet<String>>, vocab: &Vocabulary) -> Vec<Edge> {
    let mut edges = Vec::new();
    for (v, mentions) in definitions {
        if vocab.id(v).is_none() {
            continue;
        }
        for w in mentions {
            if w <= v || vocab.id(w).is_none() {
                continue;
            }
            let reciprocal = definitions.get(w).is_some_and(|m| m.contains(v));
            if reciprocal {
                edges.push(Edge::new(
                    NodeKey::global(Role::Rho, v.as_str()),
                    NodeKey::global(Role::Alpha, w.as_str()),
                ));
                edges.push(Edge::new(
                    NodeKey::global(Role::Rho, w.as_str()),
                    NodeKey::global(Role::Alpha, v.as_str()),
                ));
            }
        }
    }
    edges
}

/// Parses `word<TAB>definition` lines; a word may have several lines.
pub fn parse_definitions(text: &str, lowercase: bool) -> BTreeMap<String, BTreeSet<String>> {
    let mut defs: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for line in text.lines() {
        let Some((word, body)) = line.split_once('\t') else {
            continue;
        };
        let norm = |s: &str| if lowercase { s.to_lowercase() } else { s.to_owned() };
        let entry = defs.entry(norm(word.trim())).or_default();
        for tok in body.split_whitespace() {
            let tok: String = tok
                .trim_matches(|c: char| c.is_ascii_punctuation())
                .to_owned();
            if !tok.is_empty() {
                entry.insert(norm(&tok));
            }
        }
    }
    defs
}

/// Random-walk chain of each word's `rho` vectors across consecutive timesteps.
pub fn build_chain_graph<S: AsRef<str>>(words: &[S], timesteps: &[S]) -> Vec<Edge> {
    let mut edges = Vec::new();
    for w in words {
        for pair in timesteps.windows(2) {
            edges.push(Edge::new(
                NodeKey::rho(pair[0].as_ref(), w.as_ref()),
                NodeKey::rho(pair[1].as_ref(), w.as_ref()),
            ));
        }
    }
    edges
}

/// Complete graph among each word's per-group `rho` vectors.
pub fn build_group_complete_graph<S: AsRef<str>>(words: &[S], groups: &[S]) -> Vec<Edge> {
    let mut edges = Vec::new();
    for w in words {
        push_complete(&mut edges, w.as_ref(), groups.iter().map(|g| g.as_ref().to_owned()));
    }
    edges
}

fn push_complete(edges: &mut Vec<Edge>, word: &str, partitions: impl Iterator<Item = String>) {
    let parts: Vec<String> = partitions.collect();
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            edges.push(Edge::new(NodeKey::rho(&parts[i], word), NodeKey::rho(&parts[j], word)));
        }
    }
}

/// Group edges within every timestep plus temporal chains within every group,
/// over partitions labelled `group@timestep`.
pub fn build_dynamic_group_graph<S: AsRef<str>>(words: &[S], groups: &[S], timesteps: &[S]) -> Vec<Edge> {
    let mut edges = Vec::new();
    for w in words {
        let w = w.as_ref();
        for t in timesteps {
            push_complete(
                &mut edges,
                w,
                groups.iter().map(|g| group_time_label(g.as_ref(), t.as_ref())),
            );
        }
        for g in groups {
            for pair in timesteps.windows(2) {
                edges.push(Edge::new(
                    NodeKey::rho(group_time_label(g.as_ref(), pair[0].as_ref()), w),
                    NodeKey::rho(group_time_label(g.as_ref(), pair[1].as_ref()), w),
                ));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Default)]
pub struct TranslationEdges {
    pub edges: Vec<Edge>,
    /// Pairs with a member missing from its vocabulary.
    pub skipped_oov: usize,
    pub skipped_duplicate: usize,
}

/// Links both `rho` and `alpha` vectors of every in-vocabulary translation pair.
pub fn build_translation_graph(
    pairs: &[(String, String)],
    vocab_a: &Vocabulary,
    vocab_b: &Vocabulary,
    lang_a: &str,
    lang_b: &str,
) -> TranslationEdges {
    let mut out = TranslationEdges::default();
    let mut seen = HashSet::new();
    for (a, b) in pairs {
        if vocab_a.id(a).is_none() || vocab_b.id(b).is_none() {
            out.skipped_oov += 1;
            continue;
        }
        if !seen.insert((a, b)) {
            out.skipped_duplicate += 1;
            continue;
        }
        out.edges.push(Edge::new(NodeKey::rho(lang_a, a.as_str()), NodeKey::rho(lang_b, b.as_str())));
        out.edges.push(Edge::new(NodeKey::alpha(lang_a, a.as_str()), NodeKey::alpha(lang_b, b.as_str())));
    }
    out
}

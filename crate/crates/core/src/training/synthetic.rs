//! A dataset whose class is carried only by one arc label.
//!
//! Every instance is a random tree. The target is a random node and the cue
//! is one of its tree neighbours, holding a word from a small cue
//! vocabulary that no other position uses. The arc between them is labelled
//! [`CUE_POSITIVE`] for positive instances, [`CUE_NEGATIVE`] for negative ones
//! and a random filler label for neutral ones; all other arcs get filler
//! labels. Words, tags, tree shape and target position are drawn
//! identically for every class, so a model that ignores arc labels sees no
//! class signal.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::depgraph::{prufer_decode, InstanceRecord, Polarity, Span};
use crate::rng;

pub const CUE_POSITIVE: &str = "cue_a";
pub const CUE_NEGATIVE: &str = "cue_b";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub words: usize,
    /// Size of the vocabulary the cue word is drawn from.
    pub cue_words: usize,
    pub pos_tags: usize,
    pub fillers: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            words: 40,
            cue_words: 4,
            pos_tags: 6,
            fillers: 8,
            min_len: 5,
            max_len: 9,
        }
    }
}

pub fn filler_label(k: usize) -> String {
    format!("rel{k}")
}

/// `n` instances; instance `i` has polarity `i mod 3` in class-index order
/// and is drawn from stream `("synthetic", i)` of `seed`.
pub fn gen_synthetic(n: usize, spec: &SyntheticSpec, seed: u64) -> Vec<InstanceRecord> {
    assert!(spec.min_len >= 2 && spec.min_len <= spec.max_len, "sentences need at least two tokens");
    assert!(spec.words > 0 && spec.cue_words > 0 && spec.pos_tags > 0 && spec.fillers > 0);
    (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, "synthetic", i as u64);
            let polarity = Polarity::from_class_index(i % 3).expect("three classes");
            instance(&mut r, spec, polarity, format!("syn-{i}"))
        })
        .collect()
}

fn instance(r: &mut impl Rng, spec: &SyntheticSpec, polarity: Polarity, id: String) -> InstanceRecord {
    let n = r.gen_range(spec.min_len..=spec.max_len);
    let edges = if n == 2 {
        vec![(0, 1)]
    } else {
        let seq: Vec<usize> = (0..n - 2).map(|_| r.gen_range(0..n)).collect();
        prufer_decode(&seq)
    };
    let mut labels: Vec<String> = edges
        .iter()
        .map(|_| filler_label(r.gen_range(0..spec.fillers)))
        .collect();
    let target = r.gen_range(0..n);
    let incident: Vec<usize> = (0..edges.len())
        .filter(|&e| edges[e].0 == target || edges[e].1 == target)
        .collect();
    let cue_edge = incident[r.gen_range(0..incident.len())];
    let (a, b) = edges[cue_edge];
    let cue = if a == target { b } else { a };
    labels[cue_edge] = match polarity {
        Polarity::Positive => CUE_POSITIVE.to_string(),
        Polarity::Negative => CUE_NEGATIVE.to_string(),
        Polarity::Neutral => filler_label(r.gen_range(0..spec.fillers)),
    };

    // orient the tree away from a random root
    let root = r.gen_range(0..n);
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    let mut head = vec![0; n];
    let mut deprel = vec![String::new(); n];
    deprel[root] = "root".to_string();
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, e) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                head[v] = u + 1;
                deprel[v] = labels[e].clone();
                queue.push_back(v);
            }
        }
    }

    let tokens = (0..n)
        .map(|i| {
            let w = r.gen_range(0..spec.words);
            let c = r.gen_range(0..spec.cue_words);
            if i == cue {
                format!("cue{c}")
            } else {
                format!("w{w}")
            }
        })
        .collect();
    let pos = (0..n).map(|_| format!("T{}", r.gen_range(0..spec.pos_tags))).collect();
    InstanceRecord {
        id: Some(id),
        tokens,
        pos,
        head,
        deprel,
        target: Span::new(target, target + 1),
        polarity,
    }
}

/// The generating rule: the polarity implied by the labels of the arcs
/// touching the target.
pub fn label_rule(record: &InstanceRecord) -> Polarity {
    let t = record.target.start;
    let touching = (0..record.head.len()).filter_map(|i| {
        let h = record.head[i];
        (h != 0 && (i == t || h - 1 == t)).then_some(record.deprel[i].as_str())
    });
    let mut out = Polarity::Neutral;
    for l in touching {
        if l == CUE_POSITIVE {
            out = Polarity::Positive;
        } else if l == CUE_NEGATIVE {
            out = Polarity::Negative;
        }
    }
    out
}

//! Graph perturbations for the parse-robustness and label-ablation studies.

use rand::Rng;

use super::graph::DepGraph;
use super::vocab::{LabelId, RelationVocab};
use crate::error::{Error, Result};
use crate::rng;

/// Decodes a Prüfer sequence over `n = seq.len() + 2` nodes into its tree's
/// edges, in decoding order.
pub fn prufer_decode(seq: &[usize]) -> Vec<(usize, usize)> {
    let n = seq.len() + 2;
    let mut degree = vec![1usize; n];
    for &x in seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &x in seq {
        let leaf = (0..n).find(|&j| degree[j] == 1).expect("a leaf always exists");
        edges.push((leaf, x));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&j| degree[j] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Uniformly random labelled spanning tree over `n` nodes.
///
/// Draws, from the `(seed, "random_tree", 0)` stream: `n - 2` Prüfer
/// entries in `0..n` (for `n >= 3`), then one label per edge in decoding
/// order, uniform over the vocabulary's non-reserved ids.
pub fn random_tree(n: usize, vocab: &RelationVocab, seed: u64) -> Result<DepGraph> {
    if n == 0 {
        return Err(Error::InvalidArgument("random_tree needs at least one node".into()));
    }
    let ids = vocab.non_reserved_ids();
    if n > 1 && ids.is_empty() {
        return Err(Error::InvalidArgument(
            "relation vocabulary has no non-reserved labels".into(),
        ));
    }
    let mut rng = rng::stream(seed, "random_tree", 0);
    let edges = match n {
        1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => {
            let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
            prufer_decode(&seq)
        }
    };
    let labeled: Vec<(usize, usize, LabelId)> = edges
        .into_iter()
        .map(|(a, b)| (a, b, rng.gen_range(ids.clone())))
        .collect();
    DepGraph::from_edges(n, labeled, vocab.fingerprint())
}

/// Shuffles edge labels over the undirected edge list.
///
/// Edges are taken in [`DepGraph::edges`] order and the label list is
/// shuffled by Fisher-Yates: for `i` from `m - 1` down to `1`, swap `i` with
/// `j = gen_range(0..=i)` drawn from the `(seed, "permute_labels", 0)` stream.
pub fn permute_labels(g: &DepGraph, seed: u64) -> DepGraph {
    let edges = g.edges();
    let mut labels: Vec<LabelId> = edges.iter().map(|e| e.2).collect();
    let mut rng = rng::stream(seed, "permute_labels", 0);
    for i in (1..labels.len()).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    let n = g.n();
    let mut matrix = g.label_matrix().to_vec();
    for (&(i, j, _), &l) in edges.iter().zip(&labels) {
        matrix[i * n + j] = l;
        matrix[j * n + i] = l;
    }
    g.with_labels(matrix)
}

/// How [`mask_label`] treats edges carrying the masked label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Keep the edge, replace its label by `REMOVED`.
    #[default]
    Relabel,
    /// Drop the edge entirely.
    DeleteEdge,
}

/// Replaces every occurrence of `label` by [`RelationVocab::REMOVED`].
pub fn mask_label(g: &DepGraph, label: LabelId) -> Result<DepGraph> {
    mask_label_with(g, label, MaskMode::Relabel)
}

pub fn mask_label_with(g: &DepGraph, label: LabelId, mode: MaskMode) -> Result<DepGraph> {
    if RelationVocab::is_reserved(label) {
        return Err(Error::InvalidArgument(format!(
            "cannot mask reserved label id {label}"
        )));
    }
    let n = g.n();
    let mut adj = g.adjacency().to_vec();
    let mut labels = g.label_matrix().to_vec();
    for idx in 0..n * n {
        if labels[idx] == label {
            match mode {
                MaskMode::Relabel => labels[idx] = RelationVocab::REMOVED,
                MaskMode::DeleteEdge => {
                    labels[idx] = RelationVocab::NONE;
                    adj[idx] = false;
                }
            }
        }
    }
    Ok(DepGraph::from_parts(n, adj, labels, g.vocab_ref().to_string()))
}

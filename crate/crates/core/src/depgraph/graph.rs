use serde::{Deserialize, Serialize};

use super::vocab::{LabelId, RelationVocab};
use crate::error::{Error, Result};

/// Undirected typed dependency graph over the tokens of one sentence.
///
/// Adjacency is symmetric with a self-loop on every node. Self-loops carry
/// [`RelationVocab::SELF`]; both directions of an arc carry the arc's label;
/// non-edges carry [`RelationVocab::NONE`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepGraph {
    n: usize,
    adj: Vec<bool>,
    labels: Vec<LabelId>,
    vocab_ref: String,
}

impl DepGraph {
    /// Builds the graph of a dependency tree.
    ///
    /// `heads` are 1-based with `0` for the root. The root's own arc adds no
    /// edge; the root is reached through its children's arcs.
    pub fn build(heads: &[usize], labels: &[impl AsRef<str>], vocab: &RelationVocab) -> Result<Self> {
        let n = heads.len();
        if labels.len() != n {
            return Err(Error::InvalidTree(format!(
                "{} heads but {} labels",
                n,
                labels.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidTree("empty sentence".into()));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| heads[i] == 0).collect();
        match roots.len() {
            1 => {}
            0 => return Err(Error::InvalidTree("no root (no head equal to 0)".into())),
            _ => {
                return Err(Error::InvalidTree(format!(
                    "multiple roots at tokens {:?}",
                    roots.iter().map(|r| r + 1).collect::<Vec<_>>()
                )))
            }
        }
        for (i, &h) in heads.iter().enumerate() {
            if h > n {
                return Err(Error::InvalidTree(format!(
                    "token {} has head {h} outside [0, {n}]",
                    i + 1
                )));
            }
            if h == i + 1 {
                return Err(Error::InvalidTree(format!("token {} is its own head", i + 1)));
            }
        }
        // With one root and one head per token, a cycle is the only way to
        // fail to reach the root within n steps.
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while heads[cur] != 0 {
                cur = heads[cur] - 1;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidTree(format!(
                        "cycle through token {}",
                        start + 1
                    )));
                }
            }
        }
        let edges = heads
            .iter()
            .zip(labels)
            .enumerate()
            .filter(|(_, (&h, _))| h != 0)
            .map(|(i, (&h, l))| (i, h - 1, vocab.id(l.as_ref())));
        Self::from_edges(n, edges, vocab.fingerprint())
    }

    /// Builds a graph from undirected labeled edges. Self-loops are added.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, LabelId)>,
        vocab_ref: impl Into<String>,
    ) -> Result<Self> {
        let mut adj = vec![false; n * n];
        let mut labels = vec![RelationVocab::NONE; n * n];
        for i in 0..n {
            adj[i * n + i] = true;
            labels[i * n + i] = RelationVocab::SELF;
        }
        for (a, b, l) in edges {
            if a >= n || b >= n {
                return Err(Error::OutOfRange {
                    what: "node",
                    id: a.max(b),
                    size: n,
                });
            }
            if a == b {
                return Err(Error::InvalidTree(format!("explicit self-edge on node {a}")));
            }
            if l == RelationVocab::NONE || l == RelationVocab::SELF {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) carries reserved label {l}"
                )));
            }
            for (i, j) in [(a, b), (b, a)] {
                adj[i * n + j] = true;
                labels[i * n + j] = l;
            }
        }
        Ok(DepGraph {
            n,
            adj,
            labels,
            vocab_ref: vocab_ref.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vocab_ref(&self) -> &str {
        &self.vocab_ref
    }

    #[inline]
    pub fn adj(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    #[inline]
    pub fn label(&self, i: usize, j: usize) -> LabelId {
        self.labels[i * self.n + j]
    }

    /// Row-major adjacency, `n * n` entries.
    pub fn adjacency(&self) -> &[bool] {
        &self.adj
    }

    /// Row-major label matrix, `n * n` entries.
    pub fn label_matrix(&self) -> &[LabelId] {
        &self.labels
    }

    /// Neighbours of `i`, itself included.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.adj(i, j))
    }

    /// Off-diagonal undirected edges as `(i, j, label)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, LabelId)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.adj(i, j) {
                    out.push((i, j, self.label(i, j)));
                }
            }
        }
        out
    }

    /// Checks symmetry, self-loops and label/adjacency agreement.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n;
        if self.adj.len() != n * n || self.labels.len() != n * n {
            return Err(Error::InvalidArgument("matrix sizes disagree with n".into()));
        }
        for i in 0..n {
            if !self.adj(i, i) || self.label(i, i) != RelationVocab::SELF {
                return Err(Error::InvalidArgument(format!("node {i} lacks a SELF loop")));
            }
            for j in 0..n {
                if self.adj(i, j) != self.adj(j, i) {
                    return Err(Error::InvalidArgument(format!("adjacency asymmetric at ({i}, {j})")));
                }
                if self.label(i, j) != self.label(j, i) {
                    return Err(Error::InvalidArgument(format!("labels asymmetric at ({i}, {j})")));
                }
                if self.adj(i, j) == (self.label(i, j) == RelationVocab::NONE) {
                    return Err(Error::InvalidArgument(format!(
                        "label/adjacency disagree at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when the off-diagonal edges form a spanning tree.
    pub fn is_tree(&self) -> bool {
        let edges = self.edges();
        if edges.len() + 1 != self.n {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Applies a node permutation: node `i` of `self` becomes node `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidArgument("permutation length differs from n".into()));
        }
        let edges = self.edges().into_iter().map(|(i, j, l)| (perm[i], perm[j], l));
        Self::from_edges(self.n, edges, self.vocab_ref.clone())
    }

    pub(crate) fn with_labels(&self, labels: Vec<LabelId>) -> Self {
        DepGraph {
            n: self.n,
            adj: self.adj.clone(),
            labels,
            vocab_ref: self.vocab_ref.clone(),
        }
    }

    pub(crate) fn from_parts(n: usize, adj: Vec<bool>, labels: Vec<LabelId>, vocab_ref: String) -> Self {
        DepGraph {
            n,
            adj,
            labels,
            vocab_ref,
        }
    }
}

//! Graph encoders: multi-head graph attention with optional relation-aware
//! scoring and aggregation, followed by a point-wise feed-forward sublayer.
//!
//! Per layer and head `z`, with `d_h = d / Z`:
//!
//! ```text
//! e^N_ij = (W_Q^z h_i) · (W_K^z h_j) / √d_h
//! e^R_ij = (W_Q^z h_i) · (W_K'^z r_ij) / √d_h
//! α_ij   = softmax over j ∈ N(i) of (β1 e^N_ij + β2 e^R_ij)
//! h'_i   = σ( Σ_j α_ij (W_V^z h_j + W_Vr r_ij) )
//! ```
//!
//! Heads are concatenated and passed through `relu(h W1 + b1) W2 + b2`.
//! The [`Variant`] decides which relation terms are present and whether the
//! graph mask applies.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::config::{ModelConfig, Variant};
use crate::depgraph::{DepGraph, RelationVocab};
use crate::error::{Error, Result};

/// `uniform(-1/√fan_in, 1/√fan_in)`
fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// Parameters of one graph attention layer. Projection matrices hold the
/// heads as consecutive column blocks of width `d / Z`.
#[derive(Debug, Clone)]
pub struct GraphLayer {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    /// `[d_r, d]`, relation-score projection.
    pub w_kr: Option<ParamId>,
    /// `[d_r, d/Z]`, relation message projection shared by the heads.
    pub w_vr: Option<ParamId>,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub beta1: Option<ParamId>,
    pub beta2: Option<ParamId>,
}

/// Per-layer products shared by every head.
#[derive(Debug, Clone, Copy)]
pub struct Projections {
    pub q: Var,
    pub k: Var,
    pub v: Var,
    /// `R W_K'`, `[V_r, d]`.
    pub rel_k: Option<Var>,
    /// `R W_Vr`, `[V_r, d/Z]`.
    pub rel_v: Option<Var>,
}

/// Attention weights of one forward pass, `[layer][head]` row-major `n × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub n: usize,
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl AttentionTrace {
    pub fn weight(&self, layer: usize, head: usize, i: usize, j: usize) -> f64 {
        self.layers[layer][head][i * self.n + j]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

/// One edge of an exported trace with its weight in every layer and head,
/// `weights[layer][head]`, for both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEdge {
    pub i: usize,
    pub j: usize,
    pub label: String,
    pub weights: Vec<Vec<f64>>,
    pub weights_reverse: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceExport {
    pub id: String,
    pub tokens: Vec<String>,
    pub edges: Vec<TraceEdge>,
    pub self_weights: Vec<Vec<Vec<f64>>>,
}

impl TraceExport {
    pub fn new(
        id: &str,
        tokens: &[String],
        graph: &DepGraph,
        vocab: &RelationVocab,
        trace: &AttentionTrace,
    ) -> Self {
        let per = |i: usize, j: usize| -> Vec<Vec<f64>> {
            trace
                .layers
                .iter()
                .map(|heads| heads.iter().map(|a| a[i * trace.n + j]).collect())
                .collect()
        };
        let edges = graph
            .edges()
            .into_iter()
            .map(|(i, j, l)| TraceEdge {
                i,
                j,
                label: vocab.label(l).unwrap_or("<unk>").to_string(),
                weights: per(i, j),
                weights_reverse: per(j, i),
            })
            .collect();
        TraceExport {
            id: id.to_string(),
            tokens: tokens.to_vec(),
            edges,
            self_weights: (0..trace.n).map(|i| per(i, i)).collect(),
        }
    }
}

impl GraphLayer {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, layer: usize) -> Self {
        let d = cfg.graph_dim;
        let dh = cfg.head_dim();
        let dr = cfg.relation_dim;
        let p = format!("graph.layer{layer}");
        let seed = cfg.seed;
        let bd = fan_in_bound(d);
        let br = fan_in_bound(dr);
        let mut mat = |name: &str, shape: &[usize], bound: f64| {
            store.add_uniform(&format!("{p}.{name}"), shape, bound, seed)
        };
        let w_q = mat("w_q", &[d, d], bd);
        let w_k = mat("w_k", &[d, d], bd);
        let w_v = mat("w_v", &[d, d], bd);
        let w_kr = cfg.variant.relation_attention().then(|| mat("w_kr", &[dr, d], br));
        let w_vr = cfg.variant.relation_aggregation().then(|| mat("w_vr", &[dr, dh], br));
        let w1 = mat("pct.w1", &[d, d], bd);
        let b1 = mat("pct.b1", &[d], bd);
        let w2 = mat("pct.w2", &[d, d], bd);
        let b2 = mat("pct.b2", &[d], bd);
        let (beta1, beta2) = if cfg.weighted_factors {
            let one = crate::autodiff::Tensor::scalar(1.0);
            let b1 = store.add(format!("{p}.beta1"), one.clone());
            let b2 = cfg
                .variant
                .relation_attention()
                .then(|| store.add(format!("{p}.beta2"), one));
            (Some(b1), b2)
        } else {
            (None, None)
        };
        GraphLayer {
            w_q,
            w_k,
            w_v,
            w_kr,
            w_vr,
            w1,
            b1,
            w2,
            b2,
            beta1,
            beta2,
        }
    }

    /// Projects `h: [n, d]` for all heads at once; relation tables are
    /// projected when the layer has the corresponding weights.
    pub fn project(&self, tape: &mut Tape<'_>, h: Var, relation: Option<Var>) -> Result<Projections> {
        let w_q = tape.param(self.w_q);
        let w_k = tape.param(self.w_k);
        let w_v = tape.param(self.w_v);
        let q = tape.matmul(h, w_q)?;
        let k = tape.matmul(h, w_k)?;
        let v = tape.matmul(h, w_v)?;
        let missing = || Error::InvalidArgument("relation table required by this layer".into());
        let rel_k = match self.w_kr {
            Some(w) => {
                let r = relation.ok_or_else(missing)?;
                let w = tape.param(w);
                Some(tape.matmul(r, w)?)
            }
            None => None,
        };
        let rel_v = match self.w_vr {
            Some(w) => {
                let r = relation.ok_or_else(missing)?;
                let w = tape.param(w);
                Some(tape.matmul(r, w)?)
            }
            None => None,
        };
        Ok(Projections {
            q,
            k,
            v,
            rel_k,
            rel_v,
        })
    }

    /// Unmasked `e^N` of one head, `[n, n]`.
    pub fn node_scores(&self, tape: &mut Tape<'_>, p: &Projections, head: usize, dh: usize) -> Result<Var> {
        let (a, b) = (head * dh, (head + 1) * dh);
        let q = tape.slice_cols(p.q, a, b)?;
        let k = tape.slice_cols(p.k, a, b)?;
        let kt = tape.transpose(k)?;
        let s = tape.matmul(q, kt)?;
        Ok(tape.scale(s, 1.0 / (dh as f64).sqrt()))
    }

    /// Unmasked `e^R` of one head, `[n, n]`; entry `(i, j)` reads relation
    /// `labels[i * n + j]`.
    pub fn relation_scores(
        &self,
        tape: &mut Tape<'_>,
        p: &Projections,
        labels: &[usize],
        head: usize,
        dh: usize,
    ) -> Result<Var> {
        let rel_k = p
            .rel_k
            .ok_or_else(|| Error::InvalidArgument("layer has no relation attention".into()))?;
        let (a, b) = (head * dh, (head + 1) * dh);
        let q = tape.slice_cols(p.q, a, b)?;
        let n = tape.value(q).rows();
        let rk = tape.slice_cols(rel_k, a, b)?;
        let rkt = tape.transpose(rk)?;
        // scores against every relation id, then pick each pair's label
        let all = tape.matmul(q, rkt)?;
        let e = tape.gather_cols(all, labels, n)?;
        Ok(tape.scale(e, 1.0 / (dh as f64).sqrt()))
    }

    /// Masked softmax of `β1 e^N + β2 e^R`. Without factors the scores are
    /// added directly.
    pub fn mix_normalize(
        &self,
        tape: &mut Tape<'_>,
        e_n: Var,
        e_r: Option<Var>,
        mask: &[bool],
    ) -> Result<Var> {
        let e_n = match self.beta1 {
            Some(b) => {
                let b = tape.param(b);
                tape.scale_by(e_n, b)?
            }
            None => e_n,
        };
        let scores = match e_r {
            Some(e_r) => {
                let e_r = match self.beta2 {
                    Some(b) => {
                        let b = tape.param(b);
                        tape.scale_by(e_r, b)?
                    }
                    None => e_r,
                };
                tape.add(e_n, e_r)?
            }
            None => e_n,
        };
        tape.masked_softmax(scores, mask)
    }

    /// `σ(Σ_j α_ij (W_V h_j + W_Vr r_ij))` for one head, `[n, d_h]`.
    pub fn aggregate(
        &self,
        tape: &mut Tape<'_>,
        p: &Projections,
        alpha: Var,
        labels: &[usize],
        head: usize,
        dh: usize,
    ) -> Result<Var> {
        let v = tape.slice_cols(p.v, head * dh, (head + 1) * dh)?;
        let mut out = tape.matmul(alpha, v)?;
        if let Some(rel_v) = p.rel_v {
            let vocab = tape.value(rel_v).rows();
            // total attention mass per relation id, then one product
            let by_label = tape.scatter_cols(alpha, labels, vocab)?;
            let rel = tape.matmul(by_label, rel_v)?;
            out = tape.add(out, rel)?;
        }
        Ok(tape.sigmoid(out))
    }

    /// `relu(h W1 + b1) W2 + b2` applied to every row.
    pub fn pct(&self, tape: &mut Tape<'_>, h: Var) -> Result<Var> {
        let w1 = tape.param(self.w1);
        let b1 = tape.param(self.b1);
        let w2 = tape.param(self.w2);
        let b2 = tape.param(self.b2);
        let x = tape.matmul(h, w1)?;
        let x = tape.add(x, b1)?;
        let x = tape.relu(x);
        let x = tape.matmul(x, w2)?;
        tape.add(x, b2)
    }
}

/// Input projection followed by a stack of [`GraphLayer`]s.
#[derive(Debug, Clone)]
pub struct GraphEncoder {
    pub input_w: ParamId,
    pub input_b: ParamId,
    pub layers: Vec<GraphLayer>,
    variant: Variant,
    heads: usize,
    head_dim: usize,
}

impl GraphEncoder {
    /// Projects `input_dim`-wide token features to `cfg.graph_dim`.
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, input_dim: usize) -> Self {
        let bound = fan_in_bound(input_dim);
        let input_w = store.add_uniform("graph.input.w", &[input_dim, cfg.graph_dim], bound, cfg.seed);
        let input_b = store.add_uniform("graph.input.b", &[cfg.graph_dim], bound, cfg.seed);
        let layers = (0..cfg.layers).map(|l| GraphLayer::new(store, cfg, l)).collect();
        GraphEncoder {
            input_w,
            input_b,
            layers,
            variant: cfg.variant,
            heads: cfg.heads,
            head_dim: cfg.head_dim(),
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Attention mask: the graph's adjacency (self-loops included), or every
    /// pair for the unmasked variant.
    pub fn mask(&self, graph: &DepGraph) -> Vec<bool> {
        if self.variant.uses_graph_mask() {
            graph.adjacency().to_vec()
        } else {
            vec![true; graph.n() * graph.n()]
        }
    }

    /// Runs the stack on `x: [n, input_dim]`. `relation` is the relation
    /// embedding table, required when a layer uses relation terms.
    pub fn encode(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        graph: &DepGraph,
        relation: Option<Var>,
    ) -> Result<(Var, AttentionTrace)> {
        let n = graph.n();
        if tape.value(x).rows() != n {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows for a {n}-node graph",
                tape.value(x).rows()
            )));
        }
        let w = tape.param(self.input_w);
        let b = tape.param(self.input_b);
        let h0 = tape.matmul(x, w)?;
        let mut h = tape.add(h0, b)?;
        let mask = self.mask(graph);
        let labels: Vec<usize> = graph.label_matrix().iter().map(|&l| l as usize).collect();
        if let Some(r) = relation {
            let rows = tape.value(r).rows();
            if let Some(&bad) = labels.iter().find(|&&l| l >= rows) {
                return Err(Error::OutOfRange {
                    what: "relation id",
                    id: bad,
                    size: rows,
                });
            }
        }
        let mut trace = AttentionTrace {
            n,
            layers: Vec::with_capacity(self.layers.len()),
        };
        let dh = self.head_dim;
        for layer in &self.layers {
            let p = layer.project(tape, h, relation)?;
            let mut outs = Vec::with_capacity(self.heads);
            let mut weights = Vec::with_capacity(self.heads);
            for z in 0..self.heads {
                let e_n = layer.node_scores(tape, &p, z, dh)?;
                let e_r = if p.rel_k.is_some() {
                    Some(layer.relation_scores(tape, &p, &labels, z, dh)?)
                } else {
                    None
                };
                let alpha = layer.mix_normalize(tape, e_n, e_r, &mask)?;
                weights.push(tape.value(alpha).data().to_vec());
                outs.push(layer.aggregate(tape, &p, alpha, &labels, z, dh)?);
            }
            let cat = tape.concat(&outs)?;
            h = layer.pct(tape, cat)?;
            trace.layers.push(weights);
        }
        Ok((h, trace))
    }
}

//! Target pooling, gated fusion of syntactic and contextual features, and
//! the classifier.

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::depgraph::{Polarity, Span};
use crate::error::{Error, Result};

/// Mean of the span's rows, `[1, d]`.
pub fn pool_span(tape: &mut Tape<'_>, h: Var, span: Span) -> Result<Var> {
    if span.is_empty() {
        return Err(Error::InvalidArgument("empty target span".into()));
    }
    tape.mean_rows(h, span.start, span.end)
}

/// Softmax of a logit slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, seed: u64) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            w: store.add_uniform(&format!("{name}.w"), &[input, output], bound, seed),
            b: store.add_uniform(&format!("{name}.b"), &[output], bound, seed),
        }
    }

    pub fn apply(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

/// Output of [`Head::forward`].
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub logits: Var,
    pub gate: Var,
    pub fused: Var,
}

#[derive(Debug, Clone)]
pub struct Head {
    pub syn: Linear,
    pub con: Linear,
    pub gate: Linear,
    pub classifier: Linear,
}

impl Head {
    /// `syn_dim` and `con_dim` are the widths of the pooled syntactic and
    /// contextual vectors; both are projected to `fusion_dim`.
    pub fn new(store: &mut ParamStore, syn_dim: usize, con_dim: usize, fusion_dim: usize, seed: u64) -> Self {
        Head {
            syn: Linear::new(store, "head.syn", syn_dim, fusion_dim, seed),
            con: Linear::new(store, "head.con", con_dim, fusion_dim, seed),
            gate: Linear::new(store, "head.gate", 2 * fusion_dim, fusion_dim, seed),
            classifier: Linear::new(store, "head.cls", fusion_dim, Polarity::NUM_CLASSES, seed),
        }
    }

    /// `g = σ(W_g [s; c] + b_g)`, `h_f = g ∘ s + (1 - g) ∘ c` on already
    /// projected vectors. Returns `(h_f, g)`.
    pub fn fuse(&self, tape: &mut Tape<'_>, syn: Var, con: Var) -> Result<(Var, Var)> {
        let both = tape.concat(&[syn, con])?;
        let pre = self.gate.apply(tape, both)?;
        let g = tape.sigmoid(pre);
        Ok((mix(tape, g, syn, con)?, g))
    }

    /// Pools both encodings over `span`, projects, fuses and classifies.
    pub fn forward(&self, tape: &mut Tape<'_>, h_syn: Var, h_con: Var, span: Span) -> Result<HeadOutput> {
        let ps = pool_span(tape, h_syn, span)?;
        let pc = pool_span(tape, h_con, span)?;
        let s = self.syn.apply(tape, ps)?;
        let c = self.con.apply(tape, pc)?;
        let (fused, gate) = self.fuse(tape, s, c)?;
        let logits = self.classifier.apply(tape, fused)?;
        Ok(HeadOutput { logits, gate, fused })
    }
}

/// `g ∘ a + (1 - g) ∘ b`
pub fn mix(tape: &mut Tape<'_>, g: Var, a: Var, b: Var) -> Result<Var> {
    let ga = tape.mul(g, a)?;
    let inv = tape.one_minus(g);
    let gb = tape.mul(inv, b)?;
    tape.add(ga, gb)
}

/// Class probabilities and `-log P(gold)` for one row of logits.
pub fn classify_loss(tape: &mut Tape<'_>, logits: Var, gold: Polarity) -> Result<(Vec<f64>, Var)> {
    let probs = softmax(tape.value(logits).data());
    let loss = tape.cross_entropy(logits, gold.class_index())?;
    Ok((probs, loss))
}

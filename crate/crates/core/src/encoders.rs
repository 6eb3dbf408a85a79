//! Token features and the BiLSTM contextual encoder.

use std::io::BufRead;

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::depgraph::{Instance, Span, TokenVocab};
use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};

/// Initialisation bound for embedding tables.
pub const EMBEDDING_INIT: f64 = 0.25;

/// Signed distance from each token to the nearest token of `span`; zero
/// inside the span.
pub fn target_distances(n: usize, span: Span) -> Vec<i64> {
    (0..n)
        .map(|i| {
            if i < span.start {
                i as i64 - span.start as i64
            } else if i >= span.end {
                i as i64 - (span.end as i64 - 1)
            } else {
                0
            }
        })
        .collect()
}

/// Position-table rows: distances clamped to `±max_distance`, then shifted
/// by `max_distance`.
pub fn position_indices(n: usize, span: Span, max_distance: usize) -> Vec<usize> {
    let m = max_distance as i64;
    target_distances(n, span)
        .into_iter()
        .map(|d| (d.clamp(-m, m) + m) as usize)
        .collect()
}

/// Reads whitespace-separated word vectors (`token v1 ... v_dim` per line)
/// into a `[vocab.len(), dim]` table. Rows of words absent from the file keep
/// their `uniform(-0.25, 0.25)` initialisation. Returns the table and the
/// number of vocabulary words found.
pub fn load_word_vectors<R: BufRead>(
    reader: R,
    vocab: &TokenVocab,
    dim: usize,
    seed: u64,
) -> Result<(Tensor, usize)> {
    let mut init = rng::stream(seed, "init:emb.word", 0);
    let mut table = Tensor::uniform(&[vocab.len(), dim], -EMBEDDING_INIT, EMBEDDING_INIT, &mut init);
    let mut seen = vec![false; vocab.len()];
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else {
            continue;
        };
        let values: Vec<f64> = parts
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("bad number: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let id = vocab.id(token);
        if id == TokenVocab::UNK && token != "<unk>" {
            continue;
        }
        if !seen[id] {
            seen[id] = true;
            table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
        }
    }
    Ok((table, seen.iter().filter(|s| **s).count()))
}

/// Word, POS, position and relation embedding tables.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub word: ParamId,
    pub pos: ParamId,
    pub position: ParamId,
    /// Shared by every graph layer and head; absent for variants that ignore
    /// relation labels.
    pub relation: Option<ParamId>,
    dropout: f64,
    max_distance: usize,
}

impl EmbeddingSet {
    pub fn new(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        vocab_sizes: (usize, usize, usize),
        word_table: Option<Tensor>,
    ) -> Result<Self> {
        let (n_words, n_pos, n_rel) = vocab_sizes;
        let word = match word_table {
            Some(t) => {
                if t.shape() != [n_words, cfg.word_dim] {
                    return Err(Error::InvalidArgument(format!(
                        "word table {:?} does not match vocabulary {} × {}",
                        t.shape(),
                        n_words,
                        cfg.word_dim
                    )));
                }
                store.add_with("emb.word", t, !cfg.freeze_embeddings)
            }
            None => store.add_uniform("emb.word", &[n_words, cfg.word_dim], EMBEDDING_INIT, cfg.seed),
        };
        let pos = store.add_uniform("emb.pos", &[n_pos, cfg.pos_dim], EMBEDDING_INIT, cfg.seed);
        let position = store.add_uniform(
            "emb.position",
            &[2 * cfg.max_distance + 1, cfg.position_dim],
            EMBEDDING_INIT,
            cfg.seed,
        );
        let relation = cfg.variant.relation_attention().then(|| {
            store.add_uniform("emb.relation", &[n_rel, cfg.relation_dim], EMBEDDING_INIT, cfg.seed)
        });
        Ok(EmbeddingSet {
            word,
            pos,
            position,
            relation,
            dropout: cfg.dropout,
            max_distance: cfg.max_distance,
        })
    }

    /// `x_i = [v_i; t_i; p_i]` for every token, `[n, word + pos + position]`.
    ///
    /// With `train = Some(rng)` dropout is applied to the word vectors.
    pub fn embed(&self, tape: &mut Tape<'_>, inst: &Instance, train: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let n = inst.len();
        if inst.word_ids.len() != n || inst.pos_tags.len() != n {
            return Err(Error::InvalidInstance("token, word id and tag counts differ".into()));
        }
        inst.target.check(n)?;
        let words = tape.embedding(self.word, &inst.word_ids)?;
        let words = match train {
            Some(rng) => tape.dropout(words, self.dropout, true, rng)?,
            None => words,
        };
        let tags = tape.embedding(self.pos, &inst.pos_tags)?;
        let positions = position_indices(n, inst.target, self.max_distance);
        let pos = tape.embedding(self.position, &positions)?;
        tape.concat(&[words, tags, pos])
    }
}

/// Weights of one LSTM direction. Gates are packed as `[i | f | g | o]`
/// along the columns.
#[derive(Debug, Clone)]
pub struct LstmDirection {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    hidden: usize,
}

impl LstmDirection {
    /// `uniform(-1/√H, 1/√H)` weights and biases; forget-gate bias shifted by +1.
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, seed: u64) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.add_uniform(&format!("{prefix}.w_ih"), &[input, 4 * hidden], bound, seed);
        let w_hh = store.add_uniform(&format!("{prefix}.w_hh"), &[hidden, 4 * hidden], bound, seed);
        let bias = store.add_uniform(&format!("{prefix}.b"), &[4 * hidden], bound, seed);
        for v in &mut store.value_mut(bias).data_mut()[hidden..2 * hidden] {
            *v += 1.0;
        }
        LstmDirection {
            w_ih,
            w_hh,
            bias,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Runs over the rows of `x` (reversed when `reverse`) from zero states.
    /// Returns the hidden state of each position, in original order.
    pub fn run(&self, tape: &mut Tape<'_>, x: Var, reverse: bool) -> Result<Vec<Var>> {
        let n = tape.value(x).rows();
        let h = self.hidden;
        let w_ih = tape.param(self.w_ih);
        let w_hh = tape.param(self.w_hh);
        let bias = tape.param(self.bias);
        let projected = tape.matmul(x, w_ih)?;
        let projected = tape.add(projected, bias)?;
        let mut out: Vec<Option<Var>> = vec![None; n];
        let mut state: Option<(Var, Var)> = None;
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let mut pre = tape.row(projected, t)?;
            if let Some((h_prev, _)) = state {
                let rec = tape.matmul(h_prev, w_hh)?;
                pre = tape.add(pre, rec)?;
            }
            let i = tape.slice_cols(pre, 0, h)?;
            let i = tape.sigmoid(i);
            let g = tape.slice_cols(pre, 2 * h, 3 * h)?;
            let g = tape.tanh(g);
            let o = tape.slice_cols(pre, 3 * h, 4 * h)?;
            let o = tape.sigmoid(o);
            let mut c = tape.mul(i, g)?;
            if let Some((_, c_prev)) = state {
                let f = tape.slice_cols(pre, h, 2 * h)?;
                let f = tape.sigmoid(f);
                let keep = tape.mul(f, c_prev)?;
                c = tape.add(keep, c)?;
            }
            let tc = tape.tanh(c);
            let h_t = tape.mul(o, tc)?;
            out[t] = Some(h_t);
            state = Some((h_t, c));
        }
        Ok(out.into_iter().map(|v| v.expect("every step visited")).collect())
    }
}

/// Bidirectional LSTM; output row `i` is `[→h_i; ←h_i]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, input: usize, hidden: usize, seed: u64) -> Self {
        BiLstm {
            forward: LstmDirection::new(store, "lstm.fwd", input, hidden, seed),
            backward: LstmDirection::new(store, "lstm.bwd", input, hidden, seed),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    /// `x: [n, input]` to `[n, 2 * hidden]`.
    pub fn encode(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        if tape.value(x).rows() == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let fwd = self.forward.run(tape, x, false)?;
        let bwd = self.backward.run(tape, x, true)?;
        let fwd = tape.stack_rows(&fwd)?;
        let bwd = tape.stack_rows(&bwd)?;
        tape.concat(&[fwd, bwd])
    }
}

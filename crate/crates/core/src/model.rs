//! The assembled classifier: embeddings, BiLSTM, graph encoder and head.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, Gradients, ParamStore, Tape, Tensor};
use crate::config::ModelConfig;
use crate::depgraph::{Instance, Polarity, Vocabularies};
use crate::encoders::{load_word_vectors, BiLstm, EmbeddingSet};
use crate::error::{Error, Result};
use crate::head::{argmax, classify_loss, Head, HeadOutput};
use crate::rgat::{AttentionTrace, GraphEncoder, TraceExport};
use crate::rng::ChaCha8Rng;

pub const CONFIG_FILE: &str = "config.toml";
pub const VOCAB_FILE: &str = "vocab.json";
pub const PARAMS_FILE: &str = "params.ckpt";

/// One prediction line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probs: Vec<f64>,
    pub predicted: Polarity,
    pub gold: Polarity,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    vocab: Vocabularies,
    store: ParamStore,
    pub embeddings: EmbeddingSet,
    pub lstm: BiLstm,
    pub graph: GraphEncoder,
    pub head: Head,
}

impl Model {
    /// Initialises every parameter from `config.seed`. `word_table` replaces
    /// the random word embeddings (frozen when `freeze_embeddings` is set).
    pub fn new(config: ModelConfig, vocab: Vocabularies, word_table: Option<Tensor>) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let sizes = (vocab.words.len(), vocab.pos.len(), vocab.relations.len());
        let embeddings = EmbeddingSet::new(&mut store, &config, sizes, word_table)?;
        let lstm = BiLstm::new(&mut store, config.input_dim(), config.lstm_hidden, config.seed);
        let graph = GraphEncoder::new(&mut store, &config, config.input_dim());
        let head = Head::new(
            &mut store,
            config.graph_dim,
            lstm.output_dim(),
            config.fusion_dim,
            config.seed,
        );
        Ok(Model {
            config,
            vocab,
            store,
            embeddings,
            lstm,
            graph,
            head,
        })
    }

    /// Like [`Model::new`], reading word vectors from `config.embeddings`
    /// when it is set.
    pub fn from_config(config: ModelConfig, vocab: Vocabularies) -> Result<Self> {
        let table = match &config.embeddings {
            Some(path) => {
                let file = BufReader::new(File::open(path)?);
                let (table, _) = load_word_vectors(file, &vocab.words, config.word_dim, config.seed)?;
                Some(table)
            }
            None => None,
        };
        Model::new(config, vocab, table)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabularies {
        &self.vocab
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Records one instance on `tape`. Dropout is active iff `dropout` holds
    /// a generator.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        inst: &Instance,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(HeadOutput, AttentionTrace)> {
        let x = self.embeddings.embed(tape, inst, dropout)?;
        let h_con = self.lstm.encode(tape, x)?;
        let relation = self.embeddings.relation.map(|r| tape.param(r));
        let (h_syn, trace) = self.graph.encode(tape, x, &inst.graph, relation)?;
        let out = self.head.forward(tape, h_syn, h_con, inst.target)?;
        Ok((out, trace))
    }

    /// Cross-entropy of one instance and its parameter gradients (no L2).
    pub fn instance_gradients(
        &self,
        inst: &Instance,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new(&self.store);
        let (out, _) = self.forward(&mut tape, inst, dropout)?;
        let (_, loss) = classify_loss(&mut tape, out.logits, inst.polarity)?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?.into_params()))
    }

    /// `Σ_b -log P(gold_b) + λ‖Θ‖²` and its gradient. `rngs` supplies one
    /// dropout generator per instance; `None` disables dropout.
    pub fn batch_gradients(
        &self,
        batch: &[&Instance],
        rngs: Option<&mut [ChaCha8Rng]>,
    ) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::new(&self.store);
        let mut total = 0.0;
        match rngs {
            Some(rngs) => {
                if rngs.len() != batch.len() {
                    return Err(Error::InvalidArgument("one generator per instance expected".into()));
                }
                for (inst, rng) in batch.iter().zip(rngs.iter_mut()) {
                    let (l, g) = self.instance_gradients(inst, Some(rng))?;
                    total += l;
                    grads.merge(&g);
                }
            }
            None => {
                for inst in batch {
                    let (l, g) = self.instance_gradients(inst, None)?;
                    total += l;
                    grads.merge(&g);
                }
            }
        }
        total += self.config.l2 * self.store.l2_norm_sq();
        grads.add_l2(&self.store, self.config.l2);
        Ok((total, grads))
    }

    pub fn predict(&self, inst: &Instance) -> Result<Prediction> {
        let mut tape = Tape::new(&self.store);
        let (out, _) = self.forward(&mut tape, inst, None)?;
        let (probs, _) = classify_loss(&mut tape, out.logits, inst.polarity)?;
        let predicted = Polarity::from_class_index(argmax(&probs)).expect("three classes");
        Ok(Prediction {
            id: inst.id.clone(),
            probs,
            predicted,
            gold: inst.polarity,
        })
    }

    pub fn attention(&self, inst: &Instance) -> Result<AttentionTrace> {
        let mut tape = Tape::new(&self.store);
        Ok(self.forward(&mut tape, inst, None)?.1)
    }

    pub fn trace(&self, inst: &Instance) -> Result<TraceExport> {
        let trace = self.attention(inst)?;
        Ok(TraceExport::new(
            &inst.id,
            &inst.tokens,
            &inst.graph,
            &self.vocab.relations,
            &trace,
        ))
    }

    /// Writes `config.toml`, `vocab.json` and `params.ckpt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_FILE), self.config.to_toml_string())?;
        let mut v = BufWriter::new(File::create(dir.join(VOCAB_FILE))?);
        serde_json::to_writer(&mut v, &self.vocab)?;
        v.flush()?;
        let mut p = BufWriter::new(File::create(dir.join(PARAMS_FILE))?);
        checkpoint::save_params(&mut p, &self.store)?;
        p.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config = ModelConfig::from_toml_str(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let vocab: Vocabularies =
            serde_json::from_reader(BufReader::new(File::open(dir.join(VOCAB_FILE))?))?;
        let saved = checkpoint::load_params(BufReader::new(File::open(dir.join(PARAMS_FILE))?))?;
        // a pretrained table only needs the right shape here; values come from the file
        let word_table = saved
            .by_name("emb.word")
            .filter(|p| !p.trainable)
            .map(|p| p.value.clone());
        let mut model = Model::new(config, vocab, word_table)?;
        model.store.load_values(&saved)?;
        Ok(model)
    }
}

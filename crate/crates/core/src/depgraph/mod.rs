//! Typed dependency graphs, corpus ingestion and graph perturbations.

mod conllu;
mod graph;
mod instance;
mod perturb;
mod targets;
mod vocab;

pub use conllu::{read_conllu, write_conllu, ConllSentence};
pub use graph::DepGraph;
pub use instance::{read_jsonl, write_jsonl, Instance, InstanceRecord, Polarity, Span, Vocabularies};
pub use perturb::{mask_label, mask_label_with, permute_labels, prufer_decode, random_tree, MaskMode};
pub use targets::{attach_targets, read_target_labels, TargetLabel};
pub use vocab::{LabelId, RelationVocab, TokenVocab};

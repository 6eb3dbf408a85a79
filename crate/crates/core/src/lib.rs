//! Relational graph attention networks over typed dependency trees for
//! targeted sentiment classification.
//!
//! The crate is organised bottom-up:
//!
//! * [`depgraph`]: typed dependency graphs, CoNLL-U and JSONL ingestion,
//!   and the perturbations used by robustness studies;
//! * [`autodiff`]: dense `f64` tensors, a reverse-mode tape and a
//!   finite-difference gradient checker;
//! * [`encoders`]: word/POS/position embeddings and the BiLSTM;
//! * [`rgat`]: GAT, relation-aware attention and aggregation, PCT sublayers;
//! * [`head`]: span pooling, gated fusion and the classifier loss;
//! * [`model`]: the assembled network;
//! * [`training`]: Adamax, training loop, metrics, experiment suites and a
//!   synthetic label-signal dataset.

pub mod autodiff;
pub mod config;
pub mod depgraph;
pub mod encoders;
mod error;
pub mod head;
pub mod model;
pub mod rgat;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/graphs.md")]
    struct Graphs;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    struct Autodiff;
    #[doc = include_str!("../../../book/src/attention.md")]
    struct Attention;
    #[doc = include_str!("../../../book/src/head.md")]
    struct Head;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    struct Synthetic;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}

//! Optimiser, training loop, metrics, experiment suites and the synthetic
//! label-signal dataset.

mod check;
mod metrics;
mod optim;
pub mod suite;
pub mod synthetic;
mod trainer;

pub use check::{fit_instance, model_grad_check, FitOutcome};
pub use metrics::{ClassScores, MetricsReport};
pub use optim::Adamax;
pub use suite::{run_suite, Suite, SuiteData, SuiteOptions, SuiteReport, SuiteRow, SummaryRow};
pub use synthetic::{gen_synthetic, SyntheticSpec};
pub use trainer::{evaluate, train, train_with, EpochRecord, TrainOutcome};

//! Conversational semantic role labeling: a predicate-aware transformer
//! encoder feeding a speaker-aware relational graph over utterances.
//!
//! The pipeline is corpus → [`model::Model::prepare`] → encoder → utterance
//! graph → objectives, with training and scoring in [`harness`].

pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
mod error;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod synthetic;
pub mod tags;
pub mod vocab;

pub use config::{Switch, TrainConfig};
pub use corpus::{
    load_corpus, parse_corpus, ArgumentSpan, Conversation, Dataset, Frame, Instance, Span,
};
pub use error::{CsrlError, Result};
pub use harness::{evaluate, run_ablation, train, Evaluation, TrainOutcome};
pub use metrics::{Counts, Metrics, Score, TupleCounts};
pub use model::{Ablations, Model, ModelConfig};

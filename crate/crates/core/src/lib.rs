//! Context-dependent class language models for spoken dialogue.

pub mod classlm;
pub mod config;
pub mod contextmap;
pub mod corpus;
pub mod dialog;
pub mod error;
pub mod eval;
pub mod recsim;
pub mod registry;
pub mod semantics;
pub mod wordclass;

pub use classlm::{ClassNGramModel, PerplexityReport, SentenceScorer, Smoothing, SmoothingConfig, TrainConfig};
pub use config::Config;
pub use contextmap::{
    classify_context, effective_lm, ClassStats, DialogueAct, DialogueContext, LmClassId, RobustnessPolicy,
    TaskParameter,
};
pub use corpus::{Token, Utterance, Vocabulary};
pub use dialog::{run_session, PolicyConfig, Timetable, Transcript};
pub use error::{Error, Result};
pub use eval::{ComparisonReport, Group, GroupRow};
pub use recsim::{ConfusionTable, NBestList};
pub use registry::{LMRegistry, ModelPair};
pub use semantics::{CaseFrame, SemanticLexicon};
pub use wordclass::{ClusterOutcome, WordClassMap};

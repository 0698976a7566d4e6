//! Attention probing for multilingual discourse relation classification.
//!
//! The pipeline: parse DISRPT-style relation corpora ([`disrpt`]), map
//! corpus labels onto a 17-class taxonomy ([`labels`]), pool causal attention
//! between and within relation arguments into fixed-length vectors
//! ([`repr`], with [`toy_lm`] as a self-contained attention source), train
//! two-layer MLP probes on them ([`probe`]) and evaluate across languages,
//! families, layers and classes ([`experiment`]). [`pipeline`] strings the
//! steps together.

pub mod disrpt;
pub mod error;
pub mod experiment;
pub mod labels;
pub mod pipeline;
pub mod probe;
pub mod repr;
pub mod synthetic;
pub mod toy_lm;

pub use disrpt::{
    Corpus, DatasetId, Direction, Document, Framework, RelationInstance, RelationRecord, Split,
    TokenSpanSet,
};
pub use error::{Error, Result};
pub use experiment::{ConfusionMatrix, PartitionFilter, Regime, RunResults, RunSettings};
pub use labels::{MappingTable, TopLevelClass, UnifiedLabel};
pub use probe::{ProbeInput, ProbeModel, TrainConfig};
pub use repr::{
    AttentionSource, AttentionTensor, PoolingConfig, ReprLayout, ReprStore, SpanRepresentation,
    Strategy, Subset, WindowPolicy,
};
pub use toy_lm::{ToyConfig, ToySource};

//! Dataset schemas, prefixes and ingestion.

mod dataset;
mod pair;
mod prefix;

pub use dataset::{
    load_qrels, load_task_dataset, load_task_dataset_with_warnings, resolve, ClassificationData, CorpusDoc, Label,
    LabeledText, LoadOptions, MultiLabelData, MultiLabelText, QrelLine, QueryRecord, RerankMetric, RerankQuery,
    RetrievalData, ScoredPair, Split, TaskDataset, TaskKind, TextPair,
};
pub use pair::{load_training_pairs, write_training_pairs, TrainingPair};
pub use prefix::{apply_prefix, assign_prefix, PairRole, PrefixKind};

//! Annotation exploitation for hierarchical linear predictors trained on
//! precomputed feature embeddings.
//!
//! The pipeline has three stages:
//!
//! 1. **Sparse seeding**: K-means over the training embeddings, then the
//!    cosine-nearest member of each cluster is annotated ([`seeding`]).
//! 2. **Semi-supervised active learning**: least-confidence annotation
//!    requests plus confidence-gated pseudo annotations ([`acquisition`]).
//! 3. **Quenching**: periodic restoration of the initial predictor weights
//!    while pseudo annotations are refreshed ([`trainer`]).
//!
//! The [`predictor`] module holds the attribute heads and the malignancy head
//! that consumes the features concatenated with the attribute outputs;
//! [`eval`] implements the ±1 attribute accuracy rule, the k-correct
//! distribution and the ablation grid.

pub mod acquisition;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod predictor;
pub mod report;
pub mod rng;
pub mod seeding;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use acquisition::{AcquisitionScores, LabelPool, Oracle, Strategy};
pub use config::{DataSource, ExperimentConfig, load_config};
pub use data::{
    AnnotationRecord, AnnotationTable, AttributeSchema, Dataset, FeatureMatrix, Split, SplitMap,
};
pub use error::{Error, Result};
pub use eval::{MetricReport, attribute_correct, evaluate, k_correct_distribution};
pub use predictor::{HierarchicalPredictor, OptimizerState, PredictionBundle};
pub use seeding::{ClusteringResult, kmeans, select_seeds};
pub use stats::MeanStd;
pub use synth::{SynthConfig, generate_synthetic};
pub use trainer::{AggregateReport, RunConfig, RunReport, run_experiment};

//! Trainable auditors, baselines and the difficulty-curve driver.
//!
//! The network is a dense ReLU MLP written directly over `f64` slices with
//! hand-derived backpropagation; see [`gradcheck`] for its verification.

pub mod baseline;
pub mod checkpoint;
pub mod difficulty;
pub mod gradcheck;
pub mod knn;
pub mod network;
pub mod split;
pub mod train;

pub use baseline::{train_graph_only_baseline, GraphBaseline, GraphBaselineConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use difficulty::{
    difficulty_curve, group_difficulty, AuditorPredictor, CellInputs, ContractPredictor,
    DifficultyCell, DifficultyOptions, DifficultyTable, OraclePredictor, QHatMode,
    RandomCoinPredictor,
};
pub use gradcheck::{grad_check, grad_check_with, GradBatch, GradCheckReport};
pub use knn::KnnMemory;
pub use split::{make_splits, SeedSplit, SplitPlan};
pub use train::{
    ablation_id_contract, ablation_no_local_evidence, assemble_inputs, contract_labels,
    train_arrays, train_contract_auditor, train_mos_mlp, AuditorConfig, AuditorModel, HeadMode,
    ModelOutput, Standardizer, TrainArrays, TrainingData,
};

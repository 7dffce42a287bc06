//! Data-driven operator learning: datasets, optimizers, the training loop,
//! checkpoints, benchmark tables and figures.

pub mod bench;
pub mod checkpoint;
pub mod dataset;
pub mod optim;
pub mod plot;
pub mod results;
pub mod schedule;
pub mod trainer;

pub use checkpoint::{Checkpoint, TrainingMeta};
pub use dataset::{dataset_generate, Dataset, DatasetMeta, Generation};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer};
pub use plot::{sample_svg, scatter_svg};
pub use results::{evaluate, read_results, rows_from_csv, rows_to_csv, write_results, Approximator, ResultRow, CSV_HEADER};
pub use schedule::{lr_schedule, LrSchedule, LR_FLOOR};
pub use trainer::{data_loss_tape, dataset_l2_error, dataset_target_norm, select_best, train, LogEntry, RunSummary, TrainConfig, TrainOutcome};
pub use bench::{run_bench, BenchConfig, BenchPaths, ModelConfig, ArchConfig};

//! Losses, optimizer, learning-rate schedule, DOA voting and the
//! training/evaluation loops.

mod adam;
mod loss;
mod schedule;
mod trainer;

pub use adam::AdamState;
pub use loss::{argmax, doa_vote, softmax, task1_loss, task2_loss, LossParts};
pub use schedule::{lr_at, TrainConfig};
pub use trainer::{
    batch_indices, evaluate, evaluate_example, evaluate_parallel, summarize, example_loss, rank_classes, EvalReport, Example, StepLog, Trainer,
    UttEval, LOSS_CSV_HEADER,
};

//! Fully-connected velocity network, its training loop and reflow.

mod checkpoint;
mod mlp;
mod train;

pub use checkpoint::{read_checkpoint, read_checkpoint_from, write_checkpoint, write_checkpoint_to};
pub use mlp::{time_features, Gradients, Mlp, Workspace};
pub use train::{
    reflow, train_rectified_flow, transport_pairs, CoupledPairs, FnPairs, LrSchedule, Optimizer, PairSource,
    TrainConfig, TrainOutcome,
};

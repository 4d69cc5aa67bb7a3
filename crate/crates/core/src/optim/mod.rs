//! Adam, the joint loss over a sequence, the training loop and checkpoints.

mod adam;
mod checkpoint;
mod loss;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, load_latents, read_checkpoint, read_latents, save_checkpoint, save_latents, write_checkpoint,
    write_latents,
};
pub use loss::{sequence_loss, sequence_loss_prepared, PreparedSequence, SequenceLoss};
pub use train::{derive_seed, train, IterationLog, TrainConfig, TrainedModel, Trainer};

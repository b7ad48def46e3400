//! Residual convolutional chart / fingerprinting network.

pub mod arch;
pub mod checkpoint;
pub mod loss;
pub mod net;
pub mod train;

pub use arch::{ArchSpec, Shape};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use loss::{fp_loss, normalize_cir, siamese_loss};
pub use net::{build_model, forward, frame_input, gradient, ModelParams};
pub use train::{train_chart, train_fp, HyperParams, TrainOutcome};

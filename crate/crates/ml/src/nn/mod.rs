//! Small CPU neural-network stack: tensors, layers with manual backward
//! passes, Adam, and the residual classifier / skeleton decoder built on it.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod gradcheck;
pub mod layers;
pub mod net;
pub mod tensor;
pub mod train;

use thiserror::Error;
use wivi_core::binio::BinError;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use checkpoint::{load_cnn, load_winn, save_cnn, save_winn, NN_MAGIC};
pub use data::{batch_tensor, upsample_sample, upsample_values};
pub use net::{BasicBlock, Backbone, Cnn, NetConfig, Winn, WinnHead};
pub use tensor::{Param, Scalar, Tensor4};
pub use train::{
    cnn_logits, cnn_mean_loss, eval_cnn, train_cnn, train_cnn_with, train_winn, train_winn_with, winn_features_for_svm,
    winn_heatmaps, winn_mean_mse, EpochStats, TrainLog,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value")]
    NonFinite,
    #[error("empty sample set")]
    EmptySet,
    #[error("label index {0} out of range")]
    Label(usize),
    #[error("{samples} samples but {targets} heatmap targets")]
    Misaligned { samples: usize, targets: usize },
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Format(#[from] BinError),
}

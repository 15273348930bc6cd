//! Classifiers for CSI activity recognition: an SMO-trained RBF SVM and a
//! from-scratch residual network in two flavours (direct classifier and
//! skeleton-heatmap decoder whose output feeds the SVM).

pub mod nn;
pub mod svm;

pub use svm::{
    predict_binary, predict_multiclass, rbf_kernel, train_binary, train_multiclass, BinaryModel, MulticlassModel,
    SvmConfig, SvmError,
};

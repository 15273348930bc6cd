//! Core building blocks for WiFi CSI human activity recognition.
//!
//! The crate covers everything up to the classifiers:
//!
//! - [`csi`]: channel-state domain types and amplitude/phase math
//! - [`ingest`]: bit-exact reader and writer for `.dat` capture files plus label sidecars
//! - [`dsp`]: median, mean and zero-phase Butterworth denoising of amplitude streams
//! - [`segment`]: time segmentation, 10-packet averaging, augmentation and stratified splits
//! - [`sim`]: a multipath simulator that produces labelled captures and skeleton heatmaps
//!
//! Binary file helpers shared by the sample, heatmap and model formats live in [`binio`].

pub mod binio;
pub mod csi;
pub mod dsp;
pub mod ingest;
pub mod segment;
pub mod sim;

pub use csi::{
    amplitude, amplitude_series, phase, to_feature_vector, ActivityLabel, ComplexGain, CsiError,
    CsiMatrix, CsiPacket, CsiSample, CsiSequence, SceneLabel, FEATURE_LEN, NUM_ANTENNAS,
    NUM_SUBCARRIERS,
};
pub use sim::SkeletonHeatmap;

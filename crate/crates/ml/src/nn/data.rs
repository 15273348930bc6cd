//! CSI sample → image tensor mapping.

use wivi_core::csi::{CsiSample, FEATURE_LEN, NUM_ANTENNAS, NUM_SUBCARRIERS};

use super::layers::resize_plane;
use super::tensor::{Scalar, Tensor4};
use super::NnError;

/// Rows of the CSI image: one per antenna pair, `tx·3 + rx`.
pub const IMAGE_ROWS: usize = NUM_ANTENNAS * NUM_ANTENNAS;
pub const IMAGE_COLS: usize = NUM_SUBCARRIERS;

/// Lays the 270 amplitudes out as a 9×30 image, bilinearly resizes it to
/// `side×side`, min-max normalizes to `[0, 1]` (a flat image becomes 0.5) and
/// replicates it over `channels` planes.
pub fn upsample_values<T: Scalar>(values: &[f64], side: usize, channels: usize) -> Result<Vec<T>, NnError> {
    if values.len() != FEATURE_LEN {
        return Err(NnError::Shape(format!("sample has {} values, expected {FEATURE_LEN}", values.len())));
    }
    if side == 0 || channels == 0 {
        return Err(NnError::Shape("upsample target must be non-empty".into()));
    }
    let mut plane = resize_plane(values, IMAGE_ROWS, IMAGE_COLS, side, side);
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 1e-12 * hi.abs().max(1.0) {
        plane.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    } else {
        plane.iter_mut().for_each(|v| *v = 0.5);
    }
    let plane: Vec<T> = plane.into_iter().map(T::lit).collect();
    let mut out = Vec::with_capacity(channels * plane.len());
    for _ in 0..channels {
        out.extend_from_slice(&plane);
    }
    Ok(out)
}

pub fn upsample_sample<T: Scalar>(s: &CsiSample, side: usize, channels: usize) -> Result<Tensor4<T>, NnError> {
    Tensor4::from_vec([1, channels, side, side], upsample_values(s.values(), side, channels)?)
}

/// Batch tensor for the given sample indices.
pub fn batch_tensor<T: Scalar>(
    samples: &[CsiSample],
    idx: &[usize],
    side: usize,
    channels: usize,
) -> Result<Tensor4<T>, NnError> {
    let mut data = Vec::with_capacity(idx.len() * channels * side * side);
    for &i in idx {
        data.extend(upsample_values::<T>(samples[i].values(), side, channels)?);
    }
    Tensor4::from_vec([idx.len(), channels, side, side], data)
}

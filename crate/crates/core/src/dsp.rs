//! Denoising of amplitude streams: outlier-removing median, smoothing mean,
//! then a zero-phase Butterworth low-pass.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csi::{
    amplitude_series, feature_cell, CsiError, CsiSequence, FEATURE_LEN, NUM_ANTENNAS,
    NUM_SUBCARRIERS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("empty input series")]
    EmptyInput,
    #[error("window must be >= 1")]
    InvalidWindow,
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("series of length {len} is too short for zero-phase filtering (need more than {min})")]
    TooShort { len: usize, min: usize },
    #[error("stream {index} (tx{tx}_rx{rx}_sc{sub}): {source}")]
    Stream {
        index: usize,
        tx: usize,
        rx: usize,
        sub: usize,
        source: Box<DspError>,
    },
    #[error("stream CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Csi(#[from] CsiError),
}

/// Where a sliding window sits relative to its output sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// `[i - ceil(w/2) + 1, i + floor(w/2)]`; even windows lean left.
    #[default]
    Centered,
    /// `[i - w + 1, i]`.
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub median_window: usize,
    pub mean_window: usize,
    pub butter_order: usize,
    pub butter_cutoff_hz: f64,
    pub fs_hz: f64,
    pub alignment: Alignment,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            median_window: 40,
            mean_window: 40,
            butter_order: 5,
            butter_cutoff_hz: 10.0,
            fs_hz: 100.0,
            alignment: Alignment::Centered,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.median_window == 0 || self.mean_window == 0 {
            return Err(DspError::InvalidSpec("windows must be >= 1".into()));
        }
        if self.butter_order == 0 {
            return Err(DspError::InvalidSpec("order must be >= 1".into()));
        }
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(DspError::InvalidSpec(format!("fs_hz={} must be > 0", self.fs_hz)));
        }
        let c = self.butter_cutoff_hz;
        if !(c.is_finite() && c > 0.0 && c < self.fs_hz / 2.0) {
            return Err(DspError::InvalidSpec(format!(
                "cutoff {c} Hz must lie in (0, {})",
                self.fs_hz / 2.0
            )));
        }
        Ok(())
    }

    /// Shortest series [`preprocess`] accepts.
    pub fn min_len(&self) -> usize {
        3 * self.butter_order + 1
    }
}

#[inline]
fn window_bounds(i: usize, n: usize, w: usize, align: Alignment) -> (usize, usize) {
    let (back, fwd) = match align {
        Alignment::Centered => (w.div_ceil(2) - 1, w / 2),
        Alignment::Trailing => (w - 1, 0),
    };
    (i.saturating_sub(back), (i + fwd).min(n - 1))
}

fn check_input(series: &[f64], window: usize) -> Result<(), DspError> {
    if series.is_empty() {
        return Err(DspError::EmptyInput);
    }
    if window == 0 {
        return Err(DspError::InvalidWindow);
    }
    Ok(())
}

pub fn median_filter(series: &[f64], window: usize) -> Result<Vec<f64>, DspError> {
    median_filter_aligned(series, window, Alignment::Centered)
}

/// Sliding median over a truncated window. Even counts average the two middle values.
pub fn median_filter_aligned(
    series: &[f64],
    window: usize,
    align: Alignment,
) -> Result<Vec<f64>, DspError> {
    check_input(series, window)?;
    let n = series.len();
    let mut sorted: Vec<f64> = Vec::with_capacity(window + 1);
    let (mut lo, mut hi) = (0usize, 0usize); // current window is series[lo..hi]
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = window_bounds(i, n, window, align);
        while hi <= b {
            let v = series[hi];
            let at = sorted.partition_point(|&x| x.total_cmp(&v).is_lt());
            sorted.insert(at, v);
            hi += 1;
        }
        while lo < a {
            let v = series[lo];
            let at = sorted.partition_point(|&x| x.total_cmp(&v).is_lt());
            sorted.remove(at);
            lo += 1;
        }
        let k = sorted.len();
        out.push(if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        });
    }
    Ok(out)
}

pub fn mean_filter(series: &[f64], window: usize) -> Result<Vec<f64>, DspError> {
    mean_filter_aligned(series, window, Alignment::Centered)
}

/// Sliding arithmetic mean over a truncated window.
pub fn mean_filter_aligned(
    series: &[f64],
    window: usize,
    align: Alignment,
) -> Result<Vec<f64>, DspError> {
    check_input(series, window)?;
    let n = series.len();
    // Direct sums rather than a running total: no drift over long streams.
    Ok((0..n)
        .map(|i| {
            let (a, b) = window_bounds(i, n, window, align);
            series[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
        })
        .collect())
}

/// Digital IIR transfer function `B(z)/A(z)` with `a[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IirCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl IirCoefficients {
    pub fn order(&self) -> usize {
        self.a.len().max(self.b.len()) - 1
    }

    /// Complex response at `freq_hz` as `(re, im)`.
    pub fn response(&self, freq_hz: f64, fs_hz: f64) -> (f64, f64) {
        let w = 2.0 * std::f64::consts::PI * freq_hz / fs_hz;
        let eval = |c: &[f64]| {
            c.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, &ck)| {
                let t = -w * k as f64;
                (re + ck * t.cos(), im + ck * t.sin())
            })
        };
        let (nr, ni) = eval(&self.b);
        let (dr, di) = eval(&self.a);
        let d = dr * dr + di * di;
        ((nr * dr + ni * di) / d, (ni * dr - nr * di) / d)
    }

    pub fn magnitude(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        let (re, im) = self.response(freq_hz, fs_hz);
        re.hypot(im)
    }

    /// Steady-state filter state for a unit step, found by backward recursion
    /// from the last delay element.
    pub fn steady_state(&self) -> Vec<f64> {
        let n = self.order();
        let coef = |c: &[f64], k: usize| c.get(k).copied().unwrap_or(0.0);
        let yss = self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>();
        let mut z = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n).rev() {
            acc += coef(&self.b, i + 1) - coef(&self.a, i + 1) * yss;
            z[i] = acc;
        }
        z
    }

    /// Direct-form II transposed filtering; `state` is updated in place.
    pub fn filter_with_state(&self, x: &[f64], state: &mut [f64]) -> Vec<f64> {
        let n = self.order();
        debug_assert_eq!(state.len(), n);
        let coef = |c: &[f64], k: usize| c.get(k).copied().unwrap_or(0.0);
        let b: Vec<f64> = (0..=n).map(|k| coef(&self.b, k)).collect();
        let a: Vec<f64> = (0..=n).map(|k| coef(&self.a, k)).collect();
        let mut y = Vec::with_capacity(x.len());
        for &xi in x {
            let yi = b[0] * xi + state.first().copied().unwrap_or(0.0);
            for i in 0..n {
                let next = if i + 1 < n { state[i + 1] } else { 0.0 };
                state[i] = b[i + 1] * xi - a[i + 1] * yi + next;
            }
            y.push(yi);
        }
        y
    }
}

#[derive(Clone, Copy)]
struct C64(f64, f64);

impl C64 {
    fn mul(self, o: C64) -> C64 {
        C64(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
    fn div(self, o: C64) -> C64 {
        let d = o.0 * o.0 + o.1 * o.1;
        C64((self.0 * o.0 + self.1 * o.1) / d, (self.1 * o.0 - self.0 * o.1) / d)
    }
}

/// Real coefficients of `prod (1 - r z^-1)`, highest power of `z^-1` last.
fn poly_from_roots(roots: &[C64]) -> Vec<f64> {
    let mut c = vec![C64(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C64(0.0, 0.0); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k].0 += ck.0;
            next[k].1 += ck.1;
            let t = ck.mul(r);
            next[k + 1].0 -= t.0;
            next[k + 1].1 -= t.1;
        }
        c = next;
    }
    c.into_iter().map(|z| z.0).collect()
}

/// Low-pass Butterworth design by bilinear transform with prewarped cutoff, unit DC gain.
pub fn butterworth_lowpass(spec: &FilterSpec) -> Result<IirCoefficients, DspError> {
    spec.validate()?;
    let n = spec.butter_order;
    let fs2 = 2.0 * spec.fs_hz;
    let wc = fs2 * (std::f64::consts::PI * spec.butter_cutoff_hz / spec.fs_hz).tan();
    let poles: Vec<C64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let s = C64(wc * theta.cos(), wc * theta.sin());
            C64(fs2 + s.0, s.1).div(C64(fs2 - s.0, -s.1))
        })
        .collect();
    let a = poly_from_roots(&poles);
    let mut b = poly_from_roots(&vec![C64(-1.0, 0.0); n]);
    let k = a.iter().sum::<f64>() / b.iter().sum::<f64>();
    b.iter_mut().for_each(|v| *v *= k);
    Ok(IirCoefficients { b, a })
}

/// Forward-backward filtering with odd-reflection edge padding of `3·(order+1)`
/// samples (shortened to `len − 1` for very short inputs).
pub fn filter_zero_phase(coeffs: &IirCoefficients, series: &[f64]) -> Result<Vec<f64>, DspError> {
    let order = coeffs.order();
    let n = series.len();
    if n <= 3 * order || n < 2 {
        return Err(DspError::TooShort {
            len: n,
            min: (3 * order).max(1),
        });
    }
    let pad = (3 * (order + 1)).min(n - 1);
    let (first, last) = (series[0], series[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - series[i]));
    ext.extend_from_slice(series);
    ext.extend((1..=pad).map(|i| 2.0 * last - series[n - 1 - i]));

    let zi = coeffs.steady_state();
    let mut state: Vec<f64> = zi.iter().map(|z| z * ext[0]).collect();
    let mut y = coeffs.filter_with_state(&ext, &mut state);
    y.reverse();
    let mut state: Vec<f64> = zi.iter().map(|z| z * y[0]).collect();
    let mut y = coeffs.filter_with_state(&y, &mut state);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

/// Median → mean → zero-phase low-pass on one stream.
pub fn clean_series(
    series: &[f64],
    spec: &FilterSpec,
    coeffs: &IirCoefficients,
) -> Result<Vec<f64>, DspError> {
    let m = median_filter_aligned(series, spec.median_window, spec.alignment)?;
    let m = mean_filter_aligned(&m, spec.mean_window, spec.alignment)?;
    filter_zero_phase(coeffs, &m)
}

fn tag_stream(index: usize, e: DspError) -> DspError {
    let (tx, rx, sub) = feature_cell(index);
    DspError::Stream {
        index,
        tx,
        rx,
        sub,
        source: Box::new(e),
    }
}

/// Cleans already-extracted streams (indexed like feature vectors). Streams run in parallel.
pub fn preprocess_streams(streams: &[Vec<f64>], spec: &FilterSpec) -> Result<Vec<Vec<f64>>, DspError> {
    let coeffs = butterworth_lowpass(spec)?;
    streams
        .par_iter()
        .enumerate()
        .map(|(i, s)| clean_series(s, spec, &coeffs).map_err(|e| tag_stream(i, e)))
        .collect()
}

/// Extracts the 270 amplitude streams of a 3×3 sequence in feature order.
pub fn amplitude_streams(seq: &CsiSequence) -> Result<Vec<Vec<f64>>, DspError> {
    (0..FEATURE_LEN)
        .map(|i| {
            let (tx, rx, sub) = feature_cell(i);
            amplitude_series(seq, tx, rx, sub).map_err(|e| tag_stream(i, e.into()))
        })
        .collect()
}

/// Full denoising of every amplitude stream of a sequence.
pub fn preprocess(seq: &CsiSequence, spec: &FilterSpec) -> Result<Vec<Vec<f64>>, DspError> {
    spec.validate()?;
    preprocess_streams(&amplitude_streams(seq)?, spec)
}

pub fn stream_header() -> String {
    (0..FEATURE_LEN)
        .map(|i| {
            let (t, r, s) = feature_cell(i);
            format!("tx{t}_rx{r}_sc{s}")
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// One row per packet, one column per stream.
pub fn format_streams_csv(streams: &[Vec<f64>]) -> String {
    let len = streams.first().map_or(0, Vec::len);
    let mut s = stream_header();
    s.push('\n');
    for t in 0..len {
        for (i, st) in streams.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{:.6}", st[t]);
        }
        s.push('\n');
    }
    s
}

pub fn parse_streams_csv(text: &str) -> Result<Vec<Vec<f64>>, DspError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| DspError::Csv("empty file".into()))?;
    if header.trim() != stream_header() {
        return Err(DspError::Csv(format!(
            "header must list the {FEATURE_LEN} streams tx0_rx0_sc0..tx{}_rx{}_sc{}",
            NUM_ANTENNAS - 1,
            NUM_ANTENNAS - 1,
            NUM_SUBCARRIERS - 1
        )));
    }
    let mut streams = vec![Vec::new(); FEATURE_LEN];
    for (row, line) in lines.enumerate() {
        let mut count = 0;
        for (i, cell) in line.split(',').enumerate() {
            if i >= FEATURE_LEN {
                return Err(DspError::Csv(format!("row {}: too many columns", row + 2)));
            }
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| DspError::Csv(format!("row {}: bad number '{cell}'", row + 2)))?;
            streams[i].push(v);
            count += 1;
        }
        if count != FEATURE_LEN {
            return Err(DspError::Csv(format!(
                "row {}: expected {FEATURE_LEN} columns, found {count}",
                row + 2
            )));
        }
    }
    Ok(streams)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median_filter(&[1.0, 100.0, 2.0], 3).unwrap(), vec![50.5, 2.0, 51.0]);
        let x = [3.0, -1.0, 7.5, 2.0];
        assert_eq!(median_filter(&x, 1).unwrap(), x.to_vec());
        assert_eq!(median_filter(&[4.0; 9], 4).unwrap(), vec![4.0; 9]);
        assert_eq!(median_filter(&[], 3), Err(DspError::EmptyInput));
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_filter(&[0.0, 3.0, 6.0], 3).unwrap(), vec![1.5, 3.0, 4.5]);
        assert_eq!(mean_filter(&[1.0, 2.0], 1).unwrap(), vec![1.0, 2.0]);
        assert_eq!(mean_filter(&[1.0], 0), Err(DspError::InvalidWindow));
    }

    #[test]
    fn even_window_leans_left() {
        // w=4 at i=2 covers [1, 4]
        let x = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0];
        let m = mean_filter(&x, 4).unwrap();
        assert_eq!(m[2], 25.0);
    }

    #[test]
    fn trailing_alignment() {
        let x = [0.0, 3.0, 6.0, 9.0];
        assert_eq!(
            mean_filter_aligned(&x, 2, Alignment::Trailing).unwrap(),
            vec![0.0, 1.5, 4.5, 7.5]
        );
    }

    #[test]
    fn butterworth_reference_points() {
        let spec = FilterSpec::default();
        let c = butterworth_lowpass(&spec).unwrap();
        assert_eq!(c.a[0], 1.0);
        assert!((c.magnitude(0.0, 100.0) - 1.0).abs() < 1e-9);
        assert!((c.magnitude(10.0, 100.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(c.magnitude(25.0, 100.0) <= 0.02);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            FilterSpec { butter_cutoff_hz: 50.0, ..Default::default() },
            FilterSpec { butter_cutoff_hz: 0.0, ..Default::default() },
            FilterSpec { butter_order: 0, ..Default::default() },
            FilterSpec { median_window: 0, ..Default::default() },
        ];
        for s in bad {
            assert!(matches!(butterworth_lowpass(&s), Err(DspError::InvalidSpec(_))));
        }
    }

    #[test]
    fn zero_phase_rejects_short() {
        let c = butterworth_lowpass(&FilterSpec::default()).unwrap();
        assert!(matches!(filter_zero_phase(&c, &[1.0; 15]), Err(DspError::TooShort { .. })));
        assert!(filter_zero_phase(&c, &[1.0; 16]).is_ok());
    }

    #[test]
    fn constant_through_zero_phase() {
        let c = butterworth_lowpass(&FilterSpec::default()).unwrap();
        for y in filter_zero_phase(&c, &[3.25; 200]).unwrap() {
            assert!((y - 3.25).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip() {
        let streams: Vec<Vec<f64>> = (0..FEATURE_LEN).map(|i| vec![i as f64, 0.5]).collect();
        let text = format_streams_csv(&streams);
        assert!(text.starts_with("tx0_rx0_sc0,tx0_rx0_sc1"));
        assert_eq!(parse_streams_csv(&text).unwrap(), streams);
        assert!(parse_streams_csv("a,b\n1,2\n").is_err());
    }
}

//! Fixed-length segmentation, equal-interval averaging into samples,
//! moving-average augmentation and the stratified train/test split.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::{BinError, ByteReader, ByteWriter};
use crate::csi::{ActivityLabel, CsiError, CsiSample, CsiSequence, FEATURE_LEN};

/// Packets averaged into one sample.
pub const PACKETS_PER_SAMPLE: usize = 10;
pub const SAMPLES_MAGIC: &[u8; 8] = b"WIVISMP1";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("segmentation must be 1, 2 or 3 seconds, got {0}")]
    InvalidDuration(u32),
    #[error("sequence of {len} packets is shorter than one {needed}-packet segment")]
    SequenceTooShort { len: usize, needed: usize },
    #[error("segment of {0} packets is shorter than {PACKETS_PER_SAMPLE}")]
    SegmentTooShort(usize),
    #[error("invalid augmentation config: {0}")]
    InvalidAugment(String),
    #[error("run of {len} '{label}' samples is shorter than augmentation window {needed}")]
    RunTooShort {
        label: ActivityLabel,
        len: usize,
        needed: usize,
    },
    #[error("class '{label}' has {count} samples; splitting needs at least 2")]
    ClassUnderflow { label: ActivityLabel, count: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Csi(#[from] CsiError),
    #[error(transparent)]
    Bin(#[from] BinError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub duration_s: u32,
    pub label: ActivityLabel,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

pub fn check_duration(duration_s: u32) -> Result<(), SegmentError> {
    if (1..=3).contains(&duration_s) {
        Ok(())
    } else {
        Err(SegmentError::InvalidDuration(duration_s))
    }
}

/// Packets per segment at the given rate.
pub fn segment_len(fs_hz: f64, duration_s: u32) -> usize {
    (duration_s as f64 * fs_hz).round() as usize
}

/// Non-overlapping windows over `n` packets; the short tail is dropped.
pub fn segment_ranges(
    n: usize,
    fs_hz: f64,
    duration_s: u32,
) -> Result<Vec<(usize, usize)>, SegmentError> {
    check_duration(duration_s)?;
    let len = segment_len(fs_hz, duration_s);
    if len == 0 || n < len {
        return Err(SegmentError::SequenceTooShort { len: n, needed: len });
    }
    Ok((0..n / len).map(|i| (i * len, (i + 1) * len)).collect())
}

pub fn segment_by_time(seq: &CsiSequence, duration_s: u32) -> Result<Vec<Segment>, SegmentError> {
    Ok(segment_ranges(seq.len(), seq.fs_hz(), duration_s)?
        .into_iter()
        .map(|(start, end)| Segment {
            start,
            end,
            duration_s,
            label: seq.label,
        })
        .collect())
}

/// Interval between the averaged packets of a sample and the number of samples
/// an `n`-packet segment yields.
pub fn averaging_plan(n: usize) -> Result<(usize, usize), SegmentError> {
    if n < PACKETS_PER_SAMPLE {
        return Err(SegmentError::SegmentTooShort(n));
    }
    let d = n / PACKETS_PER_SAMPLE;
    Ok((d, n - (PACKETS_PER_SAMPLE - 1) * d))
}

/// Sample `s` is the mean of rows `s, s+d, …, s+9d` with `d = ⌊N/10⌋`.
/// Slightly negative means (filter overshoot) are clamped to zero.
pub fn average_into_samples<R: AsRef<[f64]>>(
    rows: &[R],
    label: ActivityLabel,
) -> Result<Vec<CsiSample>, SegmentError> {
    let (d, count) = averaging_plan(rows.len())?;
    if let Some(r) = rows.iter().find(|r| r.as_ref().len() != FEATURE_LEN) {
        return Err(SegmentError::InvalidDataset(format!(
            "rows must have {FEATURE_LEN} values, found {}",
            r.as_ref().len()
        )));
    }
    (0..count)
        .map(|s| {
            let mut acc = vec![0.0; FEATURE_LEN];
            for j in 0..PACKETS_PER_SAMPLE {
                for (a, v) in acc.iter_mut().zip(rows[s + j * d].as_ref()) {
                    *a += v;
                }
            }
            let vals = acc
                .into_iter()
                .map(|a| (a / PACKETS_PER_SAMPLE as f64).max(0.0))
                .collect();
            Ok(CsiSample::new(vals, label)?)
        })
        .collect()
}

/// Rows `[start, end)` of stream-major data (`streams[k][t]`) as packet-major rows.
pub fn rows_from_streams(streams: &[Vec<f64>], start: usize, end: usize) -> Vec<Vec<f64>> {
    (start..end)
        .map(|t| streams.iter().map(|s| s[t]).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub ks: Vec<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { ks: vec![3, 5, 7, 9] }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if let Some(k) = self.ks.iter().find(|&&k| k < 3 || k % 2 == 0) {
            return Err(SegmentError::InvalidAugment(format!("window {k} must be odd and >= 3")));
        }
        Ok(())
    }

    /// Distinct windows in ascending order.
    pub fn sorted_ks(&self) -> Vec<usize> {
        let mut ks = self.ks.clone();
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

fn label_runs(labels: &[ActivityLabel]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            runs.push((start, i));
            start = i;
        }
    }
    runs
}

/// Originals followed by one centered moving-average copy per window, each
/// computed inside contiguous same-label runs with truncated edges. Works on
/// any fixed-width vectors so auxiliary targets can be augmented in step.
pub fn augment_vectors<V: AsRef<[f64]>>(
    vectors: &[V],
    labels: &[ActivityLabel],
    cfg: &AugmentConfig,
) -> Result<Vec<Vec<f64>>, SegmentError> {
    cfg.validate()?;
    assert_eq!(vectors.len(), labels.len(), "one label per vector");
    let ks = cfg.sorted_ks();
    let runs = label_runs(labels);
    if let Some(&kmax) = ks.last() {
        if let Some(&(a, b)) = runs.iter().find(|(a, b)| b - a < kmax) {
            return Err(SegmentError::RunTooShort {
                label: labels[a],
                len: b - a,
                needed: kmax,
            });
        }
    }
    let mut out: Vec<Vec<f64>> = vectors.iter().map(|v| v.as_ref().to_vec()).collect();
    for &k in &ks {
        let half = k / 2;
        for &(a, b) in &runs {
            for i in a..b {
                let lo = i.saturating_sub(half).max(a);
                let hi = (i + half).min(b - 1);
                let width = vectors[i].as_ref().len();
                let mut acc = vec![0.0; width];
                for v in &vectors[lo..=hi] {
                    for (x, y) in acc.iter_mut().zip(v.as_ref()) {
                        *x += y;
                    }
                }
                let n = (hi - lo + 1) as f64;
                acc.iter_mut().for_each(|x| *x /= n);
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// Augments a sample stream; output length is `(1 + |ks|)` times the input.
pub fn augment(samples: &[CsiSample], cfg: &AugmentConfig) -> Result<Vec<CsiSample>, SegmentError> {
    let labels: Vec<ActivityLabel> = samples.iter().map(|s| s.label).collect();
    let vecs: Vec<&[f64]> = samples.iter().map(|s| s.values()).collect();
    let out = augment_vectors(&vecs, &labels, cfg)?;
    let n = samples.len().max(1);
    out.into_iter()
        .enumerate()
        .map(|(i, v)| Ok(CsiSample::new(v, labels[i % n])?))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<CsiSample>,
    pub split_seed: u64,
    pub train_fraction: f64,
}

impl Dataset {
    pub fn new(samples: Vec<CsiSample>, split_seed: u64, train_fraction: f64) -> Result<Self, SegmentError> {
        if samples.is_empty() {
            return Err(SegmentError::InvalidDataset("no samples".into()));
        }
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(SegmentError::InvalidDataset(format!(
                "train fraction {train_fraction} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            samples,
            split_seed,
            train_fraction,
        })
    }

    pub fn split(&self) -> Result<(Vec<CsiSample>, Vec<CsiSample>), SegmentError> {
        split(self)
    }
}

/// Per-class ⌈fraction·n⌉ training count.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil() as usize).min(n)
}

/// Stratified split by label. Each class is shuffled with one ChaCha8 stream
/// seeded from `seed` (classes visited in label order). Both returned index
/// lists are ascending, so the original temporal order survives.
pub fn split_indices(
    labels: &[ActivityLabel],
    seed: u64,
    train_fraction: f64,
) -> Result<(Vec<usize>, Vec<usize>), SegmentError> {
    let mut by_class: BTreeMap<ActivityLabel, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(SegmentError::ClassUnderflow {
                label,
                count: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        let k = train_count(idx.len(), train_fraction);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(ds: &Dataset) -> Result<(Vec<CsiSample>, Vec<CsiSample>), SegmentError> {
    let labels: Vec<ActivityLabel> = ds.samples.iter().map(|s| s.label).collect();
    let (tr, te) = split_indices(&labels, ds.split_seed, ds.train_fraction)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| ds.samples[i].clone()).collect();
    Ok((pick(&tr), pick(&te)))
}

/// `WIVISMP1` sample file: u32 count, then per sample a u8 label id and 270 f32.
pub fn write_samples(samples: &[CsiSample]) -> Vec<u8> {
    let mut w = ByteWriter::with_capacity(12 + samples.len() * (1 + 4 * FEATURE_LEN));
    w.bytes(SAMPLES_MAGIC).u32(samples.len() as u32);
    for s in samples {
        w.u8(s.label.id());
        for &v in s.values() {
            w.f32(v as f32);
        }
    }
    w.into_inner()
}

pub fn read_samples(bytes: &[u8]) -> Result<Vec<CsiSample>, SegmentError> {
    let mut r = ByteReader::new(bytes);
    r.magic(SAMPLES_MAGIC)?;
    let n = r.u32()? as usize;
    let per = 1 + 4 * FEATURE_LEN;
    if n.saturating_mul(per) > r.remaining() {
        return Err(BinError::Truncated {
            offset: r.position(),
            needed: n * per - r.remaining(),
        }
        .into());
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.u8()?;
        let label = ActivityLabel::from_id(id)
            .ok_or_else(|| r.malformed(format!("unknown label id {id}")))?;
        let vals = (0..FEATURE_LEN)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(CsiSample::new(vals, label)?);
    }
    if r.remaining() != 0 {
        return Err(r.malformed("trailing bytes after last sample").into());
    }
    Ok(out)
}

/// Plain-text companion of a sample file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleManifest {
    pub segmentation_s: u32,
    pub count: usize,
    pub augmented: bool,
}

impl SampleManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version={MANIFEST_VERSION}");
        let _ = writeln!(s, "segmentation_s={}", self.segmentation_s);
        let _ = writeln!(s, "count={}", self.count);
        let _ = writeln!(s, "augmented={}", self.augmented);
        for l in ActivityLabel::ALL {
            let _ = writeln!(s, "label.{}={}", l.id(), l.name());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SegmentError> {
        let mut kv = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SegmentError::Manifest(format!("expected key=value, found '{line}'")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| SegmentError::Manifest(format!("missing key '{k}'")))
        };
        let bad = |k: &str| SegmentError::Manifest(format!("bad value for '{k}'"));
        let version: u32 = get("version")?.parse().map_err(|_| bad("version"))?;
        if version != MANIFEST_VERSION {
            return Err(SegmentError::Manifest(format!(
                "unsupported manifest version {version} (expected {MANIFEST_VERSION})"
            )));
        }
        for l in ActivityLabel::ALL {
            let key = format!("label.{}", l.id());
            if get(&key)? != l.name() {
                return Err(SegmentError::Manifest(format!("{key} must be '{}'", l.name())));
            }
        }
        Ok(Self {
            segmentation_s: get("segmentation_s")?.parse().map_err(|_| bad("segmentation_s"))?,
            count: get("count")?.parse().map_err(|_| bad("count"))?,
            augmented: get("augmented")?.parse().map_err(|_| bad("augmented"))?,
        })
    }
}

//! Channel state information types and elementary math.
//!
//! A CSI matrix holds one complex gain per (transmit antenna, receive antenna,
//! subcarrier) triple. Everything downstream works on linear-scale amplitudes
//! flattened tx-major, then rx, then subcarrier.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Subcarriers reported per antenna pair.
pub const NUM_SUBCARRIERS: usize = 30;
/// Antennas per end of the link.
pub const NUM_ANTENNAS: usize = 3;
/// Length of a flattened 3×3×30 amplitude vector.
pub const FEATURE_LEN: usize = NUM_ANTENNAS * NUM_ANTENNAS * NUM_SUBCARRIERS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsiError {
    #[error("phase is undefined for a zero gain")]
    UndefinedPhase,
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("index out of range: tx={tx} rx={rx} sub={sub} for a {ntx}x{nrx}x{NUM_SUBCARRIERS} matrix")]
    IndexOutOfRange {
        tx: usize,
        rx: usize,
        sub: usize,
        ntx: usize,
        nrx: usize,
    },
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("unknown label '{0}'")]
    UnknownLabel(String),
}

/// One complex channel gain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexGain {
    pub re: f64,
    pub im: f64,
}

impl ComplexGain {
    pub const ZERO: ComplexGain = ComplexGain { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `exp(j·theta)`.
    pub fn from_phase(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { re: c, im: s }
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    pub fn scale(self, k: f64) -> Self {
        Self { re: self.re * k, im: self.im * k }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }

    pub fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, im: self.im + o.im }
    }

    pub fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, im: self.im - o.im }
    }
}

/// Modulus `|h|`.
pub fn amplitude(h: ComplexGain) -> f64 {
    h.re.hypot(h.im)
}

/// Argument of `h` in (−π, π].
pub fn phase(h: ComplexGain) -> Result<f64, CsiError> {
    if h.re == 0.0 && h.im == 0.0 {
        return Err(CsiError::UndefinedPhase);
    }
    Ok(h.im.atan2(h.re))
}

/// Complex gains indexed `[tx][rx][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    ntx: usize,
    nrx: usize,
    gains: Vec<ComplexGain>,
}

impl CsiMatrix {
    pub fn zeros(ntx: usize, nrx: usize) -> Result<Self, CsiError> {
        Self::check_dims(ntx, nrx)?;
        Ok(Self {
            ntx,
            nrx,
            gains: vec![ComplexGain::ZERO; ntx * nrx * NUM_SUBCARRIERS],
        })
    }

    /// Builds a matrix from gains laid out tx-major, then rx, then subcarrier.
    pub fn from_gains(ntx: usize, nrx: usize, gains: Vec<ComplexGain>) -> Result<Self, CsiError> {
        Self::check_dims(ntx, nrx)?;
        let want = ntx * nrx * NUM_SUBCARRIERS;
        if gains.len() != want {
            return Err(CsiError::Dimension(format!(
                "expected {want} gains for {ntx}x{nrx}x{NUM_SUBCARRIERS}, got {}",
                gains.len()
            )));
        }
        if let Some(bad) = gains.iter().find(|g| !g.is_finite()) {
            let v = if bad.re.is_finite() { bad.im } else { bad.re };
            return Err(CsiError::NonFinite(v));
        }
        Ok(Self { ntx, nrx, gains })
    }

    fn check_dims(ntx: usize, nrx: usize) -> Result<(), CsiError> {
        if !(1..=NUM_ANTENNAS).contains(&ntx) || !(1..=NUM_ANTENNAS).contains(&nrx) {
            return Err(CsiError::Dimension(format!(
                "antenna counts must be in 1..=3, got ntx={ntx} nrx={nrx}"
            )));
        }
        Ok(())
    }

    pub fn ntx(&self) -> usize {
        self.ntx
    }

    pub fn nrx(&self) -> usize {
        self.nrx
    }

    pub fn nsub(&self) -> usize {
        NUM_SUBCARRIERS
    }

    pub fn gains(&self) -> &[ComplexGain] {
        &self.gains
    }

    #[inline]
    fn offset(&self, tx: usize, rx: usize, sub: usize) -> usize {
        (tx * self.nrx + rx) * NUM_SUBCARRIERS + sub
    }

    fn check_index(&self, tx: usize, rx: usize, sub: usize) -> Result<usize, CsiError> {
        if tx >= self.ntx || rx >= self.nrx || sub >= NUM_SUBCARRIERS {
            return Err(CsiError::IndexOutOfRange {
                tx,
                rx,
                sub,
                ntx: self.ntx,
                nrx: self.nrx,
            });
        }
        Ok(self.offset(tx, rx, sub))
    }

    pub fn get(&self, tx: usize, rx: usize, sub: usize) -> Result<ComplexGain, CsiError> {
        self.check_index(tx, rx, sub).map(|i| self.gains[i])
    }

    /// Unchecked-by-result accessor; panics on out-of-range indices.
    pub fn at(&self, tx: usize, rx: usize, sub: usize) -> ComplexGain {
        assert!(tx < self.ntx && rx < self.nrx && sub < NUM_SUBCARRIERS);
        self.gains[self.offset(tx, rx, sub)]
    }

    pub fn set(&mut self, tx: usize, rx: usize, sub: usize, g: ComplexGain) -> Result<(), CsiError> {
        if !g.is_finite() {
            return Err(CsiError::NonFinite(if g.re.is_finite() { g.im } else { g.re }));
        }
        let i = self.check_index(tx, rx, sub)?;
        self.gains[i] = g;
        Ok(())
    }

    /// Sum of squared gain moduli over all cells.
    pub fn total_power(&self) -> f64 {
        self.gains.iter().map(ComplexGain::norm_sqr).sum()
    }

    pub fn map(&self, f: impl Fn(ComplexGain) -> ComplexGain) -> Result<Self, CsiError> {
        Self::from_gains(self.ntx, self.nrx, self.gains.iter().copied().map(f).collect())
    }
}

/// One received CSI measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiPacket {
    /// Microseconds, unwrapped across 32-bit counter rollover.
    pub timestamp_us: u64,
    /// Per receive antenna, dB above the AGC floor.
    pub rssi: [u8; 3],
    pub noise_dbm: i8,
    pub agc: u8,
    /// Receive antenna permutation reported by the NIC.
    pub permutation: [u8; 3],
    /// Opaque PHY rate code.
    pub rate: u16,
    pub csi: CsiMatrix,
}

impl CsiPacket {
    /// Packet with neutral metadata around `csi`.
    pub fn with_matrix(timestamp_us: u64, csi: CsiMatrix) -> Self {
        Self {
            timestamp_us,
            rssi: [0; 3],
            noise_dbm: -127,
            agc: 0,
            permutation: [0, 1, 2],
            rate: 0,
            csi,
        }
    }
}

/// The nine recorded activities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivityLabel {
    Falling,
    Throwing,
    Pushing,
    Kicking,
    Punching,
    Jumping,
    Drinking,
    Phonetalk,
    Seating,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 9] = [
        ActivityLabel::Falling,
        ActivityLabel::Throwing,
        ActivityLabel::Pushing,
        ActivityLabel::Kicking,
        ActivityLabel::Punching,
        ActivityLabel::Jumping,
        ActivityLabel::Drinking,
        ActivityLabel::Phonetalk,
        ActivityLabel::Seating,
    ];

    pub const COUNT: usize = 9;

    /// Stable numeric id used by the binary file formats.
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityLabel::Falling => "falling",
            ActivityLabel::Throwing => "throwing",
            ActivityLabel::Pushing => "pushing",
            ActivityLabel::Kicking => "kicking",
            ActivityLabel::Punching => "punching",
            ActivityLabel::Jumping => "jumping",
            ActivityLabel::Drinking => "drinking",
            ActivityLabel::Phonetalk => "phonetalk",
            ActivityLabel::Seating => "seating",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityLabel {
    type Err = CsiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CsiError::UnknownLabel(s.to_string()))
    }
}

/// Occlusion condition of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SceneLabel {
    NoOcclusion,
    PartialOcclusion,
    FullOcclusion,
}

impl SceneLabel {
    pub const ALL: [SceneLabel; 3] = [
        SceneLabel::NoOcclusion,
        SceneLabel::PartialOcclusion,
        SceneLabel::FullOcclusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneLabel::NoOcclusion => "no_occlusion",
            SceneLabel::PartialOcclusion => "partial_occlusion",
            SceneLabel::FullOcclusion => "full_occlusion",
        }
    }
}

impl fmt::Display for SceneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneLabel {
    type Err = CsiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CsiError::UnknownLabel(s.to_string()))
    }
}

/// Time-ordered packets from one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSequence {
    fs_hz: f64,
    packets: Vec<CsiPacket>,
    pub label: ActivityLabel,
    pub subject: String,
    pub scene: SceneLabel,
}

impl CsiSequence {
    pub fn new(
        fs_hz: f64,
        packets: Vec<CsiPacket>,
        label: ActivityLabel,
        subject: impl Into<String>,
        scene: SceneLabel,
    ) -> Result<Self, CsiError> {
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(CsiError::InvalidSequence(format!("sampling rate {fs_hz} must be > 0")));
        }
        if packets.is_empty() {
            return Err(CsiError::InvalidSequence("no packets".into()));
        }
        if let Some(w) = packets.windows(2).position(|w| w[1].timestamp_us < w[0].timestamp_us) {
            return Err(CsiError::InvalidSequence(format!(
                "timestamp decreases at packet {}",
                w + 1
            )));
        }
        Ok(Self {
            fs_hz,
            packets,
            label,
            subject: subject.into(),
            scene,
        })
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn packets(&self) -> &[CsiPacket] {
        &self.packets
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn into_packets(self) -> Vec<CsiPacket> {
        self.packets
    }
}

/// One 270-element amplitude vector, the unit of classification.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    values: Vec<f64>,
    pub label: ActivityLabel,
}

impl CsiSample {
    pub fn new(values: Vec<f64>, label: ActivityLabel) -> Result<Self, CsiError> {
        if values.len() != FEATURE_LEN {
            return Err(CsiError::InvalidSample(format!(
                "expected {FEATURE_LEN} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(CsiError::InvalidSample(format!("value {v} is negative or non-finite")));
        }
        Ok(Self { values, label })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Flat index of `(tx, rx, sub)` in a 270-element feature vector.
#[inline]
pub fn feature_index(tx: usize, rx: usize, sub: usize) -> usize {
    tx * NUM_ANTENNAS * NUM_SUBCARRIERS + rx * NUM_SUBCARRIERS + sub
}

/// Inverse of [`feature_index`].
#[inline]
pub fn feature_cell(index: usize) -> (usize, usize, usize) {
    let tx = index / (NUM_ANTENNAS * NUM_SUBCARRIERS);
    let rem = index % (NUM_ANTENNAS * NUM_SUBCARRIERS);
    (tx, rem / NUM_SUBCARRIERS, rem % NUM_SUBCARRIERS)
}

/// Amplitudes of a full 3×3×30 packet, ordered tx-major, then rx, then subcarrier.
pub fn to_feature_vector(p: &CsiPacket) -> Result<Vec<f64>, CsiError> {
    let m = &p.csi;
    if m.ntx() < NUM_ANTENNAS || m.nrx() < NUM_ANTENNAS {
        return Err(CsiError::Dimension(format!(
            "feature vectors need a 3x3 link, packet has ntx={} nrx={}",
            m.ntx(),
            m.nrx()
        )));
    }
    // With ntx == nrx == 3 the matrix storage order equals the feature order.
    Ok(m.gains().iter().map(|&g| amplitude(g)).collect())
}

/// Amplitude of one (tx, rx, sub) cell across every packet of a sequence.
pub fn amplitude_series(
    s: &CsiSequence,
    tx: usize,
    rx: usize,
    sub: usize,
) -> Result<Vec<f64>, CsiError> {
    s.packets()
        .iter()
        .map(|p| p.csi.get(tx, rx, sub).map(amplitude))
        .collect()
}

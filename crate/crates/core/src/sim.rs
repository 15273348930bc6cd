//! Multipath CSI simulator: `Y = H(t)·X + N` over 30 OFDM subcarriers with
//! static room paths and activity-driven body scatterers, plus the matching
//! 2×18×18 skeleton heatmaps used as pose supervision.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::{BinError, ByteReader, ByteWriter};
use crate::csi::{
    ActivityLabel, ComplexGain, CsiError, CsiMatrix, CsiPacket, CsiSequence, SceneLabel,
    NUM_ANTENNAS, NUM_SUBCARRIERS,
};
use crate::ingest::{self, IngestError, LabelRow};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const SUBCARRIER_SPACING_HZ: f64 = 312.5e3;
pub const HEATMAP_SIDE: usize = 18;
pub const HEATMAP_CHANNELS: usize = 2;
pub const HEATMAP_LEN: usize = HEATMAP_CHANNELS * HEATMAP_SIDE * HEATMAP_SIDE;
/// Packets per heatmap frame (100 Hz CSI against a 20 Hz camera).
pub const PACKETS_PER_FRAME: usize = 5;
pub const HEATMAP_MAGIC: &[u8; 8] = b"WIVISKL1";
/// Largest speed any body track may reach.
pub const MAX_SPEED_MPS: f64 = 5.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("time {t} s outside [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("invalid heatmap: {0}")]
    InvalidHeatmap(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Csi(#[from] CsiError),
    #[error(transparent)]
    Bin(#[from] BinError),
}

pub type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale3(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Periodic unit profile of a motion term, evaluated at phase `θ` (cycles).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// `sin(2πθ)`
    Sine,
    /// `|sin(πθ)|`: one hop per cycle.
    Bounce,
    /// Fast 0→1 over the first 10 % of the cycle, hold, slow return.
    Drop,
    /// Slow 0→1 over 30 %, hold, slow return.
    Sit,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl Shape {
    pub fn eval(self, theta: f64) -> f64 {
        let th = theta.rem_euclid(1.0);
        match self {
            Shape::Sine => (2.0 * std::f64::consts::PI * th).sin(),
            Shape::Bounce => (std::f64::consts::PI * th).sin().abs(),
            Shape::Drop => {
                if th < 0.1 {
                    smoothstep(th / 0.1)
                } else if th < 0.5 {
                    1.0
                } else if th < 0.9 {
                    1.0 - smoothstep((th - 0.5) / 0.4)
                } else {
                    0.0
                }
            }
            Shape::Sit => {
                if th < 0.3 {
                    smoothstep(th / 0.3)
                } else if th < 0.6 {
                    1.0
                } else if th < 0.9 {
                    1.0 - smoothstep((th - 0.6) / 0.3)
                } else {
                    0.0
                }
            }
        }
    }
}

/// One additive displacement `dir · amplitude · shape(freq·t + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub dir: Vec3,
    pub amplitude_m: f64,
    pub freq_hz: f64,
    pub phase: f64,
    pub shape: Shape,
}

impl Motion {
    fn displacement(&self, t: f64) -> Vec3 {
        scale3(self.dir, self.amplitude_m * self.shape.eval(self.freq_hz * t + self.phase))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub base: Vec3,
    pub terms: Vec<Motion>,
}

impl Trajectory {
    pub fn position(&self, t: f64) -> Vec3 {
        self.terms
            .iter()
            .fold(self.base, |p, m| add(p, m.displacement(t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyPart {
    Torso,
    LeftHand,
    RightHand,
    LeftFoot,
    RightFoot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererTrack {
    pub body_part: BodyPart,
    pub trajectory: Trajectory,
    pub reflection_gain: f64,
}

impl ScattererTrack {
    pub fn position(&self, t: f64) -> Vec3 {
        self.trajectory.position(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticPath {
    pub delay_s: f64,
    pub gain: ComplexGain,
}

/// Antenna placement: two linear arrays along the y axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub tx_origin: Vec3,
    pub rx_origin: Vec3,
    pub antenna_spacing_m: f64,
    /// Centre of the skeleton grid in the x–z plane.
    pub grid_center_xz: [f64; 2],
    /// Side of the square skeleton grid, metres.
    pub grid_extent_m: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            tx_origin: [0.0, 0.0, 1.2],
            rx_origin: [4.0, 0.0, 1.2],
            antenna_spacing_m: 0.03,
            grid_center_xz: [PERSON_XY[0], 1.0],
            grid_extent_m: 2.0,
        }
    }
}

impl Geometry {
    pub fn tx_antenna(&self, k: usize) -> Vec3 {
        add(self.tx_origin, [0.0, k as f64 * self.antenna_spacing_m, 0.0])
    }

    pub fn rx_antenna(&self, k: usize) -> Vec3 {
        add(self.rx_origin, [0.0, k as f64 * self.antenna_spacing_m, 0.0])
    }

    pub fn cell_m(&self) -> f64 {
        self.grid_extent_m / HEATMAP_SIDE as f64
    }

    /// Continuous (row, col) grid coordinates of a point; the grid centre maps to (9, 9).
    pub fn project(&self, p: Vec3) -> (f64, f64) {
        let c = self.cell_m();
        let half = (HEATMAP_SIDE / 2) as f64;
        (
            half + (self.grid_center_xz[1] - p[2]) / c,
            half + (p[0] - self.grid_center_xz[0]) / c,
        )
    }
}

/// Where the subject stands (x, y), metres.
pub const PERSON_XY: [f64; 2] = [2.0, 1.5];

pub fn scene_attenuation(scene: SceneLabel) -> f64 {
    match scene {
        SceneLabel::NoOcclusion => 1.0,
        SceneLabel::PartialOcclusion => 0.5,
        SceneLabel::FullOcclusion => 0.2,
    }
}

pub fn subcarrier_freq(carrier_hz: f64, sub: usize) -> f64 {
    carrier_hz + (sub as f64 - 14.5) * SUBCARRIER_SPACING_HZ
}

/// Line of sight plus two wall reflections.
pub fn default_static_paths() -> Vec<StaticPath> {
    vec![
        StaticPath {
            delay_s: 4.0 / SPEED_OF_LIGHT,
            gain: ComplexGain::new(40.0, 0.0),
        },
        StaticPath {
            delay_s: 6.3 / SPEED_OF_LIGHT,
            gain: ComplexGain::from_phase(0.7).scale(14.0),
        },
        StaticPath {
            delay_s: 8.9 / SPEED_OF_LIGHT,
            gain: ComplexGain::from_phase(-1.9).scale(9.0),
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub activity: ActivityLabel,
    pub scene: SceneLabel,
    pub subject: String,
    pub subject_scale: f64,
    pub duration_s: f64,
    pub fs_hz: f64,
    pub carrier_hz: f64,
    pub static_paths: Vec<StaticPath>,
    pub scatterers: Vec<ScattererTrack>,
    pub noise_sigma: f64,
    pub pilot: ComplexGain,
    pub seed: u64,
    pub geometry: Geometry,
}

/// Plain scenario description as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub activity: String,
    pub scene: String,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub subject_scale: f64,
    #[serde(default = "default_subject")]
    pub subject: String,
}

fn default_duration() -> f64 {
    20.0
}
fn default_noise() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_subject() -> String {
    "s0".into()
}

impl SimScenario {
    /// Standard room with the activity's body tracks.
    pub fn new(
        activity: ActivityLabel,
        scene: SceneLabel,
        subject: impl Into<String>,
        subject_scale: f64,
        duration_s: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            activity,
            scene,
            subject: subject.into(),
            subject_scale,
            duration_s,
            fs_hz: 100.0,
            carrier_hz: 5.4e9,
            static_paths: default_static_paths(),
            scatterers: activity_template(activity, subject_scale, seed),
            noise_sigma,
            pilot: ComplexGain::new(1.0, 0.0),
            seed,
            geometry: Geometry::default(),
        }
    }

    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self, SimError> {
        let s = Self::new(
            spec.activity.parse()?,
            spec.scene.parse()?,
            spec.subject.clone(),
            spec.subject_scale,
            spec.duration_s,
            spec.noise_sigma,
            spec.seed,
        );
        s.validate()?;
        Ok(s)
    }

    pub fn name(&self) -> String {
        format!("{}_{}_{}", self.activity, self.subject, self.scene)
    }

    pub fn num_packets(&self) -> usize {
        (self.duration_s * self.fs_hz).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return bad(format!("fs_hz {} must be > 0", self.fs_hz));
        }
        if !(self.duration_s.is_finite() && self.duration_s * self.fs_hz >= 1.0) {
            return bad(format!("duration {} s yields no packets", self.duration_s));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !(self.subject_scale.is_finite() && self.subject_scale > 0.0) {
            return bad(format!("subject_scale {} must be > 0", self.subject_scale));
        }
        if self.static_paths.is_empty() {
            return bad("at least one static path is required".into());
        }
        if self.subject.is_empty() || self.subject.contains([',', '\n', '/']) {
            return bad(format!("subject name '{}' is not a plain identifier", self.subject));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<(), SimError> {
        if !(t >= 0.0 && t <= self.duration_s + 1e-12) {
            return Err(SimError::TimeOutOfRange {
                t,
                duration: self.duration_s,
            });
        }
        Ok(())
    }
}

/// Adds `g·exp(−j2π f_sub τ)` over all subcarriers into `out`, stepping the
/// phasor by the subcarrier spacing instead of re-evaluating it.
fn accumulate_path(out: &mut [ComplexGain], g: ComplexGain, tau: f64, carrier_hz: f64) {
    let tp = 2.0 * std::f64::consts::PI * tau;
    let mut ph = g.mul(ComplexGain::from_phase(-tp * subcarrier_freq(carrier_hz, 0)));
    let step = ComplexGain::from_phase(-tp * SUBCARRIER_SPACING_HZ);
    for cell in out.iter_mut() {
        *cell = cell.add(ph);
        ph = ph.mul(step);
    }
}

/// Noise-free channel matrix at time `t`.
pub fn channel_response(s: &SimScenario, t: f64) -> Result<CsiMatrix, SimError> {
    s.check_time(t)?;
    let att = scene_attenuation(s.scene);
    let positions: Vec<(Vec3, f64)> = s
        .scatterers
        .iter()
        .map(|tr| (tr.position(t), tr.reflection_gain * att))
        .collect();
    let mut gains = vec![ComplexGain::ZERO; NUM_ANTENNAS * NUM_ANTENNAS * NUM_SUBCARRIERS];
    for tx in 0..NUM_ANTENNAS {
        let ta = s.geometry.tx_antenna(tx);
        for rx in 0..NUM_ANTENNAS {
            let ra = s.geometry.rx_antenna(rx);
            let base = (tx * NUM_ANTENNAS + rx) * NUM_SUBCARRIERS;
            let cells = &mut gains[base..base + NUM_SUBCARRIERS];
            for p in &s.static_paths {
                accumulate_path(cells, p.gain, p.delay_s, s.carrier_hz);
            }
            for &(pos, g) in &positions {
                let tau = (dist(ta, pos) + dist(pos, ra)) / SPEED_OF_LIGHT;
                accumulate_path(cells, ComplexGain::new(g, 0.0), tau, s.carrier_hz);
            }
        }
    }
    Ok(CsiMatrix::from_gains(NUM_ANTENNAS, NUM_ANTENNAS, gains)?)
}

/// Receive-antenna permutation the simulated NIC reports.
const SIM_PERMUTATION: [u8; 3] = [1, 2, 0];

/// Runs the scenario: packet `i` at `t = i/fs` holds `H(t)·X + N`.
pub fn simulate(s: &SimScenario) -> Result<CsiSequence, SimError> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(1);
    let normal = Normal::new(0.0, s.noise_sigma.max(0.0))
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let n = s.num_packets();
    let mut packets = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / s.fs_hz;
        let h = channel_response(s, t)?;
        let y = if s.noise_sigma > 0.0 {
            let gains = h
                .gains()
                .iter()
                .map(|g| {
                    let re = normal.sample(&mut rng);
                    let im = normal.sample(&mut rng);
                    g.mul(s.pilot).add(ComplexGain::new(re, im))
                })
                .collect();
            CsiMatrix::from_gains(h.ntx(), h.nrx(), gains)?
        } else {
            h.map(|g| g.mul(s.pilot))?
        };
        let mut p = CsiPacket::with_matrix((i as f64 * 1e6 / s.fs_hz).round() as u64, y);
        p.rssi = [42, 41, 43];
        p.noise_dbm = -92;
        p.agc = 30;
        p.permutation = SIM_PERMUTATION;
        p.rate = 0x4101;
        packets.push(p);
    }
    Ok(CsiSequence::new(s.fs_hz, packets, s.activity, s.subject.clone(), s.scene)?)
}

/// Nominal frequency of an activity's defining motion.
pub fn nominal_freq_hz(a: ActivityLabel) -> f64 {
    match a {
        ActivityLabel::Falling => 0.22,
        ActivityLabel::Throwing => 0.8,
        ActivityLabel::Pushing => 0.7,
        ActivityLabel::Kicking => 0.8,
        ActivityLabel::Punching => 1.4,
        ActivityLabel::Jumping => 2.0,
        ActivityLabel::Drinking => 0.3,
        ActivityLabel::Phonetalk => 0.5,
        ActivityLabel::Seating => 1.0 / 6.0,
    }
}

/// Body tracks for one repetition style of an activity. The seed scales
/// frequency and amplitude by factors in [0.7, 1.3] and yaws motion
/// directions by up to ±0.3 rad.
pub fn activity_template(activity: ActivityLabel, subject_scale: f64, seed: u64) -> Vec<ScattererTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fk: f64 = rng.random_range(0.7..=1.3);
    let ak: f64 = rng.random_range(0.7..=1.3);
    let yaw: f64 = rng.random_range(-0.3..=0.3);
    let phase0: f64 = rng.random_range(0.0..1.0);

    let (cy, sy) = (yaw.cos(), yaw.sin());
    let rot = |d: Vec3| [d[0] * cy - d[1] * sy, d[0] * sy + d[1] * cy, d[2]];
    let f0 = nominal_freq_hz(activity) * fk;
    let k = subject_scale;
    let at = |off: Vec3| [PERSON_XY[0] + off[0] * k, PERSON_XY[1] + off[1] * k, off[2] * k];
    let m = |dir: Vec3, amp: f64, freq: f64, phase: f64, shape: Shape| Motion {
        dir: rot(dir),
        amplitude_m: amp * ak * k,
        freq_hz: freq,
        phase: phase0 + phase,
        shape,
    };
    let down = [0.0, 0.0, -1.0];
    let up = [0.0, 0.0, 1.0];
    // The subject faces -y, towards the link.
    let fwd = [0.0, -1.0, 0.0];

    let mut torso = vec![];
    let mut hand_l = vec![];
    let mut hand_r = vec![];
    let mut foot_l = vec![];
    let mut foot_r = vec![];
    let mut hand_r_base = [0.25, -0.1, 0.9];
    let mut hand_l_base = [-0.25, -0.1, 0.9];
    let mut foot_r_base = [0.12, 0.0, 0.08];
    match activity {
        ActivityLabel::Falling => {
            let fall = |amp| m([0.3, -0.3, -0.9], amp, f0, 0.0, Shape::Drop);
            torso.push(fall(0.75));
            hand_l.push(fall(0.6));
            hand_r.push(fall(0.6));
            hand_l.push(m([-1.0, 0.0, 0.0], 0.1, f0, 0.05, Shape::Drop));
            hand_r.push(m([1.0, 0.0, 0.0], 0.1, f0, 0.05, Shape::Drop));
            foot_r.push(m(fwd, 0.15, f0, 0.0, Shape::Drop));
        }
        ActivityLabel::Throwing => {
            hand_r_base = [0.25, 0.1, 1.4];
            hand_r.push(m([0.0, -0.8, -0.6], 0.35, f0, 0.0, Shape::Sine));
            hand_r.push(m(up, 0.15, 2.0 * f0, 0.0, Shape::Sine));
            torso.push(m(fwd, 0.05, f0, 0.0, Shape::Sine));
        }
        ActivityLabel::Pushing => {
            hand_r_base = [0.2, -0.3, 1.2];
            hand_l_base = [-0.2, -0.3, 1.2];
            hand_r.push(m(fwd, 0.3, f0, 0.0, Shape::Sine));
            hand_l.push(m(fwd, 0.3, f0, 0.0, Shape::Sine));
            torso.push(m(fwd, 0.04, f0, 0.0, Shape::Sine));
        }
        ActivityLabel::Kicking => {
            foot_r_base = [0.12, -0.2, 0.3];
            foot_r.push(m([0.0, -0.7, 0.7], 0.35, f0, 0.0, Shape::Sine));
            hand_l.push(m(fwd, 0.08, f0, 0.5, Shape::Sine));
            torso.push(m([0.0, 1.0, 0.0], 0.05, f0, 0.0, Shape::Sine));
        }
        ActivityLabel::Punching => {
            hand_r_base = [0.18, -0.3, 1.3];
            hand_l_base = [-0.18, -0.3, 1.3];
            hand_r.push(m(fwd, 0.25, f0, 0.0, Shape::Sine));
            hand_l.push(m(fwd, 0.25, f0, 0.5, Shape::Sine));
        }
        ActivityLabel::Jumping => {
            let hop = |amp| m(up, amp, f0, 0.0, Shape::Bounce);
            torso.push(hop(0.2));
            foot_l.push(hop(0.2));
            foot_r.push(hop(0.2));
            hand_l.push(hop(0.3));
            hand_r.push(hop(0.3));
        }
        ActivityLabel::Drinking => {
            hand_r_base = [0.15, -0.25, 1.25];
            hand_r.push(m([0.0, 0.3, 0.95], 0.2, f0, 0.0, Shape::Sine));
        }
        ActivityLabel::Phonetalk => {
            hand_r_base = [0.12, -0.05, 1.5];
            hand_r.push(m([0.6, 0.0, 0.8], 0.02, f0, 0.0, Shape::Sine));
        }
        ActivityLabel::Seating => {
            let sit = |amp| m(down, amp, f0, 0.0, Shape::Sit);
            torso.push(sit(0.45));
            hand_l.push(sit(0.4));
            hand_r.push(sit(0.4));
            foot_r.push(m(fwd, 0.15, f0, 0.0, Shape::Sit));
        }
    }
    let track = |part, base, terms, gain| ScattererTrack {
        body_part: part,
        trajectory: Trajectory {
            base: at(base),
            terms,
        },
        reflection_gain: gain * k,
    };
    vec![
        track(BodyPart::Torso, [0.0, 0.0, 1.1], torso, 6.0),
        track(BodyPart::LeftHand, hand_l_base, hand_l, 2.0),
        track(BodyPart::RightHand, hand_r_base, hand_r, 2.5),
        track(BodyPart::LeftFoot, [-0.12, 0.0, 0.08], foot_l, 1.5),
        track(BodyPart::RightFoot, foot_r_base, foot_r, 1.5),
    ]
}

/// Two-channel 18×18 pose map: channel 0 for body parts, channel 1 for limb midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonHeatmap {
    values: Vec<f64>,
}

impl SkeletonHeatmap {
    pub fn from_values(values: Vec<f64>) -> Result<Self, SimError> {
        if values.len() != HEATMAP_LEN {
            return Err(SimError::InvalidHeatmap(format!(
                "expected {HEATMAP_LEN} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + 1e-9) {
            return Err(SimError::InvalidHeatmap("values must lie in [0, 1]".into()));
        }
        let plane = HEATMAP_SIDE * HEATMAP_SIDE;
        for c in 0..HEATMAP_CHANNELS {
            let s: f64 = values[c * plane..(c + 1) * plane].iter().sum();
            if (s - 1.0).abs() > 1e-5 {
                return Err(SimError::InvalidHeatmap(format!("channel {c} sums to {s}")));
            }
        }
        Ok(Self { values })
    }

    /// Builds a map from bump centres given in continuous grid coordinates.
    /// A channel without any mass on the grid becomes uniform.
    pub fn from_bumps(channels: [&[(f64, f64)]; 2]) -> Self {
        let plane = HEATMAP_SIDE * HEATMAP_SIDE;
        let mut values = vec![0.0; HEATMAP_LEN];
        for (c, bumps) in channels.iter().enumerate() {
            let ch = &mut values[c * plane..(c + 1) * plane];
            for &(r0, c0) in bumps.iter() {
                for r in 0..HEATMAP_SIDE {
                    for col in 0..HEATMAP_SIDE {
                        let d2 = (r as f64 - r0).powi(2) + (col as f64 - c0).powi(2);
                        ch[r * HEATMAP_SIDE + col] += (-0.5 * d2).exp();
                    }
                }
            }
            let s: f64 = ch.iter().sum();
            if s > 1e-12 {
                ch.iter_mut().for_each(|v| *v /= s);
            } else {
                ch.iter_mut().for_each(|v| *v = 1.0 / plane as f64);
            }
        }
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = HEATMAP_SIDE * HEATMAP_SIDE;
        &self.values[c * plane..(c + 1) * plane]
    }

    pub fn at(&self, c: usize, row: usize, col: usize) -> f64 {
        self.channel(c)[row * HEATMAP_SIDE + col]
    }

    /// Brightest cell `(row, col)` of a channel; ties go to the first in row-major order.
    pub fn argmax(&self, c: usize) -> (usize, usize) {
        let ch = self.channel(c);
        let mut best = 0;
        for (i, &v) in ch.iter().enumerate() {
            if v > ch[best] {
                best = i;
            }
        }
        (best / HEATMAP_SIDE, best % HEATMAP_SIDE)
    }
}

/// Ground-truth pose map at time `t`.
pub fn skeleton_truth(s: &SimScenario, t: f64) -> Result<SkeletonHeatmap, SimError> {
    s.check_time(t)?;
    let pos: Vec<(BodyPart, Vec3)> = s.scatterers.iter().map(|tr| (tr.body_part, tr.position(t))).collect();
    let joints: Vec<(f64, f64)> = pos.iter().map(|&(_, p)| s.geometry.project(p)).collect();
    let torso = pos.iter().find(|(b, _)| *b == BodyPart::Torso).map(|&(_, p)| p);
    let limbs: Vec<(f64, f64)> = match torso {
        Some(tp) => pos
            .iter()
            .filter(|(b, _)| *b != BodyPart::Torso)
            .map(|&(_, p)| s.geometry.project(scale3(add(tp, p), 0.5)))
            .collect(),
        None => Vec::new(),
    };
    Ok(SkeletonHeatmap::from_bumps([&joints, &limbs]))
}

/// Number of heatmap frames accompanying `n` packets.
pub fn frame_count(n_packets: usize) -> usize {
    n_packets.div_ceil(PACKETS_PER_FRAME)
}

/// Heatmaps for every fifth packet of the scenario.
pub fn skeleton_frames(s: &SimScenario) -> Result<Vec<SkeletonHeatmap>, SimError> {
    (0..frame_count(s.num_packets()))
        .map(|f| skeleton_truth(s, (f * PACKETS_PER_FRAME) as f64 / s.fs_hz))
        .collect()
}

/// `WIVISKL1`: u32 count then 648 f32 per heatmap.
pub fn write_heatmaps(maps: &[SkeletonHeatmap]) -> Vec<u8> {
    let mut w = ByteWriter::with_capacity(12 + maps.len() * HEATMAP_LEN * 4);
    w.bytes(HEATMAP_MAGIC).u32(maps.len() as u32);
    for m in maps {
        for &v in m.values() {
            w.f32(v as f32);
        }
    }
    w.into_inner()
}

pub fn read_heatmaps(bytes: &[u8]) -> Result<Vec<SkeletonHeatmap>, SimError> {
    let mut r = ByteReader::new(bytes);
    r.magic(HEATMAP_MAGIC)?;
    let n = r.u32()? as usize;
    if n.saturating_mul(HEATMAP_LEN * 4) != r.remaining() {
        return Err(r
            .malformed(format!(
                "{n} heatmaps need {} bytes, file has {}",
                n.saturating_mul(HEATMAP_LEN * 4),
                r.remaining()
            ))
            .into());
    }
    (0..n)
        .map(|_| {
            let v = (0..HEATMAP_LEN)
                .map(|_| r.f32().map(f64::from))
                .collect::<Result<Vec<_>, _>>()?;
            SkeletonHeatmap::from_values(v)
        })
        .collect()
}

/// Files written for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedScenario {
    pub name: String,
    pub capture: PathBuf,
    pub labels: PathBuf,
    pub heatmaps: PathBuf,
    pub packets: usize,
    pub frames: usize,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    fs::write(path, bytes).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Simulates one scenario and writes `<name>.dat`, `<name>.labels.csv` and `<name>.skl`.
pub fn emit_scenario(s: &SimScenario, out_dir: &Path) -> Result<EmittedScenario, SimError> {
    let seq = simulate(s)?;
    let frames = skeleton_frames(s)?;
    let name = s.name();
    let capture = out_dir.join(format!("{name}.dat"));
    let labels = out_dir.join(format!("{name}.labels.csv"));
    let heatmaps = out_dir.join(format!("{name}.skl"));
    write_file(&capture, &ingest::write_records(&seq)?)?;
    let row = LabelRow {
        start_packet: 0,
        end_packet: seq.len(),
        activity: s.activity,
        subject: s.subject.clone(),
        scene: s.scene,
    };
    write_file(&labels, ingest::format_labels(&[row]).as_bytes())?;
    write_file(&heatmaps, &write_heatmaps(&frames))?;
    Ok(EmittedScenario {
        name,
        capture,
        labels,
        heatmaps,
        packets: seq.len(),
        frames: frames.len(),
    })
}

/// Emits every scenario into `out_dir` (scenarios run in parallel, each on its own seed).
pub fn emit_dataset(scenarios: &[SimScenario], out_dir: &Path) -> Result<Vec<EmittedScenario>, SimError> {
    if scenarios.is_empty() {
        return Err(SimError::InvalidScenario("no scenarios to emit".into()));
    }
    let mut names: Vec<String> = scenarios.iter().map(SimScenario::name).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(SimError::InvalidScenario(format!("duplicate scenario name '{}'", w[0])));
    }
    fs::create_dir_all(out_dir).map_err(|source| SimError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    scenarios.par_iter().map(|s| emit_scenario(s, out_dir)).collect()
}

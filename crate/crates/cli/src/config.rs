//! TOML pipeline configuration. Every section is optional; unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;
use wivi_core::csi::{ActivityLabel, SceneLabel};
use wivi_core::dsp::{Alignment, FilterSpec};
use wivi_core::segment::AugmentConfig;
use wivi_ml::nn::NetConfig;
use wivi_ml::SvmConfig;

use crate::error::{read_text, CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub simulate: SimulateSection,
    pub dsp: DspSection,
    pub segment: SegmentSection,
    pub svm: SvmSection,
    pub nn: NnSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subject {
    pub name: String,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub activities: Vec<String>,
    pub subjects: Vec<Subject>,
    pub scenes: Vec<String>,
    pub duration_s: f64,
    pub noise_sigma: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            activities: ActivityLabel::ALL.iter().map(|a| a.name().to_string()).collect(),
            subjects: vec![
                Subject {
                    name: "s0".into(),
                    scale: 1.0,
                },
                Subject {
                    name: "s1".into(),
                    scale: 0.9,
                },
            ],
            scenes: SceneLabel::ALL.iter().map(|s| s.name().to_string()).collect(),
            duration_s: 20.0,
            noise_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspSection {
    /// Convert raw CSI to RSSI-scaled linear gains before taking amplitudes.
    pub scale_csi: bool,
    pub median_window: usize,
    pub mean_window: usize,
    pub butter_order: usize,
    pub butter_cutoff_hz: f64,
    pub fs_hz: f64,
    pub alignment: Alignment,
}

impl Default for DspSection {
    fn default() -> Self {
        let f = FilterSpec::default();
        Self {
            scale_csi: false,
            median_window: f.median_window,
            mean_window: f.mean_window,
            butter_order: f.butter_order,
            butter_cutoff_hz: f.butter_cutoff_hz,
            fs_hz: f.fs_hz,
            alignment: f.alignment,
        }
    }
}

impl DspSection {
    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            median_window: self.median_window,
            mean_window: self.mean_window,
            butter_order: self.butter_order,
            butter_cutoff_hz: self.butter_cutoff_hz,
            fs_hz: self.fs_hz,
            alignment: self.alignment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub segmentations: Vec<u32>,
    pub train_fraction: f64,
    pub augment_ks: Vec<usize>,
}

impl Default for SegmentSection {
    fn default() -> Self {
        Self {
            segmentations: vec![1, 2, 3],
            train_fraction: 0.7,
            augment_ks: AugmentConfig::default().ks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub gamma: f64,
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub cache_mb: usize,
}

impl Default for SvmSection {
    fn default() -> Self {
        let s = SvmConfig::default();
        Self {
            gamma: s.gamma,
            c: s.c,
            tol: s.tol,
            max_passes: s.max_passes,
            cache_mb: s.cache_mb,
        }
    }
}

impl SvmSection {
    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            gamma: self.gamma,
            c: self.c,
            tol: self.tol,
            max_passes: self.max_passes,
            cache_mb: self.cache_mb,
            ..SvmConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnSection {
    pub input_side: usize,
    pub blocks: Vec<usize>,
    pub depth: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub winn_hidden: usize,
}

impl Default for NnSection {
    fn default() -> Self {
        let n = NetConfig::default();
        Self {
            input_side: n.input_side,
            blocks: n.blocks,
            depth: n.depth,
            lr: n.lr,
            weight_decay: n.weight_decay,
            epochs: n.epochs,
            batch: n.batch,
            winn_hidden: n.winn_hidden,
        }
    }
}

impl NnSection {
    pub fn net_config(&self, seed: u64) -> NetConfig {
        NetConfig {
            input_side: self.input_side,
            blocks: self.blocks.clone(),
            depth: self.depth,
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            batch: self.batch,
            winn_hidden: self.winn_hidden,
            seed,
            ..NetConfig::default()
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn activities(&self) -> Result<Vec<ActivityLabel>> {
        self.simulate
            .activities
            .iter()
            .map(|a| a.parse().map_err(|e| CliError::Config(format!("activity '{a}': {e}"))))
            .collect()
    }

    pub fn scenes(&self) -> Result<Vec<SceneLabel>> {
        self.simulate
            .scenes
            .iter()
            .map(|s| s.parse().map_err(|e| CliError::Config(format!("scene '{s}': {e}"))))
            .collect()
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            ks: self.segment.augment_ks.clone(),
        }
    }

    // Negated comparisons are deliberate: they also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let acts = self.activities()?;
        self.scenes()?;
        if acts.is_empty() || self.simulate.subjects.is_empty() || self.simulate.scenes.is_empty() {
            return bad("[simulate] needs at least one activity, subject and scene".into());
        }
        let mut names: Vec<&str> = self.simulate.subjects.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("[simulate] subject names must be unique".into());
        }
        if let Some(s) = self
            .simulate
            .subjects
            .iter()
            .find(|s| s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric()) || !(s.scale > 0.0))
        {
            return bad(format!("[simulate] subject '{}' needs an alphanumeric name and scale > 0", s.name));
        }
        if !(self.simulate.duration_s > 0.0) || !(self.simulate.noise_sigma >= 0.0) {
            return bad("[simulate] duration_s must be > 0 and noise_sigma ≥ 0".into());
        }
        self.dsp.filter_spec().validate().map_err(|e| CliError::Config(format!("[dsp] {e}")))?;
        if self.segment.segmentations.is_empty() {
            return bad("[segment] segmentations must not be empty".into());
        }
        for &s in &self.segment.segmentations {
            wivi_core::segment::check_duration(s).map_err(|e| CliError::Config(format!("[segment] {e}")))?;
        }
        if !(self.segment.train_fraction > 0.0 && self.segment.train_fraction < 1.0) {
            return bad("[segment] train_fraction must be in (0, 1)".into());
        }
        self.augment().validate().map_err(|e| CliError::Config(format!("[segment] {e}")))?;
        self.svm.svm_config().validate().map_err(|e| CliError::Config(format!("[svm] {e}")))?;
        self.nn.net_config(0).validate().map_err(|e| CliError::Config(format!("[nn] {e}")))?;
        Ok(())
    }
}

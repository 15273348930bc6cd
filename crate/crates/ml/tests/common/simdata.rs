//! Small labelled CSI sets with aligned skeleton heatmaps, straight from the simulator.

use wivi_core::csi::{ActivityLabel, CsiSample, SceneLabel};
use wivi_core::dsp::{amplitude_streams, preprocess_streams, FilterSpec};
use wivi_core::segment::{average_into_samples, rows_from_streams};
use wivi_core::sim::{simulate, skeleton_frames, SimScenario, SkeletonHeatmap, PACKETS_PER_FRAME};

/// One-second windows of `duration_s` captures, one capture per activity.
pub fn sim_set(activities: &[ActivityLabel], duration_s: f64, seed: u64) -> (Vec<CsiSample>, Vec<SkeletonHeatmap>) {
    let (mut xs, mut ts) = (Vec::new(), Vec::new());
    for (k, &a) in activities.iter().enumerate() {
        let s = SimScenario::new(a, SceneLabel::NoOcclusion, "s0", 1.0, duration_s, 1.0, seed + k as u64);
        let seq = simulate(&s).unwrap();
        let frames = skeleton_frames(&s).unwrap();
        let streams = preprocess_streams(&amplitude_streams(&seq).unwrap(), &FilterSpec::default()).unwrap();
        let n = streams[0].len();
        let win = 100;
        for start in (0..n / win).map(|w| w * win) {
            let got = average_into_samples(&rows_from_streams(&streams, start, start + win), a).unwrap();
            for i in 0..got.len() {
                let centre = (start + i) as f64 + 4.5 * 10.0;
                let f = ((centre / PACKETS_PER_FRAME as f64).round() as usize).min(frames.len() - 1);
                ts.push(frames[f].clone());
            }
            xs.extend(got);
        }
    }
    (xs, ts)
}

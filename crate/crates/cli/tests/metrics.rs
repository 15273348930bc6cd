use std::collections::HashMap;

use proptest::prelude::*;
use wivi_cli::metrics::{confusion, overall_accuracy, product_accuracy, ConfusionMatrix};
use wivi_cli::report::{
    format_predictions, parse_predictions, render_table_csv, render_table_md, PredRow, Robustness, RunReport,
};
use wivi_core::csi::{ActivityLabel, SceneLabel};

fn label(i: u8) -> ActivityLabel {
    ActivityLabel::from_id(i % 9).unwrap()
}

fn rows(pairs: &[(u8, u8)], scene: SceneLabel) -> Vec<PredRow> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(t, p))| PredRow {
            index: i,
            truth: label(t),
            pred: label(p),
            subject: format!("s{}", i % 2),
            scene,
        })
        .collect()
}

#[test]
fn two_class_reference_matrix() {
    let cm = ConfusionMatrix::from_counts(vec![vec![8, 2], vec![0, 10]]).unwrap();
    let pa = product_accuracy(&cm).unwrap();
    assert!((pa[0] - 0.8).abs() < 1e-12 && (pa[1] - 1.0).abs() < 1e-12);
    assert!((overall_accuracy(&cm).unwrap() - 0.9).abs() < 1e-12);
}

#[test]
fn empty_rows_score_zero_and_are_flagged() {
    let r = RunReport::from_predictions("svm", 1, &rows(&[(0, 0), (1, 0), (1, 1)], SceneLabel::NoOcclusion)).unwrap();
    assert_eq!(r.pa[2], 0.0);
    assert!(r.empty[2] && !r.empty[0] && !r.empty[1]);
    assert!((r.min_pa() - 0.5).abs() < 1e-12);
    let md = render_table_md(&[r]);
    assert!(md.contains("SVM"));
}

#[test]
fn mismatched_lengths_are_rejected() {
    assert!(confusion(&[ActivityLabel::Falling], &[]).is_err());
    assert!(confusion(&[], &[]).is_err());
}

#[test]
fn predictions_round_trip_through_csv() {
    let r = rows(&[(0, 3), (8, 8), (4, 2)], SceneLabel::FullOcclusion);
    assert_eq!(parse_predictions(&format_predictions(&r)).unwrap(), r);
    assert!(parse_predictions("index,truth\n").is_err());
}

#[test]
fn table_lists_synthetic_and_published_rows() {
    let r = RunReport::from_predictions("cnn", 2, &rows(&[(0, 0), (1, 1)], SceneLabel::NoOcclusion)).unwrap();
    let md = render_table_md(std::slice::from_ref(&r));
    assert!(md.contains("CNN") && md.contains("1.000"));
    let published = md.lines().find(|l| l.contains("published")).expect("published row");
    assert!(published.starts_with("| 2s | CNN |"));
    let csv = render_table_csv(&[r]);
    assert!(csv.lines().next().unwrap().starts_with("segmentation_s,method,falling,throwing"));
}

#[test]
fn robustness_probe_compares_full_occlusion_minima() {
    let good = rows(&[(0, 0), (1, 1)], SceneLabel::FullOcclusion);
    let bad = rows(&[(0, 1), (1, 1)], SceneLabel::FullOcclusion);
    let rob = Robustness::from_runs(&[("svm".into(), 1, good.clone()), ("winn".into(), 1, bad.clone())]).unwrap();
    assert_eq!(rob.winn_most_robust(), Some(false));
    assert!(rob.render_md().contains("WARNING"));
    let rob = Robustness::from_runs(&[("svm".into(), 1, bad), ("winn".into(), 1, good)]).unwrap();
    assert_eq!(rob.winn_most_robust(), Some(true));
}

proptest! {
    #[test]
    fn confusion_matches_hash_count(pairs in prop::collection::vec((0u8..9, 0u8..9), 1..300)) {
        let preds: Vec<ActivityLabel> = pairs.iter().map(|p| label(p.1)).collect();
        let truth: Vec<ActivityLabel> = pairs.iter().map(|p| label(p.0)).collect();
        let cm = confusion(&preds, &truth).unwrap();
        let mut oracle: HashMap<(u8, u8), u64> = HashMap::new();
        for &p in &pairs {
            *oracle.entry(p).or_default() += 1;
        }
        for t in 0..9u8 {
            for p in 0..9u8 {
                prop_assert_eq!(cm.get(t as usize, p as usize), oracle.get(&(t, p)).copied().unwrap_or(0));
            }
        }
        prop_assert_eq!(cm.total(), pairs.len() as u64);
    }

    #[test]
    fn oa_is_support_weighted_mean_pa(pairs in prop::collection::vec((0u8..9, 0u8..9), 1..300)) {
        let r = RunReport::from_predictions("svm", 1, &rows(&pairs, SceneLabel::PartialOcclusion)).unwrap();
        let total = r.confusion.total() as f64;
        let weighted: f64 = (0..9).map(|c| r.pa[c] * r.confusion.row_sum(c) as f64 / total).sum();
        prop_assert!((weighted - r.oa).abs() < 1e-12);
        prop_assert!((r.oa - r.confusion.trace() as f64 / total).abs() < 1e-12);
    }

    #[test]
    fn report_is_stable_under_row_and_class_permutations(
        pairs in prop::collection::vec((0u8..9, 0u8..9), 1..200),
        shift in 1u8..9,
        seed in any::<u64>(),
    ) {
        let base = RunReport::from_predictions("cnn", 3, &rows(&pairs, SceneLabel::NoOcclusion)).unwrap();
        // row order
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        for i in 0..n {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
            shuffled.swap(i, j);
        }
        let again = RunReport::from_predictions("cnn", 3, &rows(&shuffled, SceneLabel::NoOcclusion)).unwrap();
        prop_assert_eq!(&again.pa, &base.pa);
        prop_assert_eq!(again.oa, base.oa);
        // class relabelling permutes PA and leaves OA alone
        let relabelled: Vec<(u8, u8)> = pairs.iter().map(|&(t, p)| ((t + shift) % 9, (p + shift) % 9)).collect();
        let moved = RunReport::from_predictions("cnn", 3, &rows(&relabelled, SceneLabel::NoOcclusion)).unwrap();
        for c in 0..9 {
            prop_assert_eq!(moved.pa[(c + shift as usize) % 9], base.pa[c]);
        }
        prop_assert!((moved.oa - base.oa).abs() < 1e-12);
    }
}

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wivi_core::csi::{ActivityLabel, ComplexGain, CsiMatrix, CsiPacket, CsiSequence, SceneLabel};
use wivi_core::dsp::*;

fn brute_window(i: usize, n: usize, w: usize) -> (usize, usize) {
    let lo = i as isize - (w as isize + 1) / 2 + 1;
    let hi = i + w / 2;
    (lo.max(0) as usize, hi.min(n - 1))
}

fn brute_median(x: &[f64], w: usize) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (a, b) = brute_window(i, x.len(), w);
            let mut v = x[a..=b].to_vec();
            v.sort_by(|p, q| p.partial_cmp(q).unwrap());
            let k = v.len();
            if k % 2 == 1 {
                v[k / 2]
            } else {
                (v[k / 2 - 1] + v[k / 2]) / 2.0
            }
        })
        .collect()
}

fn brute_mean(x: &[f64], w: usize) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (a, b) = brute_window(i, x.len(), w);
            x[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
        })
        .collect()
}

#[test]
fn sliding_filters_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let n = rng.random_range(1..400);
        let w = rng.random_range(1..60);
        let x: Vec<f64> = (0..n)
            .map(|_| {
                // some repeated values exercise duplicate handling in the sorted window
                if rng.random_bool(0.2) {
                    3.0
                } else {
                    rng.random_range(-50.0..50.0)
                }
            })
            .collect();
        assert_eq!(median_filter(&x, w).unwrap(), brute_median(&x, w));
        for (a, b) in mean_filter(&x, w).unwrap().iter().zip(brute_mean(&x, w)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

/// Analog Butterworth magnitude at the bilinear-warped frequency.
fn analog_magnitude(f: f64, fc: f64, fs: f64, order: i32) -> f64 {
    let w = (PI * f / fs).tan();
    let wc = (PI * fc / fs).tan();
    1.0 / (1.0 + (w / wc).powi(2 * order)).sqrt()
}

#[test]
fn digital_response_matches_warped_analog_prototype() {
    for order in 1..=8 {
        for &fc in &[5.0, 10.0, 20.0] {
            let spec = FilterSpec {
                butter_order: order,
                butter_cutoff_hz: fc,
                ..Default::default()
            };
            let c = butterworth_lowpass(&spec).unwrap();
            for k in 0..100 {
                let f = k as f64 * 0.499;
                let want = analog_magnitude(f, fc, 100.0, order as i32);
                assert!((c.magnitude(f, 100.0) - want).abs() < 1e-9, "order {order} fc {fc} f {f}");
            }
        }
    }
    let c = butterworth_lowpass(&FilterSpec::default()).unwrap();
    let at25 = c.magnitude(25.0, 100.0);
    assert!((at25 - analog_magnitude(25.0, 10.0, 100.0, 5)).abs() < 1e-9);
    assert!(at25 <= 0.02);
}

#[test]
fn magnitude_is_monotone() {
    for order in 1..=8 {
        let c = butterworth_lowpass(&FilterSpec {
            butter_order: order,
            ..Default::default()
        })
        .unwrap();
        let mags: Vec<f64> = (0..1024).map(|k| c.magnitude(50.0 * k as f64 / 1023.0, 100.0)).collect();
        for w in mags.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}

/// Durand–Kerner root finder for the denominator polynomial.
fn poly_roots(a: &[f64]) -> Vec<(f64, f64)> {
    let n = a.len() - 1;
    type C = (f64, f64);
    let mul = |x: C, y: C| (x.0 * y.0 - x.1 * y.1, x.0 * y.1 + x.1 * y.0);
    let div = |x: C, y: C| {
        let d = y.0 * y.0 + y.1 * y.1;
        ((x.0 * y.0 + x.1 * y.1) / d, (x.1 * y.0 - x.0 * y.1) / d)
    };
    // z^n + a1 z^(n-1) + ... + an
    let eval = |z: C| {
        let mut acc = (1.0, 0.0);
        for &c in &a[1..] {
            acc = mul(acc, z);
            acc.0 += c;
        }
        acc
    };
    let mut roots: Vec<C> = (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64 + 0.4;
            (0.9 * t.cos(), 0.9 * t.sin())
        })
        .collect();
    for _ in 0..2000 {
        for i in 0..n {
            let mut den = (1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den = mul(den, (roots[i].0 - roots[j].0, roots[i].1 - roots[j].1));
                }
            }
            let d = div(eval(roots[i]), den);
            roots[i] = (roots[i].0 - d.0, roots[i].1 - d.1);
        }
    }
    roots
}

#[test]
fn designs_are_stable() {
    for order in 1..=8 {
        for &fc in &[1.0, 10.0, 30.0, 45.0] {
            let c = butterworth_lowpass(&FilterSpec {
                butter_order: order,
                butter_cutoff_hz: fc,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(c.a[0], 1.0);
            assert_eq!(c.a.len(), order + 1);
            let max = poly_roots(&c.a)
                .iter()
                .map(|r| r.0.hypot(r.1))
                .fold(0.0, f64::max);
            assert!(max < 1.0 - 1e-9, "order {order} fc {fc}: pole radius {max}");
        }
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[test]
fn thirty_hertz_is_suppressed() {
    let c = butterworth_lowpass(&FilterSpec::default()).unwrap();
    let x: Vec<f64> = (0..2000).map(|i| (2.0 * PI * 30.0 * i as f64 / 100.0).sin()).collect();
    let y = filter_zero_phase(&c, &x).unwrap();
    // Steady state: |H(30)| applied on both passes. The first and last second
    // hold the edge-padding transient and are excluded.
    let bound = c.magnitude(30.0, 100.0).powi(2);
    assert!(bound < 1e-3);
    let inner = &y[100..1900];
    assert!(rms(inner) <= 1e-3 * rms(&x[100..1900]), "rms ratio {}", rms(inner) / rms(&x));
    assert!((rms(inner) / rms(&x[100..1900]) - bound).abs() < 1e-4);
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn two_plus_forty_hertz_keeps_the_slow_tone() {
    let c = butterworth_lowpass(&FilterSpec::default()).unwrap();
    let slow: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 2.0 * i as f64 / 100.0).sin()).collect();
    let x: Vec<f64> = slow
        .iter()
        .enumerate()
        .map(|(i, s)| s + (2.0 * PI * 40.0 * i as f64 / 100.0).sin())
        .collect();
    let y = filter_zero_phase(&c, &x).unwrap();
    assert_eq!(y.len(), x.len());
    assert!(correlation(&y, &slow) > 0.999);
}

#[test]
fn zero_phase_has_no_lag() {
    let c = butterworth_lowpass(&FilterSpec::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        // band-limited: a few tones at or below 5 Hz
        let tones: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| (rng.random_range(0.2..5.0), rng.random_range(0.5..2.0), rng.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        let x: Vec<f64> = (0..1000)
            .map(|i| {
                let t = i as f64 / 100.0;
                tones.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum()
            })
            .collect();
        let y = filter_zero_phase(&c, &x).unwrap();
        let xcorr = |lag: isize| -> f64 {
            (100..900)
                .map(|i| x[i] * y[(i as isize + lag) as usize])
                .sum()
        };
        let best = (-20..=20).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
        assert_eq!(best, 0);
    }
}

fn const_sequence(n: usize, amp: f64) -> CsiSequence {
    let m = CsiMatrix::from_gains(3, 3, vec![ComplexGain::new(amp, 0.0); 270]).unwrap();
    let packets = (0..n).map(|i| CsiPacket::with_matrix(i as u64 * 10_000, m.clone())).collect();
    CsiSequence::new(100.0, packets, ActivityLabel::Seating, "s0", SceneLabel::NoOcclusion).unwrap()
}

#[test]
fn preprocess_constant_sequence() {
    let out = preprocess(&const_sequence(300, 12.0), &FilterSpec::default()).unwrap();
    assert_eq!(out.len(), 270);
    for s in &out {
        assert_eq!(s.len(), 300);
        assert!(s.iter().all(|v| (v - 12.0).abs() < 1e-9));
    }
}

#[test]
fn preprocess_is_the_three_stage_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gains: Vec<Vec<ComplexGain>> = (0..200)
        .map(|_| (0..270).map(|_| ComplexGain::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0))).collect())
        .collect();
    let packets = gains
        .into_iter()
        .enumerate()
        .map(|(i, g)| CsiPacket::with_matrix(i as u64, CsiMatrix::from_gains(3, 3, g).unwrap()))
        .collect();
    let seq = CsiSequence::new(100.0, packets, ActivityLabel::Seating, "s0", SceneLabel::NoOcclusion).unwrap();
    let spec = FilterSpec::default();
    let out = preprocess(&seq, &spec).unwrap();
    let again = preprocess(&seq, &spec).unwrap();
    assert_eq!(out, again, "bit-identical reruns");
    let c = butterworth_lowpass(&spec).unwrap();
    for (idx, (tx, rx, sub)) in [(0, (0, 0, 0)), (137, (1, 1, 17)), (269, (2, 2, 29))] {
        let raw = wivi_core::amplitude_series(&seq, tx, rx, sub).unwrap();
        let manual =
            filter_zero_phase(&c, &mean_filter(&median_filter(&raw, 40).unwrap(), 40).unwrap()).unwrap();
        assert_eq!(out[idx], manual);
    }
}

#[test]
fn spike_is_removed_by_the_median_stage() {
    let mut x = vec![5.0; 200];
    x[100] = 500.0;
    let w = 40;
    let m = median_filter(&x, w).unwrap();
    let bound = (500.0 - 5.0) / w as f64;
    assert!(m.iter().all(|v| (v - 5.0).abs() <= bound));
    assert!(m.iter().all(|&v| v == 5.0));
}

#[test]
fn preprocess_reports_stream_index() {
    let e = preprocess(&const_sequence(10, 1.0), &FilterSpec::default()).unwrap_err();
    match e {
        DspError::Stream { index, source, .. } => {
            assert_eq!(index, 0);
            assert!(matches!(*source, DspError::TooShort { .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #[test]
    fn mean_and_median_are_affine_equivariant(
        x in proptest::collection::vec(-100.0f64..100.0, 1..120),
        w in 1usize..50,
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let mx = mean_filter(&x, w).unwrap();
        let my = mean_filter(&y, w).unwrap();
        for (p, q) in mx.iter().zip(&my) {
            prop_assert!((a * p + b - q).abs() < 1e-9 * (1.0 + q.abs()));
        }
        let dx = median_filter(&x, w).unwrap();
        let dy = median_filter(&y, w).unwrap();
        for (p, q) in dx.iter().zip(&dy) {
            prop_assert!((a * p + b - q).abs() < 1e-9 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn filters_preserve_length_and_constants(c in -1e3f64..1e3, n in 1usize..200, w in 1usize..64) {
        let x = vec![c; n];
        prop_assert_eq!(median_filter(&x, w).unwrap(), x.clone());
        for v in mean_filter(&x, w).unwrap() {
            prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }
}

use std::f64::consts::PI;

use activitymon_core::features::{
    activity_features, audio_auth_features, instance_features, motion_auth_features, shock_features, AudioSpectrum,
    AUDIO_DFT_POINTS,
};
use activitymon_core::signal::{high_pass, make_windows};
use activitymon_core::synth::{gen_activity_trace, gen_fall_trace, ActivityGenSpec, FallGenSpec};
use activitymon_core::{AccelSample, ActivityClass, AudioFrame, FeatureVector, Schema, Window};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn window(samples: &[AccelSample]) -> Window<'_> {
    Window::from_samples(samples, 0.02).unwrap()
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<AccelSample> {
    (0..n)
        .map(|i| {
            AccelSample::new(
                i as f64 * 0.02,
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..3.0),
            )
        })
        .collect()
}

// Textbook formulas, written out independently of the crate's helpers.
fn oracle_mean(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    s / xs.len() as f64
}

fn oracle_var(xs: &[f64]) -> f64 {
    // E[x²] − E[x]², fine at these magnitudes.
    let m = oracle_mean(xs);
    oracle_mean(&xs.iter().map(|x| x * x).collect::<Vec<_>>()) - m * m
}

fn oracle_corr(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (oracle_mean(xs), oracle_mean(ys));
    let cov = oracle_mean(&xs.iter().zip(ys).map(|(x, y)| x * y).collect::<Vec<_>>()) - mx * my;
    cov / (oracle_var(xs) * oracle_var(ys)).sqrt()
}

#[test]
fn motion_statistics_match_textbook_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples = random_samples(&mut rng, 100);
    let f = motion_auth_features(&window(&samples)).unwrap();
    let x: Vec<f64> = samples.iter().map(|s| s.ax).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.ay).collect();
    let z: Vec<f64> = samples.iter().map(|s| s.az).collect();
    let n: Vec<f64> = samples
        .iter()
        .map(|s| (s.ax * s.ax + s.ay * s.ay + s.az * s.az).sqrt())
        .collect();
    let expected = [
        oracle_mean(&x),
        oracle_mean(&y),
        oracle_mean(&z),
        oracle_var(&x),
        oracle_var(&y),
        oracle_var(&z),
        oracle_mean(&n),
        oracle_var(&n),
        oracle_corr(&x, &y),
        oracle_corr(&x, &z),
        oracle_corr(&y, &z),
    ];
    for (i, (got, want)) in f.values.iter().zip(expected).enumerate() {
        assert!(
            close(*got, want, 1e-9),
            "{}: {got} vs {want}",
            Schema::MotionAuth.labels()[i]
        );
    }
}

#[test]
fn walking_activity_features_match_a_two_pass_oracle() {
    let (stream, _) = gen_activity_trace(&ActivityGenSpec::for_class(ActivityClass::Walking), "w").unwrap();
    let filtered = high_pass(&stream.into_g(), 0.5).unwrap();
    let w = make_windows(&filtered, 2.0, 2.0).unwrap()[1];
    let mags: Vec<f64> = w
        .samples
        .iter()
        .map(|s| (s.ax * s.ax + s.ay * s.ay + s.az * s.az).sqrt())
        .collect();
    let mut jerk_sum = 0.0;
    for i in 1..mags.len() {
        jerk_sum += (mags[i] - mags[i - 1]).abs();
    }
    let f = activity_features(&w).unwrap();
    assert!(close(f.values[0], oracle_mean(&mags), 1e-12));
    assert!(close(f.values[1], jerk_sum / (mags.len() - 1) as f64, 1e-12));
    assert!(f.values[0] > 0.0);
}

/// `|X_k| / M` by direct summation.
fn dft_magnitudes(xs: &[f64]) -> Vec<f64> {
    let m = xs.len();
    (1..=m / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, x) in xs.iter().enumerate() {
                let phase = -2.0 * PI * (k * n) as f64 / m as f64;
                re += x * phase.cos();
                im += x * phase.sin();
            }
            (re * re + im * im).sqrt() / m as f64
        })
        .collect()
}

#[test]
fn audio_spectrum_matches_a_direct_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise: Vec<f64> = (0..AUDIO_DFT_POINTS)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1)
        .collect();
    let fast = AudioSpectrum::new().magnitudes(&noise);
    let slow = dft_magnitudes(&noise);
    assert_eq!(fast.len(), slow.len());
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-9), "{a} vs {b}");
    }
    let f = audio_auth_features(&AudioFrame::new(0.0, 128.0, noise.clone()).unwrap()).unwrap();
    let spectral_var = oracle_var(&slow);
    assert!((f.values[3] - spectral_var).abs() <= 1e-6 * spectral_var);
    assert!(close(
        f.values[2],
        oracle_mean(&noise.iter().map(|x| x * x).collect::<Vec<_>>()),
        1e-12
    ));
}

#[test]
fn impact_window_outscores_carrying() {
    let trace = gen_fall_trace(&FallGenSpec::default(), "f").unwrap();
    let stream = trace.stream.into_g();
    let t_impact = trace.truth.unwrap().t_impact;
    let features_at = |t0: f64| {
        let samples: Vec<AccelSample> = stream
            .samples
            .iter()
            .filter(|s| s.t >= t0 && s.t < t0 + 1.0)
            .copied()
            .collect();
        let audio = AudioFrame::slice_span(&trace.audio, t0, t0 + 1.0).unwrap();
        shock_features(&window(&samples), &audio).unwrap()
    };
    let shock = features_at(t_impact - 0.5);
    let carry = features_at(0.5);
    assert!(shock.values[2] > carry.values[2], "max_norm");
    assert!(shock.values[6] > carry.values[6], "audio energy");
    assert_eq!(features_at(t_impact - 0.5), shock);
}

#[test]
fn instance_mean_of_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vs: Vec<FeatureVector> = (0..5)
        .map(|_| FeatureVector::new(Schema::Shock, (0..8).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap())
        .collect();
    let got = instance_features(&vs).unwrap();
    for d in 0..8 {
        let mut s = 0.0;
        for v in &vs {
            s += v.values[d];
        }
        assert!(close(got.values[d], s / 5.0, 1e-12));
    }
}

fn arb_window() -> impl Strategy<Value = Vec<AccelSample>> {
    (any::<u64>(), 2usize..120).prop_map(|(seed, n)| random_samples(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

fn retimed(samples: &[AccelSample]) -> Vec<AccelSample> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| AccelSample::new(i as f64 * 0.02, s.ax, s.ay, s.az))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn permutation_leaves_order_free_features_unchanged(samples in arb_window(), seed in any::<u64>()) {
        let mut shuffled = samples.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let shuffled = retimed(&shuffled);
        let a = motion_auth_features(&window(&samples)).unwrap();
        let b = motion_auth_features(&window(&shuffled)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(close(*x, *y, 1e-9));
        }
        let ma = activity_features(&window(&samples)).unwrap();
        let mb = activity_features(&window(&shuffled)).unwrap();
        prop_assert!(close(ma.values[0], mb.values[0], 1e-9), "mean magnitude");
    }

    #[test]
    fn variances_non_negative_and_correlations_bounded(samples in arb_window()) {
        let f = motion_auth_features(&window(&samples)).unwrap();
        for i in [3, 4, 5, 7] {
            prop_assert!(f.values[i] >= 0.0);
        }
        for i in 8..11 {
            prop_assert!((-1.0..=1.0).contains(&f.values[i]));
        }
    }

    #[test]
    fn scaling_is_homogeneous(samples in arb_window(), c in 0.1..10.0f64) {
        let scaled: Vec<AccelSample> =
            samples.iter().map(|s| AccelSample::new(s.t, c * s.ax, c * s.ay, c * s.az)).collect();
        let a = motion_auth_features(&window(&samples)).unwrap();
        let b = motion_auth_features(&window(&scaled)).unwrap();
        for i in [0, 1, 2, 6] {
            prop_assert!(close(b.values[i], c * a.values[i], 1e-9), "mean {i}");
        }
        for i in [3, 4, 5, 7] {
            prop_assert!(close(b.values[i], c * c * a.values[i], 1e-9), "variance {i}");
        }
        for i in 8..11 {
            prop_assert!(close(b.values[i], a.values[i], 1e-9), "correlation {i}");
        }
        let (fa, fb) = (activity_features(&window(&samples)).unwrap(), activity_features(&window(&scaled)).unwrap());
        prop_assert!(close(fb.values[0], c * fa.values[0], 1e-9));
        prop_assert!(close(fb.values[1], c * fa.values[1], 1e-9));
    }

    #[test]
    fn extraction_is_deterministic(samples in arb_window()) {
        let w = window(&samples);
        prop_assert_eq!(motion_auth_features(&w).unwrap(), motion_auth_features(&w).unwrap());
        prop_assert_eq!(activity_features(&w).unwrap(), activity_features(&w).unwrap());
    }
}

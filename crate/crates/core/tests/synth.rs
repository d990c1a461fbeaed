use std::collections::BTreeMap;

use activitymon_core::activity::ActivityClass;
use activitymon_core::auth::{auth_windows, FeatureSet};
use activitymon_core::signal::{high_pass, high_passed_magnitude, DEFAULT_CUTOFF_HZ};
use activitymon_core::synth::{
    activity_corpus, check_amplitude_ordering, check_distinct_profiles, default_class_specs, default_profiles,
    event_corpus, gen_activity_trace, gen_corpus, gen_fall_trace, gen_user_session, ActivityGenSpec, ActivityRecipe,
    EventRecipe, FallGenSpec, GaitProfile, PostImpact, Recipe, SessionSpec, Split, LABEL_FALL_ABANDONED,
    LABEL_FALL_PICKED_UP,
};
use activitymon_core::{activity_level, Error};
use proptest::prelude::*;

fn spec(class: ActivityClass, rate_hz: f64, duration_s: f64, seed: u64) -> ActivityGenSpec {
    ActivityGenSpec {
        rate_hz,
        duration_s,
        seed,
        ..ActivityGenSpec::for_class(class)
    }
}

#[test]
fn still_phone_filters_to_almost_nothing() {
    for seed in 0..10 {
        let (stream, class) = gen_activity_trace(&spec(ActivityClass::NoActivity, 50.0, 30.0, seed), "d").unwrap();
        assert_eq!(class, ActivityClass::NoActivity);
        let filtered = high_pass(&stream, DEFAULT_CUTOFF_HZ).unwrap();
        // Skip the filter's response to switching on under gravity.
        let settled = &filtered.samples[250..];
        let mean = settled.iter().map(|s| s.magnitude()).sum::<f64>() / settled.len() as f64;
        assert!(mean < 0.02, "seed {seed}: {mean}");
    }
}

#[test]
fn walking_peaks_at_its_step_frequency() {
    let (rate, duration) = (50.0, 10.0);
    let bin_hz = 1.0 / duration;
    for seed in 0..10 {
        let (stream, _) = gen_activity_trace(&spec(ActivityClass::Walking, rate, duration, seed), "d").unwrap();
        // Project the filtered signal on the mean gravity direction.
        let n = stream.samples.len() as f64;
        let g = stream.samples.iter().fold([0.0; 3], |acc, s| {
            [acc[0] + s.ax / n, acc[1] + s.ay / n, acc[2] + s.az / n]
        });
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let filtered = high_pass(&stream, DEFAULT_CUTOFF_HZ).unwrap();
        let x: Vec<f64> = filtered
            .samples
            .iter()
            .map(|s| (s.ax * g[0] + s.ay * g[1] + s.az * g[2]) / norm)
            .collect();
        let power = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let w = 2.0 * std::f64::consts::PI * (k * i) as f64 / x.len() as f64;
                re += v * w.cos();
                im -= v * w.sin();
            }
            re * re + im * im
        };
        let peak = (1..x.len() / 2).max_by(|&a, &b| power(a).total_cmp(&power(b))).unwrap();
        let expected = (2.0 / bin_hz) as usize;
        assert!(
            peak.abs_diff(expected) <= 1,
            "seed {seed}: peak at {} Hz",
            peak as f64 * bin_hz
        );
    }
}

#[test]
fn same_seed_same_stream() {
    let s = spec(ActivityClass::Running, 5.0, 10.0, 42);
    assert_eq!(
        gen_activity_trace(&s, "d").unwrap(),
        gen_activity_trace(&s, "d").unwrap()
    );
    let other = ActivityGenSpec { seed: 43, ..s.clone() };
    assert_ne!(
        gen_activity_trace(&s, "d").unwrap(),
        gen_activity_trace(&other, "d").unwrap()
    );
}

#[test]
fn default_amplitudes_order_the_activity_levels() {
    let specs = default_class_specs();
    check_amplitude_ordering(&specs).unwrap();
    let mut swapped = specs.clone();
    swapped[0].amplitude_g = 1.0;
    assert!(check_amplitude_ordering(&swapped).is_err());

    let mean_level = |class: ActivityClass| {
        let levels: Vec<f64> = (0..20)
            .map(|seed| {
                let (stream, _) = gen_activity_trace(&spec(class, 5.0, 10.0, seed), "d").unwrap();
                let filtered = high_passed_magnitude(&stream, DEFAULT_CUTOFF_HZ).unwrap();
                let series: Vec<(f64, f64)> = stream.samples.iter().map(|s| s.t).zip(filtered).collect();
                let points = activity_level(&series, 0.02).unwrap();
                points.iter().map(|p| p.level).sum::<f64>() / points.len().max(1) as f64
            })
            .collect();
        levels.iter().sum::<f64>() / levels.len() as f64
    };
    let order = [
        ActivityClass::Running,
        ActivityClass::Walking,
        ActivityClass::Resting,
        ActivityClass::NoActivity,
    ];
    let levels: Vec<f64> = order.iter().map(|&c| mean_level(c)).collect();
    assert!(levels.windows(2).all(|w| w[0] > w[1]), "{levels:?}");
}

#[test]
fn free_fall_is_weightless_and_lands_hard() {
    for seed in 0..10 {
        let trace = gen_fall_trace(
            &FallGenSpec {
                seed,
                ..FallGenSpec::default()
            },
            "d",
        )
        .unwrap();
        let truth = trace.truth.unwrap();
        assert!((truth.free_fall_duration() - 0.391).abs() < 0.03, "{truth:?}");
        let stream = trace.stream.into_g();
        let falling: Vec<f64> = stream
            .samples
            .iter()
            .filter(|s| s.t >= truth.t_freefall && s.t < truth.t_impact)
            .map(|s| s.magnitude())
            .collect();
        assert!(falling.len() >= 15);
        assert!(falling.iter().all(|m| *m < 0.1), "seed {seed}: {falling:?}");
        let peak = stream.samples.iter().map(|s| s.magnitude()).fold(0.0, f64::max);
        assert!(peak >= 2.5, "seed {seed}: {peak}");
        let click = trace
            .audio
            .iter()
            .find(|f| f.t_start <= truth.t_impact && truth.t_impact < f.t_end())
            .expect("an audio frame covers the impact");
        assert!(click.samples.iter().any(|v| v.abs() > 0.3));
    }
}

#[test]
fn pickup_moves_after_the_delay() {
    let spec = FallGenSpec {
        post_impact: PostImpact::PickedUpAfter { seconds: 1.0 },
        ..FallGenSpec::default()
    };
    let trace = gen_fall_trace(&spec, "d").unwrap();
    let t_impact = trace.truth.unwrap().t_impact;
    let stream = trace.stream.into_g();
    let series = high_passed_magnitude(&stream, DEFAULT_CUTOFF_HZ).unwrap();
    let window = |from: f64, to: f64| -> Vec<f64> {
        stream
            .samples
            .iter()
            .zip(&series)
            .filter(|(s, _)| s.t >= from && s.t < to)
            .map(|(_, v)| *v)
            .collect()
    };
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread(&window(t_impact + 3.0, t_impact + 6.0)) > 0.1);
    assert!(FallGenSpec {
        height_m: 0.0,
        ..FallGenSpec::default()
    }
    .validate()
    .is_err());
}

fn motion_windows(profile: &GaitProfile, seed: u64) -> Vec<Vec<f64>> {
    let (stream, audio) = gen_user_session(profile, &SessionSpec::default(), "d", seed).unwrap();
    auth_windows(&stream.into_g(), &audio, 2.0)
        .unwrap()
        .iter()
        .map(|w| FeatureSet::MotionOnly.project(&w.features).unwrap().values)
        .collect()
}

fn centroid(ws: &[Vec<f64>]) -> Vec<f64> {
    (0..ws[0].len())
        .map(|d| ws.iter().map(|w| w[d]).sum::<f64>() / ws.len() as f64)
        .collect()
}

/// Per-feature standard deviation pooled over every window given.
fn spread(ws: &[&[Vec<f64>]]) -> Vec<f64> {
    let all: Vec<&Vec<f64>> = ws.iter().flat_map(|w| w.iter()).collect();
    let n = all.len() as f64;
    (0..all[0].len())
        .map(|d| {
            let m = all.iter().map(|w| w[d]).sum::<f64>() / n;
            (all.iter().map(|w| (w[d] - m).powi(2)).sum::<f64>() / n)
                .sqrt()
                .max(1e-12)
        })
        .collect()
}

fn scaled_distance(a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(scale)
        .map(|((x, y), s)| ((x - y) / s).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn a_profile_has_one_centroid_across_seeds() {
    let profiles = default_profiles();
    let first = motion_windows(&profiles[0], 1);
    let reruns: Vec<_> = (2..7).map(|seed| motion_windows(&profiles[0], seed)).collect();
    let others: Vec<_> = profiles[1..].iter().map(|p| motion_windows(p, 1)).collect();
    assert!(reruns.iter().all(|r| *r != first));
    let mut pooled: Vec<&[Vec<f64>]> = vec![&first];
    pooled.extend(reruns.iter().map(Vec::as_slice));
    let scale = spread(&pooled);
    let home = centroid(&first);
    let same = reruns
        .iter()
        .map(|r| scaled_distance(&home, &centroid(r), &scale))
        .fold(0.0, f64::max);
    let apart = others
        .iter()
        .map(|o| scaled_distance(&home, &centroid(o), &scale))
        .fold(f64::MAX, f64::min);
    assert!(same < apart, "reruns drift {same}, nearest other user {apart}");
}

#[test]
fn thirty_percent_heavier_gait_is_separable() {
    let light = GaitProfile {
        user_id: "light".into(),
        ..default_profiles()[0].clone()
    };
    let heavy = GaitProfile {
        user_id: "heavy".into(),
        amplitude_g: light.amplitude_g.map(|a| a * 1.3),
        ..light.clone()
    };
    let train = [motion_windows(&light, 1), motion_windows(&heavy, 2)];
    let test = [motion_windows(&light, 3), motion_windows(&heavy, 4)];
    let scale = spread(&[&train[0], &train[1]]);
    let centroids = [centroid(&train[0]), centroid(&train[1])];
    let (mut hits, mut total) = (0, 0);
    for (user, windows) in test.iter().enumerate() {
        for w in windows {
            let nearest = if scaled_distance(w, &centroids[0], &scale) <= scaled_distance(w, &centroids[1], &scale) {
                0
            } else {
                1
            };
            hits += usize::from(nearest == user);
            total += 1;
        }
    }
    let accuracy = hits as f64 / total as f64;
    assert!(accuracy >= 0.95, "{accuracy}");
}

#[test]
fn default_profiles_are_distinct_and_frozen_ones_rejected() {
    let profiles = default_profiles();
    assert_eq!(profiles.len(), 9);
    check_distinct_profiles(&profiles).unwrap();
    let frozen = GaitProfile {
        amplitude_g: [0.0; 3],
        ..profiles[0].clone()
    };
    assert!(matches!(frozen.validate(), Err(Error::Parameter(_))));
    let twin = GaitProfile {
        user_id: "twin".into(),
        ..profiles[0].clone()
    };
    assert!(check_distinct_profiles(&[profiles[0].clone(), twin]).is_err());
}

#[test]
fn corpus_sizes() {
    let items = activity_corpus(&ActivityRecipe::default(), 3).unwrap();
    let mut per_class: BTreeMap<String, usize> = BTreeMap::new();
    for i in &items {
        *per_class.entry(i.entry.label.clone()).or_default() += 1;
    }
    assert_eq!(per_class.len(), 4);
    assert!(per_class.values().all(|n| *n == 80));
    let train = items.iter().filter(|i| i.entry.split == Some(Split::Train)).count();
    assert_eq!((train, items.len() - train), (208, 112));

    let events = event_corpus(&EventRecipe::default(), 3).unwrap();
    let shocks = events
        .iter()
        .filter(|i| i.entry.label == LABEL_FALL_ABANDONED || i.entry.label == LABEL_FALL_PICKED_UP)
        .count();
    assert_eq!((events.len() - shocks, shocks), (98, 36));
}

#[test]
fn corpus_files_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let recipe = Recipe::Events(EventRecipe {
        abandoned: 2,
        picked_up: 1,
        everyday: vec![(activitymon_core::synth::EverydayKind::Walk, 2)],
        ..EventRecipe::default()
    });
    let ma = gen_corpus(&recipe, 5, a.path()).unwrap();
    let mb = gen_corpus(&recipe, 5, b.path()).unwrap();
    assert_eq!(ma, mb);
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 5);
    for name in names {
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generators_are_pure(seed in any::<u64>(), class_index in 0usize..4) {
        let s = spec(ActivityClass::ALL[class_index], 5.0, 10.0, seed);
        prop_assert_eq!(gen_activity_trace(&s, "d").unwrap(), gen_activity_trace(&s, "d").unwrap());
        let f = FallGenSpec { seed, ..FallGenSpec::default() };
        prop_assert_eq!(gen_fall_trace(&f, "d").unwrap(), gen_fall_trace(&f, "d").unwrap());
    }

    #[test]
    fn any_drop_is_weightless_while_falling(seed in any::<u64>(), height in 0.3..1.5f64) {
        let trace = gen_fall_trace(&FallGenSpec { seed, height_m: height, ..FallGenSpec::default() }, "d").unwrap();
        let truth = trace.truth.unwrap();
        let stream = trace.stream.into_g();
        for s in stream.samples.iter().filter(|s| s.t >= truth.t_freefall && s.t < truth.t_impact) {
            prop_assert!(s.magnitude() < 0.1, "{} g at {}", s.magnitude(), s.t);
        }
    }
}

use std::sync::OnceLock;

use activitymon_core::auth::{
    auth_metrics, auth_windows, evaluate_identifier, roc_area, vote_periods, AuthConfig, DecisionMode, LabeledWindow,
    MetricRow, SecurityConfig, SecurityEvent, UserMetrics,
};
use activitymon_core::experiments::labelled_windows;
use activitymon_core::synth::{
    auth_corpus, default_profiles, gen_user_session, AuthRecipe, GaitProfile, SessionSpec, Split,
};
use activitymon_core::{
    enroll, identify_window, security_level, vote_identify, AuthDecision, AuthMetrics, Error, FeatureSet, Identifier,
    SecurityLevel,
};
use proptest::prelude::*;

fn session_windows(profile: &GaitProfile, session: u32, seed: u64) -> Vec<LabeledWindow> {
    let spec = SessionSpec::default();
    let (stream, audio) = gen_user_session(profile, &spec, &profile.user_id, seed).unwrap();
    auth_windows(&stream.into_g(), &audio, 2.0)
        .unwrap()
        .into_iter()
        .map(|w| LabeledWindow {
            user_id: profile.user_id.clone(),
            session,
            features: w.features,
        })
        .collect()
}

/// A light walker and a heavy one: every gait amplitude differs by 2.5x.
fn disjoint_users() -> &'static (Vec<LabeledWindow>, Vec<LabeledWindow>) {
    static DATA: OnceLock<(Vec<LabeledWindow>, Vec<LabeledWindow>)> = OnceLock::new();
    DATA.get_or_init(|| {
        let light = GaitProfile {
            user_id: "light".into(),
            ..default_profiles()[0].clone()
        };
        let heavy = GaitProfile {
            user_id: "heavy".into(),
            amplitude_g: light.amplitude_g.map(|a| a * 2.5),
            ..light.clone()
        };
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (u, p) in [&light, &heavy].into_iter().enumerate() {
            for session in 0..3u32 {
                let w = session_windows(p, session, 100 * u as u64 + u64::from(session));
                if session < 2 {
                    train.extend(w)
                } else {
                    test.extend(w)
                }
            }
        }
        (train, test)
    })
}

fn nearest_centroid_accuracy(train: &[LabeledWindow], test: &[LabeledWindow]) -> f64 {
    let dim = train[0].features.len();
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|d| train.iter().map(|w| w.features.values[d]).sum::<f64>() / n)
        .collect();
    let std: Vec<f64> = (0..dim)
        .map(|d| {
            let v = train
                .iter()
                .map(|w| (w.features.values[d] - mean[d]).powi(2))
                .sum::<f64>()
                / n;
            v.sqrt().max(1e-12)
        })
        .collect();
    let z = |w: &LabeledWindow| -> Vec<f64> { (0..dim).map(|d| (w.features.values[d] - mean[d]) / std[d]).collect() };
    let mut users: Vec<&str> = train.iter().map(|w| w.user_id.as_str()).collect();
    users.dedup();
    let centroids: Vec<Vec<f64>> = users
        .iter()
        .map(|u| {
            let own: Vec<Vec<f64>> = train.iter().filter(|w| w.user_id == *u).map(z).collect();
            (0..dim)
                .map(|d| own.iter().map(|v| v[d]).sum::<f64>() / own.len() as f64)
                .collect()
        })
        .collect();
    let hits = test
        .iter()
        .filter(|w| {
            let x = z(w);
            let dist = |c: &Vec<f64>| c.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..users.len())
                .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                .unwrap();
            users[best] == w.user_id
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn disjoint_gaits_are_told_apart() {
    let (train, test) = disjoint_users();
    // The two users share a sound profile, so the oracle looks at motion only.
    let motion = |ws: &[LabeledWindow]| -> Vec<LabeledWindow> {
        ws.iter()
            .map(|w| LabeledWindow {
                features: FeatureSet::MotionOnly.project(&w.features).unwrap(),
                ..w.clone()
            })
            .collect()
    };
    let oracle = nearest_centroid_accuracy(&motion(train), &motion(test));
    assert!(oracle >= 0.95, "{oracle}");
    let id = enroll(train, &AuthConfig::default()).unwrap();
    let eval = evaluate_identifier(&id, test, 30).unwrap();
    assert!(eval.window_accuracy >= 0.95, "{}", eval.window_accuracy);
}

#[test]
fn own_windows_score_above_chance() {
    let (train, _) = disjoint_users();
    let id = enroll(train, &AuthConfig::default()).unwrap();
    for w in train.iter().step_by(7) {
        let d = identify_window(0.0, &w.features, &id).unwrap();
        assert_eq!(d.user_id, w.user_id);
        assert!(d.score > 0.5);
        assert_eq!(identify_window(0.0, &w.features, &id).unwrap(), d);
    }
}

#[test]
fn enrollment_is_deterministic() {
    let (train, _) = disjoint_users();
    let cfg = AuthConfig::default();
    assert_eq!(enroll(train, &cfg).unwrap(), enroll(train, &cfg).unwrap());
}

#[test]
fn one_user_cannot_enroll() {
    let (train, _) = disjoint_users();
    let light: Vec<_> = train.iter().filter(|w| w.user_id == "light").cloned().collect();
    assert!(matches!(enroll(&light, &AuthConfig::default()), Err(Error::Data(_))));
}

#[test]
fn zero_weights_pick_the_first_user_at_chance() {
    let (train, _) = disjoint_users();
    let mut id: Identifier = enroll(train, &AuthConfig::default()).unwrap();
    let zeros = vec![0.0; id.mlp.network.param_count()];
    id.mlp.network.set_params(&zeros).unwrap();
    let d = identify_window(0.0, &train[0].features, &id).unwrap();
    assert_eq!(d.user_id, id.users()[0]);
    assert!((d.score - 1.0 / id.users().len() as f64).abs() < 1e-12);
}

fn decision(user: &str, score: f64, t: f64) -> AuthDecision {
    AuthDecision {
        t,
        user_id: user.into(),
        score,
        mode: DecisionMode::PerWindow,
    }
}

#[test]
fn vote_counts_and_tie_rule() {
    let order = vec!["a".to_string(), "b".to_string()];
    let mut ds: Vec<_> = (0..29).map(|i| decision("a", 0.6, i as f64)).collect();
    ds.push(decision("b", 0.99, 29.0));
    let v = vote_identify(&ds, &order).unwrap();
    assert_eq!((v.user_id.as_str(), v.mode, v.t), ("a", DecisionMode::Voted, 29.0));
    assert!((v.score - 29.0 / 30.0).abs() < 1e-12);

    // Even split: the higher mean score wins, whatever the user order says.
    let split: Vec<_> = (0..30)
        .map(|i| {
            if i % 2 == 0 {
                decision("b", 0.7, i as f64)
            } else {
                decision("a", 0.9, i as f64)
            }
        })
        .collect();
    assert_eq!(vote_identify(&split, &order).unwrap().user_id, "a");
    let flat: Vec<_> = split
        .iter()
        .map(|d| AuthDecision {
            score: 0.5,
            ..d.clone()
        })
        .collect();
    assert_eq!(vote_identify(&flat, &order).unwrap().user_id, "a");
    let reversed = vec!["b".to_string(), "a".to_string()];
    assert_eq!(vote_identify(&flat, &reversed).unwrap().user_id, "b");

    assert_eq!(vote_periods(&ds, 7, &order).unwrap().len(), 4);
    assert!(vote_identify(&[], &order).is_err());
}

proptest! {
    #[test]
    fn vote_ignores_input_order(
        raw in prop::collection::vec((0usize..3, 0.0..1.0f64), 1..40),
        seed in any::<u64>(),
    ) {
        let users = ["a", "b", "c"];
        let order: Vec<String> = users.iter().map(|u| u.to_string()).collect();
        let ds: Vec<_> = raw.iter().enumerate().map(|(i, &(u, s))| decision(users[u], s, i as f64)).collect();
        let mut shuffled = ds.clone();
        // Deterministic Fisher-Yates driven by the generated seed.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(vote_identify(&ds, &order).unwrap(), vote_identify(&shuffled, &order).unwrap());
    }

    #[test]
    fn weighted_row_is_the_support_weighted_mean(
        raw in prop::collection::vec((0usize..3, 0usize..3, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64), 1..60),
    ) {
        let users: Vec<String> = ["a", "b", "c"].iter().map(|u| u.to_string()).collect();
        let predicted: Vec<usize> = raw.iter().map(|r| r.0).collect();
        let labels: Vec<usize> = raw.iter().map(|r| r.1).collect();
        let scores: Vec<Vec<f64>> = raw.iter().map(|r| vec![r.2, r.3, r.4]).collect();
        let m = auth_metrics(&users, &predicted, &labels, &scores).unwrap();
        let total: f64 = m.users.iter().map(|u| u.support as f64).sum();
        prop_assert_eq!(total as usize, labels.len());
        for (get, got) in [
            (Box::new(|r: &MetricRow| r.precision) as Box<dyn Fn(&MetricRow) -> f64>, m.weighted.precision),
            (Box::new(|r: &MetricRow| r.recall), m.weighted.recall),
            (Box::new(|r: &MetricRow| r.f_measure), m.weighted.f_measure),
            (Box::new(|r: &MetricRow| r.roc_area), m.weighted.roc_area),
        ] {
            let mean = m.users.iter().map(|u| u.support as f64 * get(&u.row)).sum::<f64>() / total;
            prop_assert!((mean - got).abs() < 1e-9);
        }
    }
}

/// ROC area by sweeping every threshold and integrating the curve with trapezoids.
fn roc_by_thresholds(scores: &[f64], positive: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let p = positive.iter().filter(|x| **x).count() as f64;
    let n = positive.len() as f64 - p;
    let point = |th: f64| {
        let tp = scores.iter().zip(positive).filter(|(s, y)| **s >= th && **y).count() as f64;
        let fp = scores.iter().zip(positive).filter(|(s, y)| **s >= th && !**y).count() as f64;
        (fp / n, tp / p)
    };
    let curve: Vec<(f64, f64)> = thresholds.iter().map(|&t| point(t)).collect();
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[test]
fn six_example_metrics_match_brute_force() {
    let users = vec!["A".to_string(), "B".to_string()];
    let predicted = [0, 0, 1, 1, 0, 1];
    let labels = [0, 0, 0, 1, 1, 1];
    let a_scores = [0.9, 0.8, 0.4, 0.3, 0.6, 0.4];
    let scores: Vec<Vec<f64>> = a_scores.iter().map(|&a| vec![a, 1.0 - a]).collect();
    let m = auth_metrics(&users, &predicted, &labels, &scores).unwrap();
    for (u, row) in m.users.iter().enumerate() {
        let tp = (0..6).filter(|&i| predicted[i] == u && labels[i] == u).count() as f64;
        let fp = (0..6).filter(|&i| predicted[i] == u && labels[i] != u).count() as f64;
        let fn_ = (0..6).filter(|&i| predicted[i] != u && labels[i] == u).count() as f64;
        let (p, r) = (tp / (tp + fp), tp / (tp + fn_));
        assert!((row.row.precision - p).abs() < 1e-12);
        assert!((row.row.recall - r).abs() < 1e-12);
        assert!((row.row.f_measure - 2.0 * p * r / (p + r)).abs() < 1e-12);
        let column: Vec<f64> = scores.iter().map(|s| s[u]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == u).collect();
        let oracle = roc_by_thresholds(&column, &positive);
        assert!(
            (row.row.roc_area - oracle).abs() < 1e-12,
            "{} vs {oracle}",
            row.row.roc_area
        );
        assert!((roc_area(&column, &positive) - oracle).abs() < 1e-12);
    }
    assert!((m.users[0].row.precision - 2.0 / 3.0).abs() < 1e-12);
    assert!(auth_metrics(&users, &predicted[..5], &labels, &scores).is_err());
}

#[test]
fn perfect_predictions_score_one() {
    let users = vec!["A".to_string(), "B".to_string()];
    let labels = [0, 1, 0, 1];
    let scores: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| if l == 0 { vec![0.9, 0.1] } else { vec![0.2, 0.8] })
        .collect();
    let m = auth_metrics(&users, &labels, &labels, &scores).unwrap();
    assert_eq!(
        m.weighted,
        MetricRow {
            precision: 1.0,
            recall: 1.0,
            f_measure: 1.0,
            roc_area: 1.0
        }
    );
}

#[test]
fn table_prints_two_decimals() {
    // Weighted averages reported for the nine-user study.
    let row = |p, r, f, a| MetricRow {
        precision: p,
        recall: r,
        f_measure: f,
        roc_area: a,
    };
    let m = AuthMetrics {
        users: vec![UserMetrics {
            user_id: "1".into(),
            support: 40,
            row: row(0.89, 0.95, 0.92, 0.98),
        }],
        weighted: row(0.91, 0.91, 0.91, 0.97),
    };
    let table = m.table();
    let last: Vec<&str> = table.lines().last().unwrap().split_whitespace().collect();
    assert_eq!(last, ["weighted", "avg", "0.91", "0.91", "0.91", "0.97"]);
    assert!(table
        .lines()
        .nth(1)
        .unwrap()
        .ends_with("0.89    0.95       0.92      0.98"));
}

#[test]
fn voting_lifts_accuracy_on_nine_users() {
    let items = auth_corpus(&AuthRecipe::default(), 77).unwrap();
    let cfg = AuthConfig::default();
    let train = labelled_windows(&items, Split::Train, cfg.window_s).unwrap();
    let test = labelled_windows(&items, Split::Test, cfg.window_s).unwrap();
    let id = enroll(&train, &cfg).unwrap();
    let eval = evaluate_identifier(&id, &test, 15).unwrap();
    assert_eq!(id.users().len(), 9);
    assert!(eval.window_accuracy > 0.5);
    assert!(eval.voted_accuracy >= eval.window_accuracy, "{eval:?}");
}

#[test]
fn security_levels() {
    let cfg = SecurityConfig::default();
    let voted = |user: &str, score: f64, t: f64| {
        SecurityEvent::Decision(AuthDecision {
            mode: DecisionMode::Voted,
            ..decision(user, score, t)
        })
    };
    let fresh = [voted("me", 0.97, 100.0)];
    assert_eq!(security_level(&fresh, "me", 110.0, &cfg), SecurityLevel::Trusted);
    assert_eq!(
        security_level(&fresh, "me", 110.0, &cfg),
        security_level(&fresh, "me", 110.0, &cfg)
    );
    assert_eq!(security_level(&fresh, "me", 700.0, &cfg), SecurityLevel::Elevated);
    assert_eq!(security_level(&[], "me", 600.0, &cfg), SecurityLevel::Elevated);
    assert_eq!(
        security_level(&[voted("me", 0.6, 100.0)], "me", 110.0, &cfg),
        SecurityLevel::Elevated
    );
    assert_eq!(
        security_level(&[voted("you", 0.97, 100.0)], "me", 110.0, &cfg),
        SecurityLevel::Locked
    );
    let alarmed = [voted("me", 0.97, 100.0), SecurityEvent::RiskyAlarm { t: 105.0 }];
    assert_eq!(security_level(&alarmed, "me", 110.0, &cfg), SecurityLevel::Locked);
}

#[test]
fn feature_sets_project_consistently() {
    let (train, test) = disjoint_users();
    for set in [FeatureSet::MotionOnly, FeatureSet::AudioOnly] {
        let cfg = AuthConfig {
            feature_set: set,
            ..AuthConfig::default()
        };
        let id = enroll(train, &cfg).unwrap();
        let eval = evaluate_identifier(&id, test, 30).unwrap();
        assert_eq!(eval.feature_set, set);
        let projected = set.project(&test[0].features).unwrap();
        assert_eq!(
            identify_window(1.0, &projected, &id).unwrap(),
            identify_window(1.0, &test[0].features, &id).unwrap()
        );
    }
}

//! Implicit user identification from gait and ambient audio.
//!
//! Each 2 s window of unfiltered acceleration (plus the matching audio) is
//! scored by one multi-class perceptron; per-window decisions are then voted
//! over a minute. A graded security level is derived from the decision
//! history.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{combine_auth, motion_auth_features, AudioSpectrum, FeatureVector, Schema};
use crate::models::document::{self, ModelKind};
use crate::models::{mlp_train, MlpModel, TrainConfig};
use crate::signal::{make_windows, AccelStream, AudioFrame};

/// Fewest windows a user must contribute to be enrolled.
pub const MIN_ENROLL_WINDOWS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Combined,
    MotionOnly,
    AudioOnly,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Combined, FeatureSet::MotionOnly, FeatureSet::AudioOnly];

    pub fn schema(self) -> Schema {
        match self {
            FeatureSet::Combined => Schema::AuthCombined,
            FeatureSet::MotionOnly => Schema::MotionAuth,
            FeatureSet::AudioOnly => Schema::AudioAuth,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Combined => "movement+audio",
            FeatureSet::MotionOnly => "movement",
            FeatureSet::AudioOnly => "audio",
        }
    }

    /// Projects a combined vector onto this set.
    pub fn project(self, combined: &FeatureVector) -> Result<FeatureVector> {
        combined.expect_schema(Schema::AuthCombined)?;
        let motion = Schema::MotionAuth.len();
        match self {
            FeatureSet::Combined => Ok(combined.clone()),
            FeatureSet::MotionOnly => FeatureVector::new(Schema::MotionAuth, combined.values[..motion].to_vec()),
            FeatureSet::AudioOnly => FeatureVector::new(Schema::AudioAuth, combined.values[motion..].to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuthConfig {
    pub window_s: f64,
    /// Windows per voting period (30 × 2 s = one minute).
    pub vote_windows: usize,
    pub feature_set: FeatureSet,
    pub train: TrainConfig,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            vote_windows: 30,
            feature_set: FeatureSet::Combined,
            train: TrainConfig::mlp(),
        }
    }
}

/// A timestamped combined (motion + audio) window.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthWindow {
    pub t: f64,
    pub features: FeatureVector,
}

/// Combined features for consecutive non-overlapping windows of a session.
///
/// Acceleration is used unfiltered; audio is sliced to the same span. Windows
/// with no audio are skipped.
pub fn auth_windows(stream: &AccelStream, audio: &[AudioFrame], window_s: f64) -> Result<Vec<AuthWindow>> {
    let spectrum = AudioSpectrum::new();
    let mut out = Vec::new();
    for w in make_windows(stream, window_s, window_s)? {
        if w.len() < 2 {
            continue;
        }
        let Some(frame) = AudioFrame::slice_span(audio, w.t_start, w.t_end) else {
            continue;
        };
        let motion = motion_auth_features(&w)?;
        let sound = spectrum.features(&frame)?;
        out.push(AuthWindow {
            t: w.t_end,
            features: combine_auth(&motion, &sound)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub sessions: Vec<u32>,
    pub windows: usize,
}

/// One enrollment example.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub user_id: String,
    pub session: u32,
    pub features: FeatureVector,
}

/// A trained identifier over a fixed, ordered set of users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identifier {
    pub feature_set: FeatureSet,
    pub profiles: Vec<UserProfile>,
    pub mlp: MlpModel,
}

impl Identifier {
    /// User ids in output order, which is also the tie-break order.
    pub fn users(&self) -> &[String] {
        &self.mlp.classes
    }

    pub fn validate(&self) -> Result<()> {
        self.mlp.validate()?;
        if self.mlp.schema != self.feature_set.schema() {
            return Err(Error::schema(self.feature_set.schema(), self.mlp.schema));
        }
        let ids: Vec<&String> = self.profiles.iter().map(|p| &p.user_id).collect();
        if ids.len() != self.mlp.classes.len() || ids.iter().zip(&self.mlp.classes).any(|(a, b)| *a != b) {
            return Err(Error::Model("profiles do not match identifier outputs".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        document::save(path, ModelKind::IdentityMlp, self.mlp.schema, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (schema, id): (Schema, Identifier) = document::load(path, ModelKind::IdentityMlp)?;
        if schema != id.mlp.schema {
            return Err(Error::schema(schema, id.mlp.schema));
        }
        id.validate()?;
        Ok(id)
    }
}

/// Trains one identifier over all users. Users are ordered by id.
///
/// `windows` carry combined features; they are projected onto
/// `cfg.feature_set` before training.
pub fn enroll(windows: &[LabeledWindow], cfg: &AuthConfig) -> Result<Identifier> {
    let mut per_user: BTreeMap<&str, (Vec<u32>, usize)> = BTreeMap::new();
    for w in windows {
        let e = per_user.entry(&w.user_id).or_default();
        if !e.0.contains(&w.session) {
            e.0.push(w.session);
        }
        e.1 += 1;
    }
    if per_user.len() < 2 {
        return Err(Error::Data(format!(
            "enrollment needs at least 2 users, got {}",
            per_user.len()
        )));
    }
    if let Some((u, (_, n))) = per_user.iter().find(|(_, (_, n))| *n < MIN_ENROLL_WINDOWS) {
        return Err(Error::Data(format!(
            "user {u} has {n} windows, at least {MIN_ENROLL_WINDOWS} are needed"
        )));
    }
    let users: Vec<String> = per_user.keys().map(|u| u.to_string()).collect();
    let profiles = per_user
        .into_iter()
        .map(|(u, (mut sessions, n))| {
            sessions.sort_unstable();
            UserProfile {
                user_id: u.to_string(),
                sessions,
                windows: n,
            }
        })
        .collect();
    let data = windows
        .iter()
        .map(|w| cfg.feature_set.project(&w.features))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = windows
        .iter()
        .map(|w| users.binary_search(&w.user_id).expect("user collected above"))
        .collect();
    let training = mlp_train(&data, &labels, &users, &cfg.train)?;
    Ok(Identifier {
        feature_set: cfg.feature_set,
        profiles,
        mlp: training.model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionMode {
    PerWindow,
    Voted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthDecision {
    pub t: f64,
    pub user_id: String,
    /// Class probability for a window, vote fraction for a voted decision.
    pub score: f64,
    pub mode: DecisionMode,
}

/// Identifies the user behind one window. `x` may be combined or already
/// projected onto the identifier's feature set.
pub fn identify_window(t: f64, x: &FeatureVector, m: &Identifier) -> Result<AuthDecision> {
    let x = if x.schema == Schema::AuthCombined {
        m.feature_set.project(x)?
    } else {
        x.clone()
    };
    let (i, p) = m.mlp.classify(&x)?;
    Ok(AuthDecision {
        t,
        user_id: m.users()[i].clone(),
        score: p,
        mode: DecisionMode::PerWindow,
    })
}

/// Plurality vote over per-window decisions.
///
/// Ties go to the higher mean score, then to the earlier user in
/// `user_order` (unknown users sort after known ones, by id). The result is
/// stamped with the latest decision time and scored with the vote fraction.
pub fn vote_identify(decisions: &[AuthDecision], user_order: &[String]) -> Result<AuthDecision> {
    if decisions.is_empty() {
        return Err(Error::EmptyInput("no decisions to vote on"));
    }
    let mut tally: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for d in decisions {
        tally.entry(&d.user_id).or_default().push(d.score);
    }
    let rank = |u: &str| user_order.iter().position(|o| o == u).unwrap_or(usize::MAX);
    let mut best: Option<(&str, usize, f64)> = None;
    for (user, mut scores) in tally {
        // Summing in sorted order keeps the mean independent of input order.
        scores.sort_by(f64::total_cmp);
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let better = match best {
            None => true,
            Some((bu, bn, bm)) => {
                (scores.len(), mean)
                    .partial_cmp(&(bn, bm))
                    .is_some_and(|o| o == std::cmp::Ordering::Greater)
                    || (scores.len() == bn && mean == bm && (rank(user), user) < (rank(bu), bu))
            }
        };
        if better {
            best = Some((user, scores.len(), mean));
        }
    }
    let (user, votes, _) = best.expect("non-empty tally");
    let t = decisions.iter().map(|d| d.t).fold(f64::NEG_INFINITY, f64::max);
    Ok(AuthDecision {
        t,
        user_id: user.to_string(),
        score: votes as f64 / decisions.len() as f64,
        mode: DecisionMode::Voted,
    })
}

/// Votes over consecutive chunks of `period` decisions; a short tail is dropped.
pub fn vote_periods(decisions: &[AuthDecision], period: usize, user_order: &[String]) -> Result<Vec<AuthDecision>> {
    if period == 0 {
        return Err(Error::Parameter("voting period must be positive".into()));
    }
    decisions
        .chunks_exact(period)
        .map(|c| vote_identify(c, user_order))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub roc_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user_id: String,
    pub support: usize,
    #[serde(flatten)]
    pub row: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthMetrics {
    pub users: Vec<UserMetrics>,
    /// Support-weighted means over users with at least one true example.
    pub weighted: MetricRow,
}

pub(crate) fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Area under the ROC curve as the probability that a random positive
/// outscores a random negative, ties counting one half. Sorting once and
/// ranking tied groups keeps this O(n log n).
pub fn roc_area(scores: &[f64], positive: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        // Vacuous: nothing to mis-rank.
        return 1.0;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied entries share the mean rank.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mean_rank * idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

/// One-vs-rest metrics per user.
///
/// `scores[i][u]` is the model's probability that example `i` belongs to
/// user `u`; ROC areas are computed from it.
pub fn auth_metrics(
    users: &[String],
    predicted: &[usize],
    labels: &[usize],
    scores: &[Vec<f64>],
) -> Result<AuthMetrics> {
    if predicted.len() != labels.len() || scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions, {} labels and {} score rows",
            predicted.len(),
            labels.len(),
            scores.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("no examples"));
    }
    let k = users.len();
    if predicted.iter().chain(labels).any(|&c| c >= k) || scores.iter().any(|s| s.len() != k) {
        return Err(Error::Data(format!("class index or score row outside {k} users")));
    }
    let mut rows = Vec::new();
    for (u, user) in users.iter().enumerate() {
        let support = labels.iter().filter(|&&l| l == u).count();
        if support == 0 {
            continue;
        }
        let tp = predicted.iter().zip(labels).filter(|(&p, &l)| p == u && l == u).count();
        let predicted_u = predicted.iter().filter(|&&p| p == u).count();
        let precision = if predicted_u > 0 {
            tp as f64 / predicted_u as f64
        } else {
            0.0
        };
        let recall = tp as f64 / support as f64;
        let column: Vec<f64> = scores.iter().map(|s| s[u]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == u).collect();
        rows.push(UserMetrics {
            user_id: user.clone(),
            support,
            row: MetricRow {
                precision,
                recall,
                f_measure: f_measure(precision, recall),
                roc_area: roc_area(&column, &positive),
            },
        });
    }
    let total: usize = rows.iter().map(|r| r.support).sum();
    let weigh =
        |f: fn(&MetricRow) -> f64| rows.iter().map(|r| r.support as f64 * f(&r.row)).sum::<f64>() / total as f64;
    let weighted = MetricRow {
        precision: weigh(|r| r.precision),
        recall: weigh(|r| r.recall),
        f_measure: weigh(|r| r.f_measure),
        roc_area: weigh(|r| r.roc_area),
    };
    Ok(AuthMetrics { users: rows, weighted })
}

impl AuthMetrics {
    /// Fixed-width text table with two decimals per value.
    pub fn table(&self) -> String {
        let mut out = String::from("user            precision  recall  f-measure  roc-area\n");
        let mut line = |name: &str, r: &MetricRow| {
            let _ = writeln!(
                out,
                "{name:<15} {:>9.2} {:>7.2} {:>10.2} {:>9.2}",
                r.precision, r.recall, r.f_measure, r.roc_area
            );
        };
        for u in &self.users {
            line(&u.user_id, &u.row);
        }
        line("weighted avg", &self.weighted);
        out
    }
}

/// Per-window (and voted) evaluation of an identifier on labelled windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthEvaluation {
    pub feature_set: FeatureSet,
    pub windows: usize,
    pub window_accuracy: f64,
    pub voted_periods: usize,
    pub voted_accuracy: f64,
    pub metrics: AuthMetrics,
}

/// Scores every window, then votes over consecutive runs of `vote_windows`
/// windows of the same user and session (in the given order).
pub fn evaluate_identifier(m: &Identifier, test: &[LabeledWindow], vote_windows: usize) -> Result<AuthEvaluation> {
    let users = m.users();
    let mut predicted = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    let mut scores = Vec::with_capacity(test.len());
    let mut decisions: BTreeMap<(usize, u32), Vec<AuthDecision>> = BTreeMap::new();
    for (i, w) in test.iter().enumerate() {
        let label = users
            .iter()
            .position(|u| *u == w.user_id)
            .ok_or_else(|| Error::Data(format!("user {} was not enrolled", w.user_id)))?;
        let x = m.feature_set.project(&w.features)?;
        let p = m.mlp.predict(&x)?;
        let (best, score) = crate::models::mlp::argmax(&p);
        predicted.push(best);
        labels.push(label);
        scores.push(p);
        decisions.entry((label, w.session)).or_default().push(AuthDecision {
            t: i as f64,
            user_id: users[best].clone(),
            score,
            mode: DecisionMode::PerWindow,
        });
    }
    let correct = predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
    let (mut voted, mut voted_ok) = (0, 0);
    for ((label, _), ds) in &decisions {
        for v in vote_periods(ds, vote_windows, users)? {
            voted += 1;
            voted_ok += usize::from(v.user_id == users[*label]);
        }
    }
    Ok(AuthEvaluation {
        feature_set: m.feature_set,
        windows: test.len(),
        window_accuracy: correct as f64 / test.len().max(1) as f64,
        voted_periods: voted,
        voted_accuracy: if voted > 0 { voted_ok as f64 / voted as f64 } else { 0.0 },
        metrics: auth_metrics(users, &predicted, &labels, &scores)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecurityLevel {
    Trusted,
    Elevated,
    Locked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityConfig {
    /// Voted score at or above which the owner is trusted.
    pub trusted_score: f64,
    /// Seconds after which the last vote no longer counts as fresh.
    pub stale_after: f64,
}

impl Default for SecurityConfig {
    fn default() -> Self {
        Self {
            trusted_score: 0.8,
            stale_after: 300.0,
        }
    }
}

/// Inputs to [`security_level`], in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SecurityEvent {
    Decision(AuthDecision),
    RiskyAlarm { t: f64 },
}

impl SecurityEvent {
    pub fn t(&self) -> f64 {
        match self {
            SecurityEvent::Decision(d) => d.t,
            SecurityEvent::RiskyAlarm { t } => *t,
        }
    }
}

/// Graded security level of a device owned by `owner` at time `now`.
///
/// Locked after a risky alarm not yet followed by a vote, or when the last
/// vote names someone else; Elevated with no vote, a stale vote, or a weak
/// one; Trusted otherwise.
pub fn security_level(recent: &[SecurityEvent], owner: &str, now: f64, cfg: &SecurityConfig) -> SecurityLevel {
    let last_vote = recent.iter().rposition(|e| {
        matches!(
            e,
            SecurityEvent::Decision(AuthDecision {
                mode: DecisionMode::Voted,
                ..
            })
        )
    });
    let alarm_after = |from: usize| {
        recent[from..]
            .iter()
            .any(|e| matches!(e, SecurityEvent::RiskyAlarm { .. }))
    };
    match last_vote {
        None if alarm_after(0) => SecurityLevel::Locked,
        None => SecurityLevel::Elevated,
        Some(i) => {
            let SecurityEvent::Decision(d) = &recent[i] else {
                unreachable!()
            };
            if alarm_after(i + 1) || d.user_id != owner {
                SecurityLevel::Locked
            } else if now - d.t > cfg.stale_after || d.score < cfg.trusted_score {
                SecurityLevel::Elevated
            } else {
                SecurityLevel::Trusted
            }
        }
    }
}

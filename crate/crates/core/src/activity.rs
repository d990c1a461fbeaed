//! Activity level estimation and four-class activity classification.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{activity_features, instance_features, FeatureVector, Schema};
use crate::models::document::{self, ModelKind};
use crate::models::{gmm_fit, GmmModel, TrainConfig};
use crate::signal::{high_pass, make_windows, AccelStream, DEFAULT_CUTOFF_HZ};

/// Peak-to-valley swings smaller than this (in g) are treated as jitter.
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivityClass {
    Walking,
    Running,
    Resting,
    NoActivity,
}

impl ActivityClass {
    /// Also the tie-break order of the classifier.
    pub const ALL: [ActivityClass; 4] = [
        ActivityClass::Walking,
        ActivityClass::Running,
        ActivityClass::Resting,
        ActivityClass::NoActivity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityClass::Walking => "walking",
            ActivityClass::Running => "running",
            ActivityClass::Resting => "resting",
            ActivityClass::NoActivity => "no-activity",
        }
    }

    /// Walking and running are "active"; resting and no activity are not.
    pub fn is_active(self) -> bool {
        matches!(self, ActivityClass::Walking | ActivityClass::Running)
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivityClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown activity class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityInstance {
    pub device_id: String,
    pub t_start: f64,
    pub duration_s: f64,
    pub feature: FeatureVector,
    pub label: Option<ActivityClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityLevelPoint {
    pub t: f64,
    pub level: f64,
}

/// Peak-to-subsequent-valley levels of a gravity-free magnitude series.
///
/// A peak is a strict local maximum (the last sample of a plateau) that the
/// signal later falls below by at least `min_prominence`; its valley is the
/// lowest point reached before the signal rises again by `min_prominence`,
/// or before the series ends. One point per pair, stamped at the peak.
pub fn activity_level(series: &[(f64, f64)], min_prominence: f64) -> Result<Vec<ActivityLevelPoint>> {
    if series.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: series.len(),
        });
    }
    if !(min_prominence > 0.0) {
        return Err(Error::Parameter("min_prominence must be positive".into()));
    }
    #[derive(PartialEq)]
    enum Trend {
        Unknown,
        Rising,
        Falling,
    }
    let x = |i: usize| series[i].1;
    let mut out = Vec::new();
    let mut trend = Trend::Unknown;
    let (mut hi, mut lo) = (0usize, 0usize);
    let mut ext = 0usize;
    let mut pending_peak: Option<usize> = None;
    for i in 1..series.len() {
        match trend {
            Trend::Unknown => {
                if x(i) >= x(hi) {
                    hi = i;
                }
                if x(i) <= x(lo) {
                    lo = i;
                }
                if x(hi) - x(lo) >= min_prominence {
                    if hi > lo {
                        trend = Trend::Rising;
                        ext = hi;
                    } else {
                        // Only an interior maximum counts as a peak.
                        if x(hi) > x(0) {
                            pending_peak = Some(hi);
                        }
                        trend = Trend::Falling;
                        ext = lo;
                    }
                }
            }
            Trend::Rising => {
                if x(i) >= x(ext) {
                    ext = i;
                } else if x(ext) - x(i) >= min_prominence {
                    pending_peak = Some(ext);
                    trend = Trend::Falling;
                    ext = i;
                }
            }
            Trend::Falling => {
                if x(i) <= x(ext) {
                    ext = i;
                } else if x(i) - x(ext) >= min_prominence {
                    if let Some(p) = pending_peak.take() {
                        out.push(level_point(series, p, ext));
                    }
                    trend = Trend::Rising;
                    ext = i;
                }
            }
        }
    }
    if trend == Trend::Falling {
        if let Some(p) = pending_peak {
            out.push(level_point(series, p, ext));
        }
    }
    Ok(out)
}

fn level_point(series: &[(f64, f64)], peak: usize, valley: usize) -> ActivityLevelPoint {
    ActivityLevelPoint {
        t: series[peak].0,
        level: (series[peak].1 - series[valley].1).abs(),
    }
}

/// Parameters of the instance feature pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityFeatureConfig {
    pub cutoff_hz: f64,
    /// Sub-window length whose features are averaged over an instance.
    pub window_s: f64,
    pub instance_s: f64,
}

impl Default for ActivityFeatureConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            window_s: 2.0,
            instance_s: 10.0,
        }
    }
}

/// High-passes a raw (g-unit) stream and averages activity features over
/// disjoint sub-windows.
pub fn stream_instance_feature(stream: &AccelStream, cfg: &ActivityFeatureConfig) -> Result<FeatureVector> {
    let filtered = high_pass(stream, cfg.cutoff_hz)?;
    let windows = make_windows(&filtered, cfg.window_s, cfg.window_s)?;
    let feats = windows
        .iter()
        .filter(|w| w.len() >= 2)
        .map(activity_features)
        .collect::<Result<Vec<_>>>()?;
    instance_features(&feats)
}

/// One mixture per class, in [`ActivityClass::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityModels {
    pub schema: Schema,
    pub models: Vec<GmmModel>,
}

impl ActivityModels {
    pub fn validate(&self) -> Result<()> {
        if self.models.len() != ActivityClass::ALL.len() {
            return Err(Error::Model(format!(
                "expected 4 class models, found {}",
                self.models.len()
            )));
        }
        for (m, c) in self.models.iter().zip(ActivityClass::ALL) {
            if m.class_label != c.name() {
                return Err(Error::Model(format!("model for {c} is labelled {:?}", m.class_label)));
            }
            if m.dim != self.schema.len() {
                return Err(Error::Model(format!("{c} model has dimension {}", m.dim)));
            }
            m.validate(0.0)?;
        }
        Ok(())
    }

    pub fn model(&self, class: ActivityClass) -> &GmmModel {
        &self.models[class.index()]
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        document::save(path, ModelKind::ActivityGmm, self.schema, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (schema, models): (Schema, ActivityModels) = document::load(path, ModelKind::ActivityGmm)?;
        if schema != models.schema {
            return Err(Error::Model("manifest and body disagree on schema".into()));
        }
        models.validate()?;
        Ok(models)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassFitSummary {
    pub class: ActivityClass,
    pub iterations: usize,
    pub converged: bool,
    pub final_log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityTraining {
    pub models: ActivityModels,
    pub fits: Vec<ClassFitSummary>,
}

/// Fits one mixture per class on that class's labelled instances.
pub fn train_activity_classifier(instances: &[ActivityInstance], cfg: &TrainConfig) -> Result<ActivityTraining> {
    let schema = instances
        .first()
        .ok_or(Error::EmptyInput("no training instances"))?
        .feature
        .schema;
    let mut models = Vec::new();
    let mut fits = Vec::new();
    for class in ActivityClass::ALL {
        let samples: Vec<FeatureVector> = instances
            .iter()
            .filter(|i| i.label == Some(class))
            .map(|i| i.feature.clone())
            .collect();
        if samples.len() < cfg.k {
            return Err(Error::Data(format!(
                "class {class} has {} instances, needs at least {}",
                samples.len(),
                cfg.k
            )));
        }
        let fit = gmm_fit(&samples, class.name(), cfg)?;
        if fit.model.dim != schema.len() {
            return Err(Error::dim(schema.len(), fit.model.dim));
        }
        fits.push(ClassFitSummary {
            class,
            iterations: fit.iterations,
            converged: fit.converged,
            final_log_likelihood: *fit.log_likelihoods.last().expect("at least one evaluation"),
        });
        models.push(fit.model);
    }
    Ok(ActivityTraining {
        models: ActivityModels { schema, models },
        fits,
    })
}

/// Maximum-likelihood class and all four log-likelihood scores.
pub fn classify_activity(x: &FeatureVector, models: &ActivityModels) -> Result<(ActivityClass, [f64; 4])> {
    x.expect_schema(models.schema)?;
    let mut scores = [0.0; 4];
    for (s, m) in scores.iter_mut().zip(&models.models) {
        *s = m.log_likelihood(&x.values)?;
    }
    Ok((ActivityClass::ALL[argmax_first(&scores)], scores))
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Counts indexed `[true][predicted]` in [`ActivityClass::ALL`] order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn from_rows(counts: [[u64; 4]; 4]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, truth: ActivityClass, predicted: ActivityClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn recall(&self, class: ActivityClass) -> f64 {
        let row = &self.counts[class.index()];
        let n: u64 = row.iter().sum();
        if n == 0 {
            0.0
        } else {
            row[class.index()] as f64 / n as f64
        }
    }

    /// Errors between two classes of the same activity block
    /// (walking/running or resting/no activity).
    pub fn within_block_errors(&self) -> u64 {
        self.errors_where(|t, p| t.is_active() == p.is_active())
    }

    /// Errors that cross between the active and inactive blocks.
    pub fn cross_block_errors(&self) -> u64 {
        self.errors_where(|t, p| t.is_active() != p.is_active())
    }

    fn errors_where(&self, keep: impl Fn(ActivityClass, ActivityClass) -> bool) -> u64 {
        let mut n = 0;
        for t in ActivityClass::ALL {
            for p in ActivityClass::ALL {
                if t != p && keep(t, p) {
                    n += self.counts[t.index()][p.index()];
                }
            }
        }
        n
    }
}

/// Classifies every labelled instance and tallies the outcome.
pub fn evaluate_classifier(models: &ActivityModels, test: &[ActivityInstance]) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::EmptyInput("empty test set"));
    }
    let mut cm = ConfusionMatrix::default();
    for inst in test {
        let truth = inst
            .label
            .ok_or_else(|| Error::Data(format!("unlabelled test instance at t={}", inst.t_start)))?;
        let (pred, _) = classify_activity(&inst.feature, models)?;
        cm.record(truth, pred);
    }
    Ok(cm)
}

/// Structured evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classes: Vec<ActivityClass>,
    pub confusion: ConfusionMatrix,
    pub total: u64,
    pub accuracy: f64,
    pub per_class_recall: Vec<f64>,
    pub within_block_errors: u64,
    pub cross_block_errors: u64,
}

impl From<&ConfusionMatrix> for EvaluationReport {
    fn from(cm: &ConfusionMatrix) -> Self {
        Self {
            classes: ActivityClass::ALL.to_vec(),
            confusion: cm.clone(),
            total: cm.total(),
            accuracy: cm.accuracy(),
            per_class_recall: ActivityClass::ALL.iter().map(|c| cm.recall(*c)).collect(),
            within_block_errors: cm.within_block_errors(),
            cross_block_errors: cm.cross_block_errors(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub t: f64,
    pub level: f64,
    pub class: Option<ActivityClass>,
}

/// Whitespace-separated `t level class` columns with a header line.
pub fn write_plot_data<W: Write>(mut w: W, rows: &[PlotRow]) -> io::Result<()> {
    writeln!(w, "# t level class")?;
    for r in rows {
        let class = r.class.map_or("-", ActivityClass::name);
        writeln!(w, "{:.3} {:.6} {}", r.t, r.level, class)?;
    }
    Ok(())
}

//! Diagonal-covariance Gaussian mixture models fit by expectation-maximization.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

// Responsibility mass below which a component is treated as empty.
const MIN_COMPONENT_MASS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Diagonal of the covariance matrix.
    pub variance: Vec<f64>,
}

impl GaussianComponent {
    fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, mu), var) in x.iter().zip(&self.mean).zip(&self.variance) {
            let d = xi - mu;
            acc += (2.0 * PI * var).ln() + d * d / var;
        }
        -0.5 * acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub class_label: String,
    pub dim: usize,
    pub components: Vec<GaussianComponent>,
}

impl GmmModel {
    /// Checks the structural invariants of a (possibly deserialized) model.
    pub fn validate(&self, variance_floor: f64) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Model(format!("{}: no components", self.class_label)));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!("{}: weights sum to {total}", self.class_label)));
        }
        for c in &self.components {
            if !(c.weight > 0.0) {
                return Err(Error::Model(format!("{}: non-positive weight", self.class_label)));
            }
            if c.mean.len() != self.dim || c.variance.len() != self.dim {
                return Err(Error::Model(format!(
                    "{}: component dimension mismatch",
                    self.class_label
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite())
                || c.variance
                    .iter()
                    .any(|v| !v.is_finite() || *v < variance_floor * (1.0 - 1e-12))
            {
                return Err(Error::Model(format!("{}: invalid mean or variance", self.class_label)));
            }
        }
        Ok(())
    }

    /// Log mixture density at `x`, via log-sum-exp.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::dim(self.dim, x.len()));
        }
        Ok(log_sum_exp(
            self.components.iter().map(|c| c.weight.ln() + c.log_density(x)),
        ))
    }

    /// Total log-likelihood of a data set.
    pub fn total_log_likelihood(&self, points: &[Vec<f64>]) -> Result<f64> {
        points.iter().map(|p| self.log_likelihood(p)).sum()
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Log mixture density of a feature vector under `m`.
pub fn gmm_loglik(m: &GmmModel, x: &FeatureVector) -> Result<f64> {
    m.log_likelihood(&x.values)
}

/// A fitted model plus the EM trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total data log-likelihood before the first and after every M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits a `cfg.k`-component mixture to feature vectors of one schema.
pub fn gmm_fit(samples: &[FeatureVector], class_label: &str, cfg: &TrainConfig) -> Result<GmmFit> {
    let first = samples.first().ok_or(Error::EmptyInput("no training samples"))?;
    for s in samples {
        s.expect_schema(first.schema)?;
    }
    let points: Vec<Vec<f64>> = samples.iter().map(|s| s.values.clone()).collect();
    fit_points(&points, class_label, cfg)
}

/// Fits a mixture to raw points of a common dimension.
pub fn fit_points(points: &[Vec<f64>], class_label: &str, cfg: &TrainConfig) -> Result<GmmFit> {
    cfg.validate()?;
    let k = cfg.k;
    let n = points.len();
    if n < k {
        return Err(Error::Data(format!(
            "{class_label}: {n} samples cannot support {k} components"
        )));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::Data("zero-dimensional samples".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::dim(dim, p.len()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite training value".into()));
    }

    let floor = cfg.variance_floor;
    let mut model = initialise(points, class_label, k, floor, cfg.seed);
    let mut resp = vec![vec![0.0; k]; n];
    let mut ll = e_step(&model, points, &mut resp);
    let mut log_likelihoods = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        m_step(&mut model, points, &resp, floor);
        iterations += 1;
        let next = e_step(&model, points, &mut resp);
        log_likelihoods.push(next);
        let improvement = (next - ll) / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if improvement < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihoods,
        iterations,
        converged,
    })
}

/// Farthest-point-first seeding: a random first centre, then repeatedly the
/// point farthest from all chosen centres. Uniform weights, global variance.
fn initialise(points: &[Vec<f64>], label: &str, k: usize, floor: f64, seed: u64) -> GmmModel {
    let n = points.len();
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[centres[0]])).collect();
    while centres.len() < k {
        let mut best = 0;
        for i in 1..n {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        centres.push(best);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[best]));
        }
    }

    let mut global_var = vec![0.0; dim];
    for j in 0..dim {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
        global_var[j] = (points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n as f64).max(floor);
    }
    GmmModel {
        class_label: label.to_string(),
        dim,
        components: centres
            .into_iter()
            .map(|c| GaussianComponent {
                weight: 1.0 / k as f64,
                mean: points[c].clone(),
                variance: global_var.clone(),
            })
            .collect(),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fills `resp` with posterior component probabilities and returns the total
/// log-likelihood under `model`.
fn e_step(model: &GmmModel, points: &[Vec<f64>], resp: &mut [Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (p, r) in points.iter().zip(resp.iter_mut()) {
        for (rj, c) in r.iter_mut().zip(&model.components) {
            *rj = c.weight.ln() + c.log_density(p);
        }
        let lse = log_sum_exp(r.iter().copied());
        for rj in r.iter_mut() {
            *rj = (*rj - lse).exp();
        }
        total += lse;
    }
    total
}

fn m_step(model: &mut GmmModel, points: &[Vec<f64>], resp: &[Vec<f64>], floor: f64) {
    let n = points.len() as f64;
    let dim = model.dim;
    for (j, c) in model.components.iter_mut().enumerate() {
        let mass: f64 = resp.iter().map(|r| r[j]).sum();
        if mass < MIN_COMPONENT_MASS {
            // Nothing is assigned to this component; keep its shape.
            c.weight = MIN_COMPONENT_MASS / n;
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (p, r) in points.iter().zip(resp) {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += r[j] * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= mass);
        let mut var = vec![0.0; dim];
        for (p, r) in points.iter().zip(resp) {
            for ((v, x), m) in var.iter_mut().zip(p).zip(&mean) {
                *v += r[j] * (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / mass).max(floor));
        c.weight = mass / n;
        c.mean = mean;
        c.variance = var;
    }
    let total: f64 = model.components.iter().map(|c| c.weight).sum();
    model.components.iter_mut().for_each(|c| c.weight /= total);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::VARIANCE_FLOOR;

    fn one(x: f64) -> Vec<f64> {
        vec![x]
    }

    #[test]
    fn standard_normal_peak() {
        let m = GmmModel {
            class_label: "a".into(),
            dim: 1,
            components: vec![GaussianComponent {
                weight: 1.0,
                mean: vec![0.0],
                variance: vec![1.0],
            }],
        };
        let ll = m.log_likelihood(&[0.0]).unwrap();
        assert!((ll - (1.0 / (2.0 * PI).sqrt()).ln()).abs() < 1e-12);
        assert!((ll + 0.9189).abs() < 1e-4);
        assert!(m.log_likelihood(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn duplicated_component_collapses() {
        let c = GaussianComponent {
            weight: 0.5,
            mean: vec![1.0, -1.0],
            variance: vec![0.3, 2.0],
        };
        let single = GmmModel {
            class_label: "a".into(),
            dim: 2,
            components: vec![GaussianComponent {
                weight: 1.0,
                ..c.clone()
            }],
        };
        let double = GmmModel {
            class_label: "a".into(),
            dim: 2,
            components: vec![c.clone(), c],
        };
        let x = [0.3, 0.7];
        let a = single.log_likelihood(&x).unwrap();
        let b = double.log_likelihood(&x).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn loglik_is_finite_far_from_every_component() {
        let m = GmmModel {
            class_label: "a".into(),
            dim: 1,
            components: vec![
                GaussianComponent {
                    weight: 0.5,
                    mean: vec![0.0],
                    variance: vec![1e-6],
                },
                GaussianComponent {
                    weight: 0.5,
                    mean: vec![1.0],
                    variance: vec![1e-6],
                },
            ],
        };
        assert!(m.log_likelihood(&[1e6]).unwrap().is_finite());
    }

    #[test]
    fn too_few_samples_is_a_data_error() {
        let cfg = TrainConfig::gmm().with_k(3);
        let pts = vec![one(1.0), one(2.0)];
        assert!(matches!(fit_points(&pts, "x", &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn identical_points_get_floored_variance() {
        let pts = vec![vec![0.5, 0.5]; 10];
        let fit = fit_points(&pts, "flat", &TrainConfig::gmm()).unwrap();
        fit.model.validate(VARIANCE_FLOOR).unwrap();
        for c in &fit.model.components {
            assert_eq!(c.variance, vec![VARIANCE_FLOOR; 2]);
            assert_eq!(c.mean, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let pts = vec![vec![0.0], vec![0.0, 1.0]];
        assert!(fit_points(&pts, "x", &TrainConfig::gmm().with_k(1)).is_err());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i % 7) as f64]).collect();
        let a = fit_points(&pts, "x", &TrainConfig::gmm().with_seed(3)).unwrap();
        let b = fit_points(&pts, "x", &TrainConfig::gmm().with_seed(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validate_catches_bad_weights() {
        let mut m = fit_points(&[one(0.0), one(1.0), one(5.0)], "x", &TrainConfig::gmm())
            .unwrap()
            .model;
        m.components[0].weight += 0.1;
        assert!(matches!(m.validate(VARIANCE_FLOOR), Err(Error::Model(_))));
    }
}

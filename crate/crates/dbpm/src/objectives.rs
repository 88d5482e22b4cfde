//! Per-agent stochastic objectives.
//!
//! Each agent holds a strongly convex cost known only through sampled
//! subgradients. Two families are provided: the regularized hinge loss used
//! for the two-cluster classification experiment, and a quadratic with
//! optional Gaussian gradient noise for controlled convergence studies.
//! Exact values and exact (full) subgradients are also exposed; they back the
//! reference solver and the unbiasedness checks.

use rand_core::RngCore;
use thiserror::Error;

use crate::rng;
use crate::vecmath::{axpy, dot, norm, norm_sq};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("vector length {got} does not match dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what} must be positive, got {value}")]
    NonpositiveParam { what: &'static str, value: f64 },
    #[error("label {0} is not +1 or -1")]
    BadLabel(f64),
    #[error("objective needs at least one sample")]
    EmptyData,
    #[error("sample {0} has dimension {1}, expected {2}")]
    RaggedSample(usize, usize, usize),
}

/// One labeled training point; features carry the trailing constant 1 that
/// folds the affine offset into the weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub label: f64,
}

#[derive(Debug, Clone)]
pub enum ObjectiveKind {
    /// Average hinge loss over the agent's samples plus `ridge/2 * ||x||^2`.
    HingeRidge {
        samples: Vec<TrainingSample>,
        ridge: f64,
    },
    /// `curvature/2 * ||x - target||^2`, sampled gradients perturbed by
    /// independent Gaussian noise per coordinate.
    Quadratic {
        target: Vec<f64>,
        curvature: f64,
        noise_std: f64,
    },
}

/// A single agent's objective with its strong-convexity modulus and
/// subgradient norm bounds over a tracked ball of radius `tracked_radius`.
#[derive(Debug, Clone)]
pub struct StochasticObjective {
    dim: usize,
    kind: ObjectiveKind,
    strong_convexity: f64,
    /// Bound on E||g|| over the tracked region.
    subgrad_norm_bound: f64,
    /// Bound on E||g||^2 over the tracked region.
    subgrad_sq_bound: f64,
    tracked_radius: f64,
}

impl StochasticObjective {
    /// Hinge loss averaged over `samples` plus a ridge term. `ridge` is this
    /// agent's share of the global regularization weight and doubles as the
    /// strong-convexity modulus.
    pub fn hinge_ridge(
        samples: Vec<TrainingSample>,
        ridge: f64,
        tracked_radius: f64,
    ) -> Result<Self, ObjectiveError> {
        if samples.is_empty() {
            return Err(ObjectiveError::EmptyData);
        }
        if !(ridge > 0.0) {
            return Err(ObjectiveError::NonpositiveParam {
                what: "ridge weight",
                value: ridge,
            });
        }
        let dim = samples[0].features.len();
        let mut max_feature_norm: f64 = 0.0;
        for (r, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(ObjectiveError::RaggedSample(r, s.features.len(), dim));
            }
            if s.label != 1.0 && s.label != -1.0 {
                return Err(ObjectiveError::BadLabel(s.label));
            }
            max_feature_norm = max_feature_norm.max(norm(&s.features));
        }
        let bound = max_feature_norm + ridge * tracked_radius;
        Ok(Self {
            dim,
            kind: ObjectiveKind::HingeRidge { samples, ridge },
            strong_convexity: ridge,
            subgrad_norm_bound: bound,
            subgrad_sq_bound: bound * bound,
            tracked_radius,
        })
    }

    /// Quadratic pull towards `target` with optional gradient noise.
    pub fn quadratic(
        target: Vec<f64>,
        curvature: f64,
        noise_std: f64,
        tracked_radius: f64,
    ) -> Result<Self, ObjectiveError> {
        if !(curvature > 0.0) {
            return Err(ObjectiveError::NonpositiveParam {
                what: "curvature",
                value: curvature,
            });
        }
        if noise_std < 0.0 {
            return Err(ObjectiveError::NonpositiveParam {
                what: "noise std",
                value: noise_std,
            });
        }
        let dim = target.len();
        let deterministic = curvature * (tracked_radius + norm(&target));
        Ok(Self {
            subgrad_norm_bound: deterministic + noise_std * (dim as f64).sqrt(),
            subgrad_sq_bound: deterministic * deterministic + dim as f64 * noise_std * noise_std,
            dim,
            kind: ObjectiveKind::Quadratic {
                target,
                curvature,
                noise_std,
            },
            strong_convexity: curvature,
            tracked_radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    /// Strong-convexity modulus m.
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    /// Bound on the expected subgradient norm over the tracked ball.
    pub fn subgrad_norm_bound(&self) -> f64 {
        self.subgrad_norm_bound
    }

    /// Bound on the expected squared subgradient norm over the tracked ball.
    pub fn subgrad_sq_bound(&self) -> f64 {
        self.subgrad_sq_bound
    }

    pub fn tracked_radius(&self) -> f64 {
        self.tracked_radius
    }

    /// Number of equally likely data draws, when the sample space is finite.
    pub fn sample_count(&self) -> Option<usize> {
        match &self.kind {
            ObjectiveKind::HingeRidge { samples, .. } => Some(samples.len()),
            ObjectiveKind::Quadratic { .. } => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ObjectiveError> {
        if x.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Draws one data point and returns the corresponding stochastic
    /// subgradient together with the drawn sample id.
    ///
    /// Hinge: uniform draw over the agent's samples. At a margin of exactly
    /// zero the flat branch (zero hinge subgradient) is chosen, which fixes a
    /// deterministic element of the subdifferential. Quadratic: exact
    /// gradient plus Gaussian noise; the stream is consumed only when the
    /// noise level is positive, and the sample id is always 0.
    pub fn sample_subgradient(
        &self,
        x: &[f64],
        stream: &mut impl RngCore,
    ) -> Result<(Vec<f64>, usize), ObjectiveError> {
        self.check_dim(x)?;
        match &self.kind {
            ObjectiveKind::HingeRidge { samples, .. } => {
                let r = rng::uniform_index(stream, samples.len());
                Ok((self.subgradient_for_sample(x, r)?, r))
            }
            ObjectiveKind::Quadratic {
                target,
                curvature,
                noise_std,
            } => {
                let mut g: Vec<f64> = x
                    .iter()
                    .zip(target)
                    .map(|(xi, ti)| curvature * (xi - ti))
                    .collect();
                if *noise_std > 0.0 {
                    for gi in &mut g {
                        *gi += noise_std * rng::standard_normal(stream);
                    }
                }
                Ok((g, 0))
            }
        }
    }

    /// Deterministic subgradient for a fixed sample id; lets tests enumerate
    /// the finite sample space exactly.
    pub fn subgradient_for_sample(&self, x: &[f64], r: usize) -> Result<Vec<f64>, ObjectiveError> {
        self.check_dim(x)?;
        match &self.kind {
            ObjectiveKind::HingeRidge { samples, ridge } => {
                let sample = &samples[r];
                let margin = 1.0 - sample.label * dot(x, &sample.features);
                let mut g: Vec<f64> = x.iter().map(|xi| ridge * xi).collect();
                if margin > 0.0 {
                    axpy(&mut g, -sample.label, &sample.features);
                }
                Ok(g)
            }
            ObjectiveKind::Quadratic {
                target, curvature, ..
            } => Ok(x
                .iter()
                .zip(target)
                .map(|(xi, ti)| curvature * (xi - ti))
                .collect()),
        }
    }

    /// Exact objective value (the expectation over data draws).
    pub fn full_value(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        self.check_dim(x)?;
        match &self.kind {
            ObjectiveKind::HingeRidge { samples, ridge } => {
                let hinge: f64 = samples
                    .iter()
                    .map(|s| (1.0 - s.label * dot(x, &s.features)).max(0.0))
                    .sum();
                Ok(hinge / samples.len() as f64 + 0.5 * ridge * norm_sq(x))
            }
            ObjectiveKind::Quadratic {
                target, curvature, ..
            } => Ok(0.5 * curvature * crate::vecmath::dist_sq(x, target)),
        }
    }

    /// Exact subgradient of the expected objective.
    pub fn full_subgradient(&self, x: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        self.check_dim(x)?;
        match &self.kind {
            ObjectiveKind::HingeRidge { samples, ridge } => {
                let mut g: Vec<f64> = x.iter().map(|xi| ridge * xi).collect();
                let scale = 1.0 / samples.len() as f64;
                for s in samples {
                    if 1.0 - s.label * dot(x, &s.features) > 0.0 {
                        axpy(&mut g, -scale * s.label, &s.features);
                    }
                }
                Ok(g)
            }
            ObjectiveKind::Quadratic { .. } => self.subgradient_for_sample(x, 0),
        }
    }
}

/// Sum of all agents' exact objective values at `x`.
pub fn total_value(objectives: &[StochasticObjective], x: &[f64]) -> Result<f64, ObjectiveError> {
    objectives.iter().map(|o| o.full_value(x)).sum()
}

/// Sum of all agents' exact subgradients at `x`.
pub fn total_subgradient(
    objectives: &[StochasticObjective],
    x: &[f64],
) -> Result<Vec<f64>, ObjectiveError> {
    let dim = objectives.first().map_or(0, |o| o.dim());
    let mut g = vec![0.0; dim];
    for o in objectives {
        axpy(&mut g, 1.0, &o.full_subgradient(x)?);
    }
    Ok(g)
}

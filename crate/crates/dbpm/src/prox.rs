//! Distance generating functions, Bregman divergences, and the block
//! proximal step.
//!
//! The proximal step solves `argmin_{u in X} <b, u> + (1/c) D(a, u)` over one
//! block, where `D` is the Bregman divergence of the distance generator. Only
//! the Euclidean generator (`w(u) = ||u||^2 / 2`, `D(a, b) = ||b - a||^2 / 2`)
//! is built in; it satisfies the strong-convexity and quadratic-growth
//! requirements with both constants equal to one, and the step then reduces
//! to a projected gradient step `P_X(a - c b)`. The type keeps the constants
//! explicit so other generators can slot in later.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecmath::{dist_sq, dot, norm};

#[derive(Debug, Error, PartialEq)]
pub enum ProxError {
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("stepsize {0} must be positive")]
    NonpositiveStepsize(f64),
    #[error("box constraint has lower[{0}] above upper[{0}]")]
    InvertedBox(usize),
    #[error("ball radius {0} must be positive")]
    NonpositiveRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorKind {
    Euclidean,
}

/// A strongly convex distance generating function together with its
/// strong-convexity and quadratic-growth constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceGenerator {
    pub kind: GeneratorKind,
    /// Lower quadratic bound on the divergence (sigma).
    pub strong_convexity: f64,
    /// Upper quadratic bound on the divergence (Q).
    pub quadratic_growth: f64,
}

impl DistanceGenerator {
    pub fn euclidean() -> Self {
        Self {
            kind: GeneratorKind::Euclidean,
            strong_convexity: 1.0,
            quadratic_growth: 1.0,
        }
    }

    /// Bregman divergence `w(b) - w(a) - <grad w(a), b - a>`.
    pub fn bregman_div(&self, a: &[f64], b: &[f64]) -> Result<f64, ProxError> {
        if a.len() != b.len() {
            return Err(ProxError::LengthMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        match self.kind {
            GeneratorKind::Euclidean => Ok(0.5 * dist_sq(a, b)),
        }
    }
}

impl Default for DistanceGenerator {
    fn default() -> Self {
        Self::euclidean()
    }
}

/// Closed convex feasible set for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockConstraint {
    Free,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl BlockConstraint {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ProxError> {
        if lower.len() != upper.len() {
            return Err(ProxError::LengthMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo > hi {
                return Err(ProxError::InvertedBox(k));
            }
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, ProxError> {
        if !(radius > 0.0) {
            return Err(ProxError::NonpositiveRadius(radius));
        }
        Ok(Self::Ball { center, radius })
    }

    fn check_dim(&self, len: usize) -> Result<(), ProxError> {
        let expected = match self {
            Self::Free => return Ok(()),
            Self::Box { lower, .. } => lower.len(),
            Self::Ball { center, .. } => center.len(),
        };
        if expected != len {
            return Err(ProxError::LengthMismatch { expected, got: len });
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, ProxError> {
        self.check_dim(v.len())?;
        Ok(match self {
            Self::Free => v.to_vec(),
            Self::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
                .collect(),
            Self::Ball { center, radius } => {
                let offset: Vec<f64> = v.iter().zip(center).map(|(x, c)| x - c).collect();
                let dist = norm(&offset);
                if dist <= *radius {
                    v.to_vec()
                } else {
                    let scale = radius / dist;
                    center
                        .iter()
                        .zip(&offset)
                        .map(|(c, o)| c + scale * o)
                        .collect()
                }
            }
        })
    }

    /// Membership test up to `tol` in Euclidean distance terms.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        match self {
            Self::Free => true,
            Self::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&x, (&lo, &hi))| x >= lo - tol && x <= hi + tol),
            Self::Ball { center, radius } => dist_sq(v, center).sqrt() <= radius + tol,
        }
    }
}

/// One block proximal step: `argmin_{u in X} <b, u> + (1/c) D(a, u)`.
///
/// `a` is the anchor (assumed feasible, which the algorithm maintains by
/// induction and we assert in debug builds), `b` the linear term, and `c` the
/// positive stepsize. For the Euclidean generator this is `P_X(a - c b)`.
pub fn prox_step(
    dg: &DistanceGenerator,
    constraint: &BlockConstraint,
    a: &[f64],
    b: &[f64],
    c: f64,
) -> Result<Vec<f64>, ProxError> {
    if a.len() != b.len() {
        return Err(ProxError::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if !(c > 0.0) {
        return Err(ProxError::NonpositiveStepsize(c));
    }
    debug_assert!(constraint.contains(a, 1e-9), "prox anchor left the feasible set");
    match dg.kind {
        GeneratorKind::Euclidean => {
            let target: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| ai - c * bi).collect();
            constraint.project(&target)
        }
    }
}

/// Reference minimizer for [`prox_step`], used by the test suite.
///
/// Runs projected gradient descent on `<b, u> + (1/c) D(a, u)` with slowly
/// diminishing steps from several starting points and keeps the best
/// objective value. Never takes the `a - c b` shortcut, so it checks the
/// closed form through an independent route. Intended for block dimensions
/// up to about 4; cost grows with dimension.
pub fn prox_oracle(
    dg: &DistanceGenerator,
    constraint: &BlockConstraint,
    a: &[f64],
    b: &[f64],
    c: f64,
) -> Result<Vec<f64>, ProxError> {
    if a.len() != b.len() {
        return Err(ProxError::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if !(c > 0.0) {
        return Err(ProxError::NonpositiveStepsize(c));
    }
    let objective = |u: &[f64]| -> f64 {
        dot(b, u)
            + match dg.kind {
                GeneratorKind::Euclidean => 0.5 * dist_sq(a, u) / c,
            }
    };
    // gradient of the objective at u
    let gradient = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(a.iter().zip(b))
            .map(|(&ui, (&ai, &bi))| bi + (ui - ai) / c)
            .collect()
    };
    let far_start: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| ai - 3.0 * c * bi + 1.0)
        .collect();
    let starts = [a.to_vec(), vec![0.0; a.len()], far_start];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let mut u = constraint.project(&start)?;
        for k in 0..400 {
            // steps decay from c/2; the sum diverges, so the iteration
            // contracts to the constrained minimizer from any start
            let step = 0.5 * c / (1.0 + 0.05 * k as f64);
            let g = gradient(&u);
            let moved: Vec<f64> = u.iter().zip(&g).map(|(ui, gi)| ui - step * gi).collect();
            u = constraint.project(&moved)?;
        }
        let value = objective(&u);
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, u));
        }
    }
    Ok(best.expect("at least one start").1)
}

//! Tie-aware Bradley-Terry (Rao-Kupper) likelihood over GP latent utilities
//! and the full log joint density of the generative model.

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::experiment::BoundingBox;
use crate::kernel::{covariance, CovMatrix, KernelHyper, Point};
use crate::math::{log_sigmoid, sigmoid, LN_2PI};

/// Smallest log-probability a single comparison may contribute.
pub const LOG_PROB_FLOOR: f64 = -745.0;

/// Outcome of comparing a first point against a second.
///
/// On the wire this is `-1` (first worse), `0` (equivalent) or `1` (first
/// better).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    FirstWorse,
    Equivalent,
    FirstBetter,
}

impl Outcome {
    pub fn as_i64(self) -> i64 {
        match self {
            Outcome::FirstWorse => -1,
            Outcome::Equivalent => 0,
            Outcome::FirstBetter => 1,
        }
    }

    /// The same judgment seen from the other point.
    pub fn reversed(self) -> Outcome {
        match self {
            Outcome::FirstWorse => Outcome::FirstBetter,
            Outcome::Equivalent => Outcome::Equivalent,
            Outcome::FirstBetter => Outcome::FirstWorse,
        }
    }
}

impl TryFrom<i64> for Outcome {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Outcome::FirstWorse),
            0 => Ok(Outcome::Equivalent),
            1 => Ok(Outcome::FirstBetter),
            other => Err(Error::InvalidOutcome(other)),
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.as_i64())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Outcome::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// One observed pairwise judgment between points `i` and `j` of the
/// experiment's point list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub i: usize,
    pub j: usize,
    pub outcome: Outcome,
}

impl ComparisonRecord {
    pub fn new(i: usize, j: usize, outcome: Outcome) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidComparison(format!(
                "point {i} compared with itself"
            )));
        }
        Ok(ComparisonRecord { i, j, outcome })
    }

    pub fn check(&self, n_points: usize) -> Result<()> {
        if self.i == self.j || self.i >= n_points || self.j >= n_points {
            return Err(Error::InvalidComparison(format!(
                "indices ({}, {}) invalid for {n_points} points",
                self.i, self.j
            )));
        }
        Ok(())
    }
}

/// Fixed model hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHyper {
    /// Tie parameter, at least 1; larger values put more mass on ties.
    pub beta: f64,
    /// Preference noise scale.
    pub sigma_p: f64,
    /// Kernel amplitude.
    pub amplitude: f64,
    /// Per-dimension `(lower, upper)` length-scale bounds.
    pub bounds: Vec<(f64, f64)>,
}

impl ModelHyper {
    pub const DEFAULT_BETA: f64 = 1.5;

    /// Defaults for a search box: `beta = 1.5`, unit noise and amplitude,
    /// length-scales bounded by `(0.05, 2.0)` times each box width.
    /// Zero-width dimensions get bounds `(0.05, 2.0)`.
    pub fn for_box(bbox: &BoundingBox) -> Self {
        let bounds = bbox
            .widths()
            .map(|w| {
                let w = if w > 0.0 { w } else { 1.0 };
                (0.05 * w, 2.0 * w)
            })
            .collect();
        ModelHyper {
            beta: Self::DEFAULT_BETA,
            sigma_p: 1.0,
            amplitude: 1.0,
            bounds,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return Err(Error::InvalidHyper(format!("beta must be >= 1, got {}", self.beta)));
        }
        if !(self.sigma_p.is_finite() && self.sigma_p > 0.0) {
            return Err(Error::InvalidHyper(format!("sigma_p must be > 0, got {}", self.sigma_p)));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::InvalidHyper(format!(
                "amplitude must be > 0, got {}",
                self.amplitude
            )));
        }
        if self.bounds.is_empty() {
            return Err(Error::InvalidHyper("no length-scale bounds".into()));
        }
        for (d, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(Error::InvalidHyper(format!(
                    "length-scale bounds for dimension {d} must satisfy 0 < lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    /// Kernel hyperparameters for the given length-scales.
    pub fn kernel(&self, lengthscales: Vec<f64>) -> Result<KernelHyper> {
        KernelHyper::new(lengthscales, self.amplitude)
    }
}

/// Joint latent draw: utilities `f` at each point and pre-length-scales `gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub f: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `theta_d = S(gamma_d) (upper_d - lower_d) + lower_d`.
pub fn lengthscale_transform(gamma: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>> {
    if gamma.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            got: gamma.len(),
        });
    }
    Ok(gamma
        .iter()
        .zip(bounds)
        .map(|(g, (lo, hi))| sigmoid(*g) * (hi - lo) + lo)
        .collect())
}

/// Probabilities of the three outcomes for a single comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TieProbabilities {
    /// First point worse.
    pub worse: f64,
    pub equivalent: f64,
    /// First point better.
    pub better: f64,
}

impl TieProbabilities {
    pub fn of(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::FirstWorse => self.worse,
            Outcome::Equivalent => self.equivalent,
            Outcome::FirstBetter => self.better,
        }
    }
}

fn scaled_difference(f1: f64, f2: f64, sigma_p: f64) -> f64 {
    (f1 - f2) / (2.0 * sigma_p * sigma_p).sqrt()
}

/// Rao-Kupper outcome probabilities for latent utilities `f1`, `f2`.
pub fn tie_probabilities(f1: f64, f2: f64, beta: f64, sigma_p: f64) -> TieProbabilities {
    let d = scaled_difference(f1, f2, sigma_p);
    let z1 = sigmoid(d);
    // 1 - S(d), evaluated without cancellation
    let z2 = sigmoid(-d);
    let worse = z2 / (z2 + beta * z1);
    let equivalent = (beta * beta - 1.0) * z1 * z2 / ((z1 + beta * z2) * (z2 + beta * z1));
    TieProbabilities {
        worse,
        equivalent,
        better: 1.0 - worse - equivalent,
    }
}

/// Log-probability of `outcome` at scaled difference `d`, with its derivative
/// in `d`. Floored at [`LOG_PROB_FLOOR`], where the derivative is zero.
pub(crate) fn log_outcome_prob(d: f64, outcome: Outcome, beta: f64) -> (f64, f64) {
    let z1 = sigmoid(d);
    let z2 = sigmoid(-d);
    let (lz1, lz2) = (log_sigmoid(d), log_sigmoid(-d));
    let a = z1 + beta * z2;
    let b = z2 + beta * z1;
    let zz = z1 * z2;
    let (value, grad) = match outcome {
        Outcome::FirstBetter => (lz1 - a.ln(), z2 - (1.0 - beta) * zz / a),
        Outcome::FirstWorse => (lz2 - b.ln(), -z1 - (beta - 1.0) * zz / b),
        Outcome::Equivalent => {
            let tie = beta * beta - 1.0;
            if tie <= 0.0 {
                return (LOG_PROB_FLOOR, 0.0);
            }
            (
                tie.ln() + lz1 + lz2 - a.ln() - b.ln(),
                z2 - z1 - (1.0 - beta) * zz / a - (beta - 1.0) * zz / b,
            )
        }
    };
    if value < LOG_PROB_FLOOR || value.is_nan() {
        (LOG_PROB_FLOOR, 0.0)
    } else {
        (value, grad)
    }
}

fn check_comparisons(comparisons: &[ComparisonRecord], n: usize) -> Result<()> {
    comparisons.iter().try_for_each(|c| c.check(n))
}

/// Sum of per-comparison log-probabilities.
pub fn log_likelihood(comparisons: &[ComparisonRecord], f: &[f64], hyper: &ModelHyper) -> Result<f64> {
    check_comparisons(comparisons, f.len())?;
    Ok(comparisons
        .iter()
        .map(|c| {
            let d = scaled_difference(f[c.i], f[c.j], hyper.sigma_p);
            log_outcome_prob(d, c.outcome, hyper.beta).0
        })
        .sum())
}

/// Gradient of [`log_likelihood`] with respect to `f`, accumulated into `grad`.
pub(crate) fn log_likelihood_grad(
    comparisons: &[ComparisonRecord],
    f: &[f64],
    hyper: &ModelHyper,
    grad: &mut [f64],
) -> f64 {
    let scale = 1.0 / (2.0 * hyper.sigma_p * hyper.sigma_p).sqrt();
    let mut total = 0.0;
    for c in comparisons {
        let d = (f[c.i] - f[c.j]) * scale;
        let (lp, g) = log_outcome_prob(d, c.outcome, hyper.beta);
        total += lp;
        grad[c.i] += g * scale;
        grad[c.j] -= g * scale;
    }
    total
}

/// `log N(gamma; 0, I) + log N(f; 0, K(theta)) + log p(c | f)`.
pub fn log_joint(
    state: &LatentState,
    points: &[Point],
    comparisons: &[ComparisonRecord],
    hyper: &ModelHyper,
) -> Result<f64> {
    let theta = lengthscale_transform(&state.gamma, &hyper.bounds)?;
    if state.f.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: state.f.len(),
        });
    }
    let cov = covariance(points, &hyper.kernel(theta)?)?;
    let prior_gamma: f64 = state.gamma.iter().map(|g| -0.5 * (g * g + LN_2PI)).sum();
    let f = DVector::from_column_slice(&state.f);
    let alpha = cov.solve(&f);
    let prior_f = mvn_log_density(&f, &alpha, &cov);
    Ok(prior_gamma + prior_f + log_likelihood(comparisons, &state.f, hyper)?)
}

fn mvn_log_density(f: &DVector<f64>, alpha: &DVector<f64>, cov: &CovMatrix) -> f64 {
    -0.5 * f.dot(alpha) - 0.5 * cov.log_det() - 0.5 * f.len() as f64 * LN_2PI
}

/// Value and gradient of the log joint at one latent draw.
pub(crate) struct JointEval {
    pub value: f64,
    pub grad_f: Vec<f64>,
    pub grad_gamma: Vec<f64>,
}

/// Log joint and its gradient, reusing a covariance already built from
/// `theta = lengthscale_transform(gamma)`.
pub(crate) fn log_joint_grad(
    f: &[f64],
    gamma: &[f64],
    theta: &[f64],
    cov: &CovMatrix,
    points: &[Point],
    comparisons: &[ComparisonRecord],
    hyper: &ModelHyper,
) -> JointEval {
    let n = f.len();
    let fv = DVector::from_column_slice(f);
    let alpha = cov.solve(&fv);
    let mut value = mvn_log_density(&fv, &alpha, cov);
    let mut grad_f: Vec<f64> = alpha.iter().map(|a| -a).collect();
    value += log_likelihood_grad(comparisons, f, hyper, &mut grad_f);

    let kinv = cov.inverse();
    let mut grad_gamma = Vec::with_capacity(gamma.len());
    for (d, (&g, &(lo, hi))) in gamma.iter().zip(&hyper.bounds).enumerate() {
        value += -0.5 * (g * g + LN_2PI);
        let l = theta[d];
        let l3 = l * l * l;
        // d log N(f; 0, K) / d theta_d = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta_d)
        let mut dtheta = 0.0;
        for i in 0..n {
            for j in 0..i {
                let diff = points[i][d] - points[j][d];
                let dk = (cov.matrix[(i, j)]) * diff * diff / l3;
                dtheta += (alpha[i] * alpha[j] - kinv[(i, j)]) * dk;
            }
        }
        let s = sigmoid(g);
        grad_gamma.push(-g + dtheta * s * (1.0 - s) * (hi - lo));
    }
    JointEval {
        value,
        grad_f,
        grad_gamma,
    }
}

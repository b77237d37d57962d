//! Mean-field Gaussian approximation `q(f, gamma)` fitted by stochastic
//! maximization of the evidence lower bound with reparameterized gradients.
//!
//! The variational family holds one independent Gaussian per latent
//! utility and one per pre-length-scale. Scales are parameterized as
//! `sigma = softplus(rho)` so any gradient step keeps them positive.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{covariance, CovMatrix, Point};
use crate::math::{sigmoid, softplus, softplus_inv, LN_2PI};
use crate::preference::{lengthscale_transform, log_joint_grad, ComparisonRecord, ModelHyper};
use crate::rng::{stream_rng, Stream};

/// Initial scale for latent utility coordinates.
pub const INIT_SIGMA_F: f64 = 0.5;
/// Initial scale for pre-length-scale coordinates.
pub const INIT_SIGMA_GAMMA: f64 = 1.0;
/// Extra draws attempted when a sampled length-scale makes the covariance
/// degenerate.
pub const MAX_RESAMPLES: usize = 5;

/// Means and unconstrained scales of the `N + D` factor Gaussians, latent
/// utilities first.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalParams {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    n_points: usize,
    dim: usize,
}

impl VariationalParams {
    pub fn initial(n_points: usize, dim: usize) -> Self {
        let rho_f = softplus_inv(INIT_SIGMA_F);
        let rho_g = softplus_inv(INIT_SIGMA_GAMMA);
        let mut rho = vec![rho_f; n_points];
        rho.extend(std::iter::repeat_n(rho_g, dim));
        VariationalParams {
            mu: vec![0.0; n_points + dim],
            rho,
            n_points,
            dim,
        }
    }

    pub fn from_parts(mu: Vec<f64>, rho: Vec<f64>, n_points: usize, dim: usize) -> Result<Self> {
        if mu.len() != n_points + dim || rho.len() != n_points + dim {
            return Err(Error::DimensionMismatch {
                expected: n_points + dim,
                got: mu.len().max(rho.len()),
            });
        }
        if mu.iter().chain(&rho).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("variational parameters"));
        }
        Ok(VariationalParams {
            mu,
            rho,
            n_points,
            dim,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of scalar parameters, `2N + 2D`.
    pub fn param_count(&self) -> usize {
        self.mu.len() + self.rho.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.iter().map(|r| softplus(*r)).collect()
    }

    pub fn f_mean(&self) -> &[f64] {
        &self.mu[..self.n_points]
    }

    pub fn gamma_mean(&self) -> &[f64] {
        &self.mu[self.n_points..]
    }

    /// Warm start for a data set grown to `n_points`: existing coordinates
    /// are kept, new utilities get the default initialization.
    pub fn extended(&self, n_points: usize) -> Self {
        assert!(n_points >= self.n_points);
        let mut out = VariationalParams::initial(n_points, self.dim);
        out.mu[..self.n_points].copy_from_slice(&self.mu[..self.n_points]);
        out.rho[..self.n_points].copy_from_slice(&self.rho[..self.n_points]);
        out.mu[n_points..].copy_from_slice(self.gamma_mean());
        out.rho[n_points..].copy_from_slice(&self.rho[self.n_points..]);
        out
    }

    fn size(&self) -> usize {
        self.n_points + self.dim
    }
}

/// Data and hyperparameters the posterior is conditioned on.
#[derive(Clone, Copy, Debug)]
pub struct Model<'a> {
    pub points: &'a [Point],
    pub comparisons: &'a [ComparisonRecord],
    pub hyper: &'a ModelHyper,
}

impl<'a> Model<'a> {
    pub fn new(
        points: &'a [Point],
        comparisons: &'a [ComparisonRecord],
        hyper: &'a ModelHyper,
    ) -> Result<Self> {
        hyper.validate()?;
        if points.is_empty() {
            return Err(Error::Empty("model points"));
        }
        for p in points {
            if p.dim() != hyper.dim() {
                return Err(Error::DimensionMismatch {
                    expected: hyper.dim(),
                    got: p.dim(),
                });
            }
        }
        for c in comparisons {
            c.check(points.len())?;
        }
        Ok(Model {
            points,
            comparisons,
            hyper,
        })
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim()
    }

    fn check_params(&self, params: &VariationalParams) -> Result<()> {
        if params.n_points != self.n_points() || params.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.n_points() + self.dim(),
                got: params.size(),
            });
        }
        Ok(())
    }
}

/// One joint draw from `q` with its derived length-scales and covariance.
#[derive(Clone, Debug)]
pub struct PosteriorSample {
    pub f: Vec<f64>,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub cov: CovMatrix,
}

fn realize(params: &VariationalParams, model: &Model<'_>, eps: &[f64]) -> Result<PosteriorSample> {
    let n = params.n_points;
    let z: Vec<f64> = params
        .mu
        .iter()
        .zip(&params.rho)
        .zip(eps)
        .map(|((m, r), e)| m + softplus(*r) * e)
        .collect();
    let gamma = z[n..].to_vec();
    let theta = lengthscale_transform(&gamma, &model.hyper.bounds)?;
    let cov = covariance(model.points, &model.hyper.kernel(theta.clone())?)?;
    Ok(PosteriorSample {
        f: z[..n].to_vec(),
        gamma,
        theta,
        cov,
    })
}

fn draw_noise(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn draw_realization(
    params: &VariationalParams,
    model: &Model<'_>,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, PosteriorSample)> {
    let mut attempt = 0;
    loop {
        let eps = draw_noise(rng, params.size());
        match realize(params, model, &eps) {
            Ok(s) => return Ok((eps, s)),
            Err(e @ Error::Degenerate { .. }) if attempt >= MAX_RESAMPLES => return Err(e),
            Err(Error::Degenerate { .. }) => attempt += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Draws `z = mu + sigma * eps` with standard normal `eps`.
pub fn sample_q(params: &VariationalParams, model: &Model<'_>, rng: &mut impl Rng) -> Result<PosteriorSample> {
    model.check_params(params)?;
    draw_realization(params, model, rng).map(|(_, s)| s)
}

/// Single-sample ELBO term `log p(z) - log q(z)` and its gradient with
/// respect to `(mu, rho)` for the draw `z = mu + sigma * eps`.
fn term_and_grad(
    params: &VariationalParams,
    model: &Model<'_>,
    eps: &[f64],
    sample: &PosteriorSample,
    grad: &mut [f64],
) -> f64 {
    let joint = log_joint_grad(
        &sample.f,
        &sample.gamma,
        &sample.theta,
        &sample.cov,
        model.points,
        model.comparisons,
        model.hyper,
    );
    let size = params.size();
    let n = params.n_points;
    let mut log_q = 0.0;
    for k in 0..size {
        let sigma = softplus(params.rho[k]);
        let e = eps[k];
        log_q += -0.5 * LN_2PI - sigma.ln() - 0.5 * e * e;
        let g = if k < n { joint.grad_f[k] } else { joint.grad_gamma[k - n] };
        let dsigma = sigmoid(params.rho[k]);
        grad[k] += g;
        grad[size + k] += (g * e + 1.0 / sigma) * dsigma;
    }
    joint.value - log_q
}

/// Monte Carlo ELBO and its reparameterization gradient for explicit noise
/// vectors (one per sample). The gradient is laid out as `[d mu, d rho]`.
pub fn elbo_with_noise(
    params: &VariationalParams,
    model: &Model<'_>,
    noise: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    model.check_params(params)?;
    if noise.is_empty() {
        return Err(Error::InvalidConfig("at least one noise sample is required".into()));
    }
    let mut grad = vec![0.0; params.param_count()];
    let mut total = 0.0;
    for eps in noise {
        if eps.len() != params.size() {
            return Err(Error::DimensionMismatch {
                expected: params.size(),
                got: eps.len(),
            });
        }
        let sample = realize(params, model, eps)?;
        total += term_and_grad(params, model, eps, &sample, &mut grad);
    }
    let s = noise.len() as f64;
    grad.iter_mut().for_each(|g| *g /= s);
    Ok((total / s, grad))
}

/// Mean and standard error of a Monte Carlo ELBO estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl ElboEstimate {
    fn from_terms(terms: &[f64]) -> Self {
        let n = terms.len() as f64;
        let mean = terms.iter().sum::<f64>() / n;
        let var = if terms.len() > 1 {
            terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        ElboEstimate {
            mean,
            std_error: (var / n).sqrt(),
            samples: terms.len(),
        }
    }
}

fn sampled_terms(
    params: &VariationalParams,
    model: &Model<'_>,
    samples: usize,
    rng: &mut impl Rng,
    grad: &mut [f64],
) -> Result<Vec<f64>> {
    model.check_params(params)?;
    if samples == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    let mut terms = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (eps, sample) = draw_realization(params, model, rng)?;
        terms.push(term_and_grad(params, model, &eps, &sample, grad));
    }
    Ok(terms)
}

/// Unbiased `samples`-draw estimate of the ELBO.
pub fn elbo_estimate(
    params: &VariationalParams,
    model: &Model<'_>,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<ElboEstimate> {
    let mut scratch = vec![0.0; params.param_count()];
    sampled_terms(params, model, samples, rng, &mut scratch).map(|t| ElboEstimate::from_terms(&t))
}

/// Reparameterization gradient of the `samples`-draw ELBO estimator.
pub fn elbo_gradient(
    params: &VariationalParams,
    model: &Model<'_>,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.param_count()];
    sampled_terms(params, model, samples, rng, &mut grad)?;
    let s = samples as f64;
    grad.iter_mut().for_each(|g| *g /= s);
    Ok(grad)
}

/// How Monte Carlo noise is drawn during a fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Fresh draws every step.
    #[default]
    Fresh,
    /// One set of draws reused for every step, which turns the objective
    /// into a deterministic sample-average approximation.
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub mc_samples: usize,
    pub max_steps: usize,
    pub step_size: f64,
    /// Steps per convergence window.
    pub window: usize,
    /// Minimum relative ELBO improvement between consecutive windows.
    pub tolerance: f64,
    /// Draws used for the initial/final ELBO report; 0 skips the report.
    pub report_samples: usize,
    pub seed: u64,
    pub noise: NoiseMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            mc_samples: 8,
            max_steps: 3000,
            step_size: 0.02,
            window: 50,
            tolerance: 1e-3,
            report_samples: 256,
            seed: 0,
            noise: NoiseMode::Fresh,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 || self.max_steps == 0 || self.window == 0 {
            return Err(Error::InvalidConfig(
                "mc_samples, max_steps and window must be positive".into(),
            ));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidConfig(format!("step size {}", self.step_size)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub params: VariationalParams,
    pub initial_elbo: Option<ElboEstimate>,
    pub final_elbo: Option<ElboEstimate>,
    pub steps: usize,
    pub converged: bool,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MAX_NONFINITE_STEPS: usize = 10;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        }
    }

    /// Ascent step on `params` along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * grad[k];
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
            params[k] += self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + ADAM_EPS);
        }
    }
}

fn window_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Maximizes the ELBO from `init` with Adam on reparameterized gradients.
///
/// Stops after `max_steps` or once the mean ELBO of the last window improves
/// on the previous window by less than `tolerance` (relative).
pub fn fit(init: &VariationalParams, model: &Model<'_>, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    model.check_params(init)?;
    let mut rng = stream_rng(config.seed, Stream::Fit, 0);
    let mut report_rng = stream_rng(config.seed, Stream::Fit, 1);

    let initial_elbo = if config.report_samples > 0 {
        Some(elbo_estimate(init, model, config.report_samples, &mut report_rng)?)
    } else {
        None
    };

    let frozen = match config.noise {
        NoiseMode::Fresh => None,
        NoiseMode::Frozen => Some(
            (0..config.mc_samples)
                .map(|_| draw_realization(init, model, &mut rng).map(|(e, _)| e))
                .collect::<Result<Vec<_>>>()?,
        ),
    };

    let mut params = init.clone();
    let size = params.size();
    let mut adam = Adam::new(2 * size, config.step_size);
    let mut flat = [params.mu.clone(), params.rho.clone()].concat();
    let mut history = Vec::with_capacity(config.max_steps.min(4096));
    let mut nonfinite = 0;
    let mut converged = false;
    let mut steps = 0;

    while steps < config.max_steps {
        steps += 1;
        let evaluated = match &frozen {
            Some(noise) => elbo_with_noise(&params, model, noise),
            None => {
                let mut grad = vec![0.0; 2 * size];
                sampled_terms(&params, model, config.mc_samples, &mut rng, &mut grad).map(|terms| {
                    let s = terms.len() as f64;
                    grad.iter_mut().for_each(|g| *g /= s);
                    (terms.iter().sum::<f64>() / s, grad)
                })
            }
        };
        let (value, grad) = match evaluated {
            Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => (v, g),
            Ok(_) | Err(Error::Degenerate { .. }) => {
                nonfinite += 1;
                if nonfinite >= MAX_NONFINITE_STEPS {
                    return Err(Error::Divergence {
                        step: steps,
                        consecutive: nonfinite,
                    });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        nonfinite = 0;
        adam.step(&mut flat, &grad);
        params.mu.copy_from_slice(&flat[..size]);
        params.rho.copy_from_slice(&flat[size..]);
        history.push(value);

        let w = config.window;
        if history.len() >= 2 * w && history.len() % w == 0 {
            let last = window_mean(&history[history.len() - w..]);
            let prev = window_mean(&history[history.len() - 2 * w..history.len() - w]);
            if (last - prev) / prev.abs().max(1.0) < config.tolerance {
                converged = true;
                break;
            }
        }
    }

    let final_elbo = if config.report_samples > 0 {
        Some(elbo_estimate(&params, model, config.report_samples, &mut report_rng)?)
    } else {
        None
    };
    Ok(FitReport {
        params,
        initial_elbo,
        final_elbo,
        steps,
        converged,
    })
}

/// Convenience wrapper for [`elbo_estimate`] with a seeded generator.
pub fn elbo_estimate_seeded(
    params: &VariationalParams,
    model: &Model<'_>,
    samples: usize,
    seed: u64,
) -> Result<ElboEstimate> {
    let mut rng: ChaCha8Rng = stream_rng(seed, Stream::Fit, u64::MAX);
    elbo_estimate(params, model, samples, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::Outcome;
    use rand::SeedableRng;

    fn hyper(d: usize) -> ModelHyper {
        ModelHyper {
            beta: 1.5,
            sigma_p: 1.0,
            amplitude: 1.0,
            bounds: vec![(0.05, 2.0); d],
        }
    }

    fn pts1(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::new(vec![x])).collect()
    }

    #[test]
    fn parameter_layout() {
        let p = VariationalParams::initial(4, 2);
        assert_eq!(p.param_count(), 2 * 4 + 2 * 2);
        let s = p.sigma();
        assert!(s[..4].iter().all(|v| (v - 0.5).abs() < 1e-12));
        assert!(s[4..].iter().all(|v| (v - 1.0).abs() < 1e-12));
        let mut q = p.clone();
        q.mu[1] = 3.0;
        q.mu[4] = -0.7;
        let e = q.extended(6);
        assert_eq!(e.param_count(), 2 * 6 + 2 * 2);
        assert_eq!(e.mu[1], 3.0);
        assert_eq!(e.gamma_mean(), &[-0.7, 0.0]);
        assert_eq!(e.mu[4], 0.0);
        assert!(VariationalParams::from_parts(vec![0.0; 3], vec![0.0; 3], 2, 2).is_err());
    }

    #[test]
    fn degenerate_scale_sample_is_the_mean() {
        let h = hyper(1);
        let pts = pts1(&[0.0, 0.5]);
        let model = Model::new(&pts, &[], &h).unwrap();
        let mut p = VariationalParams::initial(2, 1);
        p.mu = vec![0.3, -0.4, 0.2];
        p.rho = vec![-60.0; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_q(&p, &model, &mut rng).unwrap();
        assert!((s.f[0] - 0.3).abs() < 1e-20 && (s.f[1] + 0.4).abs() < 1e-20);
        assert!((s.gamma[0] - 0.2).abs() < 1e-20);
        assert_eq!(s.theta, lengthscale_transform(&s.gamma, &h.bounds).unwrap());
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let h = hyper(2);
        let pts = vec![Point::new(vec![0.0, 0.0]), Point::new(vec![1.0, 0.2])];
        let model = Model::new(&pts, &[], &h).unwrap();
        let p = VariationalParams::initial(2, 2);
        let a = sample_q(&p, &model, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_q(&p, &model, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.f, b.f);
        assert_eq!(a.gamma, b.gamma);
    }

    #[test]
    fn sample_mean_matches_location() {
        let h = hyper(1);
        let pts = pts1(&[0.0]);
        let model = Model::new(&pts, &[], &h).unwrap();
        let mut p = VariationalParams::initial(1, 1);
        p.mu = vec![1.5, -0.5];
        p.rho = vec![softplus_inv(0.8), softplus_inv(0.3)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let (mut sf, mut sg) = (0.0, 0.0);
        for _ in 0..n {
            let s = sample_q(&p, &model, &mut rng).unwrap();
            sf += s.f[0];
            sg += s.gamma[0];
        }
        let root = (n as f64).sqrt();
        assert!((sf / n as f64 - 1.5).abs() < 4.0 * 0.8 / root);
        assert!((sg / n as f64 + 0.5).abs() < 4.0 * 0.3 / root);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = hyper(2);
        let pts = vec![
            Point::new(vec![0.0, 0.1]),
            Point::new(vec![0.4, 0.9]),
            Point::new(vec![1.0, 0.5]),
        ];
        let cs = vec![
            ComparisonRecord::new(0, 1, Outcome::FirstBetter).unwrap(),
            ComparisonRecord::new(2, 1, Outcome::Equivalent).unwrap(),
            ComparisonRecord::new(2, 0, Outcome::FirstWorse).unwrap(),
        ];
        let model = Model::new(&pts, &cs, &h).unwrap();
        let mut p = VariationalParams::initial(3, 2);
        p.mu = vec![0.2, -0.3, 0.5, 0.3, -0.6];
        p.rho = vec![-0.4, 0.1, -1.0, 0.2, -0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = vec![draw_noise(&mut rng, 5)];
        let (_, grad) = elbo_with_noise(&p, &model, &noise).unwrap();
        let step = 1e-5;
        for k in 0..10 {
            let mut plus = p.clone();
            let mut minus = p.clone();
            if k < 5 {
                plus.mu[k] += step;
                minus.mu[k] -= step;
            } else {
                plus.rho[k - 5] += step;
                minus.rho[k - 5] -= step;
            }
            let fd = (elbo_with_noise(&plus, &model, &noise).unwrap().0
                - elbo_with_noise(&minus, &model, &noise).unwrap().0)
                / (2.0 * step);
            let tol = (1e-3 * grad[k].abs()).max(1e-4);
            assert!((grad[k] - fd).abs() <= tol, "coord {k}: {} vs {fd}", grad[k]);
        }
    }

    #[test]
    fn unreferenced_point_gradient_is_prior_only() {
        // Point 2 appears in no comparison: its gradient must equal that of
        // the same model with all comparisons removed.
        let h = hyper(1);
        let pts = pts1(&[0.0, 0.6, 1.5]);
        let cs = vec![ComparisonRecord::new(0, 1, Outcome::FirstBetter).unwrap()];
        let with = Model::new(&pts, &cs, &h).unwrap();
        let without = Model::new(&pts, &[], &h).unwrap();
        let p = VariationalParams::initial(3, 1);
        let noise = vec![draw_noise(&mut ChaCha8Rng::seed_from_u64(5), 4)];
        let (_, g1) = elbo_with_noise(&p, &with, &noise).unwrap();
        let (_, g0) = elbo_with_noise(&p, &without, &noise).unwrap();
        let size = 4;
        assert!((g1[2] - g0[2]).abs() < 1e-12);
        assert!((g1[size + 2] - g0[size + 2]).abs() < 1e-12);
        assert!((g1[0] - g0[0]).abs() > 1e-6);
    }

    #[test]
    fn elbo_vanishes_when_q_is_the_prior() {
        // One point: K = amplitude + jitter regardless of the length-scale,
        // so q = prior exactly and log p - log q = 0 for every draw.
        let h = hyper(1);
        let pts = pts1(&[0.3]);
        let model = Model::new(&pts, &[], &h).unwrap();
        let mut p = VariationalParams::initial(1, 1);
        p.rho = vec![softplus_inv((1.0f64 + 1e-6).sqrt()), softplus_inv(1.0)];
        let est = elbo_estimate(&p, &model, 10_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(est.mean.abs() <= 0.02, "{est:?}");
        assert!(-est.mean <= 0.02);
    }

    #[test]
    fn doubling_samples_keeps_expectation() {
        let h = hyper(1);
        let pts = pts1(&[0.0, 0.8]);
        let cs = vec![ComparisonRecord::new(0, 1, Outcome::FirstBetter).unwrap()];
        let model = Model::new(&pts, &cs, &h).unwrap();
        let p = VariationalParams::initial(2, 1);
        let a = elbo_estimate(&p, &model, 2000, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let b = elbo_estimate(&p, &model, 4000, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 3.0 * se, "{a:?} {b:?}");
    }

    #[test]
    fn elbo_is_order_invariant() {
        let h = hyper(1);
        let pts = pts1(&[0.0, 0.8, 1.4]);
        let mut cs = vec![
            ComparisonRecord::new(0, 1, Outcome::FirstBetter).unwrap(),
            ComparisonRecord::new(1, 2, Outcome::Equivalent).unwrap(),
            ComparisonRecord::new(2, 0, Outcome::FirstWorse).unwrap(),
        ];
        let p = VariationalParams::initial(3, 1);
        let a = elbo_estimate(&p, &Model::new(&pts, &cs, &h).unwrap(), 64, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        cs.rotate_left(1);
        let b = elbo_estimate(&p, &Model::new(&pts, &cs, &h).unwrap(), 64, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-10);
    }

    #[test]
    fn prior_recovery_without_comparisons() {
        let h = hyper(1);
        // Spaced far beyond the largest length-scale so p(f | gamma) does not
        // depend on gamma and the mean-field optimum is the prior itself.
        let pts = pts1(&[0.0, 10.0]);
        let model = Model::new(&pts, &[], &h).unwrap();
        let cfg = FitConfig {
            seed: 17,
            step_size: 0.01,
            ..FitConfig::default()
        };
        let rep = fit(&VariationalParams::initial(2, 1), &model, &cfg).unwrap();
        let g_mu = rep.params.gamma_mean()[0];
        let g_sigma = rep.params.sigma()[2];
        assert!(g_mu.abs() < 0.1, "gamma mean {g_mu}");
        assert!((g_sigma - 1.0).abs() < 0.15, "gamma sigma {g_sigma}");
        assert_eq!(rep.params.param_count(), 2 * 2 + 2);
    }

    #[test]
    fn fit_recovers_chain_ordering() {
        let h = hyper(1);
        let pts = pts1(&[0.0, 0.5, 1.0]);
        let mut cs = Vec::new();
        for _ in 0..20 {
            cs.push(ComparisonRecord::new(0, 1, Outcome::FirstBetter).unwrap());
            cs.push(ComparisonRecord::new(1, 2, Outcome::FirstBetter).unwrap());
        }
        let model = Model::new(&pts, &cs, &h).unwrap();
        let rep = fit(&VariationalParams::initial(3, 1), &model, &FitConfig::default()).unwrap();
        let f = rep.params.f_mean();
        assert!(f[0] > f[1] && f[1] > f[2], "{f:?}");
        let (i, fin) = (rep.initial_elbo.unwrap(), rep.final_elbo.unwrap());
        assert!(fin.mean >= i.mean - 2.0 * (i.std_error.powi(2) + fin.std_error.powi(2)).sqrt());
        assert!(rep.params.sigma().iter().all(|s| *s > 0.0));
    }

    #[test]
    fn warm_start_is_a_fixed_point() {
        let h = hyper(1);
        let pts = pts1(&[0.0, 0.7]);
        let cs = vec![ComparisonRecord::new(0, 1, Outcome::FirstBetter).unwrap(); 3];
        let model = Model::new(&pts, &cs, &h).unwrap();
        let first = fit(&VariationalParams::initial(2, 1), &model, &FitConfig::default()).unwrap();
        let cfg = FitConfig {
            seed: 99,
            ..FitConfig::default()
        };
        let again = fit(&first.params, &model, &cfg).unwrap();
        let (a, b) = (again.initial_elbo.unwrap(), again.final_elbo.unwrap());
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 2.0 * se.max(1e-3) + 0.02, "{a:?} {b:?}");
    }

    #[test]
    fn frozen_noise_fit_reaches_stationary_point() {
        let h = hyper(1);
        let pts = pts1(&[0.0, 0.9]);
        let cs = vec![ComparisonRecord::new(0, 1, Outcome::FirstBetter).unwrap()];
        let model = Model::new(&pts, &cs, &h).unwrap();
        let cfg = FitConfig {
            noise: NoiseMode::Frozen,
            mc_samples: 4,
            max_steps: 20_000,
            tolerance: 1e-12,
            step_size: 0.01,
            report_samples: 0,
            seed: 3,
            ..FitConfig::default()
        };
        let rep = fit(&VariationalParams::initial(2, 1), &model, &cfg).unwrap();
        let mut rng = stream_rng(cfg.seed, Stream::Fit, 0);
        let noise: Vec<Vec<f64>> = (0..4).map(|_| draw_noise(&mut rng, 3)).collect();
        let (_, g) = elbo_with_noise(&rep.params, &model, &noise).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "gradient norm {norm}");
    }

    #[test]
    fn divergence_is_reported() {
        let h = hyper(1);
        let pts = pts1(&[0.0, 0.9]);
        let model = Model::new(&pts, &[], &h).unwrap();
        let mut p = VariationalParams::initial(2, 1);
        p.mu[0] = 1e300;
        p.mu[1] = -1e300;
        let cfg = FitConfig {
            report_samples: 0,
            ..FitConfig::default()
        };
        assert!(matches!(fit(&p, &model, &cfg), Err(Error::Divergence { .. })));
    }
}

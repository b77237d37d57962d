//! Acquisition functions integrated over the variational posterior and the
//! box-constrained argmax that proposes the next query point.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::design::{latin_hypercube_with, uniform_point};
use crate::error::{Error, Result};
use crate::experiment::{BoundingBox, DEDUP_TOL};
use crate::kernel::{predict_with, CovMatrix, Point};
use crate::math::{std_normal_cdf, std_normal_pdf};
use crate::rng::{stream_rng, Stream};
use crate::variational::{sample_q, Model, PosteriorSample, VariationalParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AcquisitionKind {
    #[serde(rename = "ei")]
    ExpectedImprovement,
    #[serde(rename = "pe")]
    PureExploration,
    #[serde(rename = "random")]
    RandomSearch,
}

impl AcquisitionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AcquisitionKind::ExpectedImprovement => "ei",
            AcquisitionKind::PureExploration => "pe",
            AcquisitionKind::RandomSearch => "random",
        }
    }

    pub fn uses_model(self) -> bool {
        self != AcquisitionKind::RandomSearch
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ei" => Ok(AcquisitionKind::ExpectedImprovement),
            "pe" => Ok(AcquisitionKind::PureExploration),
            "random" => Ok(AcquisitionKind::RandomSearch),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy `{other}`; expected ei, pe or random"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    pub posterior_samples: usize,
    pub candidate_count: usize,
    pub refinement_steps: usize,
    pub seed: u64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            posterior_samples: 64,
            candidate_count: 1024,
            refinement_steps: 64,
            seed: 0,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.posterior_samples == 0 || self.candidate_count == 0 {
            return Err(Error::InvalidConfig(
                "posterior_samples and candidate_count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Expected improvement of a Gaussian `N(mu, s^2)` over `f_best`; zero when
/// `s == 0`.
pub fn ei_closed_form(mu: f64, s: f64, f_best: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let d = mu - f_best;
    let u = d / s;
    (d * std_normal_cdf(u) + s * std_normal_pdf(u)).max(0.0)
}

/// Monte Carlo estimate of an integrated acquisition value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcquisitionValue {
    pub mean: f64,
    pub std_error: f64,
}

struct FittedSample {
    cov: CovMatrix,
    alpha: DVector<f64>,
    f_best: Option<f64>,
}

/// A fixed set of posterior draws, each conditioned into a GP predictor, on
/// which acquisition values are evaluated with common random numbers.
pub struct PosteriorEnsemble<'a> {
    points: &'a [Point],
    samples: Vec<FittedSample>,
}

impl<'a> PosteriorEnsemble<'a> {
    pub fn draw(
        params: &VariationalParams,
        model: &Model<'a>,
        best_index: Option<usize>,
        samples: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidConfig("posterior sample count must be positive".into()));
        }
        let draws = (0..samples)
            .map(|_| sample_q(params, model, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_samples(model.points, draws, best_index)
    }

    pub fn from_samples(
        points: &'a [Point],
        draws: Vec<PosteriorSample>,
        best_index: Option<usize>,
    ) -> Result<Self> {
        if let Some(b) = best_index {
            if b >= points.len() {
                return Err(Error::InvalidComparison(format!("best index {b} out of range")));
            }
        }
        let samples = draws
            .into_iter()
            .map(|s| {
                let alpha = s.cov.solve(&DVector::from_column_slice(&s.f));
                FittedSample {
                    f_best: best_index.map(|b| s.f[b]),
                    cov: s.cov,
                    alpha,
                }
            })
            .collect();
        Ok(PosteriorEnsemble { points, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check_kind(&self, kind: AcquisitionKind) -> Result<()> {
        match kind {
            AcquisitionKind::RandomSearch => Err(Error::InvalidConfig(
                "random search has no acquisition surface".into(),
            )),
            AcquisitionKind::ExpectedImprovement if self.samples.iter().any(|s| s.f_best.is_none()) => {
                Err(Error::NoIncumbent)
            }
            _ => Ok(()),
        }
    }

    fn integrand(&self, sample: &FittedSample, x: &[f64], kind: AcquisitionKind) -> f64 {
        let (mu, var) = predict_with(self.points, &sample.cov, &sample.alpha, x);
        match kind {
            AcquisitionKind::PureExploration => var,
            _ => ei_closed_form(mu, var.sqrt(), sample.f_best.unwrap_or(f64::NAN)),
        }
    }

    fn mean_value(&self, x: &[f64], kind: AcquisitionKind) -> f64 {
        self.samples.iter().map(|s| self.integrand(s, x, kind)).sum::<f64>() / self.samples.len() as f64
    }

    /// Average of the per-sample acquisition at `x`, with its standard error.
    pub fn evaluate(&self, x: &Point, kind: AcquisitionKind) -> Result<AcquisitionValue> {
        self.check_kind(kind)?;
        if x.dim() != self.points[0].dim() {
            return Err(Error::DimensionMismatch {
                expected: self.points[0].dim(),
                got: x.dim(),
            });
        }
        let vals: Vec<f64> = self.samples.iter().map(|s| self.integrand(s, x, kind)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(AcquisitionValue {
            mean,
            std_error: (var / n).sqrt(),
        })
    }
}

/// Integrated acquisition at `x_star` estimated from `samples` fresh
/// posterior draws. EI uses each draw's utility at `best_index` as `f_best`.
pub fn integrated_acquisition(
    x_star: &Point,
    params: &VariationalParams,
    model: &Model<'_>,
    best_index: Option<usize>,
    kind: AcquisitionKind,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<AcquisitionValue> {
    if kind == AcquisitionKind::ExpectedImprovement && best_index.is_none() {
        return Err(Error::NoIncumbent);
    }
    PosteriorEnsemble::draw(params, model, best_index, samples, rng)?.evaluate(x_star, kind)
}

/// Everything a proposal depends on besides its configuration.
#[derive(Clone, Copy)]
pub struct ProposalContext<'a> {
    pub bbox: &'a BoundingBox,
    pub model: Model<'a>,
    pub params: Option<&'a VariationalParams>,
    pub best_index: Option<usize>,
}

fn is_known(points: &[Point], x: &Point) -> bool {
    points.iter().any(|p| p.approx_eq(x, DEDUP_TOL))
}

/// Proposes the next query point.
///
/// Model-based kinds evaluate `candidate_count` Latin hypercube candidates on
/// one shared set of posterior draws and refine the best one by compass
/// search projected onto the box. Ties go to the lowest candidate index.
/// Random search returns a uniform draw from the box.
pub fn propose_next(ctx: &ProposalContext<'_>, kind: AcquisitionKind, config: &ProposalConfig) -> Result<Point> {
    config.validate()?;
    let bbox = ctx.bbox;
    if bbox.widths().all(|w| w <= 0.0) {
        return Err(Error::InvalidBox("every dimension has zero width".into()));
    }
    if kind == AcquisitionKind::RandomSearch {
        let mut rng = stream_rng(config.seed, Stream::Random, 0);
        return Ok(uniform_point(bbox, &mut rng));
    }
    if kind == AcquisitionKind::ExpectedImprovement && ctx.best_index.is_none() {
        return Err(Error::NoIncumbent);
    }
    let params = ctx
        .params
        .ok_or_else(|| Error::InvalidState("model-based proposal requires fitted parameters".into()))?;

    let mut rng = stream_rng(config.seed, Stream::Proposal, 0);
    let ensemble = PosteriorEnsemble::draw(params, &ctx.model, ctx.best_index, config.posterior_samples, &mut rng)?;
    ensemble.check_kind(kind)?;

    let known = ctx.model.points;
    let candidates = latin_hypercube_with(config.candidate_count, bbox, &mut rng);
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| !is_known(known, c))
        .map(|(k, c)| (k, ensemble.mean_value(c, kind)))
        .collect();
    // stable sort keeps index order among equal values
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let Some(&(start, start_val)) = scored.first() else {
        return Ok(uniform_point(bbox, &mut rng));
    };

    let refined = compass_search(&ensemble, kind, bbox, &candidates[start], start_val, config.refinement_steps);
    if !is_known(known, &refined) {
        return Ok(refined);
    }
    Ok(candidates[start].clone())
}

fn compass_search(
    ensemble: &PosteriorEnsemble<'_>,
    kind: AcquisitionKind,
    bbox: &BoundingBox,
    start: &Point,
    start_val: f64,
    steps: usize,
) -> Point {
    let mut x = start.clone();
    let mut val = start_val;
    let mut step: Vec<f64> = bbox.widths().map(|w| 0.1 * w).collect();
    for _ in 0..steps {
        let mut best: Option<(Point, f64)> = None;
        for (d, (lo, hi)) in bbox.iter().enumerate() {
            if step[d] <= 0.0 {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y.0[d] = (x[d] + sign * step[d]).clamp(lo, hi);
                if y[d] == x[d] {
                    continue;
                }
                let v = ensemble.mean_value(&y, kind);
                if v > val && best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                    best = Some((y, v));
                }
            }
        }
        match best {
            Some((y, v)) => {
                x = y;
                val = v;
            }
            None => step.iter_mut().for_each(|s| *s *= 0.5),
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::{ComparisonRecord, ModelHyper, Outcome};
    use crate::variational::{fit, FitConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Trapezoid rule on `max(y - f_best, 0) N(y; mu, s^2)` over +-12 s.
    fn ei_quadrature(mu: f64, s: f64, f_best: f64) -> f64 {
        let lo = f_best.max(mu - 12.0 * s);
        let hi = (mu + 12.0 * s).max(lo);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let g = |y: f64| {
            let z = (y - mu) / s;
            (y - f_best).max(0.0) * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut acc = 0.5 * (g(lo) + g(hi));
        for k in 1..n {
            acc += g(lo + k as f64 * h);
        }
        acc * h
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(ei_closed_form(3.0, 0.0, 1.0), 0.0);
        assert_eq!(ei_closed_form(-3.0, 0.0, 1.0), 0.0);
        assert!((ei_closed_form(0.5, 1.0, 0.5) - 0.398_942_280_401_432_7).abs() < 1e-12);
        let v = ei_closed_form(3.0, 1.0, 0.0);
        assert!((v - 3.000_382_154_317_048).abs() < 1e-12, "{v}");
        // high-precision reference: -6 Phi(-6) + phi(-6)
        let tail = ei_closed_form(-6.0, 1.0, 0.0);
        assert!(tail > 0.0 && (tail / 1.563_569_795_970_966e-10 - 1.0).abs() < 1e-6, "{tail}");
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for &(mu, s, fb) in &[(0.0, 1.0, 0.0), (1.3, 0.4, 0.2), (-2.0, 2.5, 1.0), (0.7, 0.05, 0.71)] {
            let a = ei_closed_form(mu, s, fb);
            let b = ei_quadrature(mu, s, fb);
            assert!((a - b).abs() < 1e-6, "{mu} {s} {fb}: {a} vs {b}");
        }
    }

    #[test]
    fn vanishing_scale_is_continuous() {
        for &s in &[1e-3, 1e-6, 1e-9] {
            assert!(ei_closed_form(-1.0, s, 0.0) < 1e-12);
            let v = ei_closed_form(0.5, s, 0.0);
            assert!((v - 0.5).abs() < 1e-2);
        }
        let mut last = 0.0;
        for k in 0..50 {
            let v = ei_closed_form(-0.5, 0.05 * k as f64, 0.0);
            assert!(v >= last);
            assert!(v >= 0.0);
            last = v;
        }
    }

    #[test]
    fn kind_parsing() {
        for k in [
            AcquisitionKind::ExpectedImprovement,
            AcquisitionKind::PureExploration,
            AcquisitionKind::RandomSearch,
        ] {
            assert_eq!(k.as_str().parse::<AcquisitionKind>().unwrap(), k);
        }
        assert!("ucb".parse::<AcquisitionKind>().is_err());
    }

    fn toy() -> (BoundingBox, Vec<Point>, Vec<ComparisonRecord>, ModelHyper) {
        let bbox = BoundingBox::new(vec![(0.0, 1.0)]).unwrap();
        let hyper = ModelHyper::for_box(&bbox);
        let pts = vec![Point::new(vec![0.0]), Point::new(vec![1.0])];
        let cs = vec![ComparisonRecord::new(1, 0, Outcome::FirstBetter).unwrap(); 10];
        (bbox, pts, cs, hyper)
    }

    #[test]
    fn degenerate_posterior_equals_plug_in() {
        let (_, pts, cs, hyper) = toy();
        let model = Model::new(&pts, &cs, &hyper).unwrap();
        let mut p = VariationalParams::initial(2, 1);
        p.mu = vec![-0.5, 0.8, 0.3];
        p.rho = vec![-80.0; 3];
        let x = Point::new(vec![0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = integrated_acquisition(&x, &p, &model, Some(1), AcquisitionKind::ExpectedImprovement, 1, &mut rng).unwrap();
        let theta = crate::preference::lengthscale_transform(&[0.3], &hyper.bounds).unwrap();
        let cov = crate::kernel::covariance(&pts, &hyper.kernel(theta).unwrap()).unwrap();
        let (mu, s2) = crate::kernel::gp_predict(&x, &pts, &cov, &[-0.5, 0.8]).unwrap();
        assert!((v.mean - ei_closed_form(mu, s2.sqrt(), 0.8)).abs() < 1e-12);
    }

    #[test]
    fn exploration_vanishes_at_training_points() {
        let (_, pts, cs, hyper) = toy();
        let model = Model::new(&pts, &cs, &hyper).unwrap();
        let p = VariationalParams::initial(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ens = PosteriorEnsemble::draw(&p, &model, None, 32, &mut rng).unwrap();
        for x in &pts {
            for s in &ens.samples {
                assert!(ens.integrand(s, x, AcquisitionKind::PureExploration) <= 2.0 * s.cov.jitter);
            }
        }
        assert!(matches!(
            ens.evaluate(&pts[0], AcquisitionKind::ExpectedImprovement),
            Err(Error::NoIncumbent)
        ));
    }

    #[test]
    fn independent_estimates_agree() {
        let (_, pts, cs, hyper) = toy();
        let model = Model::new(&pts, &cs, &hyper).unwrap();
        let p = VariationalParams::initial(2, 1);
        let x = Point::new(vec![0.6]);
        let kind = AcquisitionKind::ExpectedImprovement;
        let a = integrated_acquisition(&x, &p, &model, Some(1), kind, 512, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = integrated_acquisition(&x, &p, &model, Some(1), kind, 512, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let pooled = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 3.0 * pooled, "{a:?} {b:?}");
    }

    #[test]
    fn proposals_are_in_box_and_deterministic() {
        let (bbox, pts, cs, hyper) = toy();
        let model = Model::new(&pts, &cs, &hyper).unwrap();
        let rep = fit(&VariationalParams::initial(2, 1), &model, &FitConfig::default()).unwrap();
        let ctx = ProposalContext {
            bbox: &bbox,
            model,
            params: Some(&rep.params),
            best_index: Some(1),
        };
        let cfg = ProposalConfig {
            candidate_count: 128,
            posterior_samples: 32,
            seed: 5,
            ..ProposalConfig::default()
        };
        for kind in [
            AcquisitionKind::ExpectedImprovement,
            AcquisitionKind::PureExploration,
            AcquisitionKind::RandomSearch,
        ] {
            let a = propose_next(&ctx, kind, &cfg).unwrap();
            let b = propose_next(&ctx, kind, &cfg).unwrap();
            assert_eq!(a, b);
            assert!(bbox.contains(&a));
        }
        let no_best = ProposalContext { best_index: None, ..ctx };
        assert!(matches!(
            propose_next(&no_best, AcquisitionKind::ExpectedImprovement, &cfg),
            Err(Error::NoIncumbent)
        ));
    }
}

//! ARD squared-exponential kernel, covariance factorization and GP prediction
//! for a fixed draw of the latent function.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

/// A location in the search domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Per-coordinate equality within `tol`.
    pub fn approx_eq(&self, other: &Point, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Relative jitter added to the kernel diagonal before factorization.
pub const BASE_JITTER: f64 = 1e-6;
/// Relative jitter above which factorization is abandoned.
pub const MAX_JITTER: f64 = 1e-2;

/// Kernel hyperparameters: per-dimension length-scales, amplitude and the
/// starting diagonal jitter.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelHyper {
    pub lengthscales: Vec<f64>,
    pub amplitude: f64,
    pub jitter: f64,
}

impl KernelHyper {
    /// Builds hyperparameters with the default jitter of `1e-6 * amplitude`.
    pub fn new(lengthscales: Vec<f64>, amplitude: f64) -> Result<Self> {
        Self::with_jitter(lengthscales, amplitude, BASE_JITTER * amplitude)
    }

    pub fn with_jitter(lengthscales: Vec<f64>, amplitude: f64, jitter: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidHyper("no length-scales".into()));
        }
        if lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidHyper(format!(
                "length-scales must be positive and finite, got {lengthscales:?}"
            )));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::InvalidHyper(format!("amplitude {amplitude}")));
        }
        if !(jitter.is_finite() && jitter > 0.0) {
            return Err(Error::InvalidHyper(format!("jitter {jitter}")));
        }
        Ok(KernelHyper {
            lengthscales,
            amplitude,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    #[inline]
    pub(crate) fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let t = (x - y) / l;
            r2 += t * t;
        }
        self.amplitude * (-0.5 * r2).exp()
    }
}

/// ARD RBF kernel `amp * exp(-1/2 * sum_d (a_d - b_d)^2 / l_d^2)`.
pub fn rbf(a: &Point, b: &Point, hyper: &KernelHyper) -> Result<f64> {
    check_point(a, hyper.dim())?;
    check_point(b, hyper.dim())?;
    Ok(hyper.eval(a, b))
}

fn check_point(p: &Point, dim: usize) -> Result<()> {
    if p.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.dim(),
        });
    }
    if !p.is_finite() {
        return Err(Error::NonFinite("point coordinates"));
    }
    Ok(())
}

/// Kernel matrix over a point set together with its Cholesky factor.
///
/// `matrix` already includes the diagonal jitter that made the factorization
/// succeed.
#[derive(Clone, Debug)]
pub struct CovMatrix {
    pub hyper: KernelHyper,
    pub matrix: DMatrix<f64>,
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
}

impl CovMatrix {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Lower-triangular factor `L` with `L L^T = K + jitter I`.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `L v = rhs` in place.
    pub(crate) fn forward_solve(&self, rhs: &mut DVector<f64>) {
        let n = self.size();
        for i in 0..n {
            let mut acc = rhs[i];
            for k in 0..i {
                acc -= self.lower[(i, k)] * rhs[k];
            }
            rhs[i] = acc / self.lower[(i, i)];
        }
    }
}

/// Builds `K_ij = rbf(x_i, x_j)` and factorizes `K + jitter I`, escalating
/// the jitter tenfold up to `1e-2 * amplitude` before giving up.
pub fn covariance(points: &[Point], hyper: &KernelHyper) -> Result<CovMatrix> {
    if points.is_empty() {
        return Err(Error::Empty("covariance point set"));
    }
    for p in points {
        check_point(p, hyper.dim())?;
    }
    let n = points.len();
    let mut base = DMatrix::zeros(n, n);
    for i in 0..n {
        base[(i, i)] = hyper.amplitude;
        for j in 0..i {
            let v = hyper.eval(&points[i], &points[j]);
            base[(i, j)] = v;
            base[(j, i)] = v;
        }
    }
    factorize(base, hyper, points)
}

fn factorize(base: DMatrix<f64>, hyper: &KernelHyper, points: &[Point]) -> Result<CovMatrix> {
    let cap = MAX_JITTER * hyper.amplitude * (1.0 + 1e-12);
    let mut jitter = hyper.jitter;
    loop {
        let mut matrix = base.clone();
        for i in 0..matrix.nrows() {
            matrix[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            let lower = chol.l();
            if lower.diagonal().iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Ok(CovMatrix {
                    hyper: hyper.clone(),
                    matrix,
                    jitter,
                    chol,
                    lower,
                });
            }
        }
        jitter *= 10.0;
        if jitter > cap {
            let (first, second) = closest_pair(points, hyper);
            return Err(Error::Degenerate {
                jitter: jitter / 10.0,
                first,
                second,
            });
        }
    }
}

fn closest_pair(points: &[Point], hyper: &KernelHyper) -> (usize, usize) {
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..points.len() {
        for j in 0..i {
            let d: f64 = points[i]
                .iter()
                .zip(points[j].iter())
                .zip(&hyper.lengthscales)
                .map(|((a, b), l)| ((a - b) / l).powi(2))
                .sum();
            if d < best.2 {
                best = (j, i, d);
            }
        }
    }
    (best.0, best.1)
}

/// Precomputed GP posterior given latent values `f` at the training points.
#[derive(Clone, Debug)]
pub struct GpPredictor<'a> {
    points: &'a [Point],
    cov: &'a CovMatrix,
    alpha: DVector<f64>,
}

impl<'a> GpPredictor<'a> {
    pub fn new(points: &'a [Point], cov: &'a CovMatrix, f: &[f64]) -> Result<Self> {
        if f.len() != points.len() || cov.size() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: f.len(),
            });
        }
        let alpha = cov.solve(&DVector::from_column_slice(f));
        Ok(GpPredictor { points, cov, alpha })
    }

    /// Predictive mean and variance at `x`; the variance is clamped at zero.
    pub fn predict(&self, x: &Point) -> Result<(f64, f64)> {
        check_point(x, self.cov.hyper.dim())?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> (f64, f64) {
        predict_with(self.points, self.cov, &self.alpha, x)
    }
}

/// Mean and clamped variance at `x` given `alpha = K^-1 f`.
pub(crate) fn predict_with(points: &[Point], cov: &CovMatrix, alpha: &DVector<f64>, x: &[f64]) -> (f64, f64) {
    let hyper = &cov.hyper;
    let mut k = DVector::from_iterator(points.len(), points.iter().map(|p| hyper.eval(x, p)));
    let mean = k.dot(alpha);
    cov.forward_solve(&mut k);
    let var = hyper.amplitude - k.norm_squared();
    (mean, var.max(0.0))
}

/// GP predictive mean `k*^T K^-1 f` and variance `k(x*,x*) - k*^T K^-1 k*`.
pub fn gp_predict(x_star: &Point, points: &[Point], cov: &CovMatrix, f: &[f64]) -> Result<(f64, f64)> {
    GpPredictor::new(points, cov, f)?.predict(x_star)
}

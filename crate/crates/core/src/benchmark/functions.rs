//! Bounded synthetic test functions (minimization) with their usual domains.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::experiment::BoundingBox;

#[derive(Clone, Debug)]
pub struct TestFunction {
    pub name: &'static str,
    pub bbox: BoundingBox,
    /// Global minimum value, when known.
    pub minimum: Option<f64>,
    eval: fn(&[f64]) -> f64,
}

impl TestFunction {
    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        suite()
            .into_iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFunction(name.to_string()))
    }
}

fn bbox(bounds: &[(f64, f64)]) -> BoundingBox {
    BoundingBox::new(bounds.to_vec()).expect("static test-function box")
}

/// Branin-Hoo on `[-5, 10] x [0, 15]`.
pub fn branin(x: &[f64]) -> f64 {
    let (a, b, c) = (1.0, 5.1 / (4.0 * PI * PI), 5.0 / PI);
    let (r, s, t) = (6.0, 10.0, 1.0 / (8.0 * PI));
    a * (x[1] - b * x[0] * x[0] + c * x[0] - r).powi(2) + s * (1.0 - t) * x[0].cos() + s
}

/// Six-hump camel on `[-3, 3] x [-2, 2]`.
pub fn six_hump_camel(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    (4.0 - 2.1 * x1 * x1 + x1.powi(4) / 3.0) * x1 * x1 + x1 * x2 + (-4.0 + 4.0 * x2 * x2) * x2 * x2
}

/// Hartmann 3-D on `[0, 1]^3`.
pub fn hartmann3(x: &[f64]) -> f64 {
    const ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
    const A: [[f64; 3]; 4] = [
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
    ];
    const P: [[f64; 3]; 4] = [
        [0.3689, 0.1170, 0.2673],
        [0.4699, 0.4387, 0.7470],
        [0.1091, 0.8732, 0.5547],
        [0.0381, 0.5743, 0.8828],
    ];
    -(0..4)
        .map(|i| {
            let inner: f64 = (0..3).map(|j| A[i][j] * (x[j] - P[i][j]).powi(2)).sum();
            ALPHA[i] * (-inner).exp()
        })
        .sum::<f64>()
}

pub const SPHERE_CENTER: [f64; 2] = [1.0, -0.5];

/// Sphere centred at `(1, -0.5)` on `[-5, 5]^2`.
pub fn shifted_sphere(x: &[f64]) -> f64 {
    x.iter().zip(SPHERE_CENTER).map(|(v, c)| (v - c).powi(2)).sum()
}

pub fn suite() -> Vec<TestFunction> {
    vec![
        TestFunction {
            name: "branin",
            bbox: bbox(&[(-5.0, 10.0), (0.0, 15.0)]),
            minimum: Some(0.397_887_357_729_738),
            eval: branin,
        },
        TestFunction {
            name: "six-hump-camel",
            bbox: bbox(&[(-3.0, 3.0), (-2.0, 2.0)]),
            minimum: Some(-1.031_628_453_489_877),
            eval: six_hump_camel,
        },
        TestFunction {
            name: "hartmann3",
            bbox: bbox(&[(0.0, 1.0); 3]),
            minimum: Some(-3.862_782_147_820_76),
            eval: hartmann3,
        },
        TestFunction {
            name: "sphere",
            bbox: bbox(&[(-5.0, 5.0), (-5.0, 5.0)]),
            minimum: Some(0.0),
            eval: shifted_sphere,
        },
    ]
}

//! Request and response bodies.

use prefbo::{AcquisitionKind, BoundingBox, ModelHyper, Phase, Point};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Partial overrides of the default model hyperparameters.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub beta: Option<f64>,
    pub sigma_p: Option<f64>,
    pub amplitude: Option<f64>,
    pub lengthscale_bounds: Option<Vec<(f64, f64)>>,
}

impl HyperOverrides {
    pub fn apply(&self, bbox: &BoundingBox) -> ModelHyper {
        let mut h = ModelHyper::for_box(bbox);
        if let Some(b) = self.beta {
            h.beta = b;
        }
        if let Some(s) = self.sigma_p {
            h.sigma_p = s;
        }
        if let Some(a) = self.amplitude {
            h.amplitude = a;
        }
        if let Some(b) = &self.lengthscale_bounds {
            h.bounds = b.clone();
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub hyper: Option<HyperOverrides>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub acquisition: Option<AcquisitionKind>,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct Created {
    pub id: String,
    pub dim: usize,
    pub n_init: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct NextPair {
    pub pair: [Point; 2],
    /// 1-based index of the comparison being asked for.
    pub iteration: usize,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PostPreference {
    pub x1: Point,
    pub x2: Point,
    /// `-1` when x1 is worse, `0` when equivalent, `1` when x1 is better.
    pub order: i64,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct PreferenceAccepted {
    pub best: Point,
    pub n_points: usize,
    pub n_comparisons: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct HistoryEntry {
    pub x1: Point,
    pub x2: Point,
    pub order: i64,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct History {
    pub labels: Option<Vec<String>>,
    pub comparisons: Vec<HistoryEntry>,
    /// Incumbent after each comparison.
    pub best_trace: Vec<Point>,
    pub best: Option<Point>,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct SessionSummary {
    pub id: String,
    pub dim: usize,
    pub labels: Option<Vec<String>>,
    pub n_comparisons: usize,
    pub created: u64,
    pub updated: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Parses a JSON request body, mapping every failure to a 400 response.
pub fn parse_body<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

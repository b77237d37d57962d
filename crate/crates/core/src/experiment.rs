//! Sequential preference experiment: propose a pair, record the user's
//! judgment, refit, repeat.
//!
//! ```
//! use prefbo::{BoundingBox, ExperimentConfig, ExperimentState, Outcome};
//!
//! let bbox = BoundingBox::new(vec![(-5.0, 5.0), (0.0, 10.0)]).unwrap();
//! let mut exp = ExperimentState::new(bbox, None, ExperimentConfig::default()).unwrap();
//! let (a, b) = exp.find_next().unwrap();
//! exp.prefer(&a, &b, Outcome::FirstBetter).unwrap();
//! assert_eq!(exp.best_point(), Some(&a));
//! ```

use serde::{Deserialize, Serialize};

use crate::acquisition::{propose_next, AcquisitionKind, ProposalConfig, ProposalContext};
use crate::design::latin_hypercube;
use crate::error::{Error, Result};
use crate::kernel::Point;
use crate::preference::{ComparisonRecord, ModelHyper, Outcome};
use crate::rng::split_seed;
use crate::variational::{fit, FitConfig, Model, VariationalParams};

/// Per-coordinate tolerance under which two points are the same point.
pub const DEDUP_TOL: f64 = 1e-9;
pub const STATE_VERSION: u32 = 1;

/// Axis-aligned search domain.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    bounds: Vec<(f64, f64)>,
}

impl BoundingBox {
    /// Requires at least one dimension, finite `low <= high` everywhere and
    /// at least one dimension of positive width.
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidBox("no dimensions".into()));
        }
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidBox(format!("dimension {d} has non-finite bounds")));
            }
            if lo > hi {
                return Err(Error::InvalidBox(format!("dimension {d}: low {lo} > high {hi}")));
            }
        }
        if bounds.iter().all(|(lo, hi)| lo == hi) {
            return Err(Error::InvalidBox("every dimension has zero width".into()));
        }
        Ok(BoundingBox { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.bounds.iter().copied()
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.bounds.iter().map(|(lo, hi)| hi - lo)
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Inclusive membership test.
    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.iter()
                .zip(&self.bounds)
                .all(|(x, (lo, hi))| x.is_finite() && *x >= *lo && *x <= *hi)
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 2]> = self.bounds.iter().map(|&(a, b)| [a, b]).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<[f64; 2]>::deserialize(d)?;
        BoundingBox::new(rows.into_iter().map(|[a, b]| (a, b)).collect()).map_err(serde::de::Error::custom)
    }
}

/// When the variational posterior is refit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitSchedule {
    /// Warm-started refit after every recorded preference.
    #[default]
    EveryPrefer,
    /// Refit lazily, only when a model-based proposal needs it.
    OnDemand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub acquisition: AcquisitionKind,
    pub fit: FitConfig,
    pub proposal: ProposalConfig,
    pub refit: RefitSchedule,
    /// Master seed; every fit and proposal derives its stream from it.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            acquisition: AcquisitionKind::ExpectedImprovement,
            fit: FitConfig::default(),
            proposal: ProposalConfig::default(),
            refit: RefitSchedule::EveryPrefer,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initializing,
    Active,
}

/// Replays the incumbent update rule over a comparison history and returns
/// the incumbent after each comparison.
///
/// The first comparison seeds the incumbent with its winner (the first point
/// on a tie). Afterwards a point becomes the incumbent only by beating it;
/// ties keep the incumbent.
pub fn replay_best(comparisons: &[ComparisonRecord]) -> Vec<usize> {
    let mut best: Option<usize> = None;
    comparisons
        .iter()
        .map(|c| {
            let winner = match c.outcome {
                Outcome::FirstBetter => Some(c.i),
                Outcome::FirstWorse => Some(c.j),
                Outcome::Equivalent => None,
            };
            let next = match best {
                None => winner.unwrap_or(c.i),
                Some(b) => match winner {
                    Some(w) if w != b && (c.i == b || c.j == b) => w,
                    _ => b,
                },
            };
            best = Some(next);
            next
        })
        .collect()
}

/// State of one preference experiment.
#[derive(Clone, Debug)]
pub struct ExperimentState {
    bbox: BoundingBox,
    hyper: ModelHyper,
    config: ExperimentConfig,
    points: Vec<Point>,
    comparisons: Vec<ComparisonRecord>,
    best_index: Option<usize>,
    params: Option<VariationalParams>,
    design: Vec<Point>,
    design_cursor: usize,
    pending: Option<(Point, Point)>,
    counter: u64,
}

impl ExperimentState {
    /// Starts an experiment over `bbox` with a precomputed `2D + 1` point
    /// Latin hypercube design. `hyper` defaults to [`ModelHyper::for_box`].
    pub fn new(bbox: BoundingBox, hyper: Option<ModelHyper>, config: ExperimentConfig) -> Result<Self> {
        let hyper = hyper.unwrap_or_else(|| ModelHyper::for_box(&bbox));
        hyper.validate()?;
        if hyper.dim() != bbox.dim() {
            return Err(Error::DimensionMismatch {
                expected: bbox.dim(),
                got: hyper.dim(),
            });
        }
        config.fit.validate()?;
        config.proposal.validate()?;
        let design = latin_hypercube(2 * bbox.dim() + 1, &bbox, config.seed);
        Ok(ExperimentState {
            bbox,
            hyper,
            config,
            points: Vec::new(),
            comparisons: Vec::new(),
            best_index: None,
            params: None,
            design,
            design_cursor: 0,
            pending: None,
            counter: 0,
        })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn hyper(&self) -> &ModelHyper {
        &self.hyper
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn comparisons(&self) -> &[ComparisonRecord] {
        &self.comparisons
    }

    pub fn best_index(&self) -> Option<usize> {
        self.best_index
    }

    pub fn best_point(&self) -> Option<&Point> {
        self.best_index.map(|i| &self.points[i])
    }

    pub fn params(&self) -> Option<&VariationalParams> {
        self.params.as_ref()
    }

    pub fn design(&self) -> &[Point] {
        &self.design
    }

    pub fn pending(&self) -> Option<&(Point, Point)> {
        self.pending.as_ref()
    }

    /// Phase of the next comparison to be recorded. An outstanding design
    /// pair still counts as initialization.
    pub fn phase(&self) -> Phase {
        let design_pending = self
            .pending
            .as_ref()
            .is_some_and(|(a, _)| self.design.iter().any(|d| d.approx_eq(a, DEDUP_TOL)));
        if self.design_cursor < self.design.len() || design_pending {
            Phase::Initializing
        } else {
            Phase::Active
        }
    }

    /// Incumbent index after each recorded comparison.
    pub fn best_trace(&self) -> Vec<usize> {
        replay_best(&self.comparisons)
    }

    fn next_seed(&mut self) -> u64 {
        let s = split_seed(self.config.seed, self.counter);
        self.counter += 1;
        s
    }

    /// Next pair to compare. Repeated calls without an intervening
    /// [`prefer`](Self::prefer) return the same pair.
    ///
    /// While initializing, design points are paired with the incumbent (the
    /// very first call pairs the first two design points). Afterwards the
    /// acquisition proposal is paired with the incumbent.
    pub fn find_next(&mut self) -> Result<(Point, Point)> {
        if let Some(pair) = &self.pending {
            return Ok(pair.clone());
        }
        let pair = match self.phase() {
            Phase::Initializing => {
                let k = self.design_cursor;
                match self.best_point().cloned() {
                    Some(best) if k > 0 => {
                        self.design_cursor += 1;
                        (self.design[k].clone(), best)
                    }
                    _ if k + 1 < self.design.len() => {
                        self.design_cursor += 2;
                        (self.design[k].clone(), self.design[k + 1].clone())
                    }
                    _ => {
                        self.design_cursor += 1;
                        (self.design[k].clone(), self.design[k - 1].clone())
                    }
                }
            }
            Phase::Active => {
                let best = self.best_point().cloned().ok_or(Error::NoIncumbent)?;
                (self.propose()?, best)
            }
        };
        self.pending = Some(pair.clone());
        Ok(pair)
    }

    fn propose(&mut self) -> Result<Point> {
        let kind = self.config.acquisition;
        if kind.uses_model() && self.params.is_none() {
            self.refit()?;
        }
        let proposal = ProposalConfig {
            seed: self.next_seed(),
            ..self.config.proposal.clone()
        };
        let model = Model::new(&self.points, &self.comparisons, &self.hyper)?;
        let ctx = ProposalContext {
            bbox: &self.bbox,
            model,
            params: self.params.as_ref(),
            best_index: self.best_index,
        };
        propose_next(&ctx, kind, &proposal)
    }

    fn intern(&mut self, p: &Point) -> usize {
        match self.points.iter().position(|q| q.approx_eq(p, DEDUP_TOL)) {
            Some(i) => i,
            None => {
                self.points.push(p.clone());
                self.points.len() - 1
            }
        }
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.dim(),
            });
        }
        if !self.bbox.contains(p) {
            return Err(Error::OutOfBox(p.0.clone()));
        }
        Ok(())
    }

    /// Records that `x1` compares to `x2` as `order`, updates the incumbent
    /// and refits the model per the refit schedule.
    ///
    /// `x1` and `x2` are normally the pair last returned by
    /// [`find_next`](Self::find_next), but any in-box points are accepted.
    pub fn prefer(&mut self, x1: &Point, x2: &Point, order: Outcome) -> Result<()> {
        self.check_point(x1)?;
        self.check_point(x2)?;
        if x1.approx_eq(x2, DEDUP_TOL) {
            return Err(Error::IdenticalPoints);
        }
        let i = self.intern(x1);
        let j = self.intern(x2);
        self.comparisons.push(ComparisonRecord::new(i, j, order)?);
        self.best_index = replay_best(&self.comparisons).last().copied();
        self.pending = None;
        if let Some(p) = &self.params {
            self.params = Some(p.extended(self.points.len()));
        }
        if self.config.refit == RefitSchedule::EveryPrefer && self.config.acquisition.uses_model() {
            self.refit()?;
        }
        Ok(())
    }

    /// [`prefer`](Self::prefer) with the `-1 / 0 / 1` wire encoding.
    pub fn prefer_order(&mut self, x1: &Point, x2: &Point, order: i64) -> Result<()> {
        self.prefer(x1, x2, Outcome::try_from(order)?)
    }

    /// Warm-started variational refit on the current data.
    pub fn refit(&mut self) -> Result<()> {
        if self.points.is_empty() {
            return Ok(());
        }
        let init = match &self.params {
            Some(p) if p.n_points() == self.points.len() => p.clone(),
            Some(p) => p.extended(self.points.len()),
            None => VariationalParams::initial(self.points.len(), self.dim()),
        };
        let cfg = FitConfig {
            seed: self.next_seed(),
            ..self.config.fit.clone()
        };
        let model = Model::new(&self.points, &self.comparisons, &self.hyper)?;
        let report = fit(&init, &model, &cfg)?;
        self.params = Some(report.params);
        Ok(())
    }

    pub fn to_document(&self) -> StateDocument {
        StateDocument {
            version: STATE_VERSION,
            bbox: self.bbox.clone(),
            hyper: self.hyper.clone(),
            config: self.config.clone(),
            points: self.points.clone(),
            comparisons: self.comparisons.clone(),
            best_index: self.best_index,
            rng_state: RngState {
                seed: self.config.seed,
                counter: self.counter,
            },
            lambda: self.params.as_ref().map(|p| LambdaDoc {
                mu: p.mu.clone(),
                rho: p.rho.clone(),
            }),
            design: self.design.clone(),
            design_cursor: self.design_cursor,
            pending: self.pending.clone().map(|(a, b)| [a, b]),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    /// Parses and validates a state document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StateDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: StateDocument) -> Result<Self> {
        let invalid = |m: String| Err(Error::InvalidState(m));
        if doc.version != STATE_VERSION {
            return invalid(format!("unsupported version {}", doc.version));
        }
        doc.hyper.validate()?;
        doc.config.fit.validate()?;
        doc.config.proposal.validate()?;
        let dim = doc.bbox.dim();
        if doc.hyper.dim() != dim {
            return invalid(format!("hyperparameters are {}-dimensional, box is {dim}", doc.hyper.dim()));
        }
        if doc.rng_state.seed != doc.config.seed {
            return invalid("rng seed does not match config seed".into());
        }
        for p in doc.points.iter().chain(&doc.design) {
            if !doc.bbox.contains(p) {
                return invalid(format!("point {:?} is outside the box", p.0));
            }
        }
        for (a, p) in doc.points.iter().enumerate() {
            if doc.points[..a].iter().any(|q| q.approx_eq(p, DEDUP_TOL)) {
                return invalid(format!("point {a} duplicates an earlier point"));
            }
        }
        for c in &doc.comparisons {
            c.check(doc.points.len())?;
        }
        let replayed = replay_best(&doc.comparisons).last().copied();
        if replayed != doc.best_index {
            return invalid(format!(
                "best index {:?} disagrees with history replay {:?}",
                doc.best_index, replayed
            ));
        }
        if doc.design.len() != 2 * dim + 1 || doc.design_cursor > doc.design.len() {
            return invalid("initial design has the wrong size".into());
        }
        if let Some([a, b]) = &doc.pending {
            if a.dim() != dim || b.dim() != dim || !a.is_finite() || !b.is_finite() {
                return invalid("pending pair has the wrong dimension".into());
            }
        }
        let params = match doc.lambda {
            Some(l) => Some(VariationalParams::from_parts(l.mu, l.rho, doc.points.len(), dim)?),
            None => None,
        };
        Ok(ExperimentState {
            bbox: doc.bbox,
            hyper: doc.hyper,
            config: doc.config,
            points: doc.points,
            comparisons: doc.comparisons,
            best_index: doc.best_index,
            params,
            design: doc.design,
            design_cursor: doc.design_cursor,
            pending: doc.pending.map(|[a, b]| (a, b)),
            counter: doc.rng_state.counter,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaDoc {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Serialized experiment state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub version: u32,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub hyper: ModelHyper,
    pub config: ExperimentConfig,
    pub points: Vec<Point>,
    pub comparisons: Vec<ComparisonRecord>,
    pub best_index: Option<usize>,
    pub rng_state: RngState,
    pub lambda: Option<LambdaDoc>,
    pub design: Vec<Point>,
    pub design_cursor: usize,
    pub pending: Option<[Point; 2]>,
}

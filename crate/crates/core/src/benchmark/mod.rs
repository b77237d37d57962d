//! Synthetic benchmark protocol: a simulated user answers comparisons from a
//! test function, and the harness records the true objective value of the
//! incumbent after every comparison.

mod functions;
mod trace;

use rayon::prelude::*;
use std::collections::BTreeMap;

pub use self::functions::{suite, TestFunction};
pub use self::trace::{read_summary, read_trace, write_plotdata, write_summary, write_trace};
pub use crate::design::latin_hypercube;

use crate::acquisition::AcquisitionKind;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, ExperimentState};
use crate::kernel::Point;
use crate::preference::Outcome;
use crate::rng::split_seed;

/// Simulated user for a minimization problem: equivalent when the values are
/// within `eps`, otherwise the lower value is preferred.
pub fn simulated_pref(f: &TestFunction, x1: &Point, x2: &Point, eps: f64) -> Outcome {
    let (a, b) = (f.evaluate(x1), f.evaluate(x2));
    if (a - b).abs() <= eps {
        Outcome::Equivalent
    } else if a < b {
        Outcome::FirstBetter
    } else {
        Outcome::FirstWorse
    }
}

/// Best objective value seen so far in one repeat.
///
/// `iteration` counts objective evaluations, so the `2D + 1` design points
/// occupy iterations `1..=2D+1` and proposal `k` lands on `2D + 1 + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub strategy: AcquisitionKind,
    pub function: String,
    pub eps: f64,
    pub repeat: usize,
    pub iteration: usize,
    pub best_value: f64,
}

/// Runs `repeats` independent repeats of `strategy` on `function`.
pub fn run_benchmark(
    function: &TestFunction,
    strategy: AcquisitionKind,
    eps: f64,
    iterations: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<TraceRow>> {
    run_benchmark_with(function, strategy, eps, iterations, repeats, seed, &ExperimentConfig::default())
}

/// [`run_benchmark`] with explicit fit and proposal settings. Repeats run in
/// parallel; each uses a seed split from `seed` by repeat index.
pub fn run_benchmark_with(
    function: &TestFunction,
    strategy: AcquisitionKind,
    eps: f64,
    iterations: usize,
    repeats: usize,
    seed: u64,
    base: &ExperimentConfig,
) -> Result<Vec<TraceRow>> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be >= 0, got {eps}")));
    }
    let per_repeat = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let cfg = ExperimentConfig {
                acquisition: strategy,
                seed: split_seed(seed, r as u64),
                ..base.clone()
            };
            run_repeat(function, eps, iterations, r, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_repeat.into_iter().flatten().collect())
}

/// One repeat: design points compared sequentially against the running best,
/// then `iterations` proposal-versus-incumbent comparisons.
pub fn run_repeat(
    function: &TestFunction,
    eps: f64,
    iterations: usize,
    repeat: usize,
    config: ExperimentConfig,
) -> Result<Vec<TraceRow>> {
    let strategy = config.acquisition;
    let mut exp = ExperimentState::new(function.bbox.clone(), None, config)?;
    let row = |iteration, best_value| TraceRow {
        strategy,
        function: function.name.to_string(),
        eps,
        repeat,
        iteration,
        best_value,
    };
    let n_init = exp.design().len();
    let mut rows = Vec::with_capacity(n_init + iterations);
    rows.push(row(1, function.evaluate(&exp.design()[0])));
    for k in 0..(n_init - 1 + iterations) {
        let (a, b) = exp.find_next()?;
        let outcome = simulated_pref(function, &a, &b, eps);
        exp.prefer(&a, &b, outcome)?;
        let best = exp.best_point().ok_or(Error::NoIncumbent)?;
        rows.push(row(k + 2, function.evaluate(best)));
    }
    Ok(rows)
}

/// Linear-interpolation quantile of sorted data: position `(n - 1) p`
/// between the bracketing order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and interquartile range across repeats at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub strategy: AcquisitionKind,
    pub function: String,
    pub eps: f64,
    pub iteration: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub repeats: usize,
}

type GroupKey = (AcquisitionKind, String, u64);

/// Per-iteration median / quartiles for each `(strategy, function, eps)`.
///
/// Every repeat within a group must cover the same iterations.
pub fn summarize(rows: &[TraceRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::Empty("trace rows"));
    }
    let mut groups: BTreeMap<GroupKey, BTreeMap<usize, BTreeMap<usize, f64>>> = BTreeMap::new();
    for r in rows {
        let key = (r.strategy, r.function.clone(), r.eps.to_bits());
        let per_repeat = groups.entry(key).or_default().entry(r.repeat).or_default();
        if per_repeat.insert(r.iteration, r.best_value).is_some() {
            return Err(Error::MixedGroup(format!(
                "{}/{}/{}: repeat {} has iteration {} twice",
                r.strategy, r.function, r.eps, r.repeat, r.iteration
            )));
        }
    }
    let mut out = Vec::new();
    for ((strategy, function, eps_bits), repeats) in groups {
        let eps = f64::from_bits(eps_bits);
        let label = format!("{strategy}/{function}/{eps}");
        let mut iter = repeats.values();
        let first: Vec<usize> = iter.next().expect("non-empty group").keys().copied().collect();
        if iter.any(|r| !r.keys().copied().eq(first.iter().copied())) {
            return Err(Error::MixedGroup(format!("{label}: repeats cover different iterations")));
        }
        for &it in &first {
            let mut vals: Vec<f64> = repeats.values().map(|r| r[&it]).collect();
            vals.sort_by(f64::total_cmp);
            out.push(SummaryRow {
                strategy,
                function: function.clone(),
                eps,
                iteration: it,
                median: quantile(&vals, 0.5),
                q25: quantile(&vals, 0.25),
                q75: quantile(&vals, 0.75),
                repeats: vals.len(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variational::FitConfig;

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            fit: FitConfig {
                max_steps: 200,
                report_samples: 0,
                ..FitConfig::default()
            },
            proposal: crate::acquisition::ProposalConfig {
                candidate_count: 64,
                posterior_samples: 8,
                refinement_steps: 8,
                ..Default::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn oracle_cases() {
        let f = TestFunction::by_name("sphere").unwrap();
        // sphere values 1.0 and 1.05 / 2.0 around the centre
        let c = functions::SPHERE_CENTER;
        let p = |dx: f64| Point::new(vec![c[0] + dx, c[1]]);
        let (one, near, two) = (p(1.0), p(1.05f64.sqrt()), p(2f64.sqrt()));
        assert_eq!(simulated_pref(&f, &one, &near, 0.1), Outcome::Equivalent);
        assert_eq!(simulated_pref(&f, &one, &two, 0.001), Outcome::FirstBetter);
        assert_eq!(simulated_pref(&f, &two, &one, 0.001), Outcome::FirstWorse);
        assert_eq!(simulated_pref(&f, &one, &one, 0.0), Outcome::Equivalent);
    }

    #[test]
    fn oracle_is_antisymmetric() {
        let f = TestFunction::by_name("branin").unwrap();
        let pts = latin_hypercube(40, &f.bbox, 3);
        for a in &pts {
            for b in &pts {
                for eps in [0.0, 0.001, 0.1, 5.0] {
                    assert_eq!(simulated_pref(&f, a, b, eps), simulated_pref(&f, b, a, eps).reversed());
                }
            }
            assert_eq!(simulated_pref(&f, a, a, 0.0), Outcome::Equivalent);
        }
    }

    #[test]
    fn quantiles_of_one_to_ten() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.5), 5.5);
        assert_eq!(quantile(&v, 0.25), 3.25);
        assert_eq!(quantile(&v, 0.75), 7.75);
        assert_eq!(quantile(&[4.0], 0.25), 4.0);
    }

    fn rows(strategy: AcquisitionKind, values: &[&[f64]]) -> Vec<TraceRow> {
        values
            .iter()
            .enumerate()
            .flat_map(|(r, trace)| {
                trace.iter().enumerate().map(move |(i, &v)| TraceRow {
                    strategy,
                    function: "sphere".into(),
                    eps: 0.1,
                    repeat: r,
                    iteration: i + 1,
                    best_value: v,
                })
            })
            .collect()
    }

    #[test]
    fn summary_statistics() {
        let trace: &[f64] = &[3.0, 2.0, 2.0, 0.5];
        let same = rows(AcquisitionKind::RandomSearch, &[trace; 10]);
        for s in summarize(&same).unwrap() {
            let v = trace[s.iteration - 1];
            assert_eq!((s.median, s.q25, s.q75, s.repeats), (v, v, v, 10));
        }
        let single = rows(AcquisitionKind::RandomSearch, &[trace]);
        assert!(summarize(&single).unwrap().iter().all(|s| s.median == s.q25 && s.q25 == s.q75));

        let spread: Vec<Vec<f64>> = (1..=10).map(|k| vec![k as f64]).collect();
        let refs: Vec<&[f64]> = spread.iter().map(|v| v.as_slice()).collect();
        let s = summarize(&rows(AcquisitionKind::ExpectedImprovement, &refs)).unwrap();
        assert_eq!((s[0].median, s[0].q25, s[0].q75), (5.5, 3.25, 7.75));
    }

    #[test]
    fn summary_rejects_ragged_groups() {
        assert!(matches!(summarize(&[]), Err(Error::Empty(_))));
        let ragged = rows(AcquisitionKind::RandomSearch, &[&[1.0, 0.5], &[1.0]]);
        assert!(matches!(summarize(&ragged), Err(Error::MixedGroup(_))));
        let mut dup = rows(AcquisitionKind::RandomSearch, &[&[1.0]]);
        dup.push(dup[0].clone());
        assert!(matches!(summarize(&dup), Err(Error::MixedGroup(_))));
    }

    #[test]
    fn random_benchmark_structure() {
        let f = TestFunction::by_name("branin").unwrap();
        let out = run_benchmark(&f, AcquisitionKind::RandomSearch, 0.001, 40, 10, 7).unwrap();
        assert_eq!(out.len(), 10 * (40 + 2 * 2 + 1));
        for r in 0..10 {
            let trace: Vec<&TraceRow> = out.iter().filter(|t| t.repeat == r).collect();
            assert!(trace.windows(2).all(|w| w[1].best_value <= w[0].best_value));
            assert_eq!(trace.last().unwrap().iteration, 45);
        }
        let again = run_benchmark(&f, AcquisitionKind::RandomSearch, 0.001, 40, 10, 7).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn model_based_benchmark_is_monotone_and_reproducible() {
        let f = TestFunction::by_name("sphere").unwrap();
        for kind in [AcquisitionKind::ExpectedImprovement, AcquisitionKind::PureExploration] {
            let a = run_benchmark_with(&f, kind, 0.1, 4, 2, 11, &quick_config()).unwrap();
            let b = run_benchmark_with(&f, kind, 0.1, 4, 2, 11, &quick_config()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 2 * (4 + 5));
            for r in 0..2 {
                let t: Vec<f64> = a.iter().filter(|x| x.repeat == r).map(|x| x.best_value).collect();
                assert!(t.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }

    #[test]
    fn rejects_negative_tolerance() {
        let f = TestFunction::by_name("sphere").unwrap();
        assert!(run_benchmark(&f, AcquisitionKind::RandomSearch, -1.0, 1, 1, 0).is_err());
    }
}

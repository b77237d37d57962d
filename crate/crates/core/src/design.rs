//! Space-filling and uniform sampling over a bounding box.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::experiment::BoundingBox;
use crate::kernel::Point;
use crate::rng::{stream_rng, Stream};

/// Latin hypercube design of `n` points: in every dimension each of the `n`
/// equal-width strata `[low + k w/n, low + (k+1) w/n)` holds exactly one point.
pub fn latin_hypercube(n: usize, bbox: &BoundingBox, seed: u64) -> Vec<Point> {
    let mut rng = stream_rng(seed, Stream::Design, n as u64);
    latin_hypercube_with(n, bbox, &mut rng)
}

pub(crate) fn latin_hypercube_with(n: usize, bbox: &BoundingBox, rng: &mut impl Rng) -> Vec<Point> {
    let mut coords = vec![vec![0.0; bbox.dim()]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (d, (lo, hi)) in bbox.iter().enumerate() {
        strata.shuffle(rng);
        let w = hi - lo;
        for (row, &k) in coords.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            // keep the value inside its stratum despite rounding
            let v = lo + (k as f64 + u) * w / n as f64;
            let upper = lo + (k as f64 + 1.0) * w / n as f64;
            row[d] = if w > 0.0 && v >= upper { upper.next_down() } else { v }.clamp(lo, hi);
        }
    }
    coords.into_iter().map(Point::new).collect()
}

/// Uniform draw from the box.
pub fn uniform_point(bbox: &BoundingBox, rng: &mut impl Rng) -> Point {
    Point::new(
        bbox.iter()
            .map(|(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect(),
    )
}

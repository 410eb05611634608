//! Deliberately naive reference implementations for tests.
//!
//! Nothing here shares code with `shelfwatch-core`: every quantity is
//! recomputed from raw coordinates with full sorts and plain loops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// k-distance of reference point `i` among the other reference points.
pub fn k_distance_of_member(reference: &[Vec<f64>], k: usize, i: usize) -> f64 {
    let mut ds = Vec::new();
    for j in 0..reference.len() {
        if j != i {
            ds.push(distance(&reference[i], &reference[j]));
        }
    }
    sorted(ds)[k - 1]
}

/// Local reachability density of reference point `i`; `INFINITY` when its
/// k-distance is zero.
pub fn lrd_of_member(reference: &[Vec<f64>], k: usize, i: usize) -> f64 {
    let kd = k_distance_of_member(reference, k, i);
    if kd == 0.0 {
        return f64::INFINITY;
    }
    let mut count = 0.0;
    let mut sum = 0.0;
    for o in 0..reference.len() {
        if o == i {
            continue;
        }
        let d = distance(&reference[i], &reference[o]);
        if d <= kd {
            count += 1.0;
            let kd_o = k_distance_of_member(reference, k, o);
            sum += if kd_o > d { kd_o } else { d };
        }
    }
    count / sum
}

/// LOF of an outside query against `reference`.
///
/// Degenerate densities: `inf / inf` is 1, `finite / inf` is 0, and an
/// infinite neighbour density over a finite query density gives `f64::MAX`.
pub fn lof(reference: &[Vec<f64>], k: usize, query: &[f64]) -> f64 {
    let to_query: Vec<f64> = reference.iter().map(|p| distance(p, query)).collect();
    let kd_q = sorted(to_query.clone())[k - 1];
    let hood: Vec<usize> = (0..reference.len()).filter(|&j| to_query[j] <= kd_q).collect();
    let lrd_q = if kd_q == 0.0 {
        f64::INFINITY
    } else {
        let mut sum = 0.0;
        for &o in &hood {
            let kd_o = k_distance_of_member(reference, k, o);
            sum += if kd_o > to_query[o] { kd_o } else { to_query[o] };
        }
        hood.len() as f64 / sum
    };
    let mut total = 0.0;
    for &o in &hood {
        let lrd_o = lrd_of_member(reference, k, o);
        total += match (lrd_o.is_infinite(), lrd_q.is_infinite()) {
            (true, true) => 1.0,
            (false, true) => 0.0,
            (true, false) => return f64::MAX,
            (false, false) => lrd_o / lrd_q,
        };
    }
    total / hood.len() as f64
}

/// kNN vote by exhaustive sort. Labels are class indices in `0..classes`.
///
/// Neighbours are ordered by `(distance, sample index)`. A vote tie goes
/// to the smaller mean neighbour distance, then the lower class index.
pub fn knn(train: &[(Vec<f64>, usize)], classes: usize, k: usize, query: &[f64]) -> usize {
    let mut all: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, (x, _))| (distance(x, query), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; classes];
    let mut dist_sum = vec![0.0f64; classes];
    for &(d, i) in &all[..k] {
        votes[train[i].1] += 1;
        dist_sum[train[i].1] += d;
    }
    let top = *votes.iter().max().unwrap();
    let tied: Vec<usize> = (0..classes).filter(|&c| votes[c] == top).collect();
    let mut best = tied[0];
    for &c in &tied[1..] {
        let mean_c = dist_sum[c] / votes[c] as f64;
        let mean_b = dist_sum[best] / votes[best] as f64;
        if mean_c < mean_b {
            best = c;
        }
    }
    best
}

/// `n` points with coordinates uniform in `[-1, 1)`.
pub fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Vertices of a regular polygon in the plane.
pub fn regular_polygon(n: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// The `2^dim` vertices of the cube `{0, side}^dim`.
pub fn hypercube(dim: usize, side: f64) -> Vec<Vec<f64>> {
    (0..1usize << dim)
        .map(|m| (0..dim).map(|b| if m >> b & 1 == 1 { side } else { 0.0 }).collect())
        .collect()
}

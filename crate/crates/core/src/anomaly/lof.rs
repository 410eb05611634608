//! Local Outlier Factor of a query point against a reference set.
//!
//! For a point `p` with neighbour count `k`:
//!
//! - `k_distance(p)`: distance to the k-th nearest reference point;
//! - `N_k(p)`: every reference point within `k_distance(p)` (more than `k`
//!   on ties);
//! - `reach(p, o) = max(k_distance(o), d(p, o))`;
//! - `lrd(p) = |N_k(p)| / sum_{o in N_k(p)} reach(p, o)`;
//! - `LOF(p) = mean_{o in N_k(p)} lrd(o) / lrd(p)`.
//!
//! Reference points never count themselves as neighbours, and the query is
//! never part of a reference point's neighbourhood.
//!
//! Duplicates: a point whose k-distance is zero has `lrd = +inf`. In the
//! ratio, `inf / inf` counts as 1 and `finite / inf` as 0. A finite query
//! next to an infinitely dense neighbour saturates the score at the
//! largest finite value of the scalar type, so scores are always finite.

use crate::scalar::Scalar;

use super::AnomalyError;

/// Pairwise distances between reference points, addressed `0..len()`.
pub(crate) trait DistanceTable<T> {
    fn len(&self) -> usize;
    fn distance(&self, i: usize, j: usize) -> T;
}

/// Dense symmetric distance matrix for a one-off reference set.
struct DenseTable<T> {
    n: usize,
    d: Vec<T>,
}

impl<T: Scalar> DenseTable<T> {
    fn build<P: AsRef<[T]>>(points: &[P]) -> Self {
        let n = points.len();
        let mut d = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = crate::scalar::euclidean(points[i].as_ref(), points[j].as_ref());
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }
}

impl<T: Scalar> DistanceTable<T> for DenseTable<T> {
    fn len(&self) -> usize {
        self.n
    }

    fn distance(&self, i: usize, j: usize) -> T {
        self.d[i * self.n + j]
    }
}

/// LOF of `query` against `reference`. Needs at least `k + 1` reference
/// points and `k >= 1`.
pub fn lof_score<T: Scalar, P: AsRef<[T]>>(reference: &[P], k: usize, query: &[T]) -> Result<T, AnomalyError> {
    check_shape(reference.len(), k)?;
    if let Some(bad) = reference.iter().position(|p| p.as_ref().len() != query.len()) {
        return Err(AnomalyError::DimensionMismatch {
            expected: query.len(),
            found: reference[bad].as_ref().len(),
        });
    }
    let table = DenseTable::build(reference);
    let to_query: Vec<T> = reference
        .iter()
        .map(|p| crate::scalar::euclidean(p.as_ref(), query))
        .collect();
    Ok(score_with_table(&table, k, &to_query))
}

pub(crate) fn check_shape(n: usize, k: usize) -> Result<(), AnomalyError> {
    if k == 0 {
        return Err(AnomalyError::InvalidConfig("neighbor count k must be >= 1".into()));
    }
    if n < k + 1 {
        return Err(AnomalyError::InsufficientData { have: n, need: k + 1 });
    }
    Ok(())
}

/// Scores a query given its distances to every reference point.
pub(crate) fn score_with_table<T: Scalar, D: DistanceTable<T>>(table: &D, k: usize, to_query: &[T]) -> T {
    let mut ctx = Neighborhoods {
        table,
        k,
        k_distance: vec![None; table.len()],
    };

    let query_kdist = kth_smallest(to_query.to_vec(), k);
    let query_hood: Vec<usize> = (0..to_query.len()).filter(|&j| to_query[j] <= query_kdist).collect();
    let query_lrd = if query_kdist == T::zero() {
        None
    } else {
        let reach: T = query_hood.iter().map(|&o| ctx.k_distance(o).max(to_query[o])).sum();
        Some(T::from_usize_lossy(query_hood.len()) / reach)
    };

    let mut total = T::zero();
    for &o in &query_hood {
        let ratio = match (ctx.lrd(o), query_lrd) {
            (Some(lo), Some(lq)) => lo / lq,
            (None, None) => T::one(),
            (Some(_), None) => T::zero(),
            (None, Some(_)) => return T::max_value(),
        };
        total += ratio;
    }
    let score = total / T::from_usize_lossy(query_hood.len());
    if score.is_finite() {
        score
    } else {
        T::max_value()
    }
}

struct Neighborhoods<'a, T, D> {
    table: &'a D,
    k: usize,
    k_distance: Vec<Option<T>>,
}

impl<T: Scalar, D: DistanceTable<T>> Neighborhoods<'_, T, D> {
    fn k_distance(&mut self, p: usize) -> T {
        if let Some(d) = self.k_distance[p] {
            return d;
        }
        let table = self.table;
        let others = (0..table.len())
            .filter(|&j| j != p)
            .map(|j| table.distance(p, j))
            .collect();
        let d = kth_smallest(others, self.k);
        self.k_distance[p] = Some(d);
        d
    }

    /// `None` stands for an infinite density (zero k-distance).
    fn lrd(&mut self, p: usize) -> Option<T> {
        let kd = self.k_distance(p);
        if kd == T::zero() {
            return None;
        }
        let mut count = 0usize;
        let mut reach = T::zero();
        for o in 0..self.table.len() {
            if o == p {
                continue;
            }
            let d = self.table.distance(p, o);
            if d <= kd {
                count += 1;
                reach += self.k_distance(o).max(d);
            }
        }
        Some(T::from_usize_lossy(count) / reach)
    }
}

/// The k-th smallest value (1-based) of `values`.
fn kth_smallest<T: Scalar>(mut values: Vec<T>, k: usize) -> T {
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite distances"));
    *kth
}

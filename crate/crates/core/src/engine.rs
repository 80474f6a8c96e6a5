//! Core Lloyd's k-means: assignment, center update, WCSS, and the iteration
//! loop with a center-shift stopping criterion and per-iteration tracing.
//!
//! All point-range reductions run over fixed-size chunks combined in
//! ascending order, so results are bitwise identical for any worker count.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::trace::IterationTrace;
use rayon::prelude::*;
use std::fmt;
use std::ops::Range;

/// Points per reduction chunk. Fixed independently of the worker count;
/// this is what makes parallel runs reproduce single-threaded results.
const POINT_CHUNK: usize = 8192;

/// k x d matrix of cluster centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Centers {
    coords: Vec<f64>,
    k: usize,
    d: usize,
}

impl Centers {
    /// Builds centers from a flat row-major buffer of `k * d` finite values.
    pub fn new(coords: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidData("center dimension must be at least 1".into()));
        }
        if coords.is_empty() || coords.len() % d != 0 {
            return Err(Error::InvalidData(format!(
                "center buffer of {} values does not hold a whole number of {d}-vectors",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite center coordinate".into()));
        }
        let k = coords.len() / d;
        Ok(Self { coords, k, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("need at least one center".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidData("center rows differ in length".into()));
        }
        Self::new(rows.concat(), d)
    }

    fn from_parts(coords: Vec<f64>, k: usize, d: usize) -> Self {
        debug_assert_eq!(coords.len(), k * d);
        Self { coords, k, d }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[f64] {
        &self.coords[c * self.d..(c + 1) * self.d]
    }

    /// Flat row-major view of all coordinates.
    pub fn values(&self) -> &[f64] {
        &self.coords
    }

    /// True when every coordinate is bit-identical, the comparison used by
    /// determinism and hand-off checks.
    pub fn bits_eq(&self, other: &Centers) -> bool {
        self.k == other.k
            && self.d == other.d
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Per-point cluster labels in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    labels: Vec<u32>,
    k: usize,
}

impl Assignment {
    pub fn new(labels: Vec<u32>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidData("k must be at least 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::InvalidData(format!(
                "label {bad} out of range for k = {k}"
            )));
        }
        Ok(Self { labels, k })
    }

    fn from_parts(labels: Vec<u32>, k: usize) -> Self {
        debug_assert!(labels.iter().all(|&l| (l as usize) < k));
        Self { labels, k }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Cluster sizes, indexed by cluster id.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Ids of clusters that own no points.
    pub fn empty_clusters(&self) -> Vec<usize> {
        self.counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stopping parameters for one Lloyd stage. The tolerance is compared
/// against the maximum squared center shift per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageParams {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl StageParams {
    pub fn new(tolerance: f64, max_iters: usize) -> Self {
        Self { tolerance, max_iters }
    }

    fn assert_valid(&self) {
        assert!(
            self.tolerance >= 0.0,
            "tolerance must be non-negative, got {}",
            self.tolerance
        );
        assert!(self.max_iters >= 1, "max_iters must be at least 1");
    }
}

/// Which stage a Lloyd run belongs to; tags trace records and exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageTag {
    Fast,
    Slow,
    /// Single-stage run on the full dataset, the comparator for benchmarks.
    Baseline,
}

impl StageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::Fast => "fast",
            StageTag::Slow => "slow",
            StageTag::Baseline => "baseline",
        }
    }
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a full Lloyd run.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub centers: Centers,
    /// Exact nearest-center assignment for `centers`.
    pub labels: Assignment,
    /// WCSS of `labels` against `centers`.
    pub wcss: f64,
    /// Iterations performed (assign + update pairs).
    pub iters: usize,
    /// True when the run stopped on tolerance rather than the iteration cap.
    pub converged: bool,
    pub trace: IterationTrace,
    /// Point-to-center distance evaluations across all assignment passes.
    pub distance_evals: u64,
    /// Assignment passes performed; one per iteration, plus a final pass to
    /// re-derive labels when the last update still moved a center.
    pub assignment_passes: usize,
}

/// Squared Euclidean distance between two equal-length vectors.
///
/// Panics on dimension mismatch.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(
        a.len(),
        b.len(),
        "dimension mismatch: {} vs {}",
        a.len(),
        b.len()
    );
    sqdist(a, b)
}

#[inline]
fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        s += diff * diff;
    }
    s
}

struct AssignPass {
    labels: Vec<u32>,
    wcss: f64,
    dist_evals: u64,
}

/// Execution context for the k-means kernels. Holds the worker pool; all
/// methods are read-only so an engine can be shared across runs.
pub struct Engine {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl Engine {
    /// Engine with the given worker count (>= 1). Results do not depend on
    /// the worker count, only speed does.
    pub fn new(workers: usize) -> Self {
        assert!(workers >= 1, "worker count must be at least 1");
        let pool = if workers == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("failed to build worker pool"),
            )
        };
        Self { workers, pool }
    }

    pub fn single_threaded() -> Self {
        Self::new(1)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Maps fixed chunks of `0..n` and returns the per-chunk outputs in
    /// ascending chunk order.
    fn map_chunks<T, F>(&self, n: usize, work: F) -> Vec<T>
    where
        F: Fn(Range<usize>) -> T + Sync,
        T: Send,
    {
        let ranges: Vec<Range<usize>> = (0..n)
            .step_by(POINT_CHUNK)
            .map(|s| s..(s + POINT_CHUNK).min(n))
            .collect();
        match &self.pool {
            Some(pool) => pool.install(|| ranges.into_par_iter().map(&work).collect()),
            None => ranges.into_iter().map(&work).collect(),
        }
    }

    fn assign_pass(&self, ds: &Dataset, centers: &Centers) -> AssignPass {
        assert_eq!(centers.d(), ds.d(), "center/point dimension mismatch");
        let d = ds.d();
        let cen = centers.values();
        let parts = self.map_chunks(ds.n(), |range| {
            let mut labels = Vec::with_capacity(range.len());
            let mut wcss = 0.0f64;
            let mut evals = 0u64;
            for i in range {
                let p = ds.row(i);
                let mut best = 0u32;
                let mut best_d = f64::INFINITY;
                for (c, crow) in cen.chunks_exact(d).enumerate() {
                    let dist = sqdist(p, crow);
                    evals += 1;
                    if dist < best_d {
                        best_d = dist;
                        best = c as u32;
                    }
                }
                labels.push(best);
                wcss += best_d;
            }
            (labels, wcss, evals)
        });
        let mut labels = Vec::with_capacity(ds.n());
        let mut wcss = 0.0f64;
        let mut dist_evals = 0u64;
        for (l, w, e) in parts {
            labels.extend_from_slice(&l);
            wcss += w;
            dist_evals += e;
        }
        AssignPass {
            labels,
            wcss,
            dist_evals,
        }
    }

    /// Labels every point with its nearest center (squared Euclidean).
    /// Ties go to the lowest center index.
    pub fn assign_points(&self, ds: &Dataset, centers: &Centers) -> Assignment {
        let pass = self.assign_pass(ds, centers);
        Assignment::from_parts(pass.labels, centers.k())
    }

    fn update_from_labels(&self, ds: &Dataset, labels: &[u32], k: usize, prev: &Centers) -> Centers {
        let d = ds.d();
        let parts = self.map_chunks(ds.n(), |range| {
            let mut sums = vec![0.0f64; k * d];
            let mut counts = vec![0u64; k];
            for i in range {
                let c = labels[i] as usize;
                counts[c] += 1;
                let row = ds.row(i);
                let acc = &mut sums[c * d..(c + 1) * d];
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            (sums, counts)
        });
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0u64; k];
        for (ps, pc) in parts {
            for (a, b) in sums.iter_mut().zip(&ps) {
                *a += b;
            }
            for (a, b) in counts.iter_mut().zip(&pc) {
                *a += b;
            }
        }
        let mut coords = Vec::with_capacity(k * d);
        for c in 0..k {
            if counts[c] == 0 {
                // empty cluster keeps its previous center
                coords.extend_from_slice(prev.row(c));
            } else {
                let count = counts[c] as f64;
                coords.extend(sums[c * d..(c + 1) * d].iter().map(|s| s / count));
            }
        }
        Centers::from_parts(coords, k, d)
    }

    /// Moves each center to the mean of its assigned points. A cluster with
    /// no points keeps its previous center.
    pub fn update_centers(
        &self,
        ds: &Dataset,
        assignment: &Assignment,
        k: usize,
        prev: &Centers,
    ) -> Centers {
        assert_eq!(assignment.len(), ds.n(), "assignment/point count mismatch");
        assert_eq!(assignment.k(), k, "assignment built for a different k");
        assert_eq!(prev.k(), k, "previous centers built for a different k");
        assert_eq!(prev.d(), ds.d(), "center/point dimension mismatch");
        self.update_from_labels(ds, assignment.labels(), k, prev)
    }

    /// Within-cluster sum of squares of the given assignment.
    pub fn wcss(&self, ds: &Dataset, centers: &Centers, assignment: &Assignment) -> f64 {
        assert_eq!(assignment.len(), ds.n(), "assignment/point count mismatch");
        assert_eq!(assignment.k(), centers.k(), "assignment/centers k mismatch");
        assert_eq!(centers.d(), ds.d(), "center/point dimension mismatch");
        let labels = assignment.labels();
        let parts = self.map_chunks(ds.n(), |range| {
            let mut acc = 0.0f64;
            for i in range {
                acc += sqdist(ds.row(i), centers.row(labels[i] as usize));
            }
            acc
        });
        parts.into_iter().sum()
    }

    /// One assign-then-update step. Returns the new centers, the assignment
    /// the update was computed from, and the maximum squared center shift.
    pub fn lloyd_step(&self, ds: &Dataset, centers: &Centers) -> (Centers, Assignment, f64) {
        let pass = self.assign_pass(ds, centers);
        let new_centers = self.update_from_labels(ds, &pass.labels, centers.k(), centers);
        let shift = max_center_shift(centers, &new_centers);
        (
            new_centers,
            Assignment::from_parts(pass.labels, centers.k()),
            shift,
        )
    }

    /// Runs Lloyd iterations from `init` until the maximum squared center
    /// shift drops to `params.tolerance` or the iteration cap is reached.
    /// Non-convergence is reported through the `converged` flag, not an error.
    pub fn run_lloyd(
        &self,
        ds: &Dataset,
        init: Centers,
        params: &StageParams,
        stage: StageTag,
    ) -> ClusterResult {
        assert_eq!(init.d(), ds.d(), "center/point dimension mismatch");
        params.assert_valid();
        let k = init.k();

        let mut trace = IterationTrace::new(init.clone());
        let mut centers = init;
        let mut distance_evals = 0u64;
        let mut passes = 0usize;
        let mut iter = 0usize;

        let (converged, last_pass, at_fixed_point) = loop {
            iter += 1;
            let pass = self.assign_pass(ds, &centers);
            passes += 1;
            distance_evals += pass.dist_evals;
            let new_centers = self.update_from_labels(ds, &pass.labels, k, &centers);
            let shift = max_center_shift(&centers, &new_centers);
            trace.push(stage, iter, new_centers.clone(), pass.wcss, shift);
            centers = new_centers;
            if shift <= params.tolerance {
                break (true, pass, shift == 0.0);
            }
            if iter >= params.max_iters {
                break (false, pass, false);
            }
        };

        // Labels must describe the final centers. When the last update left
        // every center in place the last pass already does; otherwise one
        // more (counted) pass re-derives them.
        let (labels, wcss) = if at_fixed_point {
            (last_pass.labels, last_pass.wcss)
        } else {
            let pass = self.assign_pass(ds, &centers);
            passes += 1;
            distance_evals += pass.dist_evals;
            (pass.labels, pass.wcss)
        };

        ClusterResult {
            centers,
            labels: Assignment::from_parts(labels, k),
            wcss,
            iters: iter,
            converged,
            trace,
            distance_evals,
            assignment_passes: passes,
        }
    }
}

fn max_center_shift(old: &Centers, new: &Centers) -> f64 {
    let mut shift = 0.0f64;
    for c in 0..old.k() {
        let s = sqdist(old.row(c), new.row(c));
        if s > shift {
            shift = s;
        }
    }
    shift
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn ds1(vals: &[f64]) -> Dataset {
        Dataset::new(vals.to_vec(), 1).unwrap()
    }

    #[test]
    fn squared_distance_examples() {
        assert_eq!(squared_distance(&[0.0, 0.0], &[3.0, 4.0]), 25.0);
        let x = [1.5, -2.0, 7.25];
        assert_eq!(squared_distance(&x, &x), 0.0);
        assert_eq!(squared_distance(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]), 14.0);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn squared_distance_dim_mismatch() {
        squared_distance(&[0.0], &[0.0, 1.0]);
    }

    #[test]
    fn assign_nearest() {
        let engine = Engine::single_threaded();
        let ds = ds1(&[0.0, 10.0]);
        let centers = Centers::from_rows(&[vec![1.0], vec![9.0]]).unwrap();
        let a = engine.assign_points(&ds, &centers);
        assert_eq!(a.labels(), &[0, 1]);
    }

    #[test]
    fn assign_tie_breaks_low_index() {
        let engine = Engine::single_threaded();
        let ds = ds1(&[5.0]);
        let centers = Centers::from_rows(&[vec![4.0], vec![6.0]]).unwrap();
        let a = engine.assign_points(&ds, &centers);
        assert_eq!(a.labels(), &[0]);
    }

    #[test]
    fn update_means() {
        let engine = Engine::single_threaded();
        let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let a = Assignment::new(vec![0, 0], 1).unwrap();
        let prev = Centers::from_rows(&[vec![5.0, 5.0]]).unwrap();
        let next = engine.update_centers(&ds, &a, 1, &prev);
        assert_eq!(next.row(0), &[1.0, 1.0]);
    }

    #[test]
    fn update_keeps_empty_cluster_center() {
        let engine = Engine::single_threaded();
        let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let a = Assignment::new(vec![0, 0], 2).unwrap();
        let prev = Centers::from_rows(&[vec![5.0, 5.0], vec![9.0, 9.0]]).unwrap();
        let next = engine.update_centers(&ds, &a, 2, &prev);
        assert_eq!(next.row(0), &[1.0, 1.0]);
        assert_eq!(next.row(1), &[9.0, 9.0]);
    }

    #[test]
    fn wcss_examples() {
        let engine = Engine::single_threaded();
        let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let centers = Centers::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let a = Assignment::new(vec![0, 0], 1).unwrap();
        assert_eq!(engine.wcss(&ds, &centers, &a), 2.0);

        let centers_exact = Centers::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let a2 = Assignment::new(vec![0, 1], 2).unwrap();
        assert_eq!(engine.wcss(&ds, &centers_exact, &a2), 0.0);
    }

    #[test]
    fn lloyd_step_hand_computed() {
        let engine = Engine::single_threaded();
        let ds = ds1(&[0.0, 1.0, 10.0, 11.0]);
        let centers = Centers::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let (next, a, shift) = engine.lloyd_step(&ds, &centers);
        assert_eq!(a.labels(), &[0, 0, 1, 1]);
        assert_eq!(next.row(0), &[0.5]);
        assert_eq!(next.row(1), &[10.5]);
        assert_eq!(shift, 0.25);
    }

    #[test]
    fn lloyd_step_fixed_point() {
        let engine = Engine::single_threaded();
        let ds = ds1(&[0.0, 1.0, 10.0, 11.0]);
        let centers = Centers::from_rows(&[vec![0.5], vec![10.5]]).unwrap();
        let (_, _, shift) = engine.lloyd_step(&ds, &centers);
        assert_eq!(shift, 0.0);
    }

    #[test]
    fn run_lloyd_converges_in_one_iter_at_means() {
        let engine = Engine::single_threaded();
        let ds = ds1(&[0.0, 1.0, 10.0, 11.0]);
        let init = Centers::from_rows(&[vec![0.5], vec![10.5]]).unwrap();
        let res = engine.run_lloyd(&ds, init, &StageParams::new(0.0, 300), StageTag::Baseline);
        assert!(res.converged);
        assert_eq!(res.iters, 1);
        assert_eq!(res.labels.labels(), &[0, 0, 1, 1]);
        assert_eq!(res.assignment_passes, 1);
        assert_eq!(res.distance_evals, 2 * 4);
    }

    #[test]
    fn run_lloyd_huge_tolerance_stops_after_one_iter() {
        let engine = Engine::single_threaded();
        let ds = ds1(&[0.0, 1.0, 10.0, 11.0]);
        let init = Centers::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let res = engine.run_lloyd(&ds, init, &StageParams::new(1e18, 300), StageTag::Baseline);
        assert!(res.converged);
        assert_eq!(res.iters, 1);
        // the last update moved centers, so labels came from an extra pass
        assert_eq!(res.assignment_passes, 2);
    }

    #[test]
    fn run_lloyd_trace_iterations_consecutive() {
        let engine = Engine::single_threaded();
        let ds = ds1(&[0.0, 1.0, 4.0, 9.0, 10.0, 11.0]);
        let init = Centers::from_rows(&[vec![0.0], vec![4.0]]).unwrap();
        let res = engine.run_lloyd(&ds, init, &StageParams::new(0.0, 300), StageTag::Fast);
        for (i, rec) in res.trace.records.iter().enumerate() {
            assert_eq!(rec.iteration, i + 1);
            assert_eq!(rec.stage, StageTag::Fast);
        }
        // final labels are the nearest-center assignment of the final centers
        let re = engine.assign_points(&ds, &res.centers);
        assert_eq!(re.labels(), res.labels.labels());
    }

    #[test]
    fn run_lloyd_respects_iteration_cap() {
        let engine = Engine::single_threaded();
        let ds = ds1(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        let init = Centers::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let res = engine.run_lloyd(&ds, init, &StageParams::new(0.0, 1), StageTag::Baseline);
        assert!(!res.converged);
        assert_eq!(res.iters, 1);
    }
}

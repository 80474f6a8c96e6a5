//! Two-stage clustering: a fast Lloyd pass over a uniform sample moves the
//! centers close to their final locations cheaply, then a slow pass over the
//! full dataset finishes from those centers.

use crate::dataset::Dataset;
use crate::engine::{Centers, ClusterResult, Engine, StageParams, StageTag};
use crate::error::{Error, Result};
use crate::trace::IterationTrace;
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Distinct ChaCha streams per purpose, derived from one user seed. Baseline
// and two-stage runs share the init stream, so paired runs draw identical
// initial centers.
const SAMPLE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Configuration for a two-stage run.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageConfig {
    pub k: usize,
    /// Fraction of the dataset used by the fast stage, in (0, 1].
    pub sample_fraction: f64,
    pub fast: StageParams,
    pub slow: StageParams,
    pub seed: u64,
}

impl TwoStageConfig {
    /// Defaults: 10% sample, fast tolerance 1e-3, slow tolerance 1e-6,
    /// 300 iterations per stage.
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            sample_fraction: 0.10,
            fast: StageParams::new(1e-3, 300),
            slow: StageParams::new(1e-6, 300),
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("k: must be at least 1".into()));
        }
        if n < self.k {
            return Err(Error::InvalidConfig(format!(
                "k: dataset has {n} points but k = {}",
                self.k
            )));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_fraction: must be in (0, 1], got {}",
                self.sample_fraction
            )));
        }
        let sample_size = (self.sample_fraction * n as f64).floor() as usize;
        if sample_size < self.k {
            return Err(Error::InvalidConfig(format!(
                "sample_fraction: sample of {sample_size} points cannot seed {} centers",
                self.k
            )));
        }
        if !(self.fast.tolerance >= self.slow.tolerance) {
            return Err(Error::InvalidConfig(format!(
                "fast tolerance {} must not be tighter than slow tolerance {}",
                self.fast.tolerance, self.slow.tolerance
            )));
        }
        if self.fast.max_iters < 1 || self.slow.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters: must be at least 1".into()));
        }
        if self.fast.tolerance < 0.0 || self.slow.tolerance < 0.0 {
            return Err(Error::InvalidConfig("tolerance: must be non-negative".into()));
        }
        Ok(())
    }
}

/// Outcome of a two-stage run. The slow stage carries the authoritative
/// labels for all points.
#[derive(Debug, Clone)]
pub struct TwoStageResult {
    /// Fast-stage result on the sample.
    pub fast: ClusterResult,
    /// Slow-stage result on the full dataset, seeded with `fast.centers`.
    pub slow: ClusterResult,
    /// Sorted indices of the points the fast stage saw.
    pub sample_indices: Vec<usize>,
    /// Clusters the fast stage left empty at termination. Non-empty is a
    /// warning, not an error: the carry-forward policy kept k centers alive
    /// and the slow stage can still recover.
    pub fast_empty_clusters: Vec<usize>,
}

impl TwoStageResult {
    /// Fast and slow records concatenated for export.
    pub fn combined_trace(&self) -> IterationTrace {
        IterationTrace::concat(&[&self.fast.trace, &self.slow.trace])
    }

    pub fn has_warning(&self) -> bool {
        !self.fast_empty_clusters.is_empty()
    }
}

/// Uniform sample without replacement of `floor(fraction * n)` points.
/// Indices come back sorted, so the sample preserves row order.
pub fn sample_subset(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sample_fraction: must be in (0, 1], got {fraction}"
        )));
    }
    let size = (fraction * ds.n() as f64).floor() as usize;
    if size < 1 {
        return Err(Error::InvalidConfig(format!(
            "sample_fraction: {fraction} of {} points leaves an empty sample",
            ds.n()
        )));
    }
    let mut rng = stream_rng(seed, SAMPLE_STREAM);
    let mut indices = rand::seq::index::sample(&mut rng, ds.n(), size).into_vec();
    indices.sort_unstable();
    let sub = ds.select(&indices)?;
    Ok((sub, indices))
}

/// Draws k initial centers uniformly without replacement from the dataset's
/// points. Duplicate-valued rows are skipped so the k centers are distinct;
/// pass `allow_duplicates` to accept coincident centers when the dataset has
/// fewer than k distinct points.
pub fn init_centers_random(
    ds: &Dataset,
    k: usize,
    seed: u64,
    allow_duplicates: bool,
) -> Result<Centers> {
    if k < 1 {
        return Err(Error::InvalidConfig("k: must be at least 1".into()));
    }
    if ds.n() < k {
        return Err(Error::InvalidConfig(format!(
            "k: cannot draw {k} centers from {} points",
            ds.n()
        )));
    }
    let mut rng = stream_rng(seed, INIT_STREAM);
    let picked = rand::seq::index::sample(&mut rng, ds.n(), k).into_vec();
    if rows_distinct(ds, &picked) {
        return Ok(centers_from_rows(ds, &picked));
    }

    // The quick draw hit duplicate-valued rows; walk a shuffled order and
    // keep the first k distinct rows.
    let mut order: Vec<usize> = (0..ds.n()).collect();
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for &i in &order {
        if !chosen.iter().any(|&j| ds.row(j) == ds.row(i)) {
            chosen.push(i);
            if chosen.len() == k {
                return Ok(centers_from_rows(ds, &chosen));
            }
        }
    }
    if allow_duplicates {
        return Ok(centers_from_rows(ds, &order[..k]));
    }
    Err(Error::TooFewDistinctPoints { k })
}

fn rows_distinct(ds: &Dataset, indices: &[usize]) -> bool {
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            if ds.row(i) == ds.row(j) {
                return false;
            }
        }
    }
    true
}

fn centers_from_rows(ds: &Dataset, indices: &[usize]) -> Centers {
    let mut coords = Vec::with_capacity(indices.len() * ds.d());
    for &i in indices {
        coords.extend_from_slice(ds.row(i));
    }
    Centers::new(coords, ds.d()).expect("dataset rows are finite")
}

/// Runs the two-stage algorithm: sample, seed from the sample, fast Lloyd on
/// the sample, then slow Lloyd on the full dataset from the fast centers.
pub fn run_two_stage(engine: &Engine, ds: &Dataset, cfg: &TwoStageConfig) -> Result<TwoStageResult> {
    cfg.validate(ds.n())?;
    let (sample, sample_indices) = sample_subset(ds, cfg.sample_fraction, cfg.seed)?;
    let init = init_centers_random(&sample, cfg.k, cfg.seed, false)?;
    let fast = engine.run_lloyd(&sample, init, &cfg.fast, StageTag::Fast);
    let slow = engine.run_lloyd(ds, fast.centers.clone(), &cfg.slow, StageTag::Slow);
    let fast_empty_clusters = fast.labels.empty_clusters();
    Ok(TwoStageResult {
        fast,
        slow,
        sample_indices,
        fast_empty_clusters,
    })
}

/// Normal k-means comparator: random centers from the full dataset, then one
/// Lloyd run over the full dataset. Shares the init seed stream with
/// [`run_two_stage`] so paired runs start from the same draw.
pub fn run_baseline(
    engine: &Engine,
    ds: &Dataset,
    k: usize,
    params: &StageParams,
    seed: u64,
) -> Result<ClusterResult> {
    let init = init_centers_random(ds, k, seed, false)?;
    Ok(engine.run_lloyd(ds, init, params, StageTag::Baseline))
}

/// Minimum-cost perfect matching between two center sets of equal k, by
/// exhaustive permutation search. Returns the permutation `p` minimizing
/// the total squared distance of `a[i]` to `b[p[i]]`. Intended for the
/// small k used in cross-run comparisons.
pub fn match_centers(a: &Centers, b: &Centers) -> Vec<usize> {
    assert_eq!(a.k(), b.k(), "center sets differ in k");
    assert_eq!(a.d(), b.d(), "center sets differ in dimension");
    assert!(a.k() <= 9, "exhaustive matching supports k <= 9");
    let k = a.k();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..k).permutations(k) {
        let cost: f64 = (0..k)
            .map(|i| crate::engine::squared_distance(a.row(i), b.row(perm[i])))
            .sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, perm));
        }
    }
    best.expect("k >= 1 yields at least one permutation").1
}

/// Total squared distance between matched centers under the best matching.
pub fn matched_center_distance(a: &Centers, b: &Centers) -> f64 {
    let perm = match_centers(a, b);
    (0..a.k())
        .map(|i| crate::engine::squared_distance(a.row(i), b.row(perm[i])))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn four_corners() -> Dataset {
        Dataset::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 10.0],
            vec![10.0, 11.0],
        ])
        .unwrap()
    }

    #[test]
    fn sample_full_fraction_is_identity() {
        let ds = four_corners();
        let (sub, idx) = sample_subset(&ds, 1.0, 5).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert_eq!(&sub, &ds);
    }

    #[test]
    fn sample_floor_and_no_replacement() {
        let ds = Dataset::new((0..10).map(f64::from).collect(), 1).unwrap();
        let (sub, idx) = sample_subset(&ds, 0.25, 5).unwrap();
        assert_eq!(sub.n(), 2);
        assert_eq!(idx.len(), 2);
        assert!(idx[0] < idx[1], "indices sorted and distinct: {idx:?}");
    }

    #[test]
    fn sample_deterministic() {
        let ds = Dataset::new((0..100).map(f64::from).collect(), 1).unwrap();
        let (_, a) = sample_subset(&ds, 0.3, 11).unwrap();
        let (_, b) = sample_subset(&ds, 0.3, 11).unwrap();
        assert_eq!(a, b);
        let (_, c) = sample_subset(&ds, 0.3, 12).unwrap();
        assert_ne!(a, c, "different seeds should give different samples");
    }

    #[test]
    fn sample_rejects_bad_fraction() {
        let ds = four_corners();
        assert!(sample_subset(&ds, 0.0, 1).is_err());
        assert!(sample_subset(&ds, 1.5, 1).is_err());
        assert!(sample_subset(&ds, 0.1, 1).is_err()); // floor(0.4) = 0
    }

    #[test]
    fn init_k_equals_n_is_permutation_of_points() {
        let ds = four_corners();
        let centers = init_centers_random(&ds, 4, 3, false).unwrap();
        let mut got: Vec<Vec<f64>> = (0..4).map(|c| centers.row(c).to_vec()).collect();
        let mut want: Vec<Vec<f64>> = (0..4).map(|i| ds.row(i).to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn init_single_center_is_a_dataset_row() {
        let ds = four_corners();
        let centers = init_centers_random(&ds, 1, 9, false).unwrap();
        assert!((0..4).any(|i| ds.row(i) == centers.row(0)));
    }

    #[test]
    fn init_deterministic() {
        let ds = four_corners();
        let a = init_centers_random(&ds, 2, 7, false).unwrap();
        let b = init_centers_random(&ds, 2, 7, false).unwrap();
        assert!(a.bits_eq(&b));
    }

    #[test]
    fn init_rejects_k_above_n() {
        let ds = four_corners();
        assert!(init_centers_random(&ds, 5, 0, false).is_err());
    }

    #[test]
    fn init_duplicate_points() {
        let ds = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            init_centers_random(&ds, 2, 0, false),
            Err(crate::error::Error::TooFewDistinctPoints { k: 2 })
        ));
        let forced = init_centers_random(&ds, 2, 0, true).unwrap();
        assert_eq!(forced.row(0), forced.row(1));
    }

    #[test]
    fn two_stage_four_point_instance() {
        let ds = four_corners();
        let engine = Engine::single_threaded();
        let mut cfg = TwoStageConfig::new(2, 17);
        cfg.sample_fraction = 1.0;
        cfg.fast = StageParams::new(0.0, 300);
        cfg.slow = StageParams::new(0.0, 300);
        let res = run_two_stage(&engine, &ds, &cfg).unwrap();
        let want = Centers::from_rows(&[vec![0.0, 0.5], vec![10.0, 10.5]]).unwrap();
        assert!(matched_center_distance(&res.slow.centers, &want) < 1e-18);
        assert!(res.fast_empty_clusters.is_empty());
    }

    #[test]
    fn two_stage_handoff_is_bitwise() {
        let ds = four_corners();
        let engine = Engine::single_threaded();
        let mut cfg = TwoStageConfig::new(2, 4);
        cfg.sample_fraction = 1.0;
        let res = run_two_stage(&engine, &ds, &cfg).unwrap();
        assert!(res.slow.trace.init_centers.bits_eq(&res.fast.centers));
    }

    #[test]
    fn two_stage_full_fraction_matches_baseline() {
        let ds = four_corners();
        let engine = Engine::single_threaded();
        for seed in 0..8 {
            let mut cfg = TwoStageConfig::new(2, seed);
            cfg.sample_fraction = 1.0;
            cfg.fast = StageParams::new(0.0, 300);
            cfg.slow = StageParams::new(0.0, 300);
            let two = run_two_stage(&engine, &ds, &cfg).unwrap();
            let base =
                run_baseline(&engine, &ds, 2, &StageParams::new(0.0, 300), seed).unwrap();
            assert!(two.slow.centers.bits_eq(&base.centers), "seed {seed}");
            assert_eq!(two.slow.labels.labels(), base.labels.labels());
            // fast already sits at the full-data fixed point
            assert_eq!(two.slow.iters, 1);
        }
    }

    #[test]
    fn baseline_deterministic() {
        let ds = four_corners();
        let engine = Engine::single_threaded();
        let p = StageParams::new(1e-6, 300);
        let a = run_baseline(&engine, &ds, 2, &p, 21).unwrap();
        let b = run_baseline(&engine, &ds, 2, &p, 21).unwrap();
        assert!(a.centers.bits_eq(&b.centers));
        assert_eq!(a.labels.labels(), b.labels.labels());
        assert_eq!(a.iters, b.iters);
    }

    #[test]
    fn config_validation() {
        let cfg = TwoStageConfig::new(3, 0);
        assert!(cfg.validate(100).is_ok());
        assert!(cfg.validate(2).is_err()); // n < k
        let mut frac = cfg.clone();
        frac.sample_fraction = 0.001;
        assert!(frac.validate(100).is_err()); // sample smaller than k
        let mut tol = cfg.clone();
        tol.fast = StageParams::new(1e-9, 300);
        assert!(tol.validate(100).is_err()); // fast tighter than slow
    }

    #[test]
    fn matching_recovers_permutation() {
        let a = Centers::from_rows(&[vec![0.0, 0.0], vec![5.0, 5.0], vec![9.0, 0.0]]).unwrap();
        let b = Centers::from_rows(&[vec![5.1, 5.0], vec![9.0, 0.2], vec![0.0, 0.1]]).unwrap();
        assert_eq!(match_centers(&a, &b), vec![2, 0, 1]);
    }
}

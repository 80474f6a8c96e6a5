//! Wall-clock benchmark harness and the distance-computation cost model.
//!
//! A benchmark grid pairs a baseline run and a two-stage run per
//! (sample fraction, tolerance) cell, repeats them with paired seeds, and
//! reports median times and the speed-up ratio.

use crate::dataset::{generate_blobs, load_csv, BlobSpec, Dataset};
use crate::engine::{Engine, StageParams};
use crate::error::{Error, Result};
use crate::two_stage::{run_baseline, run_two_stage, TwoStageConfig};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

/// Cost-model inputs: clusters, iterations, points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModelInput {
    pub k: u64,
    pub q: u64,
    pub n: u64,
}

impl CostModelInput {
    pub fn cost(&self) -> Result<u64> {
        predicted_cost(self.k, self.q, self.n)
    }
}

/// Distance computations for a plain k-means run: `k * q * n`.
pub fn predicted_cost(k: u64, q: u64, n: u64) -> Result<u64> {
    if k == 0 || q == 0 || n == 0 {
        return Err(Error::InvalidConfig(
            "cost model inputs must be positive".into(),
        ));
    }
    k.checked_mul(q)
        .and_then(|kq| kq.checked_mul(n))
        .ok_or_else(|| Error::CostOverflow(format!("{k} * {q} * {n} exceeds u64")))
}

/// Distance computations for a two-stage run:
/// `k * q_fast * n_fast + k * q_slow * n`.
pub fn predicted_two_stage_cost(
    k: u64,
    q_fast: u64,
    n_fast: u64,
    q_slow: u64,
    n: u64,
) -> Result<u64> {
    let fast = predicted_cost(k, q_fast, n_fast)?;
    let slow = predicted_cost(k, q_slow, n)?;
    fast.checked_add(slow)
        .ok_or_else(|| Error::CostOverflow(format!("{fast} + {slow} exceeds u64")))
}

/// Where the benchmark dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Generated(BlobSpec),
    File {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
    },
}

impl DatasetSource {
    pub fn resolve(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Generated(spec) => generate_blobs(spec).map(|(ds, _, _)| ds),
            DatasetSource::File { path, has_header } => load_csv(path, *has_header),
        }
    }
}

fn default_max_iters() -> usize {
    300
}

fn default_fast_tolerance() -> f64 {
    1e-3
}

fn default_workers() -> usize {
    1
}

/// Benchmark grid configuration. Rows are tolerances (descending), columns
/// are sample fractions (ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dataset: DatasetSource,
    pub k: usize,
    pub sample_fractions: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    /// Per-stage iteration cap.
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Floor for the fast-stage tolerance; the fast stage runs at
    /// `max(cell tolerance, fast_tolerance)` so it stays the loose stage.
    #[serde(default = "default_fast_tolerance")]
    pub fast_tolerance: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("k: must be at least 1".into()));
        }
        if self.repetitions < 1 {
            return Err(Error::InvalidConfig("repetitions: must be at least 1".into()));
        }
        if self.sample_fractions.is_empty() {
            return Err(Error::InvalidConfig("sample_fractions: must not be empty".into()));
        }
        for &f in &self.sample_fractions {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "sample_fractions: {f} outside (0, 1]"
                )));
            }
        }
        if self.tolerances.is_empty() {
            return Err(Error::InvalidConfig("tolerances: must not be empty".into()));
        }
        for &t in &self.tolerances {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "tolerances: {t} is not strictly positive"
                )));
            }
        }
        if self.tolerances.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig(
                "tolerances: must be listed in strictly descending order".into(),
            ));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters: must be at least 1".into()));
        }
        if !(self.fast_tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "fast_tolerance: must be strictly positive".into(),
            ));
        }
        if self.workers < 1 {
            return Err(Error::InvalidConfig("workers: must be at least 1".into()));
        }
        Ok(())
    }
}

/// Shape of the dataset a report was measured on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub source: DatasetSource,
    pub n: usize,
    pub d: usize,
}

/// One (fraction, tolerance) cell. Times are medians over the repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub fraction: f64,
    pub tolerance: f64,
    pub median_time_two_stage: f64,
    pub median_time_baseline: f64,
    /// `median_time_baseline / median_time_two_stage`.
    pub speedup: f64,
    pub fast_iters: f64,
    pub slow_iters: f64,
    pub baseline_iters: f64,
    /// Median over repetitions of two-stage WCSS / baseline WCSS.
    pub wcss_ratio: f64,
    /// Repetitions where a stage hit the iteration cap, kept in the cell
    /// rather than dropped.
    pub two_stage_nonconverged: usize,
    pub baseline_nonconverged: usize,
}

/// Full benchmark output, reproducible from the embedded descriptor fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub k: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub workers: usize,
    pub dataset: DatasetInfo,
    /// Ascending; the column order of the table rendering.
    pub sample_fractions: Vec<f64>,
    /// Descending; the row order of the table rendering.
    pub tolerances: Vec<f64>,
    /// Row-major over (tolerance, fraction).
    pub cells: Vec<BenchCell>,
}

/// Runs the full grid. Each cell times the clustering calls only; dataset
/// resolution happens once, outside the clock. Baseline and two-stage runs
/// in one repetition share the same seed, hence the same init draw.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let ds = cfg.dataset.resolve()?;
    if ds.n() < cfg.k {
        return Err(Error::InvalidConfig(format!(
            "k: dataset has {} points but k = {}",
            ds.n(),
            cfg.k
        )));
    }
    let engine = Engine::new(cfg.workers);

    let mut fractions = cfg.sample_fractions.clone();
    fractions.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));

    let mut cells = Vec::with_capacity(cfg.tolerances.len() * fractions.len());
    for &tol in &cfg.tolerances {
        for &fraction in &fractions {
            cells.push(run_cell(&engine, &ds, cfg, fraction, tol)?);
        }
    }

    Ok(BenchReport {
        k: cfg.k,
        seed: cfg.seed,
        repetitions: cfg.repetitions,
        workers: cfg.workers,
        dataset: DatasetInfo {
            source: cfg.dataset.clone(),
            n: ds.n(),
            d: ds.d(),
        },
        sample_fractions: fractions,
        tolerances: cfg.tolerances.clone(),
        cells,
    })
}

fn run_cell(
    engine: &Engine,
    ds: &Dataset,
    cfg: &BenchConfig,
    fraction: f64,
    tolerance: f64,
) -> Result<BenchCell> {
    let baseline_params = StageParams::new(tolerance, cfg.max_iters);
    let fast_tol = tolerance.max(cfg.fast_tolerance);

    let mut t_base = Vec::with_capacity(cfg.repetitions);
    let mut t_two = Vec::with_capacity(cfg.repetitions);
    let mut fast_iters = Vec::with_capacity(cfg.repetitions);
    let mut slow_iters = Vec::with_capacity(cfg.repetitions);
    let mut base_iters = Vec::with_capacity(cfg.repetitions);
    let mut ratios = Vec::with_capacity(cfg.repetitions);
    let mut base_bad = 0usize;
    let mut two_bad = 0usize;

    for rep in 0..cfg.repetitions {
        let seed = cfg.seed.wrapping_add(rep as u64);

        let start = Instant::now();
        let base = run_baseline(engine, ds, cfg.k, &baseline_params, seed)?;
        t_base.push(start.elapsed().as_secs_f64());

        let two_cfg = TwoStageConfig {
            k: cfg.k,
            sample_fraction: fraction,
            fast: StageParams::new(fast_tol, cfg.max_iters),
            slow: StageParams::new(tolerance, cfg.max_iters),
            seed,
        };
        let start = Instant::now();
        let two = run_two_stage(engine, ds, &two_cfg)?;
        t_two.push(start.elapsed().as_secs_f64());

        fast_iters.push(two.fast.iters as f64);
        slow_iters.push(two.slow.iters as f64);
        base_iters.push(base.iters as f64);
        ratios.push(two.slow.wcss / base.wcss);
        if !base.converged {
            base_bad += 1;
        }
        if !(two.fast.converged && two.slow.converged) {
            two_bad += 1;
        }
    }

    let median_time_baseline = median(&mut t_base);
    let median_time_two_stage = median(&mut t_two);
    Ok(BenchCell {
        fraction,
        tolerance,
        median_time_two_stage,
        median_time_baseline,
        speedup: median_time_baseline / median_time_two_stage,
        fast_iters: median(&mut fast_iters),
        slow_iters: median(&mut slow_iters),
        baseline_iters: median(&mut base_iters),
        wcss_ratio: median(&mut ratios),
        two_stage_nonconverged: two_bad,
        baseline_nonconverged: base_bad,
    })
}

fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite measurements"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Output rendering for a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Speed-up grid, tolerances down, fractions across.
    Table,
    Json,
    Csv,
}

/// Renders a report. Table rows follow the stored tolerance order
/// (descending) and columns the stored fraction order (ascending).
pub fn emit_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "fraction,tolerance,median_time_two_stage,median_time_baseline,speedup,\
                 fast_iters,slow_iters,baseline_iters,wcss_ratio,two_stage_nonconverged,\
                 baseline_nonconverged\n",
            );
            for c in &report.cells {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    c.fraction,
                    c.tolerance,
                    c.median_time_two_stage,
                    c.median_time_baseline,
                    c.speedup,
                    c.fast_iters,
                    c.slow_iters,
                    c.baseline_iters,
                    c.wcss_ratio,
                    c.two_stage_nonconverged,
                    c.baseline_nonconverged
                ));
            }
            out
        }
        ReportFormat::Table => {
            let mut out = String::new();
            out.push_str(&format!(
                "speed-up (baseline time / two-stage time), k = {}, n = {}, d = {}, reps = {}, seed = {}, workers = {}\n",
                report.k, report.dataset.n, report.dataset.d, report.repetitions, report.seed, report.workers
            ));
            let width = 10;
            out.push_str(&format!("{:>width$}", "tolerance"));
            for f in &report.sample_fractions {
                out.push_str(&format!("{:>width$}", format!("{f}")));
            }
            out.push('\n');
            for (ti, t) in report.tolerances.iter().enumerate() {
                out.push_str(&format!("{:>width$}", format!("{t:e}")));
                for fi in 0..report.sample_fractions.len() {
                    let cell = &report.cells[ti * report.sample_fractions.len() + fi];
                    let mut shown = two_sig_figs(cell.speedup);
                    if cell.two_stage_nonconverged > 0 || cell.baseline_nonconverged > 0 {
                        shown.push('*');
                    }
                    out.push_str(&format!("{shown:>width$}"));
                }
                out.push('\n');
            }
            if report
                .cells
                .iter()
                .any(|c| c.two_stage_nonconverged > 0 || c.baseline_nonconverged > 0)
            {
                out.push_str("* at least one repetition hit the iteration cap\n");
            }
            out
        }
    }
}

fn two_sig_figs(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_model_worked_example() {
        assert_eq!(predicted_cost(4, 20, 1000).unwrap(), 80_000);
        assert_eq!(predicted_cost(1, 1, 1).unwrap(), 1);
    }

    #[test]
    fn cost_model_two_stage_totals() {
        assert_eq!(
            predicted_two_stage_cost(4, 18, 100, 2, 1000).unwrap(),
            15_200
        );
        assert_eq!(
            predicted_two_stage_cost(6, 10, 1000, 3, 100_000).unwrap(),
            1_860_000
        );
    }

    #[test]
    fn cost_model_rejects_zero_and_overflow() {
        assert!(predicted_cost(0, 1, 1).is_err());
        assert!(predicted_two_stage_cost(4, 0, 100, 2, 1000).is_err());
        assert!(matches!(
            predicted_cost(u64::MAX, 2, 2),
            Err(Error::CostOverflow(_))
        ));
    }

    #[test]
    fn fig_style_cost_ordering() {
        // with everything else fixed, a larger fast-stage sample always
        // costs more, for every fast iteration count
        for q_f in 1..=50 {
            let small = predicted_two_stage_cost(4, q_f, 100, 2, 1000).unwrap();
            let large = predicted_two_stage_cost(4, q_f, 500, 2, 1000).unwrap();
            assert!(large > small, "q_f = {q_f}");
        }
    }

    #[test]
    fn two_sig_figs_rendering() {
        assert_eq!(two_sig_figs(3.8123), "3.8");
        assert_eq!(two_sig_figs(12.3), "12");
        assert_eq!(two_sig_figs(0.01234), "0.012");
        assert_eq!(two_sig_figs(1.0), "1.0");
    }

    fn smoke_config() -> BenchConfig {
        BenchConfig {
            dataset: DatasetSource::Generated(BlobSpec {
                n: 40,
                d: 2,
                k: 2,
                spread: 0.05,
                separation: 10.0,
                seed: 5,
            }),
            k: 2,
            sample_fractions: vec![0.5],
            tolerances: vec![1e-3],
            repetitions: 1,
            seed: 5,
            max_iters: 300,
            fast_tolerance: 1e-3,
            workers: 1,
        }
    }

    #[test]
    fn benchmark_smoke_single_cell() {
        let report = run_benchmark(&smoke_config()).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        assert!(cell.speedup > 0.0);
        assert!(cell.wcss_ratio > 0.0);
        assert_eq!(cell.two_stage_nonconverged, 0);
        assert_eq!(cell.baseline_nonconverged, 0);
    }

    #[test]
    fn benchmark_degenerate_full_fraction() {
        // fraction 1.0 and equal tolerances: the fast stage replays the
        // baseline run exactly, so the WCSS ratio is exactly 1
        let mut cfg = smoke_config();
        cfg.sample_fractions = vec![1.0];
        let report = run_benchmark(&cfg).unwrap();
        let cell = &report.cells[0];
        assert_eq!(cell.wcss_ratio, 1.0);
        assert_eq!(cell.fast_iters, cell.baseline_iters);
        assert_eq!(cell.slow_iters, 1.0);
    }

    #[test]
    fn report_json_round_trip() {
        let report = run_benchmark(&smoke_config()).unwrap();
        let json = emit_report(&report, ReportFormat::Json);
        let back: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn report_csv_row_count() {
        let mut cfg = smoke_config();
        cfg.sample_fractions = vec![0.5, 0.9];
        cfg.tolerances = vec![1e-1, 1e-2, 1e-3];
        let report = run_benchmark(&cfg).unwrap();
        let csv = emit_report(&report, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 3 * 2 + 1);
    }

    #[test]
    fn report_table_shape() {
        let report = run_benchmark(&smoke_config()).unwrap();
        let table = emit_report(&report, ReportFormat::Table);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[1].contains("tolerance"));
        assert!(lines[2].starts_with(&format!("{:>10}", "1e-3")));
    }

    #[test]
    fn config_validation_messages_name_keys() {
        let mut cfg = smoke_config();
        cfg.tolerances = vec![1e-3, 1e-1];
        let err = run_benchmark(&cfg).unwrap_err().to_string();
        assert!(err.contains("tolerances"), "{err}");

        let mut cfg = smoke_config();
        cfg.sample_fractions = vec![1.2];
        let err = run_benchmark(&cfg).unwrap_err().to_string();
        assert!(err.contains("sample_fractions"), "{err}");
    }
}

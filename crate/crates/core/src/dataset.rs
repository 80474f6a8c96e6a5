//! Point-matrix data model, CSV persistence, and synthetic blob generation.

use crate::engine::{Assignment, Centers};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Dense row-major point matrix. Immutable after construction; row `i`
/// keeps index `i` for the lifetime of the value, so labels and sample
/// indices stay meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Dataset {
    /// Builds a dataset from a flat row-major buffer of `n * d` finite values.
    pub fn new(data: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidData("dimension must be at least 1".into()));
        }
        if data.is_empty() {
            return Err(Error::InvalidData("dataset must hold at least one point".into()));
        }
        if data.len() % d != 0 {
            return Err(Error::InvalidData(format!(
                "buffer of {} values is not a multiple of dimension {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        let n = data.len() / d;
        Ok(Self { data, n, d })
    }

    /// Builds a dataset from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("dataset must hold at least one point".into()));
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} fields, expected {d}",
                    r.len()
                )));
            }
        }
        Self::new(rows.concat(), d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Flat row-major view of all values.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Copies the given rows (in the order supplied) into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, self.d)
    }
}

/// Parameters for the synthetic Gaussian-blob generator.
///
/// Same seed and spec always produce the same dataset, bit for bit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlobSpec {
    /// Total point count.
    pub n: usize,
    /// Dimension.
    pub d: usize,
    /// Number of generating clusters.
    pub k: usize,
    /// Per-cluster standard deviation.
    pub spread: f64,
    /// Minimum inter-center distance.
    pub separation: f64,
    /// RNG seed.
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("k: must be at least 1".into()));
        }
        if self.n < self.k {
            return Err(Error::InvalidConfig(format!(
                "n: need at least k = {} points, got {}",
                self.k, self.n
            )));
        }
        if self.d < 1 {
            return Err(Error::InvalidConfig("d: must be at least 1".into()));
        }
        if !(self.spread > 0.0) || !self.spread.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "spread: must be positive and finite, got {}",
                self.spread
            )));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "separation: must be non-negative and finite, got {}",
                self.separation
            )));
        }
        Ok(())
    }
}

/// Loads a CSV of numbers, one point per row, comma separated. Accepts LF or
/// CRLF line endings; no quoting, no missing values.
pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut data: Vec<f64> = Vec::new();
    let mut d: Option<usize> = None;
    let mut rows = 0usize;
    let mut line_no = 0usize;
    for line in reader.lines() {
        line_no += 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if has_header && line_no == 1 {
            continue;
        }
        if line.is_empty() {
            // allow a trailing blank line, reject blanks between data rows later
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match d {
            None => d = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("ragged row: {} fields, expected {w}", fields.len()),
                });
            }
            _ => {}
        }
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("non-numeric field '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("non-finite value '{f}'"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: line_no.max(1),
            msg: if has_header {
                "no data rows after header".into()
            } else {
                "empty file".into()
            },
        });
    }
    Dataset::new(data, d.unwrap())
}

/// Writes the dataset as CSV, one point per row, LF line endings. Values are
/// rendered with the shortest decimal form that reparses to the same bits, so
/// a save/load round trip is the identity.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    write_matrix_csv(&mut w, (0..ds.n()).map(|i| ds.row(i))).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shared row-wise CSV writer for datasets and center matrices.
pub fn write_matrix_csv<'a, W: Write>(
    w: &mut W,
    rows: impl Iterator<Item = &'a [f64]>,
) -> std::io::Result<()> {
    for row in rows {
        let mut first = true;
        for v in row {
            if first {
                first = false;
            } else {
                write!(w, ",")?;
            }
            write!(w, "{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

// Center placement draws uniformly from a box of side 10 * separation and
// keeps candidates that clear the pairwise separation. The attempt budget
// bounds pathological (k, separation, d) combinations.
const PLACEMENT_ATTEMPTS_PER_CENTER: usize = 1000;

/// Generates `spec.n` points around `spec.k` well-separated Gaussian blobs.
/// Returns the points, the generating label of each point, and the true
/// generating centers.
pub fn generate_blobs(spec: &BlobSpec) -> Result<(Dataset, Assignment, Centers)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let side = 10.0 * spec.separation;
    let box_dist = Uniform::new_inclusive(0.0, side)
        .map_err(|e| Error::InvalidConfig(format!("separation: {e}")))?;
    let min_sq = spec.separation * spec.separation;

    let mut centers: Vec<f64> = Vec::with_capacity(spec.k * spec.d);
    let budget = PLACEMENT_ATTEMPTS_PER_CENTER * spec.k;
    let mut attempts = 0usize;
    let mut candidate = vec![0.0f64; spec.d];
    while centers.len() < spec.k * spec.d {
        if attempts >= budget {
            return Err(Error::CenterPlacement {
                k: spec.k,
                separation: spec.separation,
                attempts,
            });
        }
        attempts += 1;
        for c in candidate.iter_mut() {
            *c = box_dist.sample(&mut rng);
        }
        let clear = centers
            .chunks_exact(spec.d)
            .all(|placed| sq_dist(placed, &candidate) >= min_sq);
        if clear {
            centers.extend_from_slice(&candidate);
        }
    }
    let true_centers = Centers::new(centers, spec.d)?;

    let noise = Normal::new(0.0, spec.spread)
        .map_err(|e| Error::InvalidConfig(format!("spread: {e}")))?;
    let base = spec.n / spec.k;
    let extra = spec.n % spec.k;
    let mut data = Vec::with_capacity(spec.n * spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    for c in 0..spec.k {
        let count = base + usize::from(c < extra);
        let center = true_centers.row(c);
        for _ in 0..count {
            for &coord in center {
                data.push(coord + noise.sample(&mut rng));
            }
            labels.push(c as u32);
        }
    }
    let ds = Dataset::new(data, spec.d)?;
    let assignment = Assignment::new(labels, spec.k)?;
    Ok((ds, assignment, true_centers))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

//! Per-iteration history of a Lloyd run and its CSV export.

use crate::engine::{Centers, StageTag};
use std::io::{self, Write};

/// One traced iteration. `centers` is the post-update snapshot; `wcss` is
/// the objective of the assignment computed at the start of the iteration,
/// which is non-increasing within a stage.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub stage: StageTag,
    /// 1-based and consecutive within a stage.
    pub iteration: usize,
    pub centers: Centers,
    pub wcss: f64,
    /// Maximum squared center displacement produced by this iteration.
    pub max_shift: f64,
}

/// Full iteration history of one or more stages, including the centers the
/// first stage started from.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub init_centers: Centers,
    pub records: Vec<TraceRecord>,
}

impl IterationTrace {
    pub fn new(init_centers: Centers) -> Self {
        Self {
            init_centers,
            records: Vec::new(),
        }
    }

    pub(crate) fn push(
        &mut self,
        stage: StageTag,
        iteration: usize,
        centers: Centers,
        wcss: f64,
        max_shift: f64,
    ) {
        self.records.push(TraceRecord {
            stage,
            iteration,
            centers,
            wcss,
            max_shift,
        });
    }

    /// Concatenates stage traces for export; the initial centers are the
    /// first stage's.
    pub fn concat(traces: &[&IterationTrace]) -> IterationTrace {
        assert!(!traces.is_empty(), "need at least one trace");
        let mut out = IterationTrace::new(traces[0].init_centers.clone());
        for t in traces {
            out.records.extend(t.records.iter().cloned());
        }
        out
    }

    /// Writes one row per traced center coordinate:
    /// `stage,iteration,center_id,dim,value`.
    pub fn write_coords_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "stage,iteration,center_id,dim,value")?;
        for rec in &self.records {
            for c in 0..rec.centers.k() {
                let row = rec.centers.row(c);
                for (j, v) in row.iter().enumerate() {
                    writeln!(w, "{},{},{},{},{}", rec.stage, rec.iteration, c, j, v)?;
                }
            }
        }
        Ok(())
    }

    /// Writes one row per iteration: `stage,iteration,wcss,max_shift`.
    pub fn write_summary_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "stage,iteration,wcss,max_shift")?;
        for rec in &self.records {
            writeln!(
                w,
                "{},{},{},{}",
                rec.stage, rec.iteration, rec.wcss, rec.max_shift
            )?;
        }
        Ok(())
    }

    pub fn coords_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_coords_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn summary_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_summary_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

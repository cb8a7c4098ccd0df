//! Flat result records shared by the CSV and JSON writers.
//!
//! CSV gets a header, one row per repetition and one summary row per run. JSON
//! gets the summary row as an object with the repetition rows under `reps`, so
//! both formats carry the same field set.

use std::io::Write;

use serde::Serialize;

use super::args::Format;
use crate::error::Result;

/// Row role in a run's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    Rep,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub row: RowKind,
    pub rep: Option<usize>,
    pub kernel: String,
    pub variant: String,
    pub ni: usize,
    pub nj: usize,
    pub nk: usize,
    pub iters: usize,
    pub groups: Option<usize>,
    pub tpg: Option<usize>,
    pub blocks: Option<usize>,
    pub threads: usize,
    pub smt: bool,
    pub barrier: Option<String>,
    pub pin: String,
    pub pinned: bool,
    pub nt_stores: bool,
    pub seed: u64,
    pub init: String,
    pub a: f64,
    pub b: f64,
    pub warmup: usize,
    pub repetitions: usize,
    pub seconds: f64,
    pub mlups: f64,
    /// Bandwidth fed to the model, bytes/s.
    pub ms: Option<f64>,
    pub ms_source: String,
    pub bytes_per_lup: Option<f64>,
    pub predicted_mlups: Option<f64>,
    pub cache_fit: Option<bool>,
    pub warnings: String,
    pub host: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamRecord {
    pub row: RowKind,
    pub rep: Option<usize>,
    pub threads: usize,
    pub elements: usize,
    pub nt_requested: bool,
    pub nt_used: bool,
    pub bytes_per_element: u64,
    pub seconds: f64,
    /// Bytes per second.
    pub bandwidth: f64,
    pub validated: bool,
    pub pinned: bool,
    pub warnings: String,
    pub host: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRecord {
    pub kernel: String,
    pub variant: String,
    pub t: usize,
    pub nt_stores: bool,
    pub ms: f64,
    pub bytes_per_lup: f64,
    pub predicted_lups: f64,
    pub predicted_mlups: f64,
}

/// One run: its summary row and the repetition rows it aggregates.
#[derive(Debug, Clone)]
pub struct Run<R> {
    pub summary: R,
    pub reps: Vec<R>,
}

#[derive(Serialize)]
struct JsonRun<'a, R> {
    #[serde(flatten)]
    summary: &'a R,
    reps: &'a [R],
}

/// Writes `runs` in `format`. CSV emits every run's rows under one header,
/// repetitions first; JSON emits one object, or an array for several runs.
pub fn write_runs<R: Serialize, W: Write>(out: W, format: Format, runs: &[Run<R>]) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for run in runs {
                for r in &run.reps {
                    w.serialize(r)?;
                }
                w.serialize(&run.summary)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let objs: Vec<JsonRun<R>> = runs
                .iter()
                .map(|r| JsonRun {
                    summary: &r.summary,
                    reps: &r.reps,
                })
                .collect();
            let mut out = out;
            match objs.as_slice() {
                [one] => serde_json::to_writer_pretty(&mut out, one)?,
                many => serde_json::to_writer_pretty(&mut out, many)?,
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

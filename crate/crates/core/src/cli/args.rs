use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::grid::InitPattern;
use crate::sweeps::{KernelKind, Variant};
use crate::sync::BarrierKind;

/// Wavefront temporal blocking for 7-point Jacobi and Gauss-Seidel stencils.
///
/// Exit codes: 0 success, 1 verification mismatch, 2 usage or configuration error.
/// Set WAVEFRONT_TOPOLOGY_FILE to force a manual topology description.
#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "wavefront", version)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Time a sweep plan and report MLUP/s with the bandwidth model for context.
    Bench(BenchArgs),
    /// Run a plan and the serial oracle on identical input and compare bitwise.
    Verify(VerifyArgs),
    /// STREAM triad bandwidth.
    Stream(StreamArgs),
    /// Print the detected hardware topology as JSON.
    Topo(TopoArgs),
    /// Evaluate the bandwidth-bound performance ceiling.
    Model(ModelArgs),
}

/// Grid extents `NIxNJxNK`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub ni: usize,
    pub nj: usize,
    pub nk: usize,
}

impl Size {
    pub fn cube(n: usize) -> Self {
        Self { ni: n, nj: n, nk: n }
    }
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let num = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}"));
        match parts.as_slice() {
            [n] => num(n).map(Size::cube),
            [a, b, c] => Ok(Size {
                ni: num(a)?,
                nj: num(b)?,
                nk: num(c)?,
            }),
            _ => Err(format!("expected NIxNJxNK, got '{s}'")),
        }
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.ni, self.nj, self.nk)
    }
}

/// A count or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Auto<T> {
    Auto,
    Value(T),
}

impl<T: FromStr> FromStr for Auto<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Auto::Auto);
        }
        s.parse().map(Auto::Value).map_err(|e| format!("'{s}': {e}"))
    }
}

impl<T: fmt::Display> fmt::Display for Auto<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => v.fmt(f),
        }
    }
}

impl FromStr for BarrierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "central-spin" | "central" => Ok(BarrierKind::CentralSpin),
            "tree" => Ok(BarrierKind::Tree),
            _ => Err(format!("unknown barrier '{s}' (central-spin, tree)")),
        }
    }
}

/// Thread pinning: `auto` follows the topology, `none` disables it, or a
/// comma-separated hardware thread list in team rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinSpec {
    Auto,
    None,
    List(Vec<usize>),
}

impl FromStr for PinSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(PinSpec::Auto),
            "none" => Ok(PinSpec::None),
            list => list
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(PinSpec::List),
        }
    }
}

impl fmt::Display for PinSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PinSpec::Auto => f.write_str("auto"),
            PinSpec::None => f.write_str("none"),
            PinSpec::List(ids) => {
                let ids: Vec<String> = ids.iter().map(usize::to_string).collect();
                f.write_str(&ids.join(","))
            }
        }
    }
}

/// Initial grid contents: `random` (seeded), `linear` or `uniform:<value>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSpec {
    Random,
    Linear,
    Uniform(f64),
}

impl InitSpec {
    pub fn pattern(self, seed: u64) -> InitPattern {
        match self {
            InitSpec::Random => InitPattern::random(seed),
            InitSpec::Linear => InitPattern::Linear,
            InitSpec::Uniform(c) => InitPattern::Uniform(c),
        }
    }
}

impl FromStr for InitSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "random" => Ok(InitSpec::Random),
            None if s == "linear" => Ok(InitSpec::Linear),
            Some(("uniform", v)) => v.parse().map(InitSpec::Uniform).map_err(|e| format!("'{v}': {e}")),
            _ => Err(format!("unknown init '{s}' (random, linear, uniform:<value>)")),
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::Random => f.write_str("random"),
            InitSpec::Linear => f.write_str("linear"),
            InitSpec::Uniform(c) => write!(f, "uniform:{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Record format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write records here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Sweep plan options shared by `bench` and `verify`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PlanArgs {
    #[arg(long, value_enum, default_value_t = KernelKind::Jacobi)]
    pub kernel: KernelKind,
    #[arg(long, value_enum, default_value_t = Variant::Wavefront)]
    pub variant: Variant,
    /// Grid extents NIxNJxNK, or a single N for a cube [default: bench 100, verify 34].
    #[arg(long)]
    pub size: Option<Size>,
    /// Sweeps to apply; wavefront variants need a multiple of --tpg.
    #[arg(long, default_value_t = 8)]
    pub iters: usize,
    /// Thread groups N of the wavefront variants.
    #[arg(long, default_value_t = 1)]
    pub groups: usize,
    /// Threads per group t, the temporal blocking factor.
    #[arg(long, default_value_t = 4)]
    pub tpg: usize,
    /// Spatial blocks B along j, or `auto` (cache fit for Jacobi, one per group for Gauss-Seidel).
    #[arg(long, default_value = "auto")]
    pub blocks: Auto<usize>,
    /// Team size P of the threaded and pipeline variants.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Place consecutive wavefront ranks on SMT siblings.
    #[arg(long)]
    pub smt: bool,
    /// central-spin, tree, or auto (central spin while every thread has its own core).
    #[arg(long, default_value = "auto")]
    pub barrier: Auto<BarrierKind>,
    /// auto, none, or a comma-separated hardware thread list.
    #[arg(long, default_value = "auto")]
    pub pin: PinSpec,
    /// Streaming stores for Jacobi result writes.
    #[arg(long)]
    pub nt_stores: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// random, linear or uniform:<value>.
    #[arg(long, default_value = "random")]
    pub init: InitSpec,
    /// Center weight (Jacobi only).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub a: f64,
    /// Neighbor weight.
    #[arg(long, default_value_t = 1.0 / 6.0, allow_negative_numbers = true)]
    pub b: f64,
    /// Write the final grid as a binary dump.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Memory bandwidth in bytes/s for the model; measured with a short triad when omitted.
    #[arg(long)]
    pub ms: Option<f64>,
    /// Sweep sizes x variants x t and emit one summary record per point.
    #[arg(long)]
    pub matrix: bool,
    /// Cube edge lengths of the matrix sweep.
    #[arg(long, value_delimiter = ',', default_value = "32,64,96,128,160,200")]
    pub matrix_sizes: Vec<usize>,
    /// Blocking factors of the matrix sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub matrix_t: Vec<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Kernel of the serial oracle [default: --kernel].
    #[arg(long, value_enum)]
    pub oracle_kernel: Option<KernelKind>,
    /// Run the schedule on one thread under the access checker.
    #[arg(long)]
    pub instrumented: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StreamArgs {
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Elements per array [default: 4x the outermost cache, capped at 2^24].
    #[arg(long)]
    pub elements: Option<usize>,
    /// Streaming stores (24 instead of 32 counted bytes per element).
    #[arg(long)]
    pub nt: bool,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value = "auto")]
    pub pin: PinSpec,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TopoArgs {
    /// Manual topology file; overrides the environment variable.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Sustained memory bandwidth in bytes/s.
    #[arg(long)]
    pub ms: f64,
    /// Bytes per lattice update; derived from --kernel/--variant/--t when omitted.
    #[arg(long)]
    pub bytes: Option<f64>,
    #[arg(long, value_enum, default_value_t = KernelKind::Jacobi)]
    pub kernel: KernelKind,
    #[arg(long, value_enum, default_value_t = Variant::Serial)]
    pub variant: Variant,
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    #[arg(long)]
    pub nt: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn push(args: &mut Vec<String>, flag: &str, value: impl fmt::Display) {
    args.push(format!("--{flag}"));
    args.push(value.to_string());
}

fn push_flag(args: &mut Vec<String>, flag: &str, on: bool) {
    if on {
        args.push(format!("--{flag}"));
    }
}

fn value_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

impl PlanArgs {
    fn to_args(&self, args: &mut Vec<String>) {
        push(args, "kernel", value_name(&self.kernel));
        push(args, "variant", value_name(&self.variant));
        if let Some(size) = self.size {
            push(args, "size", size);
        }
        push(args, "iters", self.iters);
        push(args, "groups", self.groups);
        push(args, "tpg", self.tpg);
        push(args, "blocks", self.blocks);
        push(args, "threads", self.threads);
        push_flag(args, "smt", self.smt);
        push(args, "barrier", self.barrier);
        push(args, "pin", &self.pin);
        push_flag(args, "nt-stores", self.nt_stores);
        push(args, "seed", self.seed);
        push(args, "init", self.init);
        push(args, "a", self.a);
        push(args, "b", self.b);
        if let Some(p) = &self.dump {
            push(args, "dump", p.display());
        }
    }
}

impl OutputArgs {
    fn to_args(&self, args: &mut Vec<String>) {
        push(args, "format", self.format);
        if let Some(p) = &self.output {
            push(args, "output", p.display());
        }
    }
}

impl RunConfig {
    /// Command line that parses back to `self`, program name first.
    pub fn to_args(&self) -> Vec<String> {
        let mut a = vec!["wavefront".to_string()];
        match &self.command {
            Command::Bench(b) => {
                a.push("bench".into());
                b.plan.to_args(&mut a);
                push(&mut a, "reps", b.reps);
                push(&mut a, "warmup", b.warmup);
                if let Some(ms) = b.ms {
                    push(&mut a, "ms", ms);
                }
                push_flag(&mut a, "matrix", b.matrix);
                let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
                push(&mut a, "matrix-sizes", join(&b.matrix_sizes));
                push(&mut a, "matrix-t", join(&b.matrix_t));
                b.out.to_args(&mut a);
            }
            Command::Verify(v) => {
                a.push("verify".into());
                v.plan.to_args(&mut a);
                if let Some(k) = v.oracle_kernel {
                    push(&mut a, "oracle-kernel", value_name(&k));
                }
                push_flag(&mut a, "instrumented", v.instrumented);
            }
            Command::Stream(s) => {
                a.push("stream".into());
                push(&mut a, "threads", s.threads);
                if let Some(e) = s.elements {
                    push(&mut a, "elements", e);
                }
                push_flag(&mut a, "nt", s.nt);
                push(&mut a, "reps", s.reps);
                push(&mut a, "pin", &s.pin);
                s.out.to_args(&mut a);
            }
            Command::Topo(t) => {
                a.push("topo".into());
                if let Some(p) = &t.file {
                    push(&mut a, "file", p.display());
                }
            }
            Command::Model(m) => {
                a.push("model".into());
                push(&mut a, "ms", m.ms);
                if let Some(b) = m.bytes {
                    push(&mut a, "bytes", b);
                }
                push(&mut a, "kernel", value_name(&m.kernel));
                push(&mut a, "variant", value_name(&m.variant));
                push(&mut a, "t", m.t);
                push_flag(&mut a, "nt", m.nt);
                m.out.to_args(&mut a);
            }
        }
        a
    }

    /// Shell-ready form of [`RunConfig::to_args`].
    pub fn command_line(&self) -> String {
        self.to_args().join(" ")
    }
}

//! Command-line harness: argument model, subcommands and result records.

mod args;
mod record;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub use args::{
    Auto, BenchArgs, Command, Format, InitSpec, ModelArgs, OutputArgs, PinSpec, PlanArgs, RunConfig, Size,
    StreamArgs, TopoArgs, VerifyArgs,
};
pub use record::{write_runs, BenchRecord, ModelRecord, RowKind, Run, StreamRecord};

use crate::error::{Error, Result};
use crate::grid::create_grid;
use crate::kernels::StencilCoeffs;
use crate::perf::{
    measure, predict_p0, predict_traffic, stream_elements_for, stream_size_warning, stream_triad_with,
    HostFingerprint, Measurement, StreamConfig,
};
use crate::sweeps::{
    block_fits, choose_block_size, execute, KernelKind, SweepPlan, Variant, WavefrontConfig,
};
use crate::sync::BarrierKind;
use crate::topo::{detect_topology, detect_with, plan_placement, SmtMode, Topology};

/// Largest triad array picked without `--elements`.
pub const STREAM_DEFAULT_CAP: usize = 1 << 24;
/// Triad size used to estimate bandwidth when `bench` gets no `--ms`.
pub const BENCH_STREAM_ELEMENTS: usize = 1 << 22;

pub const EXIT_OK: u8 = 0;
pub const EXIT_MISMATCH: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Runs a parsed command, writing records and reports to `out`. Returns the
/// process exit code; errors map to [`EXIT_USAGE`] in [`exit_code`].
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8> {
    match &cfg.command {
        Command::Bench(b) => cmd_bench(b, out),
        Command::Verify(v) => cmd_verify(cfg, v, out),
        Command::Stream(s) => cmd_stream(s, out),
        Command::Topo(t) => cmd_topo(t, out),
        Command::Model(m) => cmd_model(m, out),
    }
}

/// Exit code of a finished command.
pub fn exit_code(result: &Result<u8>) -> u8 {
    match result {
        Ok(code) => *code,
        Err(_) => EXIT_USAGE,
    }
}

/// A plan resolved against the host, with the choices `auto` settled.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub plan: SweepPlan,
    pub size: Size,
    pub cache_fit: Option<bool>,
    pub warnings: Vec<String>,
}

/// Turns plan options into a validated [`SweepPlan`] for `size`.
pub fn resolve_plan(a: &PlanArgs, size: Size, topo: &Topology) -> Result<Resolved> {
    let Size { ni, nj, nk } = size;
    if ni == 0 || nj == 0 || nk == 0 {
        return Err(Error::Dimension(format!("grid extents must be positive, got {size}")));
    }
    let mut warnings = Vec::new();
    let mut cache_fit = None;
    let coeffs = StencilCoeffs::new(a.a, a.b)?;
    let mut plan = match a.variant {
        Variant::Serial => SweepPlan::serial(a.kernel, a.iters),
        Variant::Threaded => SweepPlan::threaded(a.kernel, a.iters, a.threads),
        Variant::Pipeline => SweepPlan::pipeline(a.kernel, a.iters, a.threads),
        Variant::Wavefront => {
            let blocks = match a.blocks {
                Auto::Value(b) => b,
                Auto::Auto if a.kernel.is_gauss_seidel() => a.groups,
                Auto::Auto => choose_block_size(topo, a.groups, a.tpg, ni, nj),
            };
            if !a.kernel.is_gauss_seidel() && blocks > 0 {
                if let Some(cache) = topo.outer_cache_bytes() {
                    let fits = block_fits(cache, a.groups, a.tpg, ni, nj.div_ceil(blocks));
                    if !fits {
                        warnings.push(format!(
                            "blocks of {} lines exceed the per-group cache budget",
                            nj.div_ceil(blocks)
                        ));
                    }
                    cache_fit = Some(fits);
                }
            }
            SweepPlan::wavefront(a.kernel, a.iters, WavefrontConfig::new(a.groups, a.tpg, blocks)?)
        }
    }
    .with_coeffs(coeffs)
    .with_streaming_stores(a.nt_stores);

    let team = plan.team_size();
    plan.config.barrier = Some(match a.barrier {
        Auto::Value(k) => k,
        Auto::Auto => BarrierKind::auto(team, topo.physical_cores),
    });
    let smt = if a.smt { SmtMode::On } else { SmtMode::Off };
    let placement = match &a.pin {
        PinSpec::None => None,
        PinSpec::List(ids) => Some(ids.clone()),
        PinSpec::Auto if plan.variant == Variant::Serial => None,
        PinSpec::Auto => {
            let tried = match plan.variant {
                Variant::Wavefront => plan_placement(topo, a.groups, a.tpg, smt),
                _ => plan_placement(topo, 1, team, smt).or_else(|_| plan_placement(topo, team, 1, smt)),
            };
            match tried {
                Ok(p) => Some(p),
                Err(e) => {
                    let w = format!("automatic placement failed ({e}); running unpinned");
                    log::warn!("{w}");
                    warnings.push(w);
                    None
                }
            }
        }
    };
    plan = plan.with_placement(placement);

    Ok(Resolved {
        plan,
        size,
        cache_fit,
        warnings,
    })
}

fn open_output(path: Option<&Path>, out: &mut dyn Write, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            write(&mut f)?;
            f.flush()?;
            Ok(())
        }
        None => write(out),
    }
}

fn bench_records(
    a: &PlanArgs,
    r: &Resolved,
    m: &Measurement,
    ms: Option<(f64, &str)>,
    reps: usize,
) -> Run<BenchRecord> {
    let wave = r.plan.variant == Variant::Wavefront;
    let t = if wave { r.plan.config.threads_per_group } else { 1 };
    let bytes = predict_traffic(r.plan.kernel, r.plan.variant, t, r.plan.streaming_stores).ok();
    let predicted = match (ms, bytes) {
        (Some((ms, _)), Some(b)) => predict_p0(ms, b).ok().map(|p| p / 1e6),
        _ => None,
    };
    let summary = BenchRecord {
        row: RowKind::Summary,
        rep: None,
        kernel: r.plan.kernel.to_string(),
        variant: r.plan.variant.to_string(),
        ni: r.size.ni,
        nj: r.size.nj,
        nk: r.size.nk,
        iters: r.plan.iter_end,
        groups: wave.then_some(r.plan.config.groups),
        tpg: wave.then_some(t),
        blocks: wave.then_some(r.plan.config.blocks),
        threads: r.plan.team_size(),
        smt: a.smt,
        barrier: (r.plan.team_size() > 1).then(|| r.plan.config.barrier.unwrap_or(BarrierKind::CentralSpin).to_string()),
        pin: a.pin.to_string(),
        pinned: m.pinned,
        nt_stores: r.plan.streaming_stores,
        seed: a.seed,
        init: a.init.to_string(),
        a: r.plan.coeffs.a,
        b: r.plan.coeffs.b,
        warmup: m.warmup,
        repetitions: reps,
        seconds: m.median_seconds,
        mlups: m.mlups,
        ms: ms.map(|(v, _)| v),
        ms_source: ms.map_or("none", |(_, s)| s).into(),
        bytes_per_lup: bytes,
        predicted_mlups: predicted,
        cache_fit: r.cache_fit,
        warnings: r.warnings.iter().chain(&m.warnings).cloned().collect::<Vec<_>>().join("; "),
        host: m.host.to_string(),
    };
    let rows = (0..m.repetitions())
        .map(|i| BenchRecord {
            row: RowKind::Rep,
            rep: Some(i),
            seconds: m.seconds[i],
            mlups: m.rep_mlups(i),
            ..summary.clone()
        })
        .collect();
    Run { summary, reps: rows }
}

fn bench_one(a: &PlanArgs, size: Size, b: &BenchArgs, ms: Option<(f64, &str)>, topo: &Topology) -> Result<Run<BenchRecord>> {
    let r = resolve_plan(a, size, topo)?;
    let input = create_grid(size.ni, size.nj, size.nk, a.init.pattern(a.seed))?;
    let m = measure(&r.plan, &input, b.reps, b.warmup, topo)?;
    if let Some(path) = &a.dump {
        execute(&r.plan, input)?.grid.dump_to_file(path)?;
    }
    Ok(bench_records(a, &r, &m, ms, b.reps))
}

fn model_bandwidth(b: &BenchArgs) -> Option<(f64, &'static str)> {
    if let Some(ms) = b.ms {
        return Some((ms, "given"));
    }
    let mut cfg = StreamConfig::new(1, BENCH_STREAM_ELEMENTS, false);
    cfg.reps = 3;
    match stream_triad_with(&cfg) {
        Ok(s) => Some((s.bandwidth, "triad")),
        Err(e) => {
            log::warn!("bandwidth estimate failed: {e}");
            None
        }
    }
}

/// `bench`: times the plan and writes the result record.
pub fn cmd_bench(b: &BenchArgs, out: &mut dyn Write) -> Result<u8> {
    let topo = detect_topology();
    let ms = model_bandwidth(b);
    let runs = if b.matrix {
        let mut runs = Vec::new();
        for &n in &b.matrix_sizes {
            for (variant, t) in matrix_points(b.plan.kernel, &b.matrix_t) {
                let mut a = b.plan.clone();
                a.variant = variant;
                a.tpg = t;
                a.iters = b.plan.iters.max(1).div_ceil(t) * t;
                a.dump = None;
                if variant != Variant::Wavefront {
                    a.threads = a.threads.max(1);
                }
                match bench_one(&a, Size::cube(n), b, ms, &topo) {
                    Ok(run) => runs.push(Run { summary: run.summary, reps: Vec::new() }),
                    Err(e) => log::warn!("skipping {variant} t={t} at {n}^3: {e}"),
                }
            }
        }
        runs
    } else {
        let size = b.plan.size.unwrap_or(Size::cube(100));
        vec![bench_one(&b.plan, size, b, ms, &topo)?]
    };
    open_output(b.out.output.as_deref(), out, |w| write_runs(w, b.out.format, &runs))?;
    Ok(EXIT_OK)
}

/// Variant and blocking-factor combinations of a `--matrix` sweep.
pub fn matrix_points(kernel: KernelKind, ts: &[usize]) -> Vec<(Variant, usize)> {
    let mut pts = vec![(Variant::Serial, 1)];
    if kernel.is_gauss_seidel() {
        pts.push((Variant::Pipeline, 1));
    } else {
        pts.push((Variant::Threaded, 1));
    }
    pts.extend(ts.iter().filter(|&&t| t > 0).map(|&t| (Variant::Wavefront, t)));
    pts
}

/// `verify`: bitwise comparison against the serial oracle.
pub fn cmd_verify(cfg: &RunConfig, v: &VerifyArgs, out: &mut dyn Write) -> Result<u8> {
    let topo = detect_topology();
    let size = v.plan.size.unwrap_or(Size::cube(34));
    let r = resolve_plan(&v.plan, size, &topo)?;
    let plan = r.plan.instrumented(v.instrumented);
    let oracle_kernel = v.oracle_kernel.unwrap_or(plan.kernel);
    let mut oracle = plan.oracle();
    oracle.kernel = oracle_kernel;
    if oracle_kernel.is_gauss_seidel() {
        oracle.streaming_stores = false;
    }
    let input = create_grid(size.ni, size.nj, size.nk, v.plan.init.pattern(v.plan.seed))?;
    plan.validate(&input)?;
    oracle.validate(&input)?;
    let got = execute(&plan, input.clone())?;
    let want = execute(&oracle, input)?;
    if let Some(path) = &v.plan.dump {
        got.grid.dump_to_file(path)?;
    }
    match got.grid.first_difference(&want.grid) {
        None => {
            writeln!(
                out,
                "ok: {} {} matches serial {} bitwise on {size} after {} sweeps ({} stages, {} line updates)",
                plan.variant, plan.kernel, oracle_kernel, plan.iter_end, got.stats.stages, got.stats.line_updates
            )?;
            Ok(EXIT_OK)
        }
        Some(d) => {
            writeln!(
                out,
                "mismatch at k={} j={} i={}: {} {} = {:e} ({:#018x}), serial {} = {:e} ({:#018x})",
                d.k,
                d.j,
                d.i,
                plan.variant,
                plan.kernel,
                d.left,
                d.left.to_bits(),
                oracle_kernel,
                d.right,
                d.right.to_bits()
            )?;
            writeln!(out, "config: {}", cfg.command_line())?;
            Ok(EXIT_MISMATCH)
        }
    }
}

/// `stream`: triad bandwidth, one row per repetition plus a summary.
pub fn cmd_stream(s: &StreamArgs, out: &mut dyn Write) -> Result<u8> {
    let topo = detect_topology();
    let elements = s
        .elements
        .unwrap_or_else(|| stream_elements_for(&topo, STREAM_DEFAULT_CAP).min(STREAM_DEFAULT_CAP));
    let mut warnings = Vec::new();
    let placement = match &s.pin {
        PinSpec::None => None,
        PinSpec::List(ids) => Some(ids.clone()),
        PinSpec::Auto => match plan_placement(&topo, 1, s.threads.max(1), SmtMode::Off) {
            Ok(p) => Some(p),
            Err(e) => {
                warnings.push(format!("automatic placement failed ({e}); running unpinned"));
                None
            }
        },
    };
    let mut cfg = StreamConfig::new(s.threads, elements, s.nt);
    cfg.reps = s.reps;
    cfg.placement = placement;
    let res = stream_triad_with(&cfg)?;
    warnings.extend(stream_size_warning(&topo, elements));
    warnings.extend(res.warnings.iter().cloned());
    for w in &warnings {
        log::warn!("{w}");
    }
    let bytes = (res.bytes_per_element * elements as u64) as f64;
    let summary = StreamRecord {
        row: RowKind::Summary,
        rep: None,
        threads: res.threads,
        elements,
        nt_requested: res.nt_requested,
        nt_used: res.nt_used,
        bytes_per_element: res.bytes_per_element,
        seconds: bytes / res.bandwidth,
        bandwidth: res.bandwidth,
        validated: res.validated,
        pinned: res.pinned,
        warnings: warnings.join("; "),
        host: HostFingerprint::capture(&topo).to_string(),
    };
    let reps = res
        .seconds
        .iter()
        .enumerate()
        .map(|(i, &sec)| StreamRecord {
            row: RowKind::Rep,
            rep: Some(i),
            seconds: sec,
            bandwidth: bytes / sec,
            ..summary.clone()
        })
        .collect();
    let runs = [Run { summary, reps }];
    open_output(s.out.output.as_deref(), out, |w| write_runs(w, s.out.format, &runs))?;
    Ok(EXIT_OK)
}

/// `topo`: the detected topology as JSON.
pub fn cmd_topo(t: &TopoArgs, out: &mut dyn Write) -> Result<u8> {
    let topo = match &t.file {
        Some(f) => detect_with(Some(f), Path::new("/sys/devices/system/cpu")),
        None => detect_topology(),
    };
    for w in &topo.warnings {
        log::warn!("{w}");
    }
    writeln!(out, "{}", topo.to_json()?)?;
    Ok(EXIT_OK)
}

/// `model`: the bandwidth-bound ceiling for the given or derived traffic.
pub fn cmd_model(m: &ModelArgs, out: &mut dyn Write) -> Result<u8> {
    let bytes = match m.bytes {
        Some(b) => b,
        None => predict_traffic(m.kernel, m.variant, m.t, m.nt)?,
    };
    let lups = predict_p0(m.ms, bytes)?;
    let rec = ModelRecord {
        kernel: m.kernel.to_string(),
        variant: m.variant.to_string(),
        t: m.t,
        nt_stores: m.nt,
        ms: m.ms,
        bytes_per_lup: bytes,
        predicted_lups: lups,
        predicted_mlups: lups / 1e6,
    };
    let runs = [Run { summary: rec, reps: Vec::new() }];
    open_output(m.out.output.as_deref(), out, |w| write_runs(w, m.out.format, &runs))?;
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command, reporting errors
/// on stderr. Help and version requests exit 0; bad usage exits 2.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    let result = run(&cfg, &mut lock);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    let _ = lock.flush();
    exit_code(&result)
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion; criteria 7 and 8
//! are informational and never change the exit status.

mod common;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{describe, matrix_plans, random_grid};
use rand::{Rng, SeedableRng};
use wavefront_stencil::grid::{create_grid, Grid3D, InitPattern};
use wavefront_stencil::kernels::{gs_line_update, gs_line_update_interleaved};
use wavefront_stencil::perf::{measure, predict_p0, predict_traffic, stream_triad_with, StreamConfig};
use wavefront_stencil::sweeps::{execute, partition_blocks, KernelKind, SweepPlan, Variant, WavefrontConfig};
use wavefront_stencil::sync::{Barrier, BarrierKind};
use wavefront_stencil::topo::detect_topology;

type Outcome = Result<String, String>;

fn oracle_matrix() -> Outcome {
    let start = Instant::now();
    let plans = matrix_plans();
    for plan in &plans {
        let mut plan = plan.clone();
        plan.verify = true;
        let out = execute(&plan, random_grid(34, 2024)).map_err(|e| format!("{}: {e}", describe(&plan)))?;
        match out.verification {
            Some(Ok(())) => {}
            Some(Err(d)) => return Err(format!("{}: differs at {d:?}", describe(&plan))),
            None => return Err("no verification result".into()),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 60.0 {
        return Err(format!("{} plans bitwise equal but took {secs:.1} s", plans.len()));
    }
    Ok(format!("{} plans bitwise equal to serial in {secs:.2} s", plans.len()))
}

fn fixed_points() -> Outcome {
    let mut checked = 0;
    for pattern in [InitPattern::Uniform(3.0), InitPattern::Linear] {
        let g = create_grid(16, 16, 16, pattern).map_err(|e| e.to_string())?;
        for kernel in KernelKind::ALL {
            let mut plans = vec![SweepPlan::serial(kernel, 4)];
            plans.push(SweepPlan::wavefront(kernel, 4, WavefrontConfig::new(1, 4, 4).unwrap()));
            plans.push(if kernel.is_gauss_seidel() {
                SweepPlan::pipeline(kernel, 4, 2)
            } else {
                SweepPlan::threaded(kernel, 4, 2)
            });
            for plan in plans {
                let out = execute(&plan, g.clone()).map_err(|e| e.to_string())?.grid;
                if let Some(d) = out.first_difference(&g) {
                    return Err(format!("{pattern:?} {}: moved at {d:?}", describe(&plan)));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} runs left uniform and linear fields unchanged"))
}

fn integer_grid(n: usize, seed: u64) -> Grid3D {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut g = create_grid(n, n, n, InitPattern::Uniform(0.0)).unwrap();
    let n = n as isize;
    for k in -1..=n {
        for j in -1..=n {
            for i in -1..=n {
                g.set(k, j, i, rng.gen_range(-100..100) as f64).unwrap();
            }
        }
    }
    g
}

fn interleaved_consistency() -> Outcome {
    // Exact arithmetic: integer data and b = 1 keep every partial sum an integer
    // below 2^53 for one line, so each line starts from the pristine grid.
    let base = integer_grid(16, 11);
    for k in 0..16 {
        for j in 0..16 {
            let mut naive = base.clone();
            let mut inter = base.clone();
            gs_line_update(&mut naive, 1.0, k, j).map_err(|e| e.to_string())?;
            gs_line_update_interleaved(&mut inter, 1.0, k, j).map_err(|e| e.to_string())?;
            if let Some(d) = naive.first_difference(&inter) {
                return Err(format!("integer line ({k}, {j}) differs at {d:?}"));
            }
        }
    }
    let g = random_grid(16, 12);
    let a = execute(&SweepPlan::serial(KernelKind::GsNaive, 1), g.clone()).unwrap().grid;
    let b = execute(&SweepPlan::serial(KernelKind::GsInterleaved, 1), g).unwrap().grid;
    let worst = a
        .interior()
        .zip(b.interior())
        .map(|(x, y)| if x == y { 0.0 } else { ((x - y) / x).abs() })
        .fold(0.0f64, f64::max);
    if worst > 1e-13 {
        return Err(format!("relative deviation {worst:e} on random data"));
    }
    Ok(format!("all 256 lines bitwise on integer data; max relative deviation {worst:.2e} on random data"))
}

fn stress(kind: BarrierKind, team: usize, iterations: u64) -> Result<(), String> {
    let barrier = Arc::new(Barrier::new(team, kind).map_err(|e| e.to_string())?);
    let slots: Arc<Vec<AtomicU64>> = Arc::new((0..team).map(|_| AtomicU64::new(u64::MAX)).collect());
    let handles: Vec<_> = (0..team)
        .map(|rank| {
            let (barrier, slots) = (barrier.clone(), slots.clone());
            std::thread::spawn(move || -> Result<(), String> {
                let right = (rank + 1) % team;
                for it in 0..iterations {
                    // Relaxed on purpose: only the barrier orders these.
                    slots[rank].store(it, Ordering::Relaxed);
                    let p = barrier.wait(rank);
                    if p != 2 * it {
                        return Err(format!("rank {rank} saw phase {p}, expected {}", 2 * it));
                    }
                    let seen = slots[right].load(Ordering::Relaxed);
                    if seen != it {
                        return Err(format!("rank {rank} read {seen} from rank {right} in iteration {it}"));
                    }
                    let q = barrier.wait(rank);
                    if q != 2 * it + 1 {
                        return Err(format!("rank {rank} saw phase {q}, expected {}", 2 * it + 1));
                    }
                }
                Ok(())
            })
        })
        .collect();
    for h in handles {
        h.join().map_err(|_| "worker panicked".to_string())??;
    }
    Ok(())
}

fn barrier_stress() -> Outcome {
    const PHASES: u64 = 100_000;
    let mut report = Vec::new();
    for kind in [BarrierKind::CentralSpin, BarrierKind::Tree] {
        for team in [2, 4, 8] {
            let (tx, rx) = mpsc::channel();
            let start = Instant::now();
            std::thread::spawn(move || {
                let _ = tx.send(stress(kind, team, PHASES / 2));
            });
            match rx.recv_timeout(Duration::from_secs(60)) {
                Ok(Ok(())) => report.push(format!("{kind}/{team}:{:.1}s", start.elapsed().as_secs_f64())),
                Ok(Err(e)) => return Err(format!("{kind} T={team}: {e}")),
                Err(_) => return Err(format!("{kind} T={team}: watchdog expired after 60 s")),
            }
        }
    }
    Ok(format!("{PHASES} phases per run, sequences and visibility intact ({})", report.join(" ")))
}

fn model_arithmetic() -> Outcome {
    let reference = include_str!("../../../paper.md");
    if !reference.contains("STREAM socket NT/noNT          &4.8/5.6           &18.5/23.7") {
        return Err("reference bandwidth 18.5 GB/s not found in the source table".into());
    }
    if !reference.contains("P_0 =  \\frac{M_S}{16\\;\\mathrm{bytes}}") {
        return Err("16 bytes per update not found in the source model".into());
    }
    let p0 = predict_p0(18.5e9, 16.0).map_err(|e| e.to_string())?;
    if p0 != 1.15625e9 {
        return Err(format!("predict_p0(18.5e9, 16) = {p0}"));
    }
    for t in 1..=16 {
        for (kernel, nt) in [(KernelKind::Jacobi, true), (KernelKind::Jacobi, false), (KernelKind::GsNaive, false)] {
            let plain = predict_traffic(kernel, Variant::Serial, 1, nt).unwrap();
            let wave = predict_traffic(kernel, Variant::Wavefront, t, nt).unwrap();
            if plain != wave * t as f64 {
                return Err(format!("{kernel} nt={nt} t={t}: {plain} != {wave} * {t}"));
            }
        }
    }
    Ok("predict_p0(18.5e9, 16) = 1.15625e9; plain = wavefront * t for t in 1..=16".into())
}

fn partitions() -> Outcome {
    let mut cases = 0;
    for nj in 1..=64 {
        for b in 1..=nj {
            let r = partition_blocks(nj, b).map_err(|e| e.to_string())?;
            let mut covered = vec![0u8; nj];
            for block in &r {
                for j in block.clone() {
                    covered[j] += 1;
                }
            }
            let sizes: Vec<usize> = r.iter().map(|x| x.len()).collect();
            let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
            if r.len() != b || covered.iter().any(|&c| c != 1) || spread > 1 {
                return Err(format!("nj={nj} B={b}: {r:?}"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} (nj, B) pairs disjoint, covering, spread <= 1"))
}

fn jacobi_mlups(plan: &SweepPlan, n: (usize, usize, usize), reps: usize) -> Result<f64, String> {
    let topo = detect_topology();
    let g = create_grid(n.0, n.1, n.2, InitPattern::random(5)).map_err(|e| e.to_string())?;
    Ok(measure(plan, &g, reps, 1, &topo).map_err(|e| e.to_string())?.mlups)
}

fn wavefront_speedup() -> Outcome {
    let topo = detect_topology();
    let cores = topo.physical_cores.max(1);
    let serial = SweepPlan::serial(KernelKind::Jacobi, 4);
    let cached = jacobi_mlups(&serial, (32, 32, 32), 5)?;
    let big = (400, 200, 200);
    let memory = jacobi_mlups(&serial, big, 3)?;
    let ratio = cached / memory;
    let t = cores;
    let iters = 4 * t;
    let threaded = jacobi_mlups(&SweepPlan::threaded(KernelKind::Jacobi, iters, cores), big, 3)?;
    let blocks = wavefront_stencil::sweeps::choose_block_size(&topo, 1, t, big.0, big.1);
    let cfg = WavefrontConfig::new(1, t, blocks).map_err(|e| e.to_string())?;
    let wave = jacobi_mlups(&SweepPlan::wavefront(KernelKind::Jacobi, iters, cfg), big, 3)?;
    let speedup = wave / threaded;
    let detail = format!(
        "cores={cores}, cache/memory MLUP/s = {cached:.0}/{memory:.0} = {ratio:.2}, \
         wavefront t={t} {wave:.0} vs threaded {threaded:.0} MLUP/s = {speedup:.2}x"
    );
    if ratio < 2.0 {
        Err(format!("precondition not met on this host ({detail})"))
    } else if speedup < 1.2 {
        Err(format!("speedup below 1.2x ({detail})"))
    } else {
        Ok(detail)
    }
}

fn stream_check() -> Outcome {
    let topo = detect_topology();
    let elements = 1 << 23;
    let run = |threads: usize| {
        let mut cfg = StreamConfig::new(threads, elements, false);
        cfg.reps = 5;
        stream_triad_with(&cfg).map_err(|e| e.to_string())
    };
    let one = run(1)?;
    let socket_threads = topo.physical_cores.max(1);
    let socket = run(socket_threads)?;
    let detail = format!(
        "validated; 1 thread {:.2} GB/s, {socket_threads} threads {:.2} GB/s",
        one.bandwidth / 1e9,
        socket.bandwidth / 1e9
    );
    if !(one.validated && socket.validated) {
        Err("triad validation failed".into())
    } else if socket.bandwidth < one.bandwidth {
        Err(format!("socket bandwidth below single thread ({detail})"))
    } else {
        Ok(detail)
    }
}

fn main() {
    let criteria: [(u8, &str, bool, fn() -> Outcome); 8] = [
        (1, "oracle equivalence matrix", true, oracle_matrix),
        (2, "fixed-point invariance", true, fixed_points),
        (3, "interleaved Gauss-Seidel consistency", true, interleaved_consistency),
        (4, "barrier stress", true, barrier_stress),
        (5, "model arithmetic", true, model_arithmetic),
        (6, "partitioning properties", true, partitions),
        (7, "wavefront speedup over threaded Jacobi", false, wavefront_speedup),
        (8, "STREAM triad validation and scaling", false, stream_check),
    ];
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, gating, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let tag = if gating { "" } else { " (informational)" };
        match check() {
            Ok(detail) => println!("PASS [{id}] {name}{tag}: {detail}"),
            Err(detail) => {
                println!("FAIL [{id}] {name}{tag}: {detail}");
                if gating {
                    failed += 1;
                }
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

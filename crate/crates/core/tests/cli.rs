use std::process::{Command, Output};

fn wavefront(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavefront"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_wavefront_jacobi_passes() {
    let o = wavefront(&["verify", "--kernel", "jacobi", "--variant", "wavefront", "--groups", "1", "--tpg", "4", "--blocks", "4", "--iters", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("ok:"));
}

#[test]
fn verify_instrumented_and_pinned_list() {
    let o = wavefront(&["verify", "--kernel", "gs-naive", "--variant", "wavefront", "--groups", "2", "--tpg", "2", "--blocks", "4", "--iters", "4", "--instrumented"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = wavefront(&["verify", "--kernel", "gs-naive", "--variant", "pipeline", "--threads", "2", "--iters", "2", "--pin", "0,0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn verify_reports_reassociation_mismatch() {
    let o = wavefront(&["verify", "--kernel", "gs-interleaved", "--variant", "wavefront", "--tpg", "2", "--iters", "2", "--oracle-kernel", "gs-naive"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.starts_with("mismatch at k="), "{out}");
    assert!(out.contains("config: wavefront verify --kernel gs-interleaved"), "{out}");
}

#[test]
fn zero_iterations_verify_for_every_variant() {
    for (kernel, variant) in [("jacobi", "serial"), ("jacobi", "threaded"), ("gs-naive", "pipeline"), ("gs-interleaved", "wavefront")] {
        let o = wavefront(&["verify", "--kernel", kernel, "--variant", variant, "--iters", "0", "--threads", "2"]);
        assert_eq!(o.status.code(), Some(0), "{kernel} {variant}: {}", stdout(&o));
    }
}

#[test]
fn config_errors_exit_two() {
    for args in [
        &["bench", "--size", "0x1x1"][..],
        &["stream", "--threads", "1", "--elements", "0"],
        &["verify", "--kernel", "gs-naive", "--variant", "threaded"],
        &["verify", "--iters", "3", "--tpg", "2"],
        &["verify", "--nonsense"],
        &["model", "--ms", "0", "--bytes", "16"],
    ] {
        let o = wavefront(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn model_matches_bandwidth_over_bytes() {
    let o = wavefront(&["model", "--ms", "18.5e9", "--bytes", "16", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["predicted_lups"].as_f64(), Some(1.15625e9));
    assert_eq!(v["predicted_mlups"].as_f64(), Some(1156.25));
    let o = wavefront(&["model", "--ms", "1.6e10", "--kernel", "jacobi", "--variant", "wavefront", "--t", "4", "--nt"]);
    let text = stdout(&o);
    assert!(text.lines().nth(1).unwrap().contains(",4.0,4000000000.0,4000.0"), "{text}");
}

#[test]
fn topo_prints_json() {
    let o = wavefront(&["topo"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!v["threads"].as_array().unwrap().is_empty());
    assert!(!v["cache_groups"].as_array().unwrap().is_empty());
}

#[test]
fn topo_reads_manual_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("topo.txt");
    std::fs::write(&path, "# id core group bytes\n0 0 0 8388608\n1 0 0 8388608\n2 1 1 8388608\n3 1 1 8388608\n").unwrap();
    let o = wavefront(&["topo", "--file", path.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["cache_groups"].as_array().unwrap().len(), 2);
    assert_eq!(v["source"]["manual-file"].as_str(), Some(path.to_str().unwrap()));
}

fn csv_header_and_rows(text: &str) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    (header, r.records().map(Result::unwrap).collect())
}

#[test]
fn bench_csv_and_json_share_fields() {
    let common = ["bench", "--size", "12x10x8", "--iters", "2", "--tpg", "2", "--reps", "3", "--warmup", "0", "--ms", "1e10", "--pin", "none"];
    let csv_out = wavefront(&common);
    assert_eq!(csv_out.status.code(), Some(0));
    let (header, rows) = csv_header_and_rows(&stdout(&csv_out));
    assert_eq!(rows.len(), 4);
    let row = header.iter().position(|h| h == "row").unwrap();
    assert_eq!(rows.iter().filter(|r| &r[row] == "rep").count(), 3);
    assert_eq!(&rows[3][row], "summary");

    let mut args = common.to_vec();
    args.extend(["--format", "json"]);
    let json_out = wavefront(&args);
    let v: serde_json::Value = serde_json::from_slice(&json_out.stdout).unwrap();
    let mut keys: Vec<String> = v.as_object().unwrap().keys().filter(|k| *k != "reps").cloned().collect();
    let mut want = header.clone();
    keys.sort();
    want.sort();
    assert_eq!(keys, want);
    let reps = v["reps"].as_array().unwrap();
    assert_eq!(reps.len(), 3);
    let mut rep_keys: Vec<String> = reps[0].as_object().unwrap().keys().cloned().collect();
    rep_keys.sort();
    assert_eq!(rep_keys, want);
    assert_eq!(v["predicted_mlups"].as_f64(), Some(1e10 / 12.0 / 1e6));
    assert_eq!(v["ms_source"], "given");
}

#[test]
fn bench_writes_output_file_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let dump = dir.path().join("g.bin");
    let o = wavefront(&[
        "bench", "--kernel", "gs-naive", "--variant", "pipeline", "--threads", "2", "--size", "8", "--iters", "1",
        "--reps", "1", "--ms", "1e10", "--format", "json", "-o", out.to_str().unwrap(), "--dump", dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["variant"], "pipeline");
    let (ext, data) = wavefront_stencil::grid::read_dump(std::fs::File::open(&dump).unwrap()).unwrap();
    assert_eq!(ext, (8, 8, 8));
    assert_eq!(data.len(), 8 * 8 * 8);
}

#[test]
fn unpinnable_auto_placement_still_succeeds() {
    let o = wavefront(&["bench", "--iters", "2", "--tpg", "2", "--groups", "64", "--blocks", "64", "--size", "8x128x4", "--reps", "1", "--ms", "1e10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_header_and_rows(&stdout(&o));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let last = rows.last().unwrap();
    assert_eq!(&last[col("pinned")], "false");
    assert!(last[col("warnings")].contains("running unpinned"));
}

#[test]
fn matrix_emits_one_summary_per_point() {
    let o = wavefront(&["bench", "--matrix", "--matrix-sizes", "6,10", "--matrix-t", "1,2", "--iters", "2", "--reps", "1", "--warmup", "0", "--ms", "1e10", "--pin", "none"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_header_and_rows(&stdout(&o));
    // serial, threaded, wavefront t=1, wavefront t=2 per size
    assert_eq!(rows.len(), 8);
    let row = header.iter().position(|h| h == "row").unwrap();
    assert!(rows.iter().all(|r| &r[row] == "summary"));
}

#[test]
fn stream_small_triad() {
    let o = wavefront(&["stream", "--threads", "2", "--elements", "10000", "--reps", "3", "--pin", "none", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["validated"], true);
    assert_eq!(v["reps"].as_array().unwrap().len(), 3);
    assert_eq!(v["bytes_per_element"], 32);
}

#[test]
fn help_exits_zero() {
    assert_eq!(wavefront(&["--help"]).status.code(), Some(0));
    assert_eq!(wavefront(&["bench", "--help"]).status.code(), Some(0));
}

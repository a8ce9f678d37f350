use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn thermnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermnet")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_model_is_a_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = thermnet(&["--model", "does/not/exist.json", "--out", s(&out), "solve-steady"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read model file"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("single_capacitor.json");
    let out = dir.path().join("out");
    for args in [
        vec!["--model", s(&m), "--out", s(&out), "solve-transient"],
        vec!["--model", s(&m), "--out", s(&out), "transfer", "--input", "heat:mass"],
        vec!["--model", s(&m), "--out", s(&out), "transfer", "--input", "boundary:mass"],
        vec!["--model", s(&m), "--out", s(&out), "transfer", "--input", "power:spacecraft"],
        vec!["--model", s(&m), "--out", s(&out), "transfer", "--input", "boundary:spacecraft", "--fmin", "0"],
        vec!["--model", s(&m), "--out", s(&out), "--threads", "0", "solve-steady"],
        vec!["--model", s(&m), "--out", s(&out), "frobnicate"],
    ] {
        let o = thermnet(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn solver_failure_exits_one_and_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let m = model("orbit_toy.json");
    let o = thermnet(&["--model", s(&m), "--out", s(&out), "orbit", "--cycles-max", "1", "--tol", "1e-9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("orbit_summary.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn steady_output_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let m = model("example_two_node.json");
    let o = thermnet(&["--model", s(&m), "--out", s(&out), "--seed", "7", "solve-steady"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("steady.csv")).unwrap();
    assert!(csv.starts_with("node_id,temperature_K\n"));
    assert!(csv.contains("plate,204.926"));
    let man: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man["command"], "solve-steady");
    assert_eq!(man["seed"], 7);
    assert_eq!(man["options"]["method"], "newton");
    assert_eq!(man["version"], env!("CARGO_PKG_VERSION"));
    let hash = man["model_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn transient_csv_is_long_format_on_the_requested_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let m = model("single_capacitor.json");
    let o = thermnet(&["--model", s(&m), "--out", s(&out), "solve-transient", "--t-end", "50", "--output-every", "10", "--method", "cn"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("transient.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("time_s,node_id,temperature_K"));
    let rows: Vec<&str> = lines.collect();
    // two nodes at t = 0, 10, ..., 50
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().filter(|r| r.contains(",mass,")).count() == 6);
}

#[test]
fn radk_writes_a_loadable_block_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let m = model("coaxial_discs.json");
    let o = thermnet(&["--model", s(&m), "--out", s(&out), "radk", "--rays", "2000"]);
    assert!(o.status.success());
    let block: thermnet::model::RadCouplings =
        serde_json::from_str(&std::fs::read_to_string(out.join("rad_couplings.json")).unwrap()).unwrap();
    assert_eq!(block.seed, Some(thermnet::radiative::DEFAULT_SEED));
    assert!(block.entries.iter().any(|e| e.from == "lower_face" && e.to == "upper_face"));
    let diag = std::fs::read_to_string(out.join("radk_diagnostics.csv")).unwrap();
    assert!(diag.starts_with("entry,gr_m2,stderr_m2,rays\n"));
    assert!(diag.contains("lower_face->space,"));

    // the block can be pasted into the model
    let mut model: thermnet::model::Model = thermnet::model::Model::from_json(&std::fs::read_to_string(&m).unwrap()).unwrap();
    model.rad_couplings = Some(block);
    assert!(thermnet::network::Network::from_model(&model).is_ok());
}

#[test]
fn heatflow_writes_csv_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let m = model("linear_chain.json");
    assert!(thermnet(&["--model", s(&m), "--out", s(&out), "heatflow"]).status.success());
    let csv = std::fs::read_to_string(out.join("heatflow.csv")).unwrap();
    assert!(csv.starts_with("from,to,kind,watts\n"));
    assert!(csv.contains("hot,n1,conductive,"));
    assert!(std::fs::read_to_string(out.join("heatflow.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn single_value_sweep_matches_a_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("linear_chain.json");
    let direct = dir.path().join("direct");
    let sweep = dir.path().join("sweep");
    assert!(thermnet(&["--model", s(&m), "--out", s(&direct), "solve-steady"]).status.success());
    let o = thermnet(&[
        "--model",
        s(&m),
        "--out",
        s(&sweep),
        "sweep",
        "--param",
        "nodes[hot].temperature",
        "--values",
        "300",
        "--",
        "solve-steady",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(direct.join("steady.csv")).unwrap();
    let b = std::fs::read(sweep.join("value_300").join("steady.csv")).unwrap();
    assert_eq!(a, b);
    let summary = std::fs::read_to_string(sweep.join("sweep_summary.csv")).unwrap();
    assert!(summary.starts_with("value,status,node_id,temperature_K\n"));
    // one row per node, all for the single value
    assert_eq!(summary.lines().skip(1).filter(|l| l.starts_with("300,ok,")).count(), 7);
}

#[test]
fn sweep_rows_are_sorted_by_value() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("linear_chain.json");
    let out = dir.path().join("sweep");
    let o = thermnet(&[
        "--model",
        s(&m),
        "--out",
        s(&out),
        "sweep",
        "--param",
        "nodes[hot].temperature",
        "--values",
        "400,250,320",
        "--report",
        "n3",
        "--",
        "solve-steady",
    ]);
    assert!(o.status.success());
    let summary = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let values: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(values, ["250", "320", "400"]);
    // n3 sits halfway between hot and cold 100 K
    let n3: Vec<f64> = summary.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!((n3[0] - 175.0).abs() < 1e-9 && (n3[2] - 250.0).abs() < 1e-9);
}

#[test]
fn sweep_with_invalid_path_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let m = model("linear_chain.json");
    let o = thermnet(&["--model", s(&m), "--out", s(&out), "sweep", "--param", "nodes[warm].temperature", "--values", "1", "--", "solve-steady"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodes[warm].temperature"));
    assert!(!out.exists());
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("black_cube.json");
    let mut outputs = Vec::new();
    for n in ["1", "3"] {
        let out = dir.path().join(n);
        let o = Command::new(env!("CARGO_BIN_EXE_thermnet"))
            .env("THERMNET_THREADS", n)
            .args(["--model", s(&m), "--out", s(&out), "radk"])
            .output()
            .unwrap();
        assert!(o.status.success());
        let man: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(man["threads"], n.parse::<u64>().unwrap());
        outputs.push(std::fs::read(out.join("rad_couplings.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blockprobe::graph::{random_instance_in, Graph};
use serde_json::Value;

const TRIANGLE: &str = "p edge 3 3\ne 1 2\ne 2 3\ne 1 3\n";

fn blockprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockprobe")).args(args).output().expect("spawn blockprobe")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_graph(dir: &Path, graph: &Path, config: Option<&Path>) -> (Output, PathBuf) {
    let out = dir.join("out");
    let mut args = vec!["run", "--graph", graph.to_str().unwrap(), "--out", out.to_str().unwrap()];
    if let Some(c) = config {
        args.extend(["--config", c.to_str().unwrap()]);
    }
    (blockprobe(&args), out)
}

fn path_graph(n: usize) -> String {
    let mut s = format!("p edge {n} {}\n", n - 1);
    for v in 1..n {
        s += &format!("e {v} {}\n", v + 1);
    }
    s
}

#[test]
fn design_counts_for_desk_instance() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = path_graph(27).replace("p edge 27 26", "p edge 27 31");
    for (u, v) in [(24, 26), (25, 27), (24, 27), (4, 10), (11, 18)] {
        text += &format!("e {u} {v}\n");
    }
    let g = write(dir.path(), "g27.col", &text);
    let out = dir.path().join("design");
    let o = blockprobe(&["design", "--graph", g.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("81 codewords, 156 splints, 15 blocking probes, 3 selection probes"), "{}", stdout(&o));
    let fasta = std::fs::read_to_string(out.join("design.fasta")).unwrap();
    assert_eq!(fasta.lines().filter(|l| l.starts_with('>')).count(), 81 + 156 + 15 + 3 + 3);
}

#[test]
fn design_counts_for_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.col", TRIANGLE);
    let out = dir.path().join("design");
    let o = blockprobe(&["design", "--graph", g.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("9 codewords, 12 splints, 3 blocking probes, 3 selection probes"), "{}", stdout(&o));
}

#[test]
fn triangle_run_accepts_all_six() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.col", TRIANGLE);
    let (o, out) = run_graph(dir.path(), &g, None);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let mut got: Vec<&str> = report["solutions"].as_array().unwrap().iter().map(|e| e["coloring"].as_str().unwrap()).collect();
    got.sort();
    assert_eq!(got, ["BRY", "BYR", "RBY", "RYB", "YBR", "YRB"]);
    for f in ["design.fasta", "scheme.json", "library_full.tsv", "selected.tsv", "reads.fastq", "report.txt", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["components"].as_array().unwrap().len(), 9);
}

fn failure_instance(dir: &Path) -> PathBuf {
    let g: Graph = random_instance_in(8..=8, 11).unwrap();
    write(dir, "g8.col", &g.to_dimacs())
}

#[test]
fn anneal_ramp_with_structure_penalty_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let g = failure_instance(dir.path());
    let cfg = write(
        dir.path(),
        "ramp.cfg",
        "seed = 5\nprotocol.mode = anneal_ramp\nprotocol.secondary_structure_penalty = 1.0\n",
    );
    let (o, _) = run_graph(dir.path(), &g, Some(&cfg));
    assert_eq!(code(&o), 2, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("MISMATCH"));
}

#[test]
fn verify_reports_both_directions_of_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.col", TRIANGLE);
    let (o, out) = run_graph(dir.path(), &g, None);
    assert_eq!(code(&o), 0);
    let report_path = out.join("report.json");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let verify = |r: &Value, name: &str| {
        let p = write(dir.path(), name, &serde_json::to_string(r).unwrap());
        blockprobe(&["verify", "--report", p.to_str().unwrap(), "--graph", g.to_str().unwrap()])
    };

    let same = verify(&report, "same.json");
    assert_eq!(code(&same), 0);
    assert!(stdout(&same).contains("0 soundness violations, 0 completeness misses"));

    let mut extra = report.clone();
    let mut bogus = extra["solutions"][0].clone();
    bogus["coloring"] = Value::from("RRR");
    bogus["oracle_valid"] = Value::from(false);
    extra["solutions"].as_array_mut().unwrap().push(bogus);
    let o = verify(&extra, "extra.json");
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("1 soundness violations, 0 completeness misses"), "{}", stdout(&o));

    let mut missing = report;
    missing["solutions"].as_array_mut().unwrap().pop();
    let o = verify(&missing, "missing.json");
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("0 soundness violations, 1 completeness misses"), "{}", stdout(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.col", TRIANGLE);
    let cfg = write(dir.path(), "bad.cfg", "seed = 1\nprotocol.speed = 3\n");
    let (o, _) = run_graph(dir.path(), &g, Some(&cfg));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("protocol.speed"), "{}", stderr(&o));
}

#[test]
fn invalid_constraints_name_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.col", TRIANGLE);
    let cfg = write(dir.path(), "tight.cfg", "codec.gc_min = 0.7\ncodec.gc_max = 0.6\n");
    let (o, _) = run_graph(dir.path(), &g, Some(&cfg));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("gc bounds"), "{}", stderr(&o));
}

#[test]
fn unsatisfiable_design_names_the_dominant_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.col", TRIANGLE);
    let cfg = write(dir.path(), "hard.cfg", "codec.min_distance = 20\ncodec.max_attempts = 20000\n");
    let (o, _) = run_graph(dir.path(), &g, Some(&cfg));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("most frequent rejection: min_distance"), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().count(), 1, "{}", stderr(&o));
}

#[test]
fn identical_config_gives_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let g = failure_instance(dir.path());
    let cfg = write(dir.path(), "run.cfg", "seed = 42\n");
    let mut reports = Vec::new();
    for k in 0..2 {
        let sub = dir.path().join(format!("r{k}"));
        std::fs::create_dir(&sub).unwrap();
        let (o, out) = run_graph(&sub, &g, Some(&cfg));
        assert_eq!(code(&o), 0);
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn chordless_paths_accept_every_alternating_coloring() {
    for n in 2..=5usize {
        let dir = tempfile::tempdir().unwrap();
        let g = write(dir.path(), "path.col", &path_graph(n));
        let (o, out) = run_graph(dir.path(), &g, None);
        assert_eq!(code(&o), 0, "n = {n}: {}", stdout(&o));
        let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["solutions"].as_array().unwrap().len(), 3 << (n - 1), "n = {n}");
    }
}

#[test]
fn decode_from_fastq_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.col", TRIANGLE);
    let out = dir.path().join("seq");
    let (gs, os) = (g.to_str().unwrap(), out.to_str().unwrap());
    let o = blockprobe(&["sequence", "--graph", gs, "--out", os]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reads = out.join("reads.fastq");
    let dec = dir.path().join("dec");
    let o = blockprobe(&["decode", "--reads", reads.to_str().unwrap(), "--graph", gs, "--out", dec.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("accepted set equals the oracle set"));
    assert!(dec.join("report.json").exists());
}

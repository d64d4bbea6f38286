use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cmps_core::problems::{brute_force_solve, gen_qkp, Instance};

fn cmps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmps")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn embed_reports_link_sizes() {
    let out = cmps(&["embed", "--family", "cardinality", "--n", "3", "--lower", "2", "--upper", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("seed: 0"));
    assert!(text.contains("bond 1: Q=2 {[(0),(0)], [(1),(1)]}"));
    assert!(text.contains("bond 2: Q=2 {[(1),(1)], [(2),(2)]}"));
    assert!(text.contains("bond 3: Q=1 {[(2),(2)]}"));
    assert!(text.contains("charge complexity: 2"));
}

#[test]
fn embed_writes_csv_and_mps() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("links.csv");
    let mps = dir.path().join("state.txt");
    let out = cmps(&[
        "embed", "--family", "cardinality", "--n", "6", "--lower", "0", "--upper", "4", "--flux", "6",
        "--out", path(&csv), "--mps", path(&mps),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("total blocks: 26"));
    let table = fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("family,bond,n_qregions,qregions\n"));
    assert_eq!(table.lines().count(), 1 + 2 * 7);
    let state = cmps_core::ConstrainedMPS::from_text(&fs::read_to_string(&mps).unwrap()).unwrap();
    assert_eq!(state.count_solutions(), 57.0);
}

#[test]
fn flux_out_of_range_is_a_usage_error() {
    let out = cmps(&["embed", "--family", "cardinality", "--n", "4", "--flux", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_exit_code() {
    let out = cmps(&["embed", "--family", "cardinality", "--n", "6", "--lower", "7", "--upper", "9"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn malformed_instance_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(&file, "{\n  \"type\": \"raw\",\n  \"N\": 3,\n  \"M\": 1,\n  \"A\": [[1, 1 1]],\n}").unwrap();
    let out = cmps(&["count", "--instance", path(&file)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
}

#[test]
fn invalid_instance_and_missing_source() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("short.json");
    fs::write(&file, r#"{"type":"raw","N":3,"M":1,"A":[[1,1]],"l":[0],"u":[1]}"#).unwrap();
    assert_eq!(cmps(&["count", "--instance", path(&file)]).status.code(), Some(2));
    assert_eq!(cmps(&["count", "--instance", "/nonexistent/x.json"]).status.code(), Some(2));
    assert_eq!(cmps(&["count"]).status.code(), Some(2));
    assert_eq!(cmps(&["solve", "--family", "cardinality", "--n", "4"]).status.code(), Some(2));
    assert_eq!(cmps(&["bogus"]).status.code(), Some(2));
}

#[test]
fn count_with_verification() {
    let out = cmps(&["count", "--family", "cardinality", "--n", "6", "--lower", "2", "--upper", "4", "--verify"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("count: 50"));
    assert!(text.contains("verified"));
}

#[test]
fn verification_beyond_enumeration_limit() {
    let out = cmps(&["count", "--family", "qkp", "--n", "30", "--verify"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn instance_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("qkp.json");
    let inst: Instance = gen_qkp(10, 4).unwrap().into();
    fs::write(&file, inst.to_json()).unwrap();
    let out = cmps(&["solve", "--instance", path(&file), "--samples", "60", "--iters", "15", "--tinit", "25"]);
    assert!(out.status.success());
    let (_, best) = brute_force_solve(&inst.system, |x| inst.cost(x).unwrap() as f64).unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains(&format!("best_cost: {best}")));
}

#[test]
fn solve_finds_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("history.csv");
    let out = cmps(&["solve", "--family", "qkp", "--n", "12", "--seed", "5", "--samples", "100", "--out", path(&csv)]);
    assert!(out.status.success());
    let inst = gen_qkp(12, 5).unwrap();
    let (x, best) = brute_force_solve(&inst.system(), |x| inst.cost(x) as f64).unwrap();
    let text = stdout(&out);
    assert!(text.contains(&format!("best_cost: {best}")), "{text}");
    let bits: String = x.iter().map(|b| char::from(b'0' + b)).collect();
    assert!(text.contains(&format!("best_x: {bits}")), "{text}");
    assert!(text.contains("tinit=30"));
    let history = fs::read_to_string(&csv).unwrap();
    assert_eq!(history.lines().count(), 76);
}

#[test]
fn one_iteration_gives_one_row() {
    let out = cmps(&["solve", "--family", "qkp", "--n", "8", "--iters", "1", "--samples", "20"]);
    assert!(out.status.success());
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("t,T,c_min,c_cum_min,max_bond,dict_size,wall_ms\n1,20,"));
}

#[test]
fn bench_rows_and_feasibility() {
    let out = cmps(&["bench", "--sizes", "20", "--runs", "10", "--iters", "3", "--samples", "40"]);
    assert!(out.status.success());
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 10 + 1);
    assert!(lines[1..11].iter().all(|l| l.starts_with("run,20,")));
    assert!(lines[11].starts_with("summary,20,"));
}

#[test]
fn complexity_sweep_rows() {
    let out = cmps(&["complexity", "--sizes", "12,24"]);
    assert!(out.status.success());
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 1 + 13 + 25);
    assert!(csv.contains("cardinality,12,1,6,0,7,7,0\n"));
    assert!(csv.contains("cardinality,24,1,24,24,1,1,0\n"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = cmps(&["solve", "--family", "qkp", "--n", "10", "--seed", "3", "--iters", "10", "--samples", "50"]);
    let b = cmps(&["solve", "--family", "qkp", "--n", "10", "--seed", "3", "--iters", "10", "--samples", "50"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
}

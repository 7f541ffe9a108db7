use std::path::PathBuf;

use resest::cli::{run_with, EXIT_FAILED, EXIT_INPUT, EXIT_OK};

fn edges() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/clique5.edges").display().to_string()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("resest").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn check_robust_exit_codes() {
    let g = edges();
    let (code, out, _) = run(&["check-robust", "--graph", &g, "--sources", "1,2,3", "--r", "3"]);
    assert_eq!(code, EXIT_OK, "{out}");
    let (code, _, _) = run(&["check-robust", "--graph", &g, "--sources", "1,2", "--r", "3"]);
    assert_eq!(code, EXIT_FAILED);
}

#[test]
fn unreadable_inputs_exit_two() {
    let (code, _, err) = run(&["check-robust", "--graph", "/nonexistent/x.edges", "--sources", "1", "--r", "1"]);
    assert_eq!(code, EXIT_INPUT, "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.edges");
    std::fs::write(&bad, "1 two\n").unwrap();
    let (code, _, _) = run(&["check-robust", "--graph", bad.to_str().unwrap(), "--sources", "1", "--r", "1"]);
    assert_eq!(code, EXIT_INPUT);

    let (code, _, _) = run(&["simulate", "--scenario", "no_such_scenario"]);
    assert_eq!(code, EXIT_INPUT);

    let (code, _, _) = run(&["simulate"]);
    assert_eq!(code, EXIT_INPUT);

    let toml = dir.path().join("s.toml");
    std::fs::write(&toml, "schema_version = 99\n").unwrap();
    let (code, _, _) = run(&["simulate", "--config", toml.to_str().unwrap()]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn mss_margin_reports_criterion() {
    let (code, out, _) = run(&["mss-margin", "--rho", "1.1", "--f", "1", "--m", "3", "--p", "0.1"]);
    assert_eq!(code, EXIT_OK);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((doc["pbar"].as_f64().unwrap() - 0.271).abs() < 1e-12);

    let (code, _, _) = run(&["mss-margin", "--rho", "1.1", "--f", "1", "--m", "3", "--p", "0.5"]);
    assert_eq!(code, EXIT_FAILED);

    let (code, _, err) = run(&["mss-margin", "--rho", "1.1", "--f", "1", "--m", "2", "--p", "0.1"]);
    assert_eq!(code, EXIT_FAILED, "{err}");
}

#[test]
fn mss_margin_sweep_writes_table() {
    let (code, out, _) = run(&["mss-margin", "--rho", "1.1", "--f", "1", "--sweep"]);
    assert_eq!(code, EXIT_OK);
    // one row per p, one column per m
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "p,m=3,m=4,m=5,m=6,m=7,m=8");
    assert_eq!(lines.len(), 1 + 21);
    assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 7));
}

#[test]
fn rejected_hypothesis_exits_one() {
    let (code, _, err) = run(&["simulate", "--scenario", "two_sources_not_robust", "--out", "/nonexistent"]);
    assert_eq!(code, EXIT_FAILED);
    assert!(err.contains("strongly (2f+1)-robust"), "{err}");
}

#[test]
fn simulate_and_montecarlo_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let (code, _, err) = run(&["simulate", "--scenario", "clique5_swlfse", "--out", sim.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sim.join("trace.json")).unwrap()).unwrap();
    assert_eq!(json["envelope"]["violations"].as_u64(), Some(0));
    assert!(std::fs::read_to_string(sim.join("trace.csv")).unwrap().lines().count() > 1);

    let mc = dir.path().join("mc");
    let (code, _, err) =
        run(&["montecarlo", "--scenario", "clique7_lfse_mss", "--trials", "8", "--out", mc.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(mc.join("mss.csv").exists());
    assert!(mc.join("mss.json").exists());
}

#[test]
fn help_exits_zero() {
    let (code, _, _) = run(&["--help"]);
    assert_eq!(code, EXIT_OK);
}

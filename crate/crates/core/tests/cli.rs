use std::path::Path;
use std::process::Command;

fn aifsim(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_aifsim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("AIFSIM_OUT")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = aifsim(&["run", &scenario("duopoly-reference"), "--seed", "7", "--out", "a"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = dir.path().join("a");
    for f in ["trace.csv", "summary.json", "resolved-config.json", "sales-likelihood-f1.json", "sales-likelihood-f2.json"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    let trace = std::fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 26);
}

#[test]
fn reruns_and_resolved_configs_reproduce_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("duopoly-precision-1.5");
    assert!(aifsim(&["run", &cfg, "--seed", "3", "--out", "one"], dir.path()).status.success());
    assert!(aifsim(&["run", &cfg, "--seed", "3", "--out", "two"], dir.path()).status.success());
    let resolved = dir.path().join("one/resolved-config.json");
    assert!(aifsim(&["run", resolved.to_str().unwrap(), "--out", "three"], dir.path()).status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("trace.csv")).unwrap();
    assert_eq!(read("one"), read("two"));
    assert_eq!(read("one"), read("three"));
}

#[test]
fn shipped_scenario_names_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = aifsim(&["run", "three-firm-reference", "--out", "t"], dir.path());
    assert!(out.status.success());
    let header = std::fs::read_to_string(dir.path().join("t/trace.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("f3_production"));
}

#[test]
fn output_directory_defaults_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aifsim"))
        .args(["run", "duopoly-reference"])
        .current_dir(dir.path())
        .env("AIFSIM_OUT", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/trace.csv").exists());
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "scenario = \"duopoly-reference\"\n\n[[firms]]\nunit_cost = 16.0\n[firms.model]\nsigma_sales = 0.0\n").unwrap();
    let out = aifsim(&["run", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 6"));
    assert_eq!(aifsim(&["run", "no-such-scenario"], dir.path()).status.code(), Some(2));
}

#[test]
fn plots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    assert!(aifsim(&["run", "duopoly-reference", "--out", "r"], dir.path()).status.success());
    for (input, figure) in [("r/trace.csv", "behavior"), ("r/trace.csv", "price"), ("r/sales-likelihood-f1.json", "likelihood")] {
        let out = aifsim(&["plot", input, "--figure", figure, "--out", "fig.svg"], dir.path());
        assert!(out.status.success(), "{figure}: {}", String::from_utf8_lossy(&out.stderr));
        let svg = std::fs::read_to_string(dir.path().join("fig.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
    let svg = {
        aifsim(&["plot", "r/trace.csv", "--figure", "behavior", "--out", "b.svg"], dir.path());
        std::fs::read_to_string(dir.path().join("b.svg")).unwrap()
    };
    assert_eq!(svg.matches("class=\"bar-group\"").count(), 50);
}

#[test]
fn malformed_plot_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.csv"), "a,b\n1,2\n").unwrap();
    let out = aifsim(&["plot", "junk.csv", "--figure", "price", "--out", "x.svg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = aifsim(&["plot", "junk.csv", "--figure", "likelihood", "--out", "x.svg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = aifsim(&["verify", "--suite", "efe"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).lines().all(|l| l.starts_with("pass")));
    assert_eq!(aifsim(&["verify", "--suite", "everything"], dir.path()).status.code(), Some(2));
}

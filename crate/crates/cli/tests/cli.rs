use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ddlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddlab")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn study_writes_the_output_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddlab(&["study", "--case", "A", "--eps", "0.5,0.25,0.125", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let case_dir = dir.path().join("res").join("A");
    let runs: Vec<_> = fs::read_dir(&case_dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let run = &runs[0];
    let csv = fs::read_to_string(run.join("results.csv")).unwrap();
    assert!(csv.starts_with("case,eps,norm,error,eoc,dofs,iters\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
    for name in ["results.json", "config.resolved.toml", "plot_L2.dat", "plot_W12.dat", "plot_W11.dat", "plot_W1inf.dat"] {
        assert!(run.join(name).is_file(), "{name}");
    }
    let resolved = fs::read_to_string(run.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("eps_list = [0.5, 0.25, 0.125]"));
}

#[test]
fn non_decreasing_eps_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddlab(&["study", "--case", "A", "--eps", "0.5,0.6"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("eps_list"), "{}", text(&out.stderr));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn volume_table_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddlab(&["integrals", "--volume", "--h", "const1", "--profile", "linear", "--domain", "disk"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let rows: Vec<Vec<f64>> = stdout
        .lines()
        .skip(2)
        .map(|l| l.split_whitespace().filter_map(|t| t.parse().ok()).collect())
        .collect();
    assert_eq!(rows.len(), 3, "{stdout}");
    for r in rows {
        let (eps, err) = (r[0], r[3]);
        let want = PI * eps * eps / 3.0;
        assert!((err - want).abs() < 1e-3 * want, "{eps}: {err} vs {want}");
    }
}

#[test]
fn unknown_flags_and_cases_fail_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ddlab(&["study", "--epsilon", "0.5"], dir.path()).status.code(), Some(2));
    assert_eq!(ddlab(&["frobnicate"], dir.path()).status.code(), Some(2));
    let out = ddlab(&["study", "--case", "Z"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("case.id"));
}

#[test]
fn help_lists_every_config_flag() {
    let dir = tempfile::tempdir().unwrap();
    let help = text(&ddlab(&["study", "--help"], dir.path()).stdout);
    for flag in [
        "--config", "--case", "--eps", "--domain", "--radius", "--solution", "--reference", "--extension", "--sigma",
        "--mu", "--pole-angle", "--k1", "--k2", "--r1", "--reaction", "--robin", "--norms", "--profile", "--gamma",
        "--vertex-cap", "--sharp-depth", "--tol", "--max-iter", "--initial-guess", "--exec", "--out", "--format",
        "--dry-run", "--threads", "--seed",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn flags_override_the_config_file_and_dry_run_computes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("case.toml"), "[case]\nid = \"D\"\neps_list = [0.5, 0.25]\n[mesh]\ngamma = 0.25\n").unwrap();
    let out = ddlab(&["study", "--config", "case.toml", "--gamma", "0.125", "--seed", "7", "--dry-run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("id = \"D\""));
    assert!(stdout.contains("gamma = 0.125"));
    assert!(stdout.contains("seed = 7"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[solver]\ntolerance = 1e-8\n").unwrap();
    let out = ddlab(&["study", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("tolerance"), "{}", text(&out.stderr));
}

#[test]
fn solver_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddlab(&["solve", "--case", "A", "--eps", "0.5,0.25", "--max-iter", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stderr));
}

#[test]
fn solve_prints_errors_and_writes_nodal_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddlab(&["solve", "--case", "A", "--eps", "0.5,0.25", "--solution-csv", "u.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("L2"));
    assert!(fs::read_to_string(dir.path().join("u.csv")).unwrap().lines().count() > 100);
}

#[test]
fn mesh_dump_and_properties() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddlab(&["mesh-dump", "--eps", "0.5", "--out", "mesh.txt"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let mesh = fs::read_to_string(dir.path().join("mesh.txt")).unwrap();
    assert!(mesh.lines().any(|l| l.starts_with("v ")) && mesh.lines().any(|l| l.starts_with("t ")));

    let out = ddlab(&["properties", "profile"], dir.path());
    let stdout = text(&out.stdout);
    assert_eq!(stdout.matches("accepted").count(), 3);
    assert_eq!(stdout.matches("rejected").count(), 1);

    let out = ddlab(&["--threads", "1", "properties", "trace", "--eps", "0.5,0.25"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("max/min"));
}

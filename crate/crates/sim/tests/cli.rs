//! CLI contract: exit codes, output files, resume behavior.

use std::path::Path;
use std::process::Command;

const SCENARIO: &str = "
[network]
cells = 1
bs_per_cell = 2
users_per_cell = 2

[solver]
outer_tol = 0.1
max_outer_iters = 30

[experiment]
algorithms = wmmse_full, swmmse_fixed
snr_grid_db = 10
num_draws = 2
base_seed = 5
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hetnet-sim"))
}

fn write_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scenario.cfg");
    std::fs::write(&path, SCENARIO).unwrap();
    path
}

#[test]
fn solve_writes_metrics_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--seed")
        .arg("7")
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("seed,snr_db,algorithm,"));
    assert_eq!(metrics.lines().count(), 3); // header + 2 algorithms
    let traces: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("trace_"))
        .collect();
    assert_eq!(traces.len(), 2);
    for t in &traces {
        let text = std::fs::read_to_string(out.join(t)).unwrap();
        assert!(text.starts_with("iter,objective_p1_nats,"));
    }
}

#[test]
fn missing_config_exits_2() {
    let output = bin()
        .args(["check", "--config", "/nonexistent/file.cfg"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!output.stderr.is_empty());
}

#[test]
fn bad_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "[network]\nwrong_key = 3\n").unwrap();
    let output = bin().args(["check", "--config"]).arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn check_accepts_scenario_alias() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path());
    let status = bin().args(["check", "--scenario"]).arg(&cfg).status().unwrap();
    assert!(status.success());
}

#[test]
fn sweep_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path());
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out_a, &out_b] {
        let status = bin()
            .args(["sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .arg("--threads")
            .arg("2")
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    assert_eq!(a, b, "sweep output is not byte-identical");

    // drop the last row and resume; the file must be reconstructed exactly
    let text = String::from_utf8(a.clone()).unwrap();
    let truncated: Vec<&str> = text.lines().collect();
    std::fs::write(
        out_a.join("metrics.csv"),
        format!("{}\n", truncated[..truncated.len() - 1].join("\n")),
    )
    .unwrap();
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_a)
        .arg("--resume")
        .status()
        .unwrap();
    assert!(status.success());
    let resumed = std::fs::read(out_a.join("metrics.csv")).unwrap();
    assert_eq!(resumed, a, "resume did not restore the missing row");
}

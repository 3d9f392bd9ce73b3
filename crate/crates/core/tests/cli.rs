use std::fs;
use std::process::Command;

fn marcusfpe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_marcusfpe"))
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(&good, r#"{"model": "example2", "flow_check": {"samples": 5}}"#).unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"model": "example4"}"#).unwrap();

    let out = dir.path().join("ok");
    let status = marcusfpe()
        .args(["flow-check", "--config"])
        .arg(&good)
        .arg("--output")
        .arg(&out)
        .args(["--seed", "11"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 11") && manifest.contains("status = ok"));

    let out = dir.path().join("bad");
    let run = marcusfpe().args(["solve", "--config"]).arg(&bad).arg("--output").arg(&out).output().unwrap();
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("unknown model"));
    assert!(out.join("manifest.txt").exists());

    let run = marcusfpe().args(["solve"]).output().unwrap();
    assert_eq!(run.status.code(), Some(2), "missing --config");
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    fs::write(
        &cfg,
        r#"{"model": "example1", "t_final": 0.5, "dt": 0.01, "n_paths": 500, "eps": 0.1, "seed": 5}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}"));
        let status = marcusfpe().args(["simulate", "--config"]).arg(&cfg).arg("--output").arg(&out).status().unwrap();
        assert!(status.success());
        outputs.push(fs::read(out.join("ensemble.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.pop().unwrap()).unwrap();
    assert!(text.starts_with("path_index,x1\n"));
    assert_eq!(text.lines().count(), 501);
}

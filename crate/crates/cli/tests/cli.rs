use std::path::PathBuf;
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wallsim-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn wallsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wallsim")).args(args).output().unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (scratch("a"), scratch("b"));
    for dir in [&a, &b] {
        let out = wallsim(&["simulate", "--replicas", "3", "--seed", "5", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["simulate.csv", "simulate_trajectories.jsonl", "simulate.manifest.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let manifest = std::fs::read_to_string(a.join("simulate.manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 5"));
    assert!(manifest.contains("\"replicas\": 3"));
}

#[test]
fn failing_checks_exit_nonzero_with_a_summary() {
    let dir = scratch("fail");
    let config = dir.with_extension("toml");
    // no frequency is below a negative bound
    std::fs::write(&config, "[midtime]\nhorizon = 50.0\nmax_at_largest = -1.0\n").unwrap();
    let out = wallsim(&["midtime", "--config", config.to_str().unwrap(), "--replicas", "5", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed midtime_tail_at_largest_k"));
    assert!(dir.join("midtime.csv").exists());

    let missing = wallsim(&["midtime", "--config", "/nonexistent/wallsim.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unknown_experiment_is_rejected() {
    let out = wallsim(&["nonsense"]);
    assert!(!out.status.success());
}

use std::path::PathBuf;
use std::process::Command;

fn nplab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nplab"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nplab-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn list_scenarios_names_the_corpus() {
    let out = nplab().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in nplab::lab::bundled_names() {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn run_writes_artifacts() {
    let dir = scratch("run");
    let out = nplab().args(["run", "circle"]).env("NPLAB_OUTPUT_DIR", &dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("[PASS] spectral_inclusion"));
    for f in ["report.json", "summary.txt", "spectrum.csv", "mesh.csv", "convergence.csv"] {
        assert!(dir.join("circle").join(f).is_file(), "{f} not written");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("circle/report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["scenario"]["name"], "circle");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn failing_expectation_exits_nonzero() {
    let dir = scratch("fail");
    std::fs::create_dir_all(&dir).unwrap();
    let text = nplab::lab::BUNDLED.iter().find(|(n, _)| *n == "circle").unwrap().1.replace("value = 0.5", "value = 0.3");
    let path = dir.join("circle-wrong.toml");
    std::fs::write(&path, text).unwrap();
    let out = nplab().arg("run").arg(&path).env("NPLAB_OUTPUT_DIR", &dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("[FAIL] eigenvalue 0.3"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn bad_config_is_an_error() {
    let dir = scratch("bad");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.toml");
    std::fs::write(&path, "version = 7\nname = \"x\"\n").unwrap();
    let out = nplab().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(nplab().args(["run", "no-such-scenario"]).output().unwrap().status.code() == Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn convergence_prints_csv() {
    let out = nplab().args(["convergence", "circle", "lambda_max"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("param,value,diff,error,ratio,order"));
    assert_eq!(text.lines().count(), 4);
}

use std::path::Path;
use std::process::Command;

fn simulate() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
}

fn config_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table5.toml")
}

#[test]
fn shipped_config_matches_preset() {
    let out = simulate().args(["--preset", "table5", "--dump-config"]).output().unwrap();
    assert!(out.status.success());
    let shipped = std::fs::read_to_string(config_path()).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), shipped);
}

#[test]
fn writes_one_directory_per_scheduler() {
    let dir = tempfile::tempdir().unwrap();
    let status = simulate()
        .arg("--config")
        .arg(config_path())
        .args(["--scheduler", "all", "--horizon-symbols", "400", "--seed", "2", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["pfs", "mpfs", "hfs"] {
        let csv = std::fs::read_to_string(dir.path().join(name).join("metrics.csv")).unwrap();
        assert!(csv.starts_with("block,user,T_k,"));
        assert_eq!(csv.lines().count(), 1 + 20 * 8);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(name).join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["seed"], 2);
    }
}

#[test]
fn rejects_unknown_preset() {
    let out = simulate().args(["--preset", "nope", "--dump-config"]).output().unwrap();
    assert!(!out.status.success());
}

use std::process::Command;

fn gaitbc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaitbc"))
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trian": {}}"#).unwrap();
    let out = gaitbc().arg("--config").arg(&cfg).arg("print-config").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trian"));
}

#[test]
fn eval_without_models_names_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaitbc().arg("--out").arg(dir.path()).args(["eval", "--suite", "single"]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gaitbc train"));
}

#[test]
fn print_config_round_trips() {
    let out = gaitbc().arg("print-config").output().unwrap();
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let again = gaitbc().arg("--config").arg(&cfg).arg("print-config").output().unwrap();
    assert!(again.status.success());
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn demo_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("walk.csv");
    let out = gaitbc()
        .args(["demo", "--gait", "walk", "--vd", "0.5", "--duration", "1", "--output"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1001);
}

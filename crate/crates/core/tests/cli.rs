use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contactmech"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const HEADER: &str = r#"
schema_version = 1
[chart]
axes = ["t", "x"]
lower = [-10.0, -10.0]
upper = [10.0, 10.0]
"#;

#[test]
fn propagate_writes_strips_and_a_digest_report() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["propagate", "--config", scenario("free.toml").to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "propagate");
    assert_eq!(report["schema_version"], 1);
    let files = report["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "strip_unit.csv"));
    for f in files {
        let body = std::fs::read(out.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&body)));
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, body.len());
    }
    let csv = std::fs::read_to_string(out.path().join("strip_unit.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "tau,x_t,x_x,s,p_t,p_x,p_s,G_residual");
    let jsonl = std::fs::read_to_string(out.path().join("strips.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["strip"], "unit");
}

#[test]
fn seed_flag_overrides_the_config() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "noether-check",
        "--config",
        scenario("oscillator.toml").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--seed",
        "41",
    ]);
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 41);
    assert_eq!(report["results"]["symmetries"]["px"]["is_symmetry"], false);
    assert_eq!(report["results"]["symmetries"]["time"]["is_symmetry"], true);
}

#[test]
fn missing_config_exits_with_one() {
    let o = run(&["propagate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn malformed_expression_names_its_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{HEADER}[dynamics]\nkind = \"symbol\"\nexpr = \"p_s*p_t + (p_x^2\"\ndegree = 2\n"),
    );
    let o = run(&["propagate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dynamics.expr"));
}

#[test]
fn bad_symmetry_field_names_its_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{HEADER}[dynamics]\nkind = \"builtin\"\nname = \"free\"\n[[symmetry]]\nname = \"q\"\nv = [\"0\", \"zz\"]\n"
        ),
    );
    let o = run(&["noether-check", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("symmetry[0]"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "schema_version = 1\nbogus = 3\n[dynamics]\nkind = \"builtin\"\nname = \"eikonal\"\n");
    let o = run(&["propagate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn off_shell_strip_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{HEADER}[dynamics]\nkind = \"builtin\"\nname = \"free\"\n[[strip]]\nx = [0.0, 0.0]\np = [0.0, 1.0]\ntau_end = 1.0\n"
        ),
    );
    let o = run(&["propagate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let out = blocker.join("sub");
    let o = run(&["propagate", "--config", scenario("free.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn adaptive_runs_are_also_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["holonomy", "--config", scenario("holonomy.toml").to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(
        std::fs::read(a.path().join("report.json")).unwrap(),
        std::fs::read(b.path().join("report.json")).unwrap()
    );
}

#[test]
fn every_bundled_scenario_runs() {
    let pairs = [
        ("propagate", "free.toml"),
        ("propagate", "oscillator.toml"),
        ("propagate", "relativistic.toml"),
        ("propagate", "schrodinger.toml"),
        ("noether-check", "relativistic_gauge.toml"),
        ("noether-check", "eikonal_circle.toml"),
        ("wavefront", "eikonal_circle.toml"),
        ("symbol", "schrodinger.toml"),
        ("holonomy", "holonomy.toml"),
        ("wave-diagram", "relativistic.toml"),
        ("wave-diagram", "duality.toml"),
    ];
    for (cmd, file) in pairs {
        let out = tempfile::tempdir().unwrap();
        let o = run(&[cmd, "--config", scenario(file).to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
        assert!(o.status.success(), "{cmd} {file}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

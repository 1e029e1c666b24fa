use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oscfluct"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(cfg: &Path, out: &Path) -> Output {
    bin().arg("run").arg(cfg).arg("--output-dir").arg(out).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const ONE_BATH: &str = r#"{
  "schema": 1,
  "scenario": {"omega0": 1.0, "baths": [
    {"spectral": {"kind": "drude_ohmic", "coupling": 0.05, "cutoff": 10.0},
     "preparation": {"kind": "thermal", "temperature": 1.0}}]},
  "task": {"kind": "current"}
}"#;

#[test]
fn equilibrium_fdt_run_reports_residual() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("s0_fdt_equilibrium.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "pass");
    assert!(manifest["achieved"]["equilibrium_fdt_residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(manifest["config"]["task"]["kind"], "fdt");
    let csv = fs::read_to_string(dir.path().join("fdt.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("omega [frequency],psi"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1.0000000000000001e-1");
    assert_eq!(csv.lines().count(), 201);
}

#[test]
fn transport_needs_two_baths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ONE_BATH);
    let o = run(&cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("transport requires exactly two baths"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn validation_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let negative = ONE_BATH.replace("\"coupling\": 0.05", "\"coupling\": -0.05");
    let o = bin()
        .arg("validate")
        .arg(write_config(dir.path(), &negative))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coupling"), "{}", stderr(&o));

    let heisenberg = ONE_BATH.replace(
        r#"{"kind": "thermal", "temperature": 1.0}"#,
        r#"{"kind": "custom", "qq": {"kind": "constant", "value": 0.1}, "pp": {"kind": "constant", "value": 0.1}}"#,
    );
    let o = bin()
        .arg("validate")
        .arg(write_config(dir.path(), &heisenberg))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("omega"), "{}", stderr(&o));

    let o = bin()
        .arg("validate")
        .arg(write_config(dir.path(), "{\"schema\": 1"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_accepts_s0() {
    let o = bin().arg("validate").arg(config("s0_cgf.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("ok\n"));
    assert!(text.contains("omega_max"));
    assert!(text.contains("\"points\": 81"));
}

#[test]
fn undamped_pole_exits_with_four() {
    // Coupling confined far above Ω leaves the oscillator undamped.
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
      "schema": 1,
      "scenario": {"omega0": 1.0, "baths": [
        {"spectral": {"kind": "tabulated", "grid": [5.0, 6.0, 7.0], "values": [0.0, 0.1, 0.0]},
         "preparation": {"kind": "thermal", "temperature": 1.0}}]},
      "task": {"kind": "fdt"}
    }"#;
    let o = run(&write_config(dir.path(), body), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn failed_identity_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("s0_fdt_equilibrium.json")).unwrap();
    let strict = text.replacen(
        "\"task\"",
        "\"tolerances\": {\"fdt_equilibrium\": 1e-30},\n  \"task\"",
        1,
    );
    let o = run(&write_config(dir.path(), &strict), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"fail\""));
}

#[test]
fn identical_configs_give_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("s0_zq.json");
    assert_eq!(run(&cfg, a.path()).status.code(), Some(0));
    let o = bin()
        .args(["--threads", "1", "run"])
        .arg(&cfg)
        .arg("--output-dir")
        .arg(b.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    for name in ["moments.csv", "zq.csv", "manifest.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        if name == "manifest.json" {
            // Only the recorded thread count differs.
            let strip = |v: Vec<u8>| {
                String::from_utf8(v)
                    .unwrap()
                    .replace("\"threads\": 1", "\"threads\": null")
            };
            assert_eq!(strip(x), strip(y));
        } else {
            assert!(x == y, "{name} differs between runs");
        }
    }
}

#[test]
fn oracle_compare_passes_at_two_hundred_modes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("s0_oracle_compare.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("oracle_moments.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("u_oracle"));
}

#[test]
fn version_flag() {
    let o = bin().arg("--version").output().unwrap();
    assert!(String::from_utf8(o.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}

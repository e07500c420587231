use std::process::Command;

fn gamma_lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gamma-lab"))
}

const SWEEP: &str = r#"{
  "schema_version": 1,
  "kind": "gamma_sweep",
  "domain": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
  "shape_a": {"kind": "half_space", "normal": [1.0, 0.0], "offset": 0.5},
  "n_schedule": [64, 128],
  "delta_rule": {"kind": "power", "gamma": GAMMA},
  "seeds": 2,
  "solver": {"map_cells_per_sample": 4}
}"#;

#[test]
fn validate_rejects_boundary_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, SWEEP.replace("GAMMA", "0.5")).unwrap();
    let out = gamma_lab().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("need gamma < 0.5"), "{text}");

    let good = dir.path().join("good.json");
    std::fs::write(&good, SWEEP.replace("GAMMA", "0.25")).unwrap();
    let out = gamma_lab().arg("validate").arg(&good).output().unwrap();
    assert!(out.status.success());
}

#[test]
fn run_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(&cfg, SWEEP.replace("GAMMA", "0.25")).unwrap();
    let mut rows = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("out{k}"));
        let out = gamma_lab().arg("run").arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(summary["kind"], "gamma_sweep");
        rows.push(std::fs::read(out_dir.join("rows.csv")).unwrap());
    }
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn oracle_matches_brute_force() {
    for case in ["pcost", "bottleneck", "tlp", "alpha"] {
        let out = gamma_lab().args(["oracle", case, "--instances", "5"]).output().unwrap();
        assert!(out.status.success(), "{case}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

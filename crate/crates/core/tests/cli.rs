use std::path::PathBuf;
use std::process::{Command, Output};

fn subflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subflow"))
        .args(args)
        .env_remove("SUBFLOW_OUT_ROOT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("subflow-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn eta_prints_value_and_threshold() {
    let o = subflow(&["eta", "--model", "heisenberg"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("eta_min 1.0\n"), "{s}");
    assert!(s.contains("threshold eta_min/2 0.5\n"), "{s}");
}

#[test]
fn presets_are_listed_with_what_they_exercise() {
    let s = stdout(&subflow(&["--list-presets"]));
    let lines: Vec<&str> = s.lines().collect();
    for name in ["torus-eells-sampson", "hyperbolic-decay", "sphere-tubular", "sphere-picard"] {
        let i = lines.iter().position(|l| *l == name).unwrap_or_else(|| panic!("{name} missing"));
        assert!(lines[i + 1].starts_with("    ") && lines[i + 1].len() > 20);
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = subflow(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).to_lowercase().contains("usage"));
    assert_eq!(subflow(&[]).status.code(), Some(64));
}

#[test]
fn zero_budget_exits_2_with_one_ledger_entry() {
    let d = scratch("zero");
    let out = d.join("run");
    let o = subflow(&["run", "--preset", "hyperbolic-decay", "--grid", "4x4x16", "--t-max", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert!(csv.starts_with("t,E_H,E_V,E_P,E_G,sup_e,sup_tau,defect"));
    assert_eq!(csv.lines().count(), 2);
    assert!(out.join("summary.json").exists() && out.join("final.bin").exists() && out.join("final.json").exists());
    std::fs::remove_dir_all(d).unwrap();
}

#[test]
fn run_prints_threshold_line() {
    let d = scratch("threshold");
    let o = subflow(&["run", "--preset", "torus-eells-sampson", "--grid", "4x4x16", "--t-max", "0.01", "--out", d.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let s = stdout(&o);
    assert!(s.contains("threshold eta_min/2 = 0.5") && s.contains("lambda_G < eta_min/2: pass"), "{s}");
    std::fs::remove_dir_all(d).unwrap();
}

#[test]
fn config_errors_name_every_offending_key() {
    let d = scratch("config");
    let path = d.join("bad.toml");
    std::fs::write(&path, "N_y = 8\nN_z = 12\ntarget = \"hyperbolic\"\npotential = \"rho-squared\"\nc = -1.0\n").unwrap();
    let o = subflow(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(64));
    let e = stderr(&o);
    assert!(e.contains("N_y") && e.contains("N_z") && e.contains("`c`"), "{e}");
    std::fs::remove_dir_all(d).unwrap();
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let d = scratch("io");
    let blocker = d.join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("run");
    let o = subflow(&["run", "--preset", "hyperbolic-decay", "--grid", "4x4x16", "--t-max", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    std::fs::remove_dir_all(d).unwrap();
}

#[test]
fn output_root_comes_from_the_environment() {
    let d = scratch("env");
    let o = Command::new(env!("CARGO_BIN_EXE_subflow"))
        .args(["run", "--preset", "hyperbolic-decay", "--grid", "4x4x16", "--t-max", "0"])
        .env("SUBFLOW_OUT_ROOT", &d)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(d.join("hyperbolic-decay").join("ledger.csv").exists());
    std::fs::remove_dir_all(d).unwrap();
}

#[test]
fn kernel_check_emits_structured_report() {
    let o = subflow(&["kernel-check", "--grid", "4x4x16"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kernel"]["pass"], true);
    assert_eq!(v["kernel"]["checks"].as_array().unwrap().len(), 3);
    let bad = subflow(&["kernel-check", "--grid", "4x4x4"]);
    assert_eq!(bad.status.code(), Some(64));
}

#[test]
fn picard_ratios_contract_at_short_time() {
    let o = subflow(&["picard", "--t", "0.005", "--grid", "4x4x16"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    let ratios: Vec<f64> = s
        .lines()
        .filter(|l| l.trim_start().starts_with("X_") && l.contains('/'))
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 6);
    assert!(ratios.iter().all(|r| *r < 1.0), "{s}");
}

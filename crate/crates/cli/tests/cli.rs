use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ibc_core::export::report_from_csv;
use serde_json::Value;

fn ibc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("IBC_OUT_DIR")
        .output()
        .expect("ibc runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Writes the shipped uncongested scenario with every occurrence of `from`
/// replaced by `to`.
fn edited_scenario(dir: &Path, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(scenarios_dir().join("uncongested.toml")).unwrap();
    assert!(text.contains(from), "emitted scenario lacks `{from}`");
    let path = dir.join("edited.toml");
    fs::write(&path, text.replace(from, to)).unwrap();
    path
}

#[test]
fn check_accepts_builtins_and_shipped_files() {
    let tmp = tempfile::tempdir().unwrap();
    for s in ["uncongested", "congested"] {
        let o = ibc(&["check", "-s", s], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("valid"));
    }
    for f in ["uncongested.toml", "congested.toml", "zero_demand.toml"] {
        let path = scenarios_dir().join(f);
        let o = ibc(&["check", "-s", path.to_str().unwrap()], tmp.path());
        assert!(o.status.success(), "{f}: {}", stderr(&o));
    }
}

#[test]
fn invalid_inputs_exit_with_status_one() {
    let tmp = tempfile::tempdir().unwrap();

    let bad = edited_scenario(tmp.path(), "T_c = 60.0", "T_c = 45.0");
    let o = ibc(&["check", "-s", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("control.T_c"), "{}", stderr(&o));

    let no_entry_b = edited_scenario(tmp.path(), "[[demands.entry_b]]", "[[demands.entry_c]]");
    let o = ibc(&["check", "-s", no_entry_b.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("entry_"), "{}", stderr(&o));

    let o = ibc(&["check", "-s", "gridlock"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gridlock"));

    let o = ibc(&["check", "-s", "missing.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));

    let o = ibc(&["simulate", "-s", "uncongested", "--plan", "nowhere.csv"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn solver_failures_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ibc(
        &["optimize", "-s", "uncongested", "--capacity-drop", "off", "--max-iter", "2"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("max_iter"), "{}", stderr(&o));
}

#[test]
fn optimize_then_simulate_the_plan_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();

    let o = ibc(&["optimize", "-s", "uncongested", "--capacity-drop", "off", "--strict"], root);
    assert!(o.status.success(), "{}", stderr(&o));
    let opt_dir = root.join("runs/uncongested/optimize");
    let m = manifest(&opt_dir);
    assert_eq!(m["command"], "optimize");
    assert_eq!(m["invariant_violations"].as_array().unwrap().len(), 0);
    let res = &m["results"]["drop-off"];
    assert_eq!(res["status"], "optimal");
    let text = m.to_string();
    for banned in ["time", "date", "created"] {
        assert!(!text.contains(banned), "manifest mentions `{banned}`");
    }
    let listed: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    for f in &listed {
        assert!(opt_dir.join(f).is_file(), "{f} listed but missing");
    }
    assert!(!listed.contains(&"timing.json"));

    let plan = opt_dir.join("plan_drop-off.csv");
    let plan_text = fs::read_to_string(&plan).unwrap();
    assert_eq!(plan_text.lines().next(), Some("section,k_c,eps"));
    assert_eq!(plan_text.lines().count(), 1 + 6 * 60);

    let sim_out = root.join("sim");
    let o = ibc(
        &[
            "simulate",
            "-s",
            "uncongested",
            "--capacity-drop",
            "off",
            "--plan",
            plan.to_str().unwrap(),
            "--out",
            sim_out.to_str().unwrap(),
        ],
        root,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let sm = manifest(&sim_out);
    assert_eq!(sm["results"]["drop-off"]["tts"], res["sim_tts"]);

    let o = ibc(&["report", "-s", "uncongested", "--capacity-drop", "off"], root);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = report_from_csv(&fs::read_to_string(opt_dir.join("report.csv")).unwrap()).unwrap();
    let b = report_from_csv(&fs::read_to_string(root.join("runs/uncongested/report/report.csv")).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].sim_tts, res["sim_tts"].as_f64().unwrap());
}

#[test]
fn out_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ibc"))
        .args(["project", "-s", "congested"])
        .current_dir(tmp.path())
        .env("IBC_OUT_DIR", "elsewhere")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("elsewhere/congested/project");
    let header = fs::read_to_string(dir.join("projected.csv")).unwrap();
    assert_eq!(header.lines().next(), Some("section,k,d_a,d_b,d_total"));
    assert!(dir.join("margins.csv").is_file());
    assert!(dir.join("manifest.json").is_file());
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn dump_writes_parsable_problem_and_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("dump");
    let o = ibc(
        &["dump", "-s", "uncongested", "--capacity-drop", "on", "--solve", "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let p: Value = serde_json::from_str(&fs::read_to_string(out.join("problem_drop-on.json")).unwrap()).unwrap();
    assert_eq!(p["q"].as_array().unwrap().len(), 9720);
    assert_eq!(p["b_eq"].as_array().unwrap().len(), 4320);
    assert_eq!(p["b_ineq"].as_array().unwrap().len(), 21600);
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("solution_drop-on.json")).unwrap()).unwrap();
    assert_eq!(s["status"], "optimal");
    assert_eq!(s["x"].as_array().unwrap().len(), 9720);
}

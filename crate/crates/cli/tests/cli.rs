use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_strongdamp"));
    c.env_remove("STRONGDAMP_OUT");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_p1_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"problem": "p1", "seed": 1}"#);
    let out = dir.path().join("out");
    let o = run(&["validate"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("validation.json"));
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "validate");
    assert_eq!(m["seed"], 1);
    assert_eq!(m["artifacts"][0]["path"], "validation.json");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn quasipotential_p1_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem": "p1", "seed": 1, "quasipotential": {"q": [1.0]}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["quasipotential"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("quasipotential.json"));
    let v = r["V"].as_f64().unwrap();
    assert!((v - 1.0).abs() <= 0.02, "{v}");
    assert_eq!(r["oracle"].as_f64(), Some(1.0));
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let top = write(dir.path(), "a.json", r#"{"problem": "p1", "seed": 1, "sead": 2}"#);
    assert_eq!(code(&run(&["validate"], &top, &out)), 2);
    let nested = write(
        dir.path(),
        "b.json",
        r#"{"problem": "p1", "seed": 1, "quasipotential": {"q": [1.0], "mam": {"n": 64}}}"#,
    );
    assert_eq!(code(&run(&["quasipotential"], &nested, &out)), 2);
    let inline = write(
        dir.path(),
        "c.json",
        r#"{"seed": 1, "problem": {"d": 1, "r": 1, "b": ["-q1"], "sigma": [["1"]], "alpha": "1", "alpha0": 1, "extra": 0}}"#,
    );
    assert_eq!(code(&run(&["validate"], &inline, &out)), 2);
    let version = write(
        dir.path(),
        "d.json",
        r#"{"schema_version": 2, "problem": "p1", "seed": 1}"#,
    );
    assert_eq!(code(&run(&["validate"], &version, &out)), 2);
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"problem": "p1"}"#);
    let o = run(&["validate"], &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    // the flag supplies it
    let o = bin()
        .args(["validate", "--seed", "5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(json(&dir.path().join("out/manifest.json"))["seed"], 5);
}

#[test]
fn unstable_euler_step_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem": "p1", "seed": 1, "simulate": {"eps": 0.1, "T": 1.0, "h": 0.05, "scheme": "euler"}}"#,
    );
    assert_eq!(code(&run(&["simulate"], &cfg, &dir.path().join("out"))), 3);
}

const SIM: &str = r#"{
  "problem": "p1",
  "seed": 11,
  "simulate": {"eps": 0.2, "T": 1.0, "h": 0.01, "paths": 3, "compute_h": true, "stride": 5,
               "control": {"expressions": ["0.5*sin(t)"]}}
}"#;

fn artifact_hashes(out: &Path) -> Vec<(String, String)> {
    json(&out.join("manifest.json"))["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            (
                a["path"].as_str().unwrap().to_string(),
                a["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn reruns_and_replays_reproduce_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SIM);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&run(&["simulate", "--emit-plot-data"], &cfg, &a)), 0);
    assert_eq!(code(&run(&["simulate", "--emit-plot-data"], &cfg, &b)), 0);
    let ha = artifact_hashes(&a);
    assert_eq!(ha.len(), 5);
    assert_eq!(ha, artifact_hashes(&b));

    let o = bin()
        .arg("--replay")
        .arg(a.join("manifest.json"))
        .arg("--out")
        .arg(&c)
        .arg("--emit-plot-data")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(ha, artifact_hashes(&c));
    for (name, _) in &ha {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(c.join(name)).unwrap()
        );
    }

    // a different seed changes the paths
    let d = dir.path().join("d");
    let o = bin()
        .args(["simulate", "--emit-plot-data", "--seed", "12", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&d)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_ne!(ha, artifact_hashes(&d));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem": "p1", "seed": 3, "exit": {"eps_ladder": [0.3, 0.25], "M": 40}}"#,
    );
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    assert_eq!(code(&run(&["exit", "--threads", "1"], &cfg, &one)), 0);
    assert_eq!(code(&run(&["exit", "--threads", "3"], &cfg, &two)), 0);
    assert_eq!(artifact_hashes(&one), artifact_hashes(&two));
    assert_eq!(json(&two.join("manifest.json"))["threads"], 3);
}

#[test]
fn output_directory_fallbacks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"problem": "p1", "seed": 1}"#);
    let env_out = dir.path().join("from_env");
    let o = bin()
        .arg("validate")
        .arg("--config")
        .arg(&cfg)
        .env("STRONGDAMP_OUT", &env_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_out.join("validation.json").exists());

    let cfg = write(dir.path(), "d.json", r#"{"problem": "p1", "seed": 1, "output": "rel"}"#);
    let o = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("rel/validation.json").exists());

    let cfg = write(dir.path(), "e.json", r#"{"problem": "p1", "seed": 1}"#);
    let o = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn plot_data_is_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem": "p1", "seed": 1, "action": {"path": {"line": {"from": [0.0], "to": [1.0], "T": 2.0, "N": 16}}}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["action", "--emit-plot-data"], &cfg, &out)), 0);
    let text = std::fs::read_to_string(out.join("plot_data.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("series,x,y"));
    assert_eq!(lines.count(), 32);
    let a = json(&out.join("action.json"));
    assert!(a["I"].as_f64().unwrap() > 0.0);
}

#[test]
fn problem_files_and_control_files_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("cfg");
    std::fs::create_dir(&sub).unwrap();
    write(
        &sub,
        "problem.json",
        r#"{"d": 1, "r": 1, "b": ["-2*q1"], "sigma": [["1"]], "alpha": "2", "alpha0": 2, "U": "q1^2", "G": "q1^2 - 1", "O": [0.0]}"#,
    );
    let mut table = String::from("t,u1\n");
    for k in 0..=64 {
        table.push_str(&format!("{},0.25\n", k as f64 / 64.0));
    }
    write(&sub, "u.csv", &table);
    let cfg = write(
        &sub,
        "c.json",
        r#"{"problem": {"file": "problem.json"}, "seed": 1, "action": {"control": {"file": "u.csv"}}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["action"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = json(&out.join("action.json"));
    // the skeleton of u costs 1/2 int |u|^2 under the first functional
    let cost = a["control_cost"].as_f64().unwrap();
    assert!((cost - 0.5 * 0.0625).abs() < 1e-12);
    assert!((a["I"].as_f64().unwrap() - cost).abs() < 1e-3 * cost.max(1e-3), "{a}");

    let constant = write(
        &sub,
        "k.json",
        r#"{"problem": {"file": "problem.json"}, "seed": 1, "action": {"control": {"constant": [0.25]}, "T": 1.0, "N": 64}}"#,
    );
    let out2 = dir.path().join("out2");
    assert_eq!(code(&run(&["action"], &constant, &out2)), 0);
    let numbers = |p: &Path| -> Vec<f64> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect()
    };
    let (x, y) = (numbers(&out.join("path.csv")), numbers(&out2.join("path.csv")));
    assert_eq!(x.len(), y.len());
    assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn schema_covers_the_top_level_keys() {
    let schema: Value = serde_json::from_str(include_str!("../schema/run_config.schema.json")).unwrap();
    let props = schema["properties"].as_object().unwrap();
    assert_eq!(schema["additionalProperties"], false);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for key in props.keys() {
        // a wrongly typed value is rejected, but not as an unknown field
        let cfg = write(dir.path(), "c.json", &format!(r#"{{"{key}": [[[]]]}}"#));
        let o = run(&["validate"], &cfg, &out);
        assert_eq!(code(&o), 2);
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(!err.contains("unknown field"), "{key}: {err}");
    }
}

#[test]
fn verify_reports_failed_checks_with_exit_code_4() {
    let dir = tempfile::tempdir().unwrap();
    // an impossible window forces the gated check to fail
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem": "p2", "seed": 1,
            "tolerances": {"h_exponent": [5.0, 6.0]},
            "verify": {"h_scaling": {"eps_ladder": [0.3, 0.2, 0.1], "M": 50, "T": 0.5}}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["verify"], &cfg, &out);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out.join("verify.json"));
    assert_eq!(v["checks"][0]["passed"], false);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn all_runs_selected_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"seed": 4, "all": {"criteria": [3], "determinism": false}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["all"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[PASS]  3 control_identity"), "{stdout}");
    assert!(out.join("suite/suite.json").exists());
}

#[test]
fn shipped_configs_parse_and_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names: Vec<_> = std::fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(names.len() >= 5);
    let dir = tempfile::tempdir().unwrap();
    for cfg in names.iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
        let o = run(&["validate"], cfg, &dir.path().join("out"));
        assert_eq!(code(&o), 0, "{}: {}", cfg.display(), String::from_utf8_lossy(&o.stderr));
    }
}

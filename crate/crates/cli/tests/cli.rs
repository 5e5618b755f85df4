use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn resolvex(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resolvex"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_writes_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = resolvex(&["gen", "--blocks", "[[1,0],1];[[-1,0],1]", "--cond", "1", "--seed", "7", "-o", "A.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("gen: dim=2"));
    let doc = json_file(&dir.path().join("A.json"));
    assert_eq!(doc["version"], resolvex::VERSION);
    assert_eq!(doc["config"]["seed"], 7);
    assert!((doc["result"]["kappa_bar_witness"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(doc["result"]["spec"]["blocks"][1][0][0].as_f64().unwrap(), -1.0);
}

#[test]
fn estimate_recovers_generated_phases() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = "[[0.5,0.8660254037844386],1];[[-0.6,-0.8],1];[[0.2,0.1],2]";
    let o = resolvex(&["gen", "--blocks", blocks, "--cond", "5", "--seed", "3", "-o", "A.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = resolvex(
        &[
            "estimate", "qeue", "--matrix", "A.json", "--eps-eig", "0.1", "--delta", "0.001", "--a", "17", "--samples", "1000",
            "-o", "E.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json_file(&dir.path().join("E.json"));
    assert_eq!(doc["result"]["config"]["a"], 17);
    let per = doc["result"]["readout"]["per_eigen"].as_array().unwrap();
    assert_eq!(per.len(), 2);
    for e in per {
        let phase = e["modal_estimate"][1].as_f64().unwrap().atan2(e["modal_estimate"][0].as_f64().unwrap());
        let truth = e["lambda"][1].as_f64().unwrap().atan2(e["lambda"][0].as_f64().unwrap());
        let d = (phase - truth).abs();
        assert!(d.min(2.0 * std::f64::consts::PI - d) <= 0.1, "{e}");
    }
}

#[test]
fn verify_suite_emits_bound_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = resolvex(&["verify", "--suite", "qeue-lemmas", "--trials", "50", "--seed", "1", "-o", "v.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("v.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    for col in ["measured", "bound", "slack", "pass"] {
        assert!(headers.iter().any(|h| h == col), "{headers:?}");
    }
    let pass = headers.iter().position(|h| h == "pass").unwrap();
    let mut n = 0;
    for row in rdr.records() {
        assert_eq!(&row.unwrap()[pass], "true");
        n += 1;
    }
    assert!(n > 50 * 6 * 4);
    let meta = json_file(&dir.path().join("v.csv.meta.json"));
    assert_eq!(meta["config"]["command"]["verify"]["suite"], "qeue-lemmas");
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    resolvex(&["gen", "--blocks", "[[0,1],2];[[0.3,0],1]", "--cond", "8", "--seed", "2", "-o", "A.json"], dir.path());
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_resolvex"))
            .args(["estimate", "qeue", "--matrix", "A.json", "--eps-eig", "0.2", "--delta", "0.01", "--samples", "300"])
            .env("RESOLVEX_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        o.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn saved_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = resolvex(
        &["curve", "check", "--family", "circle", "--deltas", "0.01", "--epsilons", "0.05,0.1", "--probes", "16", "--save-config", "c.json", "-o", "a.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = resolvex(&["--config", "c.json", "-o", "b.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (a, b) = (json_file(&dir.path().join("a.json")), json_file(&dir.path().join("b.json")));
    assert_eq!(a["result"], b["result"]);
    assert_eq!(a["result"]["pass_cond1"], true);
    assert_eq!(a["config"]["command"], b["config"]["command"]);
}

#[test]
fn config_errors_show_schema() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"seed": 1, "command": {"cost": {"alpha": 1, "kappa": 1, "kreiss": 1, "eps_eig": 0.1, "eps_st": 0.1}}}"#,
    )
    .unwrap();
    let o = resolvex(&["--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("unknown field `kappa`") && err.contains("expected schema") && err.contains("kappa_s"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["gen", "--blocks", "[[1,0]]"],
        vec!["verify", "--suite", "everything"],
        vec!["frobnicate"],
        vec![],
        vec!["cost", "--alpha", "1", "--kappa-s", "1", "--kreiss", "1", "--eps-eig", "0.1", "--eps-st", "0.1", "--format", "csv"],
    ] {
        let o = resolvex(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn cost_score_of_unit_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = resolvex(&["cost", "--alpha", "1", "--kappa-s", "1", "--kreiss", "1", "--eps-eig", "0.1", "--eps-st", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((doc["result"]["score"].as_f64().unwrap() - 2302.585).abs() < 1e-3);
    assert!(stderr(&o).starts_with("cost: score=2302.585"));
}

#[test]
fn radial_sweep_and_kreiss() {
    let dir = tempfile::tempdir().unwrap();
    resolvex(&["gen", "--blocks", "[[0.35,0.606217782649107],1];[[0.1,-0.1],1]", "--cond", "3", "--on-curve", "0", "-o", "A.json"], dir.path());
    let o = resolvex(
        &["sweep", "radial", "--matrix", "A.json", "--r-min", "0.5", "--r-max", "0.8", "--k-delta", "0.1", "--eps-eig", "0.1", "--delta", "0.001", "--a", "12"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((doc["result"]["best_radius"].as_f64().unwrap() - 0.7).abs() < 1e-12);

    let o = resolvex(&["kreiss", "--matrix", "A.json", "--delta", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &doc["result"];
    assert!(r["value"].as_f64().unwrap() <= r["analytic_bound"].as_f64().unwrap());
}

#[test]
fn grid_sweep_is_long_format() {
    let dir = tempfile::tempdir().unwrap();
    resolvex(&["gen", "--blocks", "[[0,1],1];[[0.4,0.2],1]", "-o", "A.json"], dir.path());
    let o = resolvex(
        &["sweep", "grid", "--problem", "qeue", "--matrix", "A.json", "--conds", "1,4", "--deltas", "0.02,0.005", "--eps-eigs", "0.1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    // two conditions x two deltas x one component x six quantities
    assert_eq!(rows.len(), 24, "{text}");
    assert!(rows.iter().all(|r| r.starts_with("sweep,")));
}

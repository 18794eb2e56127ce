use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fvk-annulus"));
    c.env_remove("FVK_ANNULUS_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimize_default_config() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("run");
    let o = run(&["minimize", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let e = json(&out.join("energy.json"));
    assert!(e["total"].as_f64().unwrap() > 0.0);
    assert_eq!(e["converged"], true);
    for f in ["fields.csv", "diagnostics.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["params"]["n"], 2);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let fields = fs::read_to_string(out.join("fields.csv")).unwrap();
    assert!(fields.starts_with("r,theta,eta,chi1,chi2\n"));
    assert_eq!(fields.lines().count(), 1 + 40 * 40);
}

#[test]
fn misaligned_grid_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["minimize", "--n", "4", "--ntheta", "10", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ntheta must be divisible by 2n"), "{}", stderr(&o));
}

#[test]
fn forced_non_convergence_still_writes_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        r#"{"params":{"r0":0.1,"nu":0.5,"tau":0.001,"n":2},"grid":{"nr":16,"ntheta":16},"solve":{"max_iterations":1}}"#,
    );
    let out = d.path().join("env-out");
    let o = bin().args(["minimize", "--config", &cfg]).env("FVK_ANNULUS_OUT", &out).output().unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(json(&out.join("energy.json"))["converged"], false);
    assert!(out.join("fields.csv").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), r#"{"params":{"r0":0.1,"nu":0.5,"tau":0.001,"n":2},"grid":{"nr":16,"ntheta":16},"bogus":1}"#);
    let o = run(&["minimize", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus"));
}

fn small_sweep(dir: &Path, taus: &str, n_list: &str, seed: &str) -> Output {
    let cfg = write_config(
        dir,
        &format!(
            r#"{{"params":{{"r0":0.1,"nu":0.5,"tau":0.001,"n":2}},"grid":{{"nr":12,"ntheta":24}},
               "sweep":{{"taus":{taus},"n_list":{n_list}}}}}"#
        ),
    );
    run(&["sweep", "--config", &cfg, "--out", dir.join("sweep").to_str().unwrap(), "--seed", seed, "--jobs", "2"])
}

#[test]
fn sweep_rows_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = small_sweep(a.path(), "[0.1, 0.01, 0.001]", "[2, 3]", "5");
    assert_eq!(code(&oa), 0, "{}", stderr(&oa));
    let ob = small_sweep(b.path(), "[0.1, 0.01, 0.001]", "[2, 3]", "5");
    assert_eq!(code(&ob), 0);
    let ca = fs::read(a.path().join("sweep/sweep.csv")).unwrap();
    let cb = fs::read(b.path().join("sweep/sweep.csv")).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(String::from_utf8(ca).unwrap().lines().count(), 1 + 3 * 2);
    let m = json(&a.path().join("sweep/manifest.json"));
    assert_eq!(m["points"].as_array().unwrap().len(), 6);
    assert_eq!(m["rng_seed"], 5);
    assert!(a.path().join("sweep/points").read_dir().unwrap().count() >= 1);
}

#[test]
fn empty_ladder_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = small_sweep(d.path(), "[]", "[2]", "0");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ladder"));
}

#[test]
fn bounds_without_data() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["bounds", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let b = json(&d.path().join("bounds.json"));
    assert!((b["saddle_upper"].as_f64().unwrap() - 6.2203e-6).abs() < 1e-9);
    assert!(b["sandwich_ok"].is_null());
    assert!(b["periodic_upper"]["5"].as_f64().unwrap() > b["periodic_upper"]["4"].as_f64().unwrap());
}

#[test]
fn bounds_flag_planted_violation() {
    let d = tempfile::tempdir().unwrap();
    let csv = d.path().join("doctored.csv");
    let mut body = String::from("n,tau,energy_total,converged\n");
    for (k, tau) in [1e-2f64, 5e-3, 2e-3, 1e-3].iter().enumerate() {
        let e = if k == 2 { 0.5 } else { 5.9 } * tau * tau;
        body.push_str(&format!("2,{tau:e},{e:e},true\n"));
    }
    fs::write(&csv, body).unwrap();
    let o = run(&["bounds", "--sweep", csv.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let b = json(&d.path().join("bounds.json"));
    assert_eq!(b["sandwich_ok"], false);
    assert_eq!(b["violations"][0]["kind"], "lower");
}

#[test]
fn sweep_then_bounds_then_blayer() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        r#"{"params":{"r0":0.1,"nu":0.5,"tau":0.001,"n":2},"grid":{"nr":24,"ntheta":24},
            "sweep":{"taus":[0.01,0.003,0.001,0.0003],"n_list":[2]},
            "blayer":{"kinds":["edge_gauss"],"threshold":0.1}}"#,
    );
    let sweep = d.path().join("sweep");
    let o = run(&["sweep", "--config", &cfg, "--out", sweep.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = run(&["bounds", "--config", &cfg, "--sweep", sweep.join("sweep.csv").to_str().unwrap(), "--out", d.path().join("b").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let b = json(&d.path().join("b/bounds.json"));
    assert_eq!(b["sandwich_ok"], true);
    assert!(b["c_fit"].as_f64().unwrap() > 0.0);
    assert!(!b["crossover"].as_array().unwrap().is_empty());

    let out = d.path().join("layers");
    let o = run(&["blayer", "--sweep-dir", sweep.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&out.join("layer_edge_gauss_n2.json"));
    assert!(s["exponent"].as_f64().unwrap().is_finite());
    let rows = fs::read_to_string(out.join("layer_edge_gauss_n2.csv")).unwrap();
    assert!(rows.starts_with("layer_kind,tau,theta_or_r,width\n"));

    let o = run(&["blayer", "--sweep-dir", sweep.to_str().unwrap(), "--kind", "inflection", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no inflection layer for n=2"), "{}", stderr(&o));
}

#[test]
fn blayer_needs_four_points() {
    let d = tempfile::tempdir().unwrap();
    let o = small_sweep(d.path(), "[0.01, 0.001]", "[2]", "0");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["blayer", "--sweep-dir", d.path().join("sweep").to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("at least 4"), "{}", stderr(&o));
}

#[test]
fn validate_verdicts() {
    let o = run(&["validate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7, "{text}");

    let o = run(&["validate", "--perturb-q", "1e-9"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("quadratic_form"));

    let o = run(&["validate", "--n", "4", "--ntheta", "10"]);
    assert_eq!(code(&o), 1);
}

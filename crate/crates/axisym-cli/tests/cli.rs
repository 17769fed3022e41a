use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn axisym(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_axisym"));
    cmd.args(args).env("RUST_LOG", "warn");
    if let Some(t) = threads {
        cmd.env("SIM_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr:\n{}", String::from_utf8_lossy(&out.stderr));
}

fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("manifest.txt")).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn minimal_run_writes_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", "case = 1\nn = 256\nm = 128\nt_end = 1e-5\n");
    let out = tmp.path().join("out");
    ok(&axisym(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], Some("1")));
    let m = manifest(&out);
    assert!(m.contains("halt = \"completed\""), "{m}");
    assert!(m.contains("threads = 1"), "{m}");
    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
    // Every listed file exists.
    let v: toml::Value = toml::from_str(&m).unwrap();
    for f in v["artifacts"]["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file(), "{f}");
    }
}

#[test]
fn inviscid_case_has_zero_diffusion() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let args = ["run", "--case", "3", "--n", "64", "--m", "32", "--t-end", "1e-6", "--out", out.to_str().unwrap()];
    ok(&axisym(&args, None));
    assert!(manifest(&out).contains("nu_identically_zero = true"));
}

#[test]
fn regularized_case_invokes_remeshed_filter() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", "case = 4\nrlpf_k = 50\nn = 64\nm = 32\nt_end = 1e-6\n");
    let out = tmp.path().join("out");
    ok(&axisym(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None));
    let v: toml::Value = toml::from_str(&manifest(&out)).unwrap();
    assert!(v["summary"]["rlpf_calls"].as_integer().unwrap() > 0);
    assert!(!v["summary"]["nu_identically_zero"].as_bool().unwrap());
}

#[test]
fn config_errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "case = 1\nn = 64\ncfl = \"fast\"\n");
    let out = axisym(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert!(!axisym(&["run", "--case", "5"], None).status.success());
    assert!(!axisym(&["run", "--case", "1", "--n", "64", "--m", "32"], Some("zero")).status.success());
}

fn synthetic_csv(dir: &Path) -> String {
    let mut s = String::from("t,u1_max,w1_max\n");
    for k in 0..40 {
        let t = 1.6e-4 + 1.5e-5 * k as f64 / 39.0;
        s.push_str(&format!("{t:.16e},{:.16e},{:.16e}\n", (1.791e-4 - t).powf(-1.0), 3.0 * (1.791e-4 - t).powf(-2.0)));
    }
    write(dir, "diag.csv", &s)
}

#[test]
fn fit_recovers_planted_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = synthetic_csv(tmp.path());
    let report = tmp.path().join("fit.csv");
    let out = axisym(&["fit", &csv, "--column", "u1_max", "--column", "w1_max", "--out", report.to_str().unwrap()], None);
    ok(&out);
    let rows = fs::read_to_string(report).unwrap();
    let c_of = |col: &str, model: &str| -> f64 {
        let line = rows.lines().find(|l| l.starts_with(&format!("{col},{model},"))).unwrap();
        line.split(',').nth(2).unwrap().parse().unwrap()
    };
    assert!((c_of("u1_max", "2") - 1.0).abs() < 2e-3);
    assert!((c_of("w1_max", "2") - 2.0).abs() < 2e-3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("model 1"));
}

#[test]
fn fit_rejects_empty_window_and_missing_column() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = synthetic_csv(tmp.path());
    assert!(!axisym(&["fit", &csv, "--t1", "1.7e-4", "--t2", "1.7e-4"], None).status.success());
    assert!(!axisym(&["fit", &csv, "--t1", "1e-3", "--t2", "2e-3"], None).status.success());
    assert!(!axisym(&["fit", &csv, "--column", "nope"], None).status.success());
}

#[test]
fn mesh_dump_writes_both_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mesh.txt");
    ok(&axisym(&["mesh-dump", "--n", "64", "--m", "32", "--out", out.to_str().unwrap()], None));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("r-map\n"));
    assert!(text.contains("z-map\n"));
    assert_eq!(text.lines().count(), 2 * 7 + 65 + 33);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fraclab_cli::manifest::{sha256_hex, LOCK_FILE, MANIFEST_FILE};
use fraclab_cli::RunManifest;

const SMALL: &str = "\
[orders]
s = 0.5

[nonlinearity]
preset = peierls-nabarro

[grid]
L = 6
nx = 61
Y = 60
ny = 30
grading = 3

[solver]
lateral = dirichlet
top = dirichlet
alpha = 1
beta = -1
dirichlet_data = arctan

[checks]
run = solve balance dichotomy decay
";

fn fraclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraclab")).args(args).env_remove("FRACLAB_THREADS").output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(dir: &Path, cfg: &str, out: &str) -> Output {
    fraclab(&["run", cfg, "--out", dir.join(out).to_str().unwrap(), "--threads", "2"])
}

#[test]
fn validate_accepts_and_rejects() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), "good.cfg", SMALL);
    assert_eq!(fraclab(&["validate", &good]).status.code(), Some(0));

    let bad = write_config(tmp.path(), "bad.cfg", &SMALL.replace("s = 0.5", "s = 1.2"));
    let out = fraclab(&["validate", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("orders.s"));

    let typo = write_config(tmp.path(), "typo.cfg", &SMALL.replace("grading = 3", "grading = 3\ngradng = 2"));
    let out = fraclab(&["validate", &typo]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.gradng"));

    let missing = tmp.path().join("missing.cfg");
    assert_eq!(fraclab(&["validate", missing.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn run_writes_manifest_with_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    let out = run(tmp.path(), &cfg, "a");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("a");
    let m = RunManifest::read(&dir).unwrap();
    assert_eq!(m.name, "small");
    assert_eq!(m.exit_code, 0);
    assert_eq!(m.config_sha256, sha256_hex(SMALL.as_bytes()));
    assert!(m.files.iter().any(|f| f.path == "trace.csv"));
    for f in &m.files {
        let bytes = fs::read(dir.join(&f.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.path);
    }
    assert!(m.checks.iter().any(|c| c.check == "balance"));
    assert!(!dir.join(LOCK_FILE).exists());

    // Same config again: identical data files.
    assert_eq!(run(tmp.path(), &cfg, "b").status.code(), Some(0));
    let m2 = RunManifest::read(&tmp.path().join("b")).unwrap();
    assert_eq!(m.files, m2.files);
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("run = solve balance dichotomy decay", "run = solve balance\nbalance_tol = 1e-300\ntrace_reference = tanh");
    let cfg = write_config(tmp.path(), "strict.cfg", &text);
    let out = run(tmp.path(), &cfg, "r");
    assert_eq!(out.status.code(), Some(1));
    let m = RunManifest::read(&tmp.path().join("r")).unwrap();
    assert!(!m.passed());
}

#[test]
fn non_convergence_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("dirichlet_data = arctan", "dirichlet_data = arctan\nnewton_max = 1\nnewton_tol = 1e-15");
    let cfg = write_config(tmp.path(), "short.cfg", &text);
    let out = run(tmp.path(), &cfg, "r");
    assert_eq!(out.status.code(), Some(3));
    let m = RunManifest::read(&tmp.path().join("r")).unwrap();
    assert_eq!(m.exit_code, 3);
    assert!(m.checks.iter().all(|c| c.check == "solve"));
}

#[test]
fn locked_directory_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    let dir = tmp.path().join("busy");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(LOCK_FILE), "1\n").unwrap();
    let out = run(tmp.path(), &cfg, "busy");
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn report_rows_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(fraclab(&["report"]).status.code(), Some(0));

    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    assert_eq!(run(tmp.path(), &cfg, "one").status.code(), Some(0));
    assert_eq!(run(tmp.path(), &cfg, "two").status.code(), Some(0));
    let one = tmp.path().join("one");
    let two = tmp.path().join("two");
    let csv = tmp.path().join("summary.csv");
    let out = fraclab(&["report", one.to_str().unwrap(), two.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("run,check,criterion,threshold,observed,status\n"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",pass") || l.ends_with(",n/a")));

    // Flag one criterion as failed.
    let mut m = RunManifest::read(&two).unwrap();
    m.checks[0].status = fraclab_cli::Status::Fail;
    fs::write(two.join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
    let out = fraclab(&["report", one.to_str().unwrap(), two.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    fs::write(two.join(MANIFEST_FILE), "{ not json").unwrap();
    let out = fraclab(&["report", two.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("unreadable"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let out = fraclab(&["validate", path.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            n += 1;
        }
    }
    assert!(n >= 6);
}

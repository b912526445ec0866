//! End-to-end runs of the `amz` binary.
//!
//! Golden files live in `tests/golden/e1_small/`; regenerate them with
//! `AMZ_UPDATE_GOLDEN=1 cargo test -p amz-cli --test cli`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amz_cli::config::E1_TOML;
use tempfile::TempDir;

const GOLDEN_FILES: [&str; 5] = [
    "summary.json",
    "certificate.json",
    "stability.csv",
    "stability.svg",
    "prop1.json",
];

fn amz(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_amz"));
    cmd.args(args).env_remove("AMZ_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("AMZ_OUT_DIR", dir);
    }
    cmd.output().expect("the amz binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn golden_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/e1_small.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn all_on_reduced_e1_matches_golden_files() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let res = amz(&["all", "--config", s(&golden_config()), "--out", s(&out)], None);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/e1_small");
    if std::env::var_os("AMZ_UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(&golden).unwrap();
        for f in GOLDEN_FILES {
            fs::copy(out.join(f), golden.join(f)).unwrap();
        }
    }
    for f in GOLDEN_FILES {
        let got = fs::read_to_string(out.join(f)).unwrap();
        let want = fs::read_to_string(golden.join(f)).unwrap_or_else(|_| panic!("missing golden file {f}"));
        assert!(got == want, "{f} differs from its golden copy");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let res = amz(&["all", "--config", s(&golden_config()), "--out", s(dir)], None);
        assert_eq!(res.status.code(), Some(0));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 20, "{names:?}");
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn certificate_command_writes_a_flat_certificate() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "e1.toml", E1_TOML);
    let out = tmp.path().join("out");
    let res = amz(&["certificate", "--config", s(&cfg), "--out", s(&out)], None);
    assert_eq!(res.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    for key in ["epsilon", "alpha", "p", "m_const", "eta1", "c", "lambda0", "lambda1", "seed", "config_echo"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["passed"], true);
    assert!((v["c"].as_f64().unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn invalid_field_exits_2_before_any_work() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "bad.toml", &E1_TOML.replace("p = 0.5", "p = 0.95"));
    let out = tmp.path().join("out");
    let res = amz(&["stationary", "--config", s(&cfg), "--out", s(&out)], None);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("A4"));
    assert!(!out.join("stationary.json").exists());
}

#[test]
fn config_problems_exit_2() {
    let tmp = TempDir::new().unwrap();
    let typo = write_config(&tmp, "typo.toml", &format!("alpha0 = 1\n{E1_TOML}"));
    let res = amz(&["validate", "--config", s(&typo), "--out", s(tmp.path())], None);
    assert_eq!(res.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("alpha0") && msg.contains("line 1"), "{msg}");

    let missing = tmp.path().join("nope.toml");
    let res = amz(&["validate", "--config", s(&missing)], None);
    assert_eq!(res.status.code(), Some(2));

    let res = amz(&["frobnicate", "--config", s(&typo)], None);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn experiment_failure_exits_1() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{E1_TOML}\n[experiments.stability]\ngrid_n = 256\nhorizon = 5\n");
    let cfg = write_config(&tmp, "short.toml", &text);
    let out = tmp.path().join("out");
    let res = amz(&["stability", "--config", s(&cfg), "--out", s(&out)], None);
    assert_eq!(res.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stability.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], false);
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let text = format!("seed = 3\n{E1_TOML}\n[experiments.prop2]\npairs = 100\n");
    let cfg = write_config(&tmp, "e1.toml", &text);
    let out = tmp.path().join("out");
    let res = amz(&["prop2", "--config", s(&cfg), "--out", s(&out), "--seed", "77"], None);
    assert_eq!(res.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("prop2.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 77);
    assert_eq!(v["config_echo"]["seed"], 77);
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("seed = 77"));
    let csv = fs::read_to_string(out.join("prop2.csv")).unwrap();
    assert!(csv.starts_with("# seed = 77\n# config_echo = {"));
}

#[test]
fn output_dir_precedence() {
    let tmp = TempDir::new().unwrap();
    let env_dir = tmp.path().join("from_env");
    let cfg = write_config(&tmp, "e1.toml", E1_TOML);
    let res = amz(&["validate", "--config", s(&cfg)], Some(&env_dir));
    assert_eq!(res.status.code(), Some(0));
    assert!(env_dir.join("validate.json").exists());

    let flag_dir = tmp.path().join("from_flag");
    let res = amz(&["validate", "--config", s(&cfg), "--out", s(&flag_dir)], Some(&env_dir));
    assert_eq!(res.status.code(), Some(0));
    assert!(flag_dir.join("validate.json").exists());

    let cfg_dir = tmp.path().join("from_config");
    let text = format!("output_dir = {:?}\n{E1_TOML}", s(&cfg_dir));
    let cfg2 = write_config(&tmp, "e1_out.toml", &text);
    let res = amz(&["validate", "--config", s(&cfg2)], Some(&env_dir));
    assert_eq!(res.status.code(), Some(0));
    assert!(cfg_dir.join("validate.json").exists());
}

#[test]
fn written_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let text = format!("seed = 9\n{E1_TOML}\n[experiments.prop1]\npairs = 200\n");
    let cfg = write_config(&tmp, "e1.toml", &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(amz(&["prop1", "--config", s(&cfg), "--out", s(&a)], None).status.code(), Some(0));
    let echoed = a.join("config.toml");
    assert_eq!(amz(&["prop1", "--config", s(&echoed), "--out", s(&b)], None).status.code(), Some(0));
    assert_eq!(fs::read(a.join("prop1.json")).unwrap(), fs::read(b.join("prop1.json")).unwrap());
}

//! End-to-end checks of the `anodiss` binary: file formats, JSON output and
//! exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn anodiss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anodiss"))
        .current_dir(dir)
        .env("ANODISS_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn params_tree_field_chain() {
    let d = tempfile::tempdir().unwrap();
    let o = anodiss(d.path(), &["params", "--regime", "desk", "--a0", "0.1", "--delta", "0.3", "--qmax", "2", "--out", "t.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("t.csv")).unwrap();
    assert!(csv.starts_with("q,log_a,log_n,log_N,log_A,log_Abar,log_B,log_L,log_v,log_kappa,log_ell\n"));
    assert_eq!(csv.lines().count(), 4);

    let o = anodiss(d.path(), &["tree", "--table", "t.csv", "--q", "1", "--out", "tree.json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("tree.json")).unwrap()).unwrap();
    assert!(v.as_array().unwrap().len() > 1);

    let o = anodiss(d.path(), &["build-field", "--table", "t.csv", "--q", "0", "--res", "256", "--out", "f.bin"]);
    assert_eq!(code(&o), 2, "too coarse a grid is a config error");
    let o = anodiss(d.path(), &["build-field", "--table", "t.csv", "--q", "0", "--out", "f.bin"]);
    assert_eq!(code(&o), 0);
    let bytes = std::fs::read(d.path().join("f.bin")).unwrap();
    assert!(bytes.starts_with(b"ANODISS-FIELD v1\ngrid_res 512\nq 0\ntable_hash "));

    let o = anodiss(d.path(), &["solve", "--field", "f.bin", "--kappa", "1e-3", "--T", "0.05", "--out", "run.csv", "--snapshot", "th.bin"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = std::fs::read_to_string(d.path().join("run.csv")).unwrap();
    assert!(run.starts_with("t,energy,diss_rate,cum_diss,min_theta,max_theta\n"));
    assert!(std::fs::read(d.path().join("th.bin")).unwrap().starts_with(b"ANODISS-SCALAR v1\n"));

    // a fixed step beyond the CFL bound is a numeric failure
    let o = anodiss(d.path(), &["solve", "--field", "f.bin", "--kappa", "1e-3", "--dt", "0.1", "--out", "bad.csv"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn fldiss_prints_one_json_line() {
    let d = tempfile::tempdir().unwrap();
    let o = anodiss(
        d.path(),
        &["fldiss", "--field", "zero", "--res", "32", "--kappa", "1e-2", "--ntraj", "500", "--dt", "1", "--m", "4", "--out", "mc.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v.as_object().unwrap().len(), 5);
    // keys appear in the documented order
    let pos: Vec<usize> = ["\"lhs\"", "\"rhs\"", "\"mc_se\"", "\"pde_tol\"", "\"rel_err\""]
        .iter()
        .map(|k| out.find(k).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{out}");
    let mc = std::fs::read_to_string(d.path().join("mc.csv")).unwrap();
    assert!(mc.starts_with("start_x,start_y,end_x,end_y,seed_index\n"));
    assert_eq!(mc.lines().count(), 1 + 16 * 500);
}

#[test]
fn mc_is_reproducible_and_thread_independent() {
    let d = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["mc", "--field", "zero", "--res", "8", "--kappa", "1e-2", "--ntraj", "50", "--dt", "0.1", "--seed", "3", "--starts", "grid:3", "--out", out]
    };
    assert_eq!(code(&anodiss(d.path(), &args("a.csv"))), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_anodiss"))
        .current_dir(d.path())
        .env("ANODISS_THREADS", "1")
        .args(args("b.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(d.path().join("a.csv")).unwrap(), std::fs::read(d.path().join("b.csv")).unwrap());
}

#[test]
fn run_report_and_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let o = anodiss(d.path(), &["run", "--builtin", "heat", "--set", "out_dir=out", "--set", "t_end=0.2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("out/manifest.json").exists());
    let o = anodiss(d.path(), &["report", "--dir", "out"]);
    assert_eq!(code(&o), 0);
    assert!(d.path().join("out/report.md").exists());
    assert!(d.path().join("out/run_q0_k0_energy.svg").exists());

    let o = anodiss(d.path(), &["run", "--builtin", "heat", "--set", "out_dir=out", "--set", "t_end=0.2", "--print-config"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("t_end = 0.2\n"));
    std::fs::write(d.path().join("c.txt"), &text).unwrap();
    let o = anodiss(d.path(), &["run", "--config", "c.txt", "--print-config"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);

    std::fs::create_dir(d.path().join("empty")).unwrap();
    let o = anodiss(d.path(), &["report", "--dir", "empty"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("run_q*_k*.csv"));
    assert_eq!(code(&anodiss(d.path(), &["run", "--set", "bogus=1"])), 2);
    assert_eq!(code(&anodiss(d.path(), &["params", "--regime", "desk", "--a0", "0.9", "--out", "x.csv"])), 2);
    assert_eq!(code(&anodiss(d.path(), &["not-a-command"])), 2);
}

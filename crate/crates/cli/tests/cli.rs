use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn chb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chb"))
        .args(args)
        .output()
        .expect("spawn chb")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

const SHORT: &str = "domain.n = 4\ntime.dt = 1e-4\ntime.T = 3e-4\ninit.phi = noise:0,0.5\n";

#[test]
fn validate_rejects_zero_viscosity_with_bound() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "nu.cfg", "coeffs.nu = 0\n");
    let out = chb(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(6));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("0 < nu_1"), "{err}");
}

#[test]
fn validate_accepts_defaults_and_writes_nothing() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "ok.cfg", "domain.n = 4\n");
    let out_dir = d.path().join("out");
    let out = chb(&["validate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("valid"));
    assert!(!out_dir.exists());
}

#[test]
fn exit_codes_for_bad_input() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(chb(&["run", "--bogus"]).status.code(), Some(2));
    let missing = d.path().join("missing.cfg");
    assert_eq!(
        chb(&["validate", "--config", missing.to_str().unwrap()]).status.code(),
        Some(3)
    );
    let bad = write_cfg(d.path(), "bad.cfg", "model.Q = 1\n");
    assert_eq!(chb(&["validate", "--config", &bad]).status.code(), Some(4));
    let mob = write_cfg(d.path(), "mob.cfg", "coeffs.m_bulk = affine:1,-1,-1,1\n");
    assert_eq!(chb(&["validate", "--config", &mob]).status.code(), Some(5));
}

#[test]
fn zero_final_time_writes_only_the_initial_snapshot() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "t0.cfg", "domain.n = 4\ntime.T = 0\ninit.phi = noise:0,0.5\n");
    let out_dir = d.path().join("out");
    let out = chb(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run = out_dir.join("run_K_1e-1");
    assert!(run.join("fields_0.vtk").exists());
    let ts = fs::read_to_string(run.join("timeseries.csv")).unwrap();
    let data: Vec<&str> = ts.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data.len(), 1);
    assert!(data[0].starts_with("0,"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "r.cfg", SHORT);
    let mut hashes = Vec::new();
    for (i, seed) in ["7", "7", "8"].iter().enumerate() {
        let od = d.path().join(format!("o{i}"));
        let out = chb(&["run", "--config", &cfg, "--seed", seed, "--out", od.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        hashes.push((
            sha(&od.join("run_K_1e-1").join("timeseries.csv")),
            sha(&od.join("summary.csv")),
        ));
    }
    assert_eq!(hashes[0], hashes[1]);
    assert_ne!(hashes[0].0, hashes[2].0);
}

#[test]
fn degenerate_k_sweep_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "k.cfg", &format!("{SHORT}sweep.k = 1e-1,1e-1,1e-2\n"));
    let out = chb(&["sweep-k", "--config", &cfg, "--out", d.path().join("o").to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    assert_ne!(out.status.code(), Some(1));
}

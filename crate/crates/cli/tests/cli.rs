use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wfps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfps")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "\
[model]
hbar = 0.1
diffusion = 1e-2

[grid]
nq = 64
np = 64
q_min = -6.0
q_max = 6.0
p_min = -8.0
p_max = 8.0

[initial]
centers = [[1.0, 0.0]]

[run]
dt = 1e-2
t_end = 0.1
checkpoint_every = 0.05
diagnostics_every = 2
";

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn manifest_files(dir: &Path) -> Vec<(String, String)> {
    let text = fs::read_to_string(dir.join("manifest.toml")).unwrap();
    let table: toml::Table = text.parse().unwrap();
    table["file"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["path"].as_str().unwrap().to_string(),
                f["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn timescales_reports_reference_set() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[run]\nt_end = 1.0\n");
    let out = tmp.path().join("ts");
    let o = wfps(&["timescales", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("15.03"), "{s}");
    assert!(s.contains("57.000000"), "{s}");
    assert!(out.join("timescales.csv").exists());
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = wfps(&["bogus"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn invalid_config_is_rejected_with_every_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[model]\nhbar = -1\ncolour = 2\n[run]\nt_end = 1.0\n");
    let o = wfps(&["evolve", "-c", &cfg, "-o", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("model.hbar") && e.contains("model.colour"), "{e}");
}

#[test]
fn missing_config_file_fails() {
    let o = wfps(&["evolve", "-c", "/nonexistent/run.cfg"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_is_deterministic_and_hashed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = wfps(&["compare", "-c", &cfg, "-o", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let files = manifest_files(&a);
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "distance.csv",
        "diagnostics_quantum.csv",
        "diagnostics_classical.csv",
        "config.toml",
    ] {
        assert!(names.contains(&want), "{names:?}");
    }
    assert!(names.iter().filter(|n| n.ends_with(".wfps")).count() >= 4, "{names:?}");
    for (name, hash) in &files {
        let bytes = fs::read(a.join(name)).unwrap();
        let got: String = {
            use sha2::{Digest, Sha256};
            Sha256::digest(&bytes).iter().map(|x| format!("{x:02x}")).collect()
        };
        assert_eq!(&got, hash, "{name}");
        assert_eq!(bytes, fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_eq!(
        fs::read(a.join("manifest.toml")).unwrap(),
        fs::read(b.join("manifest.toml")).unwrap()
    );
    let distance = fs::read_to_string(a.join("distance.csv")).unwrap();
    assert!(distance.starts_with("time,l1,l2,negativity_quantum,negativity_classical\n"));
}

#[test]
fn slice_reads_a_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let run = tmp.path().join("run");
    let o = wfps(&["evolve", "-c", &cfg, "-o", run.to_str().unwrap(), "--mode", "classical"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = manifest_files(&run)
        .into_iter()
        .map(|(n, _)| n)
        .find(|n| n.ends_with(".wfps"))
        .unwrap();
    let sl = tmp.path().join("slice");
    let o = wfps(&[
        "slice",
        "--checkpoint",
        run.join(&ckpt).to_str().unwrap(),
        "--p0",
        "-0.5",
        "-o",
        sl.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = manifest_files(&sl)
        .into_iter()
        .map(|(n, _)| n)
        .find(|n| n.ends_with(".csv"))
        .unwrap();
    let text = fs::read_to_string(sl.join(csv)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("q,value"));
    assert_eq!(lines.count(), 64);
}

#[test]
fn slice_rejects_garbage() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.wfps");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let o = wfps(&[
        "slice",
        "--checkpoint",
        bad.to_str().unwrap(),
        "-o",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn langevin_small_ensemble() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("l");
    let o = wfps(&[
        "langevin",
        "-c",
        &cfg,
        "-o",
        out.to_str().unwrap(),
        "--n",
        "200",
        "--samples",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("langevin.csv")).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
}

#[test]
fn manifold_small_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[run]\nt_end = 1.0\n");
    let out = tmp.path().join("m");
    let o = wfps(&[
        "manifold",
        "-c",
        &cfg,
        "-o",
        out.to_str().unwrap(),
        "--periods",
        "1",
        "--resolution",
        "0.05",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("manifold.csv")).unwrap();
    assert!(text.lines().count() > 10, "{text}");
}

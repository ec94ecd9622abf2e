#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

pub fn objfield() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_objfield"));
    c.env("RUST_LOG", "warn");
    c
}

pub fn run(args: &[&str]) -> Output {
    objfield().args(args).output().expect("spawning objfield")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "objfield {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A tiny dataset and a briefly trained checkpoint, built once per test
/// binary with the CLI itself.
pub struct Fixture {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub layout: PathBuf,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        run_ok(&[
            "gen-data",
            "--out",
            p(&data),
            "--train-objects",
            "2",
            "--test-objects",
            "1",
            "--views",
            "3",
            "--held-out-views",
            "1",
            "--novel-views",
            "1",
            "--width",
            "16",
            "--height",
            "16",
            "--focal",
            "32",
            "--grasps-per-object",
            "20",
            "--perturbations",
            "5",
            "--oracle-samples",
            "64",
            "--threads",
            "1",
            "--seed",
            "5",
        ]);
        let pre = root.join("pre");
        run_ok(&[
            "pretrain",
            "--data",
            p(&data),
            "--out",
            p(&pre),
            "--epochs",
            "100",
            "--max-steps",
            "5",
            "--rays-per-batch",
            "64",
            "--grasps-per-batch",
            "8",
            "--samples",
            "8",
            "--width",
            "16",
            "--latent-dim",
            "8",
            "--threads",
            "1",
        ]);
        Fixture {
            layout: data.join("scene_0000").join("layout.toml"),
            checkpoint: pre.join("model.ckpt"),
            data,
            root,
            _dir: dir,
        }
    })
}

/// Every file under `dir` by relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let e = e.unwrap();
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

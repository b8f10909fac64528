#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

pub const FIXTURE_FILES: &[&str] = &[
    "mnist.desc",
    "mnist.graph",
    "mnist.params",
    "svhn.desc",
    "svhn.graph",
    "svhn.params",
    "runtime.mf",
    "runtime.so",
    "consumer.mf",
    "consumer.py",
    "consumer.req",
];

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn capstan(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_capstan")).current_dir(dir).args(args).output().expect("spawn capstan");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

/// A scratch directory holding a copy of the fixtures.
pub fn workspace() -> TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    for name in FIXTURE_FILES {
        fs::copy(manifest_dir().join("tests/fixtures").join(name), dir.path().join(name)).expect("copy fixture");
    }
    dir
}

pub fn create_packages(dir: &Path) {
    for model in ["mnist", "svhn"] {
        let run = capstan(
            dir,
            &[
                "create",
                &format!("{model}.desc"),
                &format!("{model}.graph"),
                &format!("{model}.params"),
                &format!("{model}-model.zip"),
            ],
        );
        assert_eq!(run.code, 0, "{}", run.stderr);
    }
}

/// Packages plus `repo.idx` (with the runtime) and `bare.idx` (without).
pub fn fixture_repo() -> TempDir {
    let dir = workspace();
    create_packages(dir.path());
    for (out, with_runtime) in [("repo.idx", true), ("bare.idx", false)] {
        let mut args = vec!["index", "mnist-model.zip", "svhn-model.zip"];
        if with_runtime {
            args.push("runtime.mf");
        }
        args.extend(["-o", out]);
        let run = capstan(dir.path(), &args);
        assert_eq!(run.code, 0, "{}", run.stderr);
    }
    dir
}

pub fn golden_path(name: &str) -> PathBuf {
    manifest_dir().join("tests/goldens").join(name)
}

/// Byte comparison against a checked-in golden; `UPDATE_GOLDENS=1` rewrites it.
pub fn matches_golden(name: &str, actual: &str) -> bool {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        fs::write(&path, actual).expect("write golden");
    }
    fs::read_to_string(&path).map(|g| g == actual).unwrap_or(false)
}

pub fn assert_golden(name: &str, actual: &str) {
    assert!(
        matches_golden(name, actual),
        "{name} differs from golden\n--- actual ---\n{actual}--- golden ---\n{}",
        fs::read_to_string(golden_path(name)).unwrap_or_default()
    );
}

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nodemixup"));
    c.env_remove("NODEMIXUP_DATA").env_remove("RUST_LOG");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn nodemixup")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// A small SBM dataset that trains in well under a second per seed.
pub fn small_dataset(dir: &Path) {
    ok(&[
        "synth",
        "--classes",
        "3",
        "--per-class",
        "30",
        "--p-in",
        "0.2",
        "--p-out",
        "0.02",
        "--feature-dim",
        "6",
        "--noise",
        "0.5",
        "--labels-per-class",
        "3",
        "--valid-per-class",
        "5",
        "--seed",
        "3",
        "--out",
        p(dir),
    ]);
}

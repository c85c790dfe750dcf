//! Helpers for driving the `facecap` binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn facecap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facecap")).args(args).output().unwrap()
}

pub fn ok(args: &[&str]) -> Output {
    let out = facecap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn code(args: &[&str]) -> i32 {
    facecap(args).status.code().unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` with its bytes, in path order.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Runs `args` (with `{out}` standing for a fresh output directory) twice
/// and returns the files each run wrote.
pub fn run_twice(args: &[&str]) -> [Vec<(PathBuf, Vec<u8>)>; 2] {
    [0, 1].map(|_| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap().to_string();
        let a: Vec<String> = args.iter().map(|x| x.replace("{out}", &out)).collect();
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        ok(&a);
        snapshot(dir.path())
    })
}

pub fn assert_deterministic(args: &[&str]) {
    let [a, b] = run_twice(args);
    assert!(!a.is_empty(), "{args:?} wrote nothing");
    assert_eq!(a, b, "{args:?} output differs between runs");
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn exemplar_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/assets/exemplars")
}

pub fn exemplar_manifest() -> PathBuf {
    exemplar_dir().join("manifest.csv")
}

pub fn afromnist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afromnist"))
        .args(args)
        .env_remove("AFROMNIST_JOBS")
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Runs `generate` against the bundled exemplars with extra flags.
pub fn generate(out: &Path, extra: &[&str]) -> Output {
    let (e, m) = (exemplar_dir(), exemplar_manifest());
    let mut args = vec![
        "generate",
        "--exemplars",
        e.to_str().unwrap(),
        "--manifest",
        m.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    afromnist(&args)
}

/// Value after `prefix` on the first stdout line starting with it.
pub fn line_value<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .map(str::trim)
}

/// Parses `99.50% (1990/2000)` into a fraction.
pub fn parse_accuracy(value: &str) -> Option<f64> {
    let (_, counts) = value.split_once('(')?;
    let (hit, total) = counts.trim_end_matches(')').split_once('/')?;
    Some(hit.parse::<f64>().ok()? / total.parse::<f64>().ok()?)
}

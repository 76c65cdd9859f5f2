#![allow(dead_code)]

use std::path::Path;

/// A fast time-series run configuration.
pub fn small_config(trials: usize, population: usize) -> String {
    format!(
        r#"seed = 11
[search]
trials = {trials}
population_size = {population}
[task]
kind = "time-series"
channels = 3
width = 48
classes = 4
[selection]
population = 60
stagnation = 20
"#
    )
}

pub fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn run(args: &[&str]) -> i32 {
    let mut full = vec!["protonas"];
    full.extend_from_slice(args);
    protonas::cli::run(full, None)
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

//! Reproducibility record written next to every run's outputs.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const MANIFEST_HEADER: &str = "#hnl1-manifest";

/// What produced a directory of outputs. Contains no wall-clock data, so
/// two runs with equal inputs write equal manifests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub subcommand: String,
    /// `(role, path)` pairs, e.g. `("config", "sim.conf")`.
    pub inputs: Vec<(String, PathBuf)>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub version: String,
    /// Other flags that influence the outputs.
    pub params: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(subcommand: &str, out: impl Into<PathBuf>) -> RunManifest {
        RunManifest {
            subcommand: subcommand.to_string(),
            inputs: Vec::new(),
            out: out.into(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            params: Vec::new(),
        }
    }

    pub fn input(mut self, role: &str, path: impl Into<PathBuf>) -> Self {
        self.inputs.push((role.to_string(), path.into()));
        self
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// `key = value` lines. Input files that exist are fingerprinted so a
    /// changed config shows up as a changed manifest.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MANIFEST_HEADER}");
        let _ = writeln!(s, "subcommand = {}", self.subcommand);
        let _ = writeln!(s, "version = {}", self.version);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        for (role, path) in &self.inputs {
            let _ = writeln!(s, "input.{role} = {}", path.display());
            if let Ok(bytes) = std::fs::read(path) {
                let _ = writeln!(
                    s,
                    "input.{role}.sha256 = {}",
                    hex::encode(Sha256::digest(&bytes))
                );
            }
        }
        for (k, v) in &self.params {
            let _ = writeln!(s, "param.{k} = {v}");
        }
        s
    }

    /// Writes `<dir>/<name>` and returns its path.
    pub fn write(&self, dir: &Path, name: &str) -> io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_text_with_fingerprints() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        std::fs::write(&cfg, "seed = 3\n").unwrap();
        let m = RunManifest::new("run-sim", "out")
            .input("config", &cfg)
            .seed(3)
            .param("bucket", "1h");
        let text = m.to_text();
        assert_eq!(text, m.clone().to_text());
        assert!(text.starts_with("#hnl1-manifest\nsubcommand = run-sim\n"));
        assert!(text.contains("seed = 3\n"));
        assert!(text.contains("input.config.sha256 = "));
        assert!(text.contains("param.bucket = 1h\n"));
        std::fs::write(&cfg, "seed = 4\n").unwrap();
        assert_ne!(text, m.to_text());
    }
}

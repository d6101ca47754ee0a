//! Artifact writing. Every file starts with the same metadata header.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    /// `None` for deterministic commands without a random stream.
    pub seed: Option<u64>,
    /// Hashes of input files, by role.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &'static str, config_hash: String, seed: Option<u64>) -> Self {
        Self { tool: "vmb", version: VERSION, command, config_hash, seed, inputs: Vec::new() }
    }

    pub fn with_input(mut self, role: &str, bytes: &[u8]) -> Self {
        self.inputs.push((role.to_string(), sha256_hex(bytes)));
        self
    }

    /// `key: value` pairs for CSV comment headers.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("tool".to_string(), self.tool.to_string()),
            ("version".to_string(), self.version.to_string()),
            ("command".to_string(), self.command.to_string()),
            ("config_hash".to_string(), self.config_hash.clone()),
            ("seed".to_string(), self.seed.map_or("none".to_string(), |s| s.to_string())),
        ];
        v.extend(self.inputs.iter().map(|(r, h)| (format!("input_{r}_sha256"), h.clone())));
        v
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    metadata: &'a Metadata,
    result: &'a T,
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<fs::File>), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok((path, BufWriter::new(f)))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, meta: &Metadata, result: &T) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, &Envelope { metadata: meta, result }).map_err(|e| CliError::io(&path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// CSV with `# key: value` metadata lines, a header row and `rows` as given.
pub fn write_csv(
    dir: &Path,
    name: &str,
    meta: &Metadata,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(dir, name)?;
    let io = |e| CliError::io(&path, e);
    for (k, v) in meta.pairs() {
        writeln!(w, "# {k}: {v}").map_err(io)?;
    }
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in rows {
        writeln!(w, "{}", r.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}

/// Full-precision float for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON has no infinity; unbounded values are written as null.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn csv_header_carries_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let meta = Metadata::new("budget", "h".into(), Some(3)).with_input("series", b"x");
        let p = write_csv(dir.path(), "a.csv", &meta, &["a", "b"], [vec!["1".into(), "2".into()]]).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert!(text.starts_with("# tool: vmb\n# version: "));
        assert!(text.contains("# config_hash: h\n# seed: 3\n# input_series_sha256: "));
        assert!(text.ends_with("a,b\n1,2\n"));
    }
}

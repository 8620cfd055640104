//! In-memory tables and the on-disk layout with its manifest.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, Config};
use crate::Experiment;

/// One output file, fully rendered before anything touches the disk.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            bytes,
        }
    }
}

/// Renders a CSV with the given header.
pub fn csv_table<H, S, I, R>(header: H, rows: I) -> anyhow::Result<Vec<u8>>
where
    H: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Renders through one of the core `write_csv` methods.
pub fn render<F>(write: F) -> anyhow::Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'static str,
    label: String,
    seed: u64,
    rounds: u64,
    version: &'static str,
    config_sha256: String,
    config: &'a Config,
    files: Vec<FileEntry<'a>>,
}

/// Writes every artifact plus `manifest.json` and returns the directory.
pub fn write(
    out: &Path,
    exp: Experiment,
    cfg: &Config,
    artifacts: &[Artifact],
) -> anyhow::Result<PathBuf> {
    let dir = out.join(exp.name()).join(cfg.label());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let manifest = Manifest {
        experiment: exp.name(),
        label: cfg.label(),
        seed: cfg.run.seed,
        rounds: cfg.run.rounds,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: cfg.sha256(),
        config: cfg,
        files: artifacts
            .iter()
            .map(|a| FileEntry {
                name: &a.name,
                bytes: a.bytes.len(),
                sha256: hex(&Sha256::digest(&a.bytes)),
            })
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows() {
        let b = csv_table(["a", "b"], [vec!["1".to_string(), "x,y".to_string()]]).unwrap();
        assert_eq!(String::from_utf8(b).unwrap(), "a,b\n1,\"x,y\"\n");
    }
}

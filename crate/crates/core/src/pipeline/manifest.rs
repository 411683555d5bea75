use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::report::{read_json, write_json};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the run root when the file lives under it.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::file(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), bytes))
}

/// `path` relative to `root` with `/` separators, or `path` as given when it
/// lies elsewhere.
pub fn display_path(path: &Path, root: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Everything needed to rerun one step. Wall-clock timings live in a
/// sidecar file so that reruns produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub workers: usize,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stats: serde_json::Value,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value) -> Self {
        RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            subcommand: subcommand.to_string(),
            config,
            workers: rayon::current_num_threads(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            stats: serde_json::Value::Null,
            warnings: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn input(&mut self, path: &Path, root: &Path) -> Result<&mut Self> {
        let d = digest(path, root)?;
        self.inputs.push(d);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path, root: &Path) -> Result<&mut Self> {
        let d = digest(path, root)?;
        self.outputs.push(d);
        Ok(self)
    }

    pub fn warn(&mut self, message: impl Into<String>) -> &mut Self {
        self.warnings.push(message.into());
        self
    }

    /// Writes `<dir>/<name>.json` and the `<name>.timings.json` sidecar.
    pub fn write(&self, dir: &Path, name: &str, seconds: f64) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let path = dir.join(format!("{name}.json"));
        write_json(self, &path)?;
        write_json(
            &serde_json::json!({ "subcommand": self.subcommand, "seconds": seconds }),
            &dir.join(format!("{name}.timings.json")),
        )?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Re-hashes every recorded input and output under `root`.
    pub fn verify_files(&self, root: &Path) -> Result<()> {
        for d in self.inputs.iter().chain(&self.outputs) {
            let path = root.join(&d.path);
            let (sha, _) = sha256_file(&path)?;
            if sha != d.sha256 {
                return Err(Error::Format(format!(
                    "{} changed since the manifest was written",
                    d.path
                )));
            }
        }
        Ok(())
    }
}

fn digest(path: &Path, root: &Path) -> Result<FileDigest> {
    let (sha256, bytes) = sha256_file(path)?;
    Ok(FileDigest {
        path: display_path(path, root),
        sha256,
        bytes,
    })
}

/// Checks that every input of a later manifest that was produced by an
/// earlier one carries the digest recorded at production time.
pub fn verify_chain(manifests: &[RunManifest]) -> Result<()> {
    let mut produced: BTreeMap<&str, &str> = BTreeMap::new();
    for m in manifests {
        for d in &m.inputs {
            if let Some(sha) = produced.get(d.path.as_str()) {
                if *sha != d.sha256 {
                    return Err(Error::Format(format!(
                        "{} consumed {} with a digest its producer did not write",
                        m.subcommand, d.path
                    )));
                }
            }
        }
        for d in &m.outputs {
            produced.insert(&d.path, &d.sha256);
        }
    }
    Ok(())
}

//! Run manifests: what went in, what came out, and how to run it again.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: PathBuf,
    pub seed: Option<u64>,
    pub config: Option<serde_json::Value>,
    /// Input path as given -> content digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the output directory -> content digest.
    pub outputs: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Every regular file below `root`, sorted, as paths relative to `root`.
pub fn walk(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = root.join(&rel);
        for entry in std::fs::read_dir(&dir).with_context(|| format!("cannot list {}", dir.display()))? {
            let entry = entry?;
            let child = rel.join(entry.file_name());
            if entry.file_type()?.is_dir() {
                stack.push(child);
            } else {
                out.push(child);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Digest of a file, or of a directory tree as the sorted `(path, digest)` list.
pub fn path_digest(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut h = Sha256::new();
        for rel in walk(path)? {
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(file_digest(&path.join(&rel))?.as_bytes());
            h.update([b'\n']);
        }
        Ok(hex(&h.finalize()))
    } else {
        file_digest(path)
    }
}

/// Digests of every file written below `out`, excluding the manifest itself.
pub fn output_digests(out: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for rel in walk(out)? {
        if rel == Path::new(MANIFEST_FILE) {
            continue;
        }
        map.insert(rel.to_string_lossy().replace('\\', "/"), file_digest(&out.join(&rel))?);
    }
    Ok(map)
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        std::fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Arguments with the value of `--out` replaced by `out`.
    pub fn argv_with_out(&self, out: &Path) -> Result<Vec<String>> {
        let mut argv = self.argv.clone();
        let pos = argv
            .iter()
            .position(|a| a == "--out")
            .context("manifest arguments have no --out")?;
        match argv.get_mut(pos + 1) {
            Some(v) => *v = out.display().to_string(),
            None => bail!("manifest arguments end with a bare --out"),
        }
        Ok(argv)
    }

    /// Input paths whose content no longer matches the recorded digest.
    pub fn changed_inputs(&self) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for (p, digest) in &self.inputs {
            let path = self.cwd.join(p);
            if !path.exists() || &path_digest(&path)? != digest {
                changed.push(p.clone());
            }
        }
        Ok(changed)
    }
}

//! Output-directory layout and the per-directory manifests that carry the
//! config hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sirnet::collocation::Method;
use sirnet::io::{read_json, write_json};
use sirnet::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub config_hash: String,
    pub seconds: f64,
}

/// Paths under the experiment output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn grid(&self, m: Method) -> PathBuf {
        self.root.join(format!("grid-m{}", method_number(m)))
    }

    pub fn model(&self, m: Method) -> PathBuf {
        self.root.join(format!("model-m{}", method_number(m)))
    }

    pub fn posterior(&self, m: Method) -> PathBuf {
        self.root.join(format!("posterior-m{}", method_number(m)))
    }

    pub fn mh(&self) -> PathBuf {
        self.root.join("mh")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
}

pub fn method_number(m: Method) -> u8 {
    match m {
        Method::I => 1,
        Method::II => 2,
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest, seconds: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(MANIFEST), manifest)?;
    write_json(
        &dir.join(TIMING),
        &Timing { command: manifest.command.clone(), config_hash: manifest.config_hash.clone(), seconds },
    )
}

/// Reads the manifest in `dir` and checks that it was produced under `hash`.
pub fn check_manifest(dir: &Path, hash: &str) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("{} (run the producing command first)", path.display())));
    }
    let m: Manifest = read_json(&path)?;
    if m.config_hash != hash {
        return Err(Error::ConfigMismatch(format!(
            "{} was produced under config {}, current config is {hash}",
            dir.display(),
            m.config_hash
        )));
    }
    Ok(m)
}

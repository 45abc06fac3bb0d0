//! Output directory bookkeeping and the digest manifest.

use std::path::{Path, PathBuf};

use flowxai::dataio::RawTable;
use flowxai::explain_viz::Plot;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, StageContext};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::bad_input("load", e))?;
        serde_json::from_str(&text).map_err(|e| CliError::bad_input("load", e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes files into one directory and remembers them for the manifest.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    /// Creates the directory if needed; failure counts as bad configuration.
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::bad_input("config", format!("output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> Vec<PathBuf> {
        self.written.iter().map(|n| self.dir.join(n)).collect()
    }

    fn record(&mut self, name: &str) -> PathBuf {
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::internal("write", format!("{}: {e}", path.display())))?;
        Ok(self.record(name))
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal("write", e))?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, table: &RawTable) -> CliResult<PathBuf> {
        table.write_csv(self.dir.join(name)).internal("write")?;
        Ok(self.record(name))
    }

    pub fn svg(&mut self, plot: Plot<'_>, scenario: &str) -> CliResult<PathBuf> {
        self.bytes(&plot.file_name(scenario), plot.to_svg().as_bytes())
    }

    /// Hashes every written file into `manifest.json` (sorted by name).
    pub fn finish(mut self) -> CliResult<Vec<PathBuf>> {
        let mut names = self.written.clone();
        names.sort();
        let mut artifacts = Vec::with_capacity(names.len());
        for name in names {
            let path = self.dir.join(&name);
            let bytes = std::fs::read(&path).map_err(|e| CliError::internal("manifest", format!("{}: {e}", path.display())))?;
            artifacts.push(ManifestEntry {
                path: name,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        self.json(MANIFEST, &Manifest { artifacts })?;
        Ok(self.written())
    }
}

/// Safe file-name fragment for a label such as `DrDoS_DNS`.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

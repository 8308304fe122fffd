//! Scenario output directory. Files are addressed by bare names only, and
//! everything written is removed again unless the run is committed.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::csv_io::Table;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    written: Vec<ManifestEntry>,
    committed: bool,
}

pub(crate) fn is_plain_file_name(name: &str) -> bool {
    let p = Path::new(name);
    !name.is_empty()
        && name != "."
        && name != ".."
        && p.components().count() == 1
        && p.file_name().is_some_and(|f| f == name)
        && !name.contains(['/', '\\'])
}

impl OutputDir {
    /// Opens (creating if needed) `root`.
    pub fn create(root: &Path) -> CliResult<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root,
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, name: &str) -> CliResult<PathBuf> {
        if !is_plain_file_name(name) {
            return Err(CliError::Escape(name.into()));
        }
        Ok(self.root.join(name))
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(name)?;
        if self.written.iter().any(|e| e.name == name) {
            return Err(CliError::Report(format!("output `{name}` written twice")));
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(ManifestEntry {
            name: name.into(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> CliResult<()> {
        let bytes = table.to_bytes()?;
        self.write_bytes(name, &bytes)
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.written
    }

    /// Keeps the written files.
    pub fn commit(mut self) -> Vec<ManifestEntry> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for e in &self.written {
            let _ = fs::remove_file(self.root.join(&e.name));
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}

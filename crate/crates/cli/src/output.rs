use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::commands::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub run: RunConfig,
    pub outputs: Vec<String>,
}

/// Files are staged in memory and written together at the end, each via a
/// temporary file renamed into place, so a failed run leaves nothing.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    /// Files already persisted by streaming writers.
    streamed: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            streamed: Vec::new(),
        })
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::io)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(CliError::io)?;
        for r in rows {
            w.write_record(r).map_err(CliError::io)?;
        }
        let bytes = w.into_inner().map_err(CliError::io)?;
        self.add(name, bytes);
        Ok(())
    }

    /// A temporary file in the output directory for large streamed outputs.
    pub fn temp_file(&self) -> Result<NamedTempFile, CliError> {
        NamedTempFile::new_in(&self.dir).map_err(CliError::io)
    }

    pub fn persist(&mut self, file: NamedTempFile, name: &str) -> Result<(), CliError> {
        readable(&file)?;
        file.persist(self.dir.join(name)).map_err(|e| CliError::io(e.error))?;
        self.streamed.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, run: &RunConfig) -> Result<Vec<String>, CliError> {
        let mut names: Vec<String> = self.streamed.clone();
        names.extend(self.files.iter().map(|(n, _)| n.clone()));
        names.push(MANIFEST.to_string());
        let manifest = Manifest {
            tool: "homlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            run: run.clone(),
            outputs: names.clone(),
        };
        self.add_json(MANIFEST, &manifest)?;
        for (name, bytes) in &self.files {
            write_atomic(&self.dir, name, bytes)?;
        }
        Ok(names)
    }
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = NamedTempFile::new_in(dir).map_err(CliError::io)?;
    tmp.write_all(bytes).map_err(CliError::io)?;
    tmp.as_file().sync_all().map_err(CliError::io)?;
    readable(&tmp)?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::io(e.error))?;
    Ok(())
}

/// Temporary files are created owner-only; outputs get the usual 0644.
fn readable(file: &NamedTempFile) -> Result<(), CliError> {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(file.path(), fs::Permissions::from_mode(0o644)).map_err(CliError::io)?;
    }
    #[cfg(not(unix))]
    let _ = file;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("invalid manifest {}: {e}", path.display())))
}

//! Writes result files and the run manifest into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Format;


#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub files: Vec<String>,
}

/// One manifest per command so that several commands can share a directory.
pub fn manifest_name(command: &str) -> String {
    format!("manifest_{command}.json")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the files of one command run.
pub struct OutputDir {
    dir: PathBuf,
    formats: Vec<Format>,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path, formats: &[Format]) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            formats: formats.to_vec(),
            files: Vec::new(),
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        log::info!("wrote {}", self.dir.join(name).display());
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `<stem>.csv` and/or `<stem>.json` depending on the formats.
    pub fn emit<T: Serialize + ?Sized>(&mut self, stem: &str, csv: impl FnOnce() -> String, json: &T) -> std::io::Result<()> {
        if self.wants(Format::Csv) {
            self.write(&format!("{stem}.csv"), &csv())?;
        }
        if self.wants(Format::Json) {
            let text = serde_json::to_string_pretty(json).expect("report types serialize");
            self.write(&format!("{stem}.json"), &format!("{text}\n"))?;
        }
        Ok(())
    }

    pub fn finish(mut self, command: &str, config_path: &Path, config_bytes: &[u8], seed: Option<u64>) -> std::io::Result<PathBuf> {
        self.files.sort();
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_path: config_path.display().to_string(),
            config_sha256: sha256_hex(config_bytes),
            seed,
            files: self.files,
        };
        let path = self.dir.join(manifest_name(command));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, format!("{text}\n"))?;
        Ok(path)
    }
}

//! Output directory handling, run manifests and structured diagnostics.

use std::fs;
use std::path::{Path, PathBuf};

use plpde_core::hermfield::{io, ModelGeometry, ScalarField};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub struct OutputDir {
    root: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    core_version: &'a str,
    command: &'a str,
    config_sha256: String,
    seed: u64,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn subdir(&self, name: &str) -> Result<Self, CliError> {
        Self::create(&self.root.join(name))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(plpde_core::Error::from)?;
        text.push('\n');
        fs::write(self.root.join(name), text)?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.root.join(name), text)?;
        Ok(())
    }

    pub fn write_field(&self, stem: &str, geometry: &ModelGeometry, field: &ScalarField) -> Result<(), CliError> {
        io::write_field(
            &self.root.join(stem),
            geometry.kind(),
            &geometry.shape(),
            vec![stem.to_string()],
            &field.values,
        )?;
        Ok(())
    }

    /// Writes `manifest.json` with the config hash, seed and versions.
    pub fn write_manifest(&self, command: &str, config_bytes: &[u8], seed: u64) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: plpde_core::VERSION,
            command,
            config_sha256: format!("{:x}", Sha256::digest(config_bytes)),
            seed,
        };
        self.write_json("manifest.json", &manifest)
    }
}

//! Run manifest: enough to rerun a command and to check its outputs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{relative, CliError, Command, Context};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub config: RunConfig,
    pub config_sha256: String,
    /// directory relative problem files were resolved against
    pub config_base: String,
    pub seed: u64,
    pub threads: usize,
    pub version: String,
    pub output: String,
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub exit_code: u8,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(
        ctx: &Context,
        threads: usize,
        wall_seconds: f64,
        artifacts: &[PathBuf],
        exit_code: u8,
    ) -> Result<Manifest, CliError> {
        let canonical = serde_json::to_vec(&ctx.config)?;
        let mut listed = Vec::with_capacity(artifacts.len());
        for p in artifacts {
            listed.push(Artifact {
                path: relative(&ctx.out, p),
                sha256: sha256_hex(&std::fs::read(p)?),
            });
        }
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(Manifest {
            command: ctx.command,
            config: ctx.config.clone(),
            config_sha256: sha256_hex(&canonical),
            config_base: ctx.base.display().to_string(),
            seed: ctx.seed,
            threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            output: ctx.out.display().to_string(),
            started_unix: now.saturating_sub(wall_seconds as u64),
            wall_seconds,
            exit_code,
            artifacts: listed,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        strongdamp::output::write_json(path, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

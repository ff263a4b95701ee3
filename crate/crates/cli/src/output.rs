//! One experiment per output directory, with a manifest of every emitted file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use trawlsim_core::config::{RunManifest, MANIFEST_NAME};
use trawlsim_core::error::Error;

use crate::CliError;

pub struct OutputDir {
    dir: PathBuf,
    force: bool,
    manifest: RunManifest,
    written: Vec<String>,
    started: Instant,
    stage: String,
    command: String,
}

impl OutputDir {
    /// Opens `dir` for `command`. A directory holding a manifest for a
    /// different configuration is refused unless `force` is set.
    pub fn open(dir: &Path, force: bool, command: &str, config_hash: &str, master_seed: u64) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        let mut manifest = RunManifest::new(command, config_hash, master_seed);
        if dir.join(MANIFEST_NAME).exists() {
            let old = RunManifest::read(dir)?;
            if old.config_hash != config_hash && !force {
                return Err(CliError::Config(format!(
                    "{} holds results for config {}; pass --force to overwrite",
                    dir.display(),
                    old.config_hash
                )));
            }
            if old.config_hash == config_hash {
                manifest.files = old.files;
                manifest.stages = old.stages;
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            force,
            manifest,
            written: Vec::new(),
            started: Instant::now(),
            stage: command.to_string(),
            command: command.to_string(),
        })
    }

    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if path.exists() && !self.force && !self.written.iter().any(|w| w == name) {
            return Err(CliError::Config(format!(
                "refusing to overwrite {}; pass --force",
                path.display()
            )));
        }
        let stage = self.stage.clone();
        self.manifest.emit(&self.dir, name, &stage, bytes)?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn emit_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.emit(name, text.as_bytes())
    }

    /// Closes the current stage and starts timing `next`.
    pub fn lap(&mut self, next: &str) {
        let seconds = self.started.elapsed().as_secs_f64();
        let stage = std::mem::replace(&mut self.stage, format!("{}:{next}", self.command));
        self.manifest.time_stage(&stage, seconds);
        self.started = Instant::now();
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        let seconds = self.started.elapsed().as_secs_f64();
        self.manifest.time_stage(&self.stage, seconds);
        Ok(self.manifest.write(&self.dir)?)
    }
}

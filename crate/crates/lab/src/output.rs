//! The run directory: every artifact of a command, plus the config.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates the directory and writes the canonical config into it.
    pub fn create(cfg: &RunConfig) -> io::Result<Self> {
        fs::create_dir_all(&cfg.output_dir)?;
        let dir = Self {
            root: cfg.output_dir.clone(),
        };
        dir.write_text("config.txt", &cfg.to_text())?;
        Ok(dir)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&self, name: &str, text: &str) -> io::Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn read(&self, name: &str) -> io::Result<String> {
        fs::read_to_string(self.path(name))
    }
}

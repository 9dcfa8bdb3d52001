use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

/// Record of one invocation: enough to repeat it with `--config <manifest>`.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub seeds: Value,
    pub artifacts: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

pub struct Recorder {
    command: &'static str,
    start: Instant,
}

impl Recorder {
    pub fn start(command: &'static str) -> Self {
        Recorder { command, start: Instant::now() }
    }

    /// Write the manifest to `explicit`, else next to the first artifact,
    /// else into the working directory.
    pub fn finish(self, explicit: Option<&Path>, config: Value, seeds: Value, artifacts: Vec<PathBuf>) -> Result<PathBuf> {
        let path = match (explicit, artifacts.first()) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(a)) if !a.is_dir() => {
                let mut name = a.file_name().unwrap_or_default().to_os_string();
                name.push(".manifest.json");
                a.with_file_name(name)
            }
            (None, Some(dir)) => dir.join(format!("{}.manifest.json", self.command)),
            (None, None) => PathBuf::from(format!("rcoda-{}.manifest.json", self.command)),
        };
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            artifacts,
            wall_time_secs: self.start.elapsed().as_secs_f64(),
        };
        rcoda::io::write_json(&manifest, &path)?;
        eprintln!("manifest: {}", path.display());
        Ok(path)
    }
}

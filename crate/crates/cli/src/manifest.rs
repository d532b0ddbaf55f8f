use std::path::{Path, PathBuf};
use std::time::Instant;

use fauforensics::config::{fmt_f64, KeyValues};
use fauforensics::Result;

/// Provenance record written next to a command's outputs. Everything except
/// `wall_time_s` is a function of the flags and inputs.
pub struct RunManifest {
    command: &'static str,
    started: Instant,
    kv: KeyValues,
}

impl RunManifest {
    pub fn start(command: &'static str, seed: Option<u64>) -> Self {
        let mut kv = KeyValues::new();
        kv.set("command", command);
        kv.set("tool_version", env!("CARGO_PKG_VERSION"));
        if let Some(s) = seed {
            kv.set("seed", s);
        }
        Self {
            command,
            started: Instant::now(),
            kv,
        }
    }

    pub fn config(&mut self, prefix: &str, cfg: &KeyValues) {
        for (k, v) in cfg.iter() {
            self.kv.set(&format!("config.{prefix}.{k}"), v);
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.kv.set(&format!("input.{name}"), path.display());
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.kv.set(&format!("output.{name}"), path.display());
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.kv.set(&format!("note.{key}"), value);
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.kv
            .set("wall_time_s", fmt_f64(self.started.elapsed().as_secs_f64()));
        let text = format!("# run manifest: {}\n{}", self.command, self.kv.to_text());
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// `<file>.run`, the manifest location for single-file outputs.
pub fn beside(file: &Path) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(".run");
    PathBuf::from(s)
}

/// Manifest location for directory outputs.
pub fn inside(dir: &Path) -> PathBuf {
    dir.join("run.manifest")
}

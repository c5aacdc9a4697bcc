//! Output directory, provenance header and progress messages.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Output {
    dir: PathBuf,
    fingerprint: String,
    command: &'static str,
    seed: u64,
    quiet: bool,
}

impl Output {
    pub fn create(dir: PathBuf, fingerprint: String, command: &'static str, seed: u64, quiet: bool) -> CliResult<Self> {
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            fingerprint,
            command,
            seed,
            quiet,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Comment lines that open every CSV output.
    pub fn header(&self) -> Vec<String> {
        vec![format!("polyanchor {VERSION} config-sha256={}", self.fingerprint)]
    }

    fn meta(&self) -> Value {
        json!({
            "version": VERSION,
            "config_sha256": self.fingerprint,
            "command": self.command,
            "seed": self.seed,
        })
    }

    /// Pretty JSON with a `_meta` provenance object; keys are sorted so the
    /// bytes depend only on the content.
    pub fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        match &mut v {
            Value::Object(map) => {
                map.insert("_meta".into(), self.meta());
            }
            other => {
                v = json!({ "_meta": self.meta(), "value": other.take() });
            }
        }
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.wrote(&path);
        Ok(path)
    }

    pub fn wrote(&self, path: &Path) {
        self.note(&format!("wrote {}", path.display()));
    }

    pub fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    /// Shown even with `--quiet`.
    pub fn warn(&self, msg: &str) {
        eprintln!("warning: {msg}");
    }
}

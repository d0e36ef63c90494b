//! Output files tagged with the configuration hash and seed.

use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

use crate::config::RunConfig;

pub struct Provenance {
    pub hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Result<Self> {
        Ok(Self { hash: cfg.hash()?, seed: cfg.seed })
    }

    fn seed_text(&self) -> String {
        self.seed.map_or("none".to_string(), |s| s.to_string())
    }

    pub fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.hash, self.seed_text())
    }

    /// Writes a CSV produced by `body`, preceded by the provenance comment.
    pub fn write_csv(&self, path: &Path, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = self.comment().into_bytes();
        body(&mut buf)?;
        std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    pub fn write_text(&self, path: &Path, text: &str) -> Result<()> {
        let mut out = self.comment();
        out.push_str(text);
        std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
    }

    /// Writes a JSON object with `config_hash` and `seed` added at top level.
    pub fn write_json(&self, path: &Path, mut value: Value) -> Result<()> {
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
            map.insert("seed".into(), self.seed.map_or(Value::Null, Value::from));
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

/// CSV writer over an in-memory buffer.
pub fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(buf)
}

//! Output directory handling: every file goes through [`Outputs`], which hashes
//! it and lists it in `manifest.toml`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use wfps_core::checkpoint::encode;
use wfps_core::Field;

pub const MANIFEST: &str = "manifest.toml";

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Entry {
    name: String,
    sha256: String,
    bytes: usize,
}

pub struct Outputs {
    dir: PathBuf,
    subcommand: &'static str,
    /// `(key, sha256)` of the input the run was driven by.
    input: Option<(&'static str, String)>,
    entries: Vec<Entry>,
}

impl Outputs {
    /// `input` is `(key, bytes)`, e.g. `("config_sha256", config text)`.
    pub fn create(dir: &Path, subcommand: &'static str, input: Option<(&'static str, &[u8])>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            subcommand,
            input: input.map(|(k, b)| (k, hex(b))),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.entries.retain(|e| e.name != name);
        self.entries.push(Entry {
            name: name.to_string(),
            sha256: hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn write_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
        let mut text = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
        text.push_str(header);
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn write_field(&mut self, name: &str, field: &Field, hbar: f64, diffusion: f64) -> Result<PathBuf> {
        self.write(name, &encode(field, hbar, diffusion))
    }

    /// Writes the manifest. Entries are sorted so reruns give identical bytes.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.entries.sort_by(|a, b| a.name.cmp(&b.name));
        let mut s = String::new();
        s.push_str(&format!("subcommand = \"{}\"\n", self.subcommand));
        s.push_str(&format!("wfps_version = \"{}\"\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("wfps_core_version = \"{}\"\n", wfps_core::VERSION));
        if let Some((k, h)) = &self.input {
            s.push_str(&format!("{k} = \"{h}\"\n"));
        }
        for e in &self.entries {
            s.push_str(&format!(
                "\n[[file]]\npath = \"{}\"\nsha256 = \"{}\"\nbytes = {}\n",
                e.name, e.sha256, e.bytes
            ));
        }
        let path = self.dir.join(MANIFEST);
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `quantum_t000012.500000.wfps`
pub fn checkpoint_name(prefix: &str, time: f64) -> String {
    format!("{prefix}_t{time:013.6}.wfps")
}

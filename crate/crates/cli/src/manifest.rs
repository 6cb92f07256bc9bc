//! Artifact writing with a content-digest manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use rrn::export::{pgm_bytes, Csv};
use rrn::RrnError;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Output directory plus the digests of everything written to it.
///
/// Entries from an existing `manifest.json` are kept so successive
/// commands sharing a directory accumulate one manifest.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
    commands: BTreeMap<String, String>,
}

impl Output {
    pub fn open(dir: &Path) -> Result<Self, RrnError> {
        fs::create_dir_all(dir).map_err(|e| RrnError::io(dir, e))?;
        let mut out = Self {
            dir: dir.to_path_buf(),
            artifacts: BTreeMap::new(),
            commands: BTreeMap::new(),
        };
        let path = dir.join(MANIFEST_NAME);
        if path.is_file() {
            let text = fs::read_to_string(&path).map_err(|e| RrnError::io(&path, e))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| RrnError::Format {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let read = |key: &str| -> BTreeMap<String, String> {
                v.get(key)
                    .and_then(Value::as_object)
                    .map(|m| {
                        m.iter()
                            .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                            .collect()
                    })
                    .unwrap_or_default()
            };
            out.artifacts = read("artifacts");
            out.commands = read("commands");
        }
        Ok(out)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn artifacts(&self) -> &BTreeMap<String, String> {
        &self.artifacts
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), RrnError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| RrnError::io(&path, e))?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn csv(&mut self, name: &str, csv: &Csv) -> Result<(), RrnError> {
        self.bytes(name, csv.as_str().as_bytes())
    }

    pub fn pgm(&mut self, name: &str, img: &ArrayView2<f64>) -> Result<(), RrnError> {
        self.bytes(name, &pgm_bytes(img))
    }

    /// Record which config digest a command ran under.
    pub fn command(&mut self, command: &str, config_digest: &str) {
        self.commands.insert(command.to_string(), config_digest.to_string());
    }

    pub fn save(&self) -> Result<(), RrnError> {
        let v = json!({ "artifacts": self.artifacts, "commands": self.commands });
        let text = serde_json::to_string_pretty(&v).expect("manifest serializes") + "\n";
        let path = self.path(MANIFEST_NAME);
        fs::write(&path, text).map_err(|e| RrnError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifests_merge_across_opens() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Output::open(dir.path()).unwrap();
        a.bytes("a.txt", b"1").unwrap();
        a.command("train", "d1");
        a.save().unwrap();
        let mut b = Output::open(dir.path()).unwrap();
        b.bytes("b.txt", b"2").unwrap();
        b.save().unwrap();
        let again = Output::open(dir.path()).unwrap();
        assert_eq!(again.artifacts().len(), 2);
        assert_eq!(again.artifacts()["a.txt"], sha256_hex(b"1"));
    }
}
